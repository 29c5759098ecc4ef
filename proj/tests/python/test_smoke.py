import math

import pytest

import pinchlab


def test_classify_and_rho0():
    d = pinchlab.ConicDivisor.from_weights([-0.8, -0.3, -0.3])
    c = d.classify()
    assert c.kind == pinchlab.Criticality.supercritical
    assert d.rho0() == pytest.approx(0.25, abs=1e-14)
    assert "subcritical" in c.note


def test_rho0_guard():
    d = pinchlab.ConicDivisor.from_weights([-0.9, -0.5, -0.5])
    with pytest.raises(pinchlab.PinchError):
        d.rho0()


def test_glued_football_pinching():
    g = pinchlab.GluedFootball(0.0, -0.5)
    assert g.curvature_r(0.5) == pytest.approx(1.0)
    assert g.curvature_r(2.0) == pytest.approx(0.25)
    assert g.mass_total() == pytest.approx(3 * math.pi)
    rep = pinchlab.measure_pinching(g)
    assert rep.rho == pytest.approx(0.25, abs=1e-12)


def test_rescale_keeps_curvature():
    base = pinchlab.GluedFootball(0.0, -0.5)
    r = pinchlab.Rescaled(base, 2.0, 0.5, -0.25)
    rep = pinchlab.measure_pinching(r)
    assert rep.rho == pytest.approx(0.25, abs=1e-10)
