import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from optofeedback.semiclassical import (
    SemiclassicalState,
    loss_penalty,
    parasitic_closed_form,
    parasitic_dephasing_fidelity,
    phi1,
    photon_kick,
    quarter_period,
    residual_beta,
    run_semiclassical_protocol,
    semiclassical_conditional_phase,
    semiclassical_fidelity,
    semiclassical_pi_curve,
    semiclassical_table,
)


def test_phi1():
    assert phi1(0.1) == pytest.approx(0.32)
    assert phi1(0) == 0
    assert phi1(0.05) == pytest.approx(0.08)


def test_first_kick_from_ground_state():
    s = photon_kick(SemiclassicalState(r=0.3), 1)
    assert s.beta == pytest.approx(-0.3j)
    assert s.phase == 0


def test_no_photon_no_kick():
    s = SemiclassicalState(0.1 + 0.2j, 0.5, 0.3)
    assert photon_kick(s, 0) == s


@pytest.mark.parametrize("r", [0.1, 0.4, 1.0])
def test_kick_from_displaced_state(r):
    s = photon_kick(SemiclassicalState(-r, 0.0, r), 1)
    assert s.beta == pytest.approx(-r * (1 + 1j / (1 + r**4)), abs=1e-15)
    assert s.phase == pytest.approx(r**2 / (1 + r**4), abs=1e-15)


def test_quarter_period():
    assert quarter_period(SemiclassicalState(-0.3j, 0, 0.3)).beta == pytest.approx(-0.3)
    assert quarter_period(SemiclassicalState()).beta == 0


@given(re=st.floats(-10, 10), im=st.floats(-10, 10))
def test_full_period_is_identity(re, im):
    s = SemiclassicalState(complex(re, im))
    for _ in range(4):
        s = quarter_period(s)
    assert abs(s.beta - complex(re, im)) <= 1e-15 * max(1, abs(complex(re, im)))


def test_state_validation():
    with pytest.raises(ValueError):
        SemiclassicalState(complex(math.inf, 0))
    with pytest.raises(ValueError):
        SemiclassicalState(r=-1)


def test_no_photons_no_phase():
    assert run_semiclassical_protocol(0, 0, 0.1, 3) == (0.0, 0j)


def test_single_photon_returns_to_origin():
    # four kicks from one photon, a quarter period apart, close the loop
    phase, beta = run_semiclassical_protocol(1, 0, 0.1, 1)
    assert abs(beta) < 1e-15


def test_leading_order_phase():
    for g in (0.001, 0.004, 0.01):
        ratio = semiclassical_conditional_phase(g, 1) / phi1(g)
        assert ratio == pytest.approx(1, abs=300 * g**4 * 4**4)
    assert semiclassical_conditional_phase(0.01, 3) == pytest.approx(3 * phi1(0.01), rel=1e-4)


def test_residual_displacement_scaling():
    # the kick-by-kick result equals the closed form before the last quarter
    # period, and |beta| ~ sqrt(2) r^5 with an O(r^4) correction. Below
    # r ~ 0.02 the correction drowns in cancellation roundoff (~1e-16 / r^4).
    for r in (0.01, 0.02, 0.04, 0.4):
        _, beta = run_semiclassical_protocol(1, 1, r / 4, 1)
        assert beta == pytest.approx(-1j * residual_beta(r), rel=1e-6)
    errs = []
    for r in (0.04, 0.08, 0.16):
        _, beta = run_semiclassical_protocol(1, 1, r / 4, 1)
        errs.append(abs(abs(beta) / (math.sqrt(2) * r**5) - 1))
    assert errs[1] / errs[0] == pytest.approx(16, rel=0.05)
    assert errs[2] / errs[1] == pytest.approx(16, rel=0.05)


def test_residual_direction():
    r = 0.01
    assert residual_beta(r) / r**5 == pytest.approx(1 - 1j, rel=1e-6)
    _, beta = run_semiclassical_protocol(1, 1, r / 4, 1)
    assert beta / r**5 == pytest.approx(-(1 + 1j), rel=1e-6)


def test_fidelity():
    assert semiclassical_fidelity(0j) == 1
    # r = 0.4, evaluated independently at 40 digits
    assert semiclassical_fidelity(residual_beta(0.4)) == pytest.approx(0.999810121575753029, abs=1e-15)
    vals = [semiclassical_fidelity(b) for b in (0, 0.1, 0.3j, 1 + 1j)]
    assert vals == sorted(vals, reverse=True)


def test_loss_penalty():
    assert loss_penalty(0.9, 1.0, 7) == 0.9
    assert loss_penalty(1.0, 0.99, 10) == pytest.approx(0.9043820750088044)
    with pytest.raises(ValueError):
        loss_penalty(1.0, 1.2, 1)


def test_parasitic_dephasing():
    assert parasitic_dephasing_fidelity(0.0, 10, seed=1)[:2] == (1.0, 1.0)
    assert parasitic_closed_form(0.1) == pytest.approx(0.8630745185368455)
    mc, closed, se = parasitic_dephasing_fidelity(0.1, 200_000, seed=3)
    assert abs(mc - closed) < 3 * se
    with pytest.raises(ValueError):
        parasitic_dephasing_fidelity(0.1, 0)
    with pytest.raises(ValueError):
        parasitic_dephasing_fidelity(-0.1, 10)


def test_parasitic_is_reproducible_and_chunk_independent():
    a = parasitic_dephasing_fidelity(0.2, 50_000, seed=9, chunk=10_000)
    b = parasitic_dephasing_fidelity(0.2, 50_000, seed=9, chunk=10_000)
    assert a == b
    c = parasitic_dephasing_fidelity(0.2, 50_000, seed=9, chunk=50_000)
    assert c[0] == pytest.approx(a[0], abs=5 * a[2])


def test_pi_curve_and_loss_maximum():
    curve = semiclassical_pi_curve(range(1, 13))
    assert curve[0].n_rep > 1  # one repetition cannot reach pi
    for p in curve:
        assert p.phase == pytest.approx(math.pi, abs=1e-9)
    fids = [p.fidelity for p in curve]
    assert fids == sorted(fids)
    lossy = [loss_penalty(p.fidelity, 0.96, p.n_rep) for p in curve]
    best = int(np.argmax(lossy))
    assert 0 < best < len(lossy) - 1


def test_table():
    rows = semiclassical_table([0.05, 0.1], [1, 2])
    assert [(r.g0_over_kappa, r.n_rep) for r in rows] == [(0.05, 1), (0.05, 2), (0.1, 1), (0.1, 2)]
    assert rows[2].beta_sq == pytest.approx(abs(residual_beta(0.4)) ** 2, rel=1e-9)
