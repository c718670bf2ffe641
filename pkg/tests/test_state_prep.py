import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optofeedback.dense import dense_from_mps
from optofeedback.dynamics import ProtocolParams
from optofeedback.mps import entropy_profile, norm_squared, overlap
from optofeedback.state_prep import (
    LayoutError,
    SQRT_HALF,
    TemporalMode,
    WaveguideLayout,
    assemble_initial_state,
    build_waveguide_state,
    decompose_mode_state,
    gaussian_mode,
    layout_modes,
    modes_from_config,
    read_mode_csv,
    reference_basis_state,
    write_mode_csv,
)


def target_amplitudes(f, c0, c1):
    n = len(f)
    v = np.zeros(2**n, dtype=complex)
    v[0] = c0
    for i, a in enumerate(f):
        v[1 << (n - 1 - i)] += c1 * a
    return v


def toy_setup(n_bins=10, tau=1.0):
    # T_m = 2 n_bins dt so that the waveguide spans half a period
    params = ProtocolParams(g0=0.1, omega_m=2 * math.pi / (n_bins * 1.0), tau=tau,
                            d_mech=3, n_bins=n_bins)
    layout = WaveguideLayout(n_bins, params.dt, 2, [2, 7])
    return params, layout, layout_modes(params, layout)


# --- gaussian modes ----------------------------------------------------------


def test_one_bin_mode_is_a_delta():
    layout = WaveguideLayout(10, 0.5)
    m = gaussian_mode(2.0, 0.5, layout)
    assert m.n_bins == 1
    assert m.amplitudes[0] == pytest.approx(1.0)


def test_symmetric_window():
    layout = WaveguideLayout(100, 0.5)
    m = gaussian_mode(25.0, 10.0, layout)
    assert m.n_bins == 20
    assert np.allclose(m.amplitudes, m.amplitudes[::-1], atol=1e-12)
    assert np.linalg.norm(m.amplitudes) == pytest.approx(1, abs=1e-12)


def test_full_scale_width_spans_2000_bins():
    layout = WaveguideLayout(41888, 0.5)
    assert gaussian_mode(1500.0, 1000.0, layout).n_bins == 2000


def test_gaussian_mode_errors():
    layout = WaveguideLayout(20, 0.5)
    with pytest.raises(LayoutError):
        gaussian_mode(1.0, 4.0, layout)
    with pytest.raises(LayoutError):
        gaussian_mode(9.5, 2.0, layout)
    first = gaussian_mode(3.0, 2.0, layout)
    with pytest.raises(LayoutError):
        gaussian_mode(4.0, 2.0, layout, [first])


def test_mode_norm_enforced():
    with pytest.raises(ValueError):
        TemporalMode(0, np.array([1.0, 1.0]))


# --- single-photon decomposition ---------------------------------------------


def test_pure_vacuum_segment():
    seg = decompose_mode_state(TemporalMode.from_amplitudes(0, [1, 2, 3]), 1.0, 0.0)
    assert all(np.allclose(lam, [1.0]) for lam in seg.lambdas)


def test_uniform_two_bin_photon():
    seg = decompose_mode_state(TemporalMode.from_amplitudes(0, [1, 1]))
    assert np.allclose(seg.lambdas[0], [SQRT_HALF, SQRT_HALF], atol=1e-12)


def test_superposed_three_bin_photon(rng):
    f = rng.normal(size=3) + 1j * rng.normal(size=3)
    mode = TemporalMode.from_amplitudes(0, f)
    seg = decompose_mode_state(mode, SQRT_HALF, SQRT_HALF)
    target = target_amplitudes(mode.amplitudes, SQRT_HALF, SQRT_HALF)
    assert np.max(np.abs(dense_from_mps(seg).amplitudes - target)) < 1e-10


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(1, 12),
    seed=st.integers(0, 2**32 - 1),
    theta=st.floats(0, math.pi / 2),
    phi=st.floats(-math.pi, math.pi),
)
def test_decomposition_round_trip(n, seed, theta, phi):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=n) + 1j * rng.normal(size=n)
    mode = TemporalMode.from_amplitudes(0, f)
    c0, c1 = math.cos(theta), math.sin(theta) * np.exp(1j * phi)
    seg = decompose_mode_state(mode, c0, c1)
    assert seg.max_bond_dim <= 2
    assert all(abs(np.sum(lam**2) - 1) < 1e-10 for lam in seg.lambdas)
    target = target_amplitudes(mode.amplitudes, c0, c1)
    assert np.max(np.abs(dense_from_mps(seg).amplitudes - target)) < 1e-10


def test_decomposition_rejects_bad_coefficients():
    with pytest.raises(ValueError):
        decompose_mode_state(TemporalMode.from_amplitudes(0, [1, 1]), 1.0, 1.0)


# --- initial state -----------------------------------------------------------


def test_initial_state_norm_and_entropy():
    params, layout, modes = toy_setup()
    st_ = assemble_initial_state(params, layout, modes)
    assert norm_squared(st_) == pytest.approx(1, abs=1e-10)
    prof = entropy_profile(st_)
    assert prof[0] == pytest.approx(0, abs=1e-12)
    between = (modes[0].stop_bin + modes[1].start_bin) // 2
    assert prof[between] == pytest.approx(0, abs=1e-12)
    # bond b sits after bin b-1; mode interiors are entangled
    assert prof[modes[0].start_bin + 1] > 0.1
    assert prof[modes[1].start_bin + 1] > 0.1


def test_initial_state_matches_dense_construction():
    params, layout, modes = toy_setup()
    st_ = assemble_initial_state(params, layout, modes)
    n = layout.n_bins
    f1 = np.zeros(n, complex)
    f2 = np.zeros(n, complex)
    f1[modes[0].start_bin:modes[0].stop_bin] = modes[0].amplitudes
    f2[modes[1].start_bin:modes[1].stop_bin] = modes[1].amplitudes
    psi = np.zeros([2] * n, dtype=complex)
    vac = (0,) * n
    psi[vac] = 0.5
    for i in range(n):
        idx = list(vac)
        idx[i] = 1
        psi[tuple(idx)] += 0.5 * (f1[i] + f2[i])
        for j in range(n):
            if j != i:
                idx2 = list(idx)
                idx2[j] = 1
                psi[tuple(idx2)] += 0.5 * f1[i] * f2[j]
    target = np.zeros(params.d_sys * 2**n, dtype=complex)
    target[: 2**n] = psi.ravel()
    got = dense_from_mps(st_).amplitudes
    assert abs(np.vdot(target, got)) == pytest.approx(1, abs=1e-8)


def test_reference_states():
    params, layout, modes = toy_setup()
    refs = {(j, k): reference_basis_state(j, k, params, layout, modes) for j in (0, 1) for k in (0, 1)}
    assert refs[0, 0].max_bond_dim == 1
    assert dense_from_mps(refs[0, 0]).amplitudes[0] == pytest.approx(1)
    for a in refs:
        for b in refs:
            assert abs(overlap(refs[a], refs[b])) == pytest.approx(float(a == b), abs=1e-10)
    init = assemble_initial_state(params, layout, modes)
    total = sum(0.5 * overlap(r, init) for r in refs.values())
    assert total == pytest.approx(1, abs=1e-10)


def test_reference_rejects_bad_labels():
    params, layout, modes = toy_setup()
    with pytest.raises(ValueError):
        reference_basis_state(2, 0, params, layout, modes)


def test_layout_for_scaled_parameters():
    p = ProtocolParams(g0=0.05, omega_m=1e-3, tau=200.0)
    layout = WaveguideLayout.for_params(p)
    assert layout.n_bins == 6283
    assert abs(layout.n_bins * p.dt - p.mech_period / 2) <= p.dt
    sep = (layout.mode_centers[1] - layout.mode_centers[0]) * p.dt
    assert abs(sep - p.mech_period / 4) <= p.dt
    assert layout.check_physical(p) == []
    assert layout.mode_centers[0] * p.dt == pytest.approx(1.5 * p.tau)


def test_layout_rejects_long_modes():
    with pytest.raises(LayoutError):
        WaveguideLayout.for_params(ProtocolParams(g0=0, omega_m=1e-3, tau=1500.0))


def test_waveguide_state_checks_size():
    params, layout, modes = toy_setup()
    with pytest.raises(LayoutError):
        build_waveguide_state(params.with_(n_bins=12), layout, modes, [(0, 1)] * 2)


# --- I/O ---------------------------------------------------------------------


def test_mode_csv_round_trip(tmp_path):
    mode = gaussian_mode(10.0, 6.0, WaveguideLayout(40, 0.5))
    write_mode_csv(mode, tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "bin_index,re,im"
    back = read_mode_csv(tmp_path / "m.csv")
    assert back.start_bin == mode.start_bin
    assert np.allclose(back.amplitudes, mode.amplitudes, atol=1e-15)


def test_modes_from_config():
    layout = WaveguideLayout(40, 0.5)
    modes = modes_from_config(
        [{"center": 5.0, "tau": 4.0}, {"start_bin": 20, "amplitudes": [[1, 0], [0, 1]]}], layout
    )
    assert modes[0].n_bins == 8
    assert np.allclose(modes[1].amplitudes, [SQRT_HALF, 1j * SQRT_HALF])
    with pytest.raises(LayoutError):
        modes_from_config([{"center": 5.0, "tau": 4.0}, {"start_bin": 10, "amplitudes": [[1, 0]]}], layout)
