"""Brute-force state-vector oracle for short chains.

The full amplitude tensor is kept with the system first and the bins in
waveguide order. The feedback loop is treated as the closed, periodic
system it is: step ``m`` applies the bin unitary to the system and bin
``m mod N`` directly, with no swaps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ProtocolParams, build_time_bin_unitary
from .mps import MpsState, TwoSiteGate, canonicalize

MAX_DENSE_AMPLITUDES = 2**22


class OracleSizeError(ValueError):
    pass


@dataclass
class DenseState:
    """Amplitudes in the site order of ``dims``; ``system_axis`` marks the system."""

    amplitudes: np.ndarray
    dims: list[int]
    system_axis: int | None = 0

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def system_first(self) -> "DenseState":
        """Same state with the system moved to axis 0 and bins in order."""
        if self.system_axis in (None, 0):
            return self
        order = [self.system_axis] + [i for i in range(len(self.dims)) if i != self.system_axis]
        t = self.tensor().transpose(order)
        return DenseState(t.ravel().copy(), [self.dims[i] for i in order], 0)

    def overlap(self, other: "DenseState") -> complex:
        return complex(np.vdot(self.system_first().amplitudes, other.system_first().amplitudes))


def _check_size(dims) -> None:
    size = int(np.prod(dims))
    if size > MAX_DENSE_AMPLITUDES:
        raise OracleSizeError(f"{size} amplitudes exceed the oracle cap of {MAX_DENSE_AMPLITUDES}")


def dense_from_mps(state: MpsState) -> DenseState:
    """Contract every Gamma and lambda into the full amplitude vector."""
    dims = state.site_dims
    _check_size(dims)
    psi = np.ones((1, 1), dtype=complex)  # (physical so far, bond)
    for k in range(state.n_sites):
        t = state.gammas[k] * state.right_lambda(k)[None, None, :]
        psi = np.tensordot(psi, t, axes=(1, 0)).reshape(-1, t.shape[2])
    return DenseState(psi.ravel(), dims, state.system_site_index)


def mps_from_dense(dense: DenseState) -> MpsState:
    """Exact Vidal-form MPS of a dense state (sequential SVD)."""
    dims = dense.dims
    n = len(dims)
    mats = []
    rest = dense.amplitudes.reshape(1, -1)
    for k in range(n - 1):
        chi = rest.shape[0]
        m = rest.reshape(chi * dims[k], -1)
        q, r = np.linalg.qr(m)
        mats.append(q.reshape(chi, dims[k], q.shape[1]))
        rest = r
    mats.append(rest.reshape(rest.shape[0], dims[-1], 1))
    raw = MpsState(mats, [np.ones(m.shape[2]) for m in mats[:-1]], dense.system_axis)
    return canonicalize(raw)


def apply_two_site_dense(
    dense: DenseState, axis_a: int, axis_b: int, gate: TwoSiteGate | np.ndarray
) -> DenseState:
    """Apply a gate to two (not necessarily adjacent) axes, matrix-free."""
    m = gate.matrix if isinstance(gate, TwoSiteGate) else np.asarray(gate)
    da, db = dense.dims[axis_a], dense.dims[axis_b]
    g = m.reshape(da, db, da, db)
    t = dense.tensor()
    t = np.tensordot(g, t, axes=([2, 3], [axis_a, axis_b]))
    t = np.moveaxis(t, [0, 1], [axis_a, axis_b])
    return DenseState(t.ravel(), list(dense.dims), dense.system_axis)


def dense_evolve(
    state: DenseState,
    params: ProtocolParams,
    n_steps: int,
    start_step: int = 0,
    gate: TwoSiteGate | None = None,
) -> DenseState:
    """``U_m ... U_1 (U_N ... U_1)^n |psi>`` for ``n_steps = n N + m`` steps."""
    state = state.system_first()
    _check_size(state.dims)
    if gate is None:
        gate = build_time_bin_unitary(params)
    n_bins = len(state.dims) - 1
    for step in range(start_step, start_step + n_steps):
        state = apply_two_site_dense(state, 0, 1 + step % n_bins, gate)
    return state


def number_expectation(dense: DenseState, params: ProtocolParams) -> float:
    """Cavity photons plus photons in every bin."""
    d = dense.system_first()
    t = d.tensor()
    probs = np.abs(t) ** 2
    n_cav = np.repeat(np.arange(params.d_cav), params.d_mech)
    total = float(np.tensordot(probs.sum(axis=tuple(range(1, t.ndim))), n_cav, axes=1))
    for ax in range(1, t.ndim):
        marg = probs.sum(axis=tuple(i for i in range(t.ndim) if i != ax))
        total += float(marg @ np.arange(t.shape[ax]))
    return total


@dataclass
class OracleCase:
    """A toy configuration for comparing the MPS pipeline with this oracle."""

    params: ProtocolParams
    state: MpsState
    bounces: int


def random_toy_case(
    rng: np.random.Generator,
    max_bins: int = 8,
    max_d_mech: int = 4,
    min_bounces: int = 4,
) -> OracleCase:
    """Random couplings and a random waveguide state with up to two photons.

    The waveguide holds either one photon in a random wavepacket, two photons
    in disjoint random wavepackets, or a superposition ``(c0 + c1 A^+)`` of
    each. ``min_bounces = 4`` is two full feedback cycles.
    """
    from .state_prep import TemporalMode, WaveguideLayout, build_waveguide_state

    n_bins = int(rng.integers(4, max_bins + 1))
    params = ProtocolParams(
        g0=float(rng.uniform(0.0, 0.4)),
        omega_m=float(rng.uniform(0.0, 1.0)),
        tau=1.0,
        dt=float(rng.uniform(0.1, 0.5)),
        d_mech=int(rng.integers(2, max_d_mech + 1)),
        n_bins=n_bins,
        svd_threshold=0.0,
        max_bond=None,
    )
    split = int(rng.integers(1, n_bins))
    windows = [(0, split), (split, n_bins)]
    kind = rng.choice(["one", "two", "superposition"])
    if kind == "one":
        windows = [(0, n_bins)]
    modes, coeffs = [], []
    for lo, hi in windows:
        amps = rng.normal(size=hi - lo) + 1j * rng.normal(size=hi - lo)
        modes.append(TemporalMode.from_amplitudes(lo, amps))
        if kind == "superposition":
            c = rng.normal(size=2) + 1j * rng.normal(size=2)
            c /= np.linalg.norm(c)
            coeffs.append((complex(c[0]), complex(c[1])))
        else:
            coeffs.append((0.0, 1.0))
    layout = WaveguideLayout(n_bins, params.dt, params.bin_dim)
    state = build_waveguide_state(params, layout, modes, coeffs)
    bounces = min_bounces + 2 * int(rng.integers(0, 2))
    return OracleCase(params, state, bounces)


def oracle_deviation(case: OracleCase) -> float:
    """Largest amplitude difference between the MPS pipeline and the oracle."""
    from .dynamics import evolve_repetitions

    gate = build_time_bin_unitary(case.params)
    if case.bounces % 2:
        raise ValueError("bounces must be even")
    params = case.params.with_(n_rep=case.bounces // 2)
    mps = evolve_repetitions(case.state, params, gate)
    ref = dense_evolve(dense_from_mps(case.state), params, case.bounces * params.waveguide_bins, gate=gate)
    return float(np.max(np.abs(dense_from_mps(mps).amplitudes - ref.amplitudes)))
