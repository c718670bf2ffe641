"""Optomechanical system, time-bin unitary and the feedback sweeps.

Units are natural with ``kappa = 1``: rates are in units of kappa and times
in units of ``1/kappa``. Everything is in the frame rotating at the cavity
frequency, so resonant photons carry no free phase from bin to bin.

The system site is the cavity and mechanical oscillator fused together,
with composite index ``n_cav * d_mech + n_mech``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, replace
from typing import Callable

import numpy as np

from .mps import DEFAULT_MAX_BOND, DEFAULT_SVD_THRESHOLD, MpsState, TwoSiteGate

logger = logging.getLogger(__name__)

MECH_TAIL_WARNING = 1e-6


class ParameterWarning(UserWarning):
    """A parameter lies outside the range where the protocol is known to work."""


class DiscardedWeightExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class ProtocolParams:
    """Physical and numerical parameters of one simulation.

    ``n_bins`` defaults to ``T_m / (2 dt)`` rounded to the nearest integer,
    i.e. a waveguide whose round trip takes half a mechanical period. Small
    explicit values are used for oracle-checked toy chains.
    """

    g0: float
    omega_m: float
    tau: float
    n_rep: int = 1
    dt: float = 0.5
    kappa: float = 1.0
    d_cav: int = 2
    d_mech: int = 15
    bin_dim: int = 2
    svd_threshold: float = DEFAULT_SVD_THRESHOLD
    max_bond: int | None = DEFAULT_MAX_BOND
    n_bins: int | None = None
    discarded_budget: float | None = None

    def __post_init__(self):
        if self.kappa != 1.0:
            raise ValueError("parameters are in units of kappa; kappa must be 1")
        if self.d_cav < 2 or self.d_mech < 2:
            raise ValueError("cavity and mechanical cutoffs must both be at least 2")
        if self.bin_dim < 2:
            raise ValueError("time bins need at least the 0 and 1 photon states")
        if self.dt <= 0 or self.tau <= 0:
            raise ValueError("dt and tau must be positive")
        if self.omega_m < 0 or self.n_rep < 0:
            raise ValueError("omega_m and n_rep must be non-negative")
        if not all(math.isfinite(x) for x in (self.g0, self.omega_m, self.dt, self.tau)):
            raise ValueError("non-finite parameter")

    @property
    def d_sys(self) -> int:
        return self.d_cav * self.d_mech

    @property
    def mech_period(self) -> float:
        return 2 * math.pi / self.omega_m if self.omega_m > 0 else math.inf

    @property
    def waveguide_bins(self) -> int:
        if self.n_bins is not None:
            return self.n_bins
        if self.omega_m <= 0:
            raise ValueError("omega_m = 0 needs an explicit n_bins")
        return int(round(self.mech_period / (2 * self.dt)))

    def with_(self, **changes) -> "ProtocolParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)

    def warnings(self) -> list[str]:
        """Human-readable notes for values outside the known-good ranges."""
        out = []
        if self.dt * self.kappa > 0.5:
            out.append(f"dt*kappa = {self.dt * self.kappa:g} exceeds 0.5")
        if self.omega_m * self.tau >= 0.3:
            out.append(f"omega_m*tau = {self.omega_m * self.tau:g} is not below 0.3")
        if self.kappa * self.tau <= 200:
            out.append(f"kappa*tau = {self.kappa * self.tau:g} is not above 200")
        return out


@dataclass(frozen=True)
class SystemOperators:
    h_sys: np.ndarray
    a_op: np.ndarray
    b_op: np.ndarray

    @property
    def dim(self) -> int:
        return self.h_sys.shape[0]


def destroy(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1).astype(complex)


def system_operators(params: ProtocolParams) -> SystemOperators:
    a = np.kron(destroy(params.d_cav), np.eye(params.d_mech))
    b = np.kron(np.eye(params.d_cav), destroy(params.d_mech))
    n_a = a.conj().T @ a
    x = b + b.conj().T
    h = params.omega_m * (b.conj().T @ b) + params.g0 * (n_a @ x)
    return SystemOperators(h_sys=h, a_op=a, b_op=b)


def time_bin_generator(params: ProtocolParams) -> np.ndarray:
    """Anti-Hermitian generator ``-i H_S dt + sqrt(kappa dt)(a c^+ - a^+ c)``."""
    ops = system_operators(params)
    c = destroy(params.bin_dim)
    eye_bin = np.eye(params.bin_dim)
    coupling = np.kron(ops.a_op, c.conj().T) - np.kron(ops.a_op.conj().T, c)
    return (
        -1j * params.dt * np.kron(ops.h_sys, eye_bin)
        + math.sqrt(params.kappa * params.dt) * coupling
    )


def build_time_bin_unitary(params: ProtocolParams) -> TwoSiteGate:
    """Exact exponential of the system/bin generator as a (system, bin) gate.

    ``i G`` is Hermitian, so ``exp(G)`` follows from one ``eigh`` call.
    """
    gen = time_bin_generator(params)
    if not np.all(np.isfinite(gen)):
        raise FloatingPointError("non-finite generator entries")
    herm = 1j * gen
    herm = 0.5 * (herm + herm.conj().T)
    w, v = np.linalg.eigh(herm)
    u = (v * np.exp(-1j * w)[None, :]) @ v.conj().T
    return TwoSiteGate(u, (params.d_sys, params.bin_dim))


ProgressHook = Callable[[int, int, float], None]


def sweep_forward(
    state: MpsState,
    gate: TwoSiteGate,
    params: ProtocolParams,
    progress: ProgressHook | None = None,
    in_place: bool = False,
) -> MpsState:
    """Walk the system from site 0 to the end, interacting with every bin.

    Each step applies the bin unitary to (system, bin) and then swaps the two,
    done as one fused SVD. One sweep is ``n_bins * dt = T_m / 2`` of physical
    time.
    """
    if state.system_site_index != 0:
        raise ValueError("forward sweep must start with the system at site 0")
    out = state if in_place else state.copy()
    n_bins = out.n_sites - 1
    for k in range(n_bins):
        out.apply_gate_(k, gate, params.svd_threshold, params.max_bond, swap=True)
        if progress is not None and (k + 1) % 1000 == 0:
            progress(k + 1, out.max_bond_dim, out.discarded_weight)
    return out


def swap_back(
    state: MpsState,
    params: ProtocolParams | None = None,
    in_place: bool = False,
) -> MpsState:
    """Return the system from the last site to site 0 without evolving time."""
    out = state if in_place else state.copy()
    if out.system_site_index != out.n_sites - 1:
        raise ValueError("swap-back must start with the system at the last site")
    threshold = params.svd_threshold if params is not None else DEFAULT_SVD_THRESHOLD
    max_bond = params.max_bond if params is not None else DEFAULT_MAX_BOND
    for k in range(out.n_sites - 2, -1, -1):
        out.apply_gate_(k, None, threshold, max_bond, swap=True)
    return out


def evolve_repetitions(
    state: MpsState,
    params: ProtocolParams,
    gate: TwoSiteGate | None = None,
    on_snapshot: Callable[[float, MpsState], None] | None = None,
    progress: ProgressHook | None = None,
) -> MpsState:
    """Run ``2 * n_rep`` bounces (forward sweep followed by swap-back).

    ``on_snapshot(rep_index, state)`` is called after every bounce with
    ``rep_index`` = 0.5, 1.0, 1.5, ... and the system back at site 0.
    """
    if gate is None:
        gate = build_time_bin_unitary(params)
    out = state.copy()
    for half in range(2 * params.n_rep):
        sweep_forward(out, gate, params, progress=progress, in_place=True)
        swap_back(out, params, in_place=True)
        if params.discarded_budget is not None and out.discarded_weight > params.discarded_budget:
            raise DiscardedWeightExceeded(
                f"discarded weight {out.discarded_weight:.3g} exceeds budget "
                f"{params.discarded_budget:.3g} after {(half + 1) / 2} repetitions"
            )
        if on_snapshot is not None:
            on_snapshot((half + 1) / 2, out)
    return out


def number_operator(d: int) -> np.ndarray:
    return np.diag(np.arange(d, dtype=float)).astype(complex)


def total_excitation(state: MpsState, params: ProtocolParams) -> float:
    """Expectation of cavity photons plus photons in all bins."""
    n_bin = number_operator(params.bin_dim)
    n_cav = np.kron(number_operator(params.d_cav), np.eye(params.d_mech))
    total = 0.0
    for k in range(state.n_sites):
        op = n_cav if k == state.system_site_index else n_bin
        total += state.expectation(k, op).real
    return total


def mechanical_populations(state: MpsState, params: ProtocolParams) -> np.ndarray:
    """Diagonal of the reduced mechanical density matrix."""
    rho = state.reduced_density_matrix(state.system_site_index)
    rho = rho.reshape(params.d_cav, params.d_mech, params.d_cav, params.d_mech)
    return np.einsum("imin->mn", rho).diagonal().real.copy()


def check_mechanical_cutoff(state: MpsState, params: ProtocolParams) -> float:
    """Population of the highest retained phonon level; warns if too large."""
    tail = float(mechanical_populations(state, params)[-1])
    if tail > MECH_TAIL_WARNING:
        warnings.warn(
            f"phonon level {params.d_mech - 1} holds population {tail:.2e}; "
            "increase d_mech",
            ParameterWarning,
            stacklevel=2,
        )
    return tail
