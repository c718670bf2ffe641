"""Initial waveguide states: photon wavepackets written as MPS segments.

Bin ``n`` covers the time interval ``[n dt, (n + 1) dt)`` measured from the
system end of the waveguide and is represented by its midpoint. Each bin
holds at most ``bin_dim - 1`` photons; the wavepackets built here only use
the 0 and 1 photon states.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import ProtocolParams
from .mps import LAMBDA_GUARD, MpsState, basis_product_state, concatenate

SQRT_HALF = 1 / math.sqrt(2)


class LayoutError(ValueError):
    pass


@dataclass
class TemporalMode:
    """Normalized single-photon envelope over a contiguous range of bins."""

    start_bin: int
    amplitudes: np.ndarray
    center_time: float = math.nan
    tau: float = math.nan

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).ravel()
        if self.amplitudes.size == 0:
            raise ValueError("a temporal mode needs at least one bin")
        nrm = np.linalg.norm(self.amplitudes)
        if abs(nrm - 1) > 1e-12:
            raise ValueError(f"mode amplitudes have norm {nrm}, expected 1")

    @property
    def stop_bin(self) -> int:
        return self.start_bin + self.amplitudes.size

    @property
    def n_bins(self) -> int:
        return self.amplitudes.size

    def overlaps(self, other: "TemporalMode") -> bool:
        return self.start_bin < other.stop_bin and other.start_bin < self.stop_bin

    @classmethod
    def from_amplitudes(cls, start_bin: int, amplitudes: Sequence[complex]) -> "TemporalMode":
        """Raw envelope; normalized here."""
        amps = np.asarray(amplitudes, dtype=complex)
        return cls(start_bin, amps / np.linalg.norm(amps))


@dataclass
class WaveguideLayout:
    """Bin grid of the feedback waveguide and where the two modes sit.

    ``mode_centers`` are bin-boundary indices: a mode centred at ``m`` has
    its centre at time ``m * dt``, so a window of an even number of bins is
    exactly symmetric about it.
    """

    n_bins: int
    dt: float
    bin_dim: int = 2
    mode_centers: list[int] = field(default_factory=list)

    def bin_times(self) -> np.ndarray:
        return (np.arange(self.n_bins) + 0.5) * self.dt

    @classmethod
    def for_params(cls, params: ProtocolParams) -> "WaveguideLayout":
        """Physical layout: round trip of ``T_m / 2``, modes ``T_m / 4`` apart.

        The first mode is centred ``3 tau / 2`` from the system end so that
        its whole window enters the cavity during the first sweep.
        """
        n_bins = params.waveguide_bins
        first = int(round(1.5 * params.tau / params.dt))
        sep = int(round(params.mech_period / 4 / params.dt))
        layout = cls(n_bins, params.dt, params.bin_dim, [first, first + sep])
        half = int(math.ceil(params.tau / params.dt / 2))
        if first + sep + half > n_bins:
            raise LayoutError(
                f"second mode window ends at bin {first + sep + half}, past the "
                f"{n_bins}-bin waveguide; tau is too long for this omega_m"
            )
        return layout

    def check_physical(self, params: ProtocolParams) -> list[str]:
        """Deviations from the half-period round trip and quarter-period spacing."""
        notes = []
        t_m = params.mech_period
        if abs(self.n_bins * self.dt - t_m / 2) > self.dt:
            notes.append(
                f"waveguide spans {self.n_bins * self.dt:g}, not T_m/2 = {t_m / 2:g}"
            )
        if len(self.mode_centers) == 2:
            sep = (self.mode_centers[1] - self.mode_centers[0]) * self.dt
            if abs(sep - t_m / 4) > self.dt:
                notes.append(f"mode separation {sep:g} is not T_m/4 = {t_m / 4:g}")
        return notes


def gaussian_mode(
    center_time: float,
    tau: float,
    layout: WaveguideLayout,
    existing: Sequence[TemporalMode] = (),
) -> TemporalMode:
    """Gaussian wavepacket of extent ``tau``.

    ``f_n ~ exp(-(t_n - t_c)^2 / (2 s^2))`` with ``s = tau / 4``, kept on
    the half-open window ``-tau/2 <= t_n - t_c < tau/2`` and normalized.
    """
    t = layout.bin_times()
    offset = t - center_time
    inside = np.flatnonzero((offset >= -tau / 2 - 1e-9 * layout.dt) & (offset < tau / 2 - 1e-9 * layout.dt))
    if inside.size == 0:
        raise LayoutError("mode window contains no bins")
    lo, hi = int(inside[0]), int(inside[-1]) + 1
    if center_time - tau / 2 < -1e-9 * layout.dt or center_time + tau / 2 > layout.n_bins * layout.dt + 1e-9 * layout.dt:
        raise LayoutError(
            f"mode window [{center_time - tau / 2:g}, {center_time + tau / 2:g}) "
            f"leaves the waveguide [0, {layout.n_bins * layout.dt:g})"
        )
    s = tau / 4
    amps = np.exp(-(offset[lo:hi] ** 2) / (2 * s * s)).astype(complex)
    amps /= np.linalg.norm(amps)
    mode = TemporalMode(lo, amps, center_time=center_time, tau=tau)
    for other in existing:
        if mode.overlaps(other):
            raise LayoutError("mode window overlaps an existing mode")
    return mode


def layout_modes(params: ProtocolParams, layout: WaveguideLayout) -> list[TemporalMode]:
    modes: list[TemporalMode] = []
    for c in layout.mode_centers:
        modes.append(gaussian_mode(c * layout.dt, params.tau, layout, modes))
    return modes


def _check_coefficients(c0: complex, c1: complex):
    if abs(abs(c0) ** 2 + abs(c1) ** 2 - 1) > 1e-12:
        raise ValueError("|c0|^2 + |c1|^2 must be 1")


def decompose_mode_state(
    mode: TemporalMode,
    c0: complex = 0.0,
    c1: complex = 1.0,
    threshold: float = 0.0,
    bin_dim: int = 2,
) -> MpsState:
    """Canonical MPS of ``c0 |0...0> + c1 sum_n f_n c_n^+ |0...0>``.

    Works bond by bond from the left. The reduced state of bins ``1..k`` is
    supported on ``|0...0>`` and the normalized partial photon
    ``|W_k> ~ sum_{n<=k} f_n |1_n>``, so each reduced density matrix is 2x2;
    its eigenvectors are the left Schmidt vectors and the square roots of its
    eigenvalues the Schmidt values. Gamma tensors are the overlaps of
    consecutive left Schmidt vectors divided by the previous Schmidt values.

    Returns:
        A segment with ``system_site_index=None`` and bond dimension <= 2.
    """
    _check_coefficients(c0, c1)
    f = mode.amplitudes
    n = f.size
    p = np.concatenate([[0.0], np.cumsum(np.abs(f) ** 2)])
    p[-1] = 1.0
    w0, w1 = abs(c0) ** 2, abs(c1) ** 2

    # left Schmidt basis at each bond as columns (coefficient on |0>, on |W_k>)
    bases: list[np.ndarray] = [np.array([[1.0 + 0j], [0.0]])]
    lambdas: list[np.ndarray] = [np.ones(1)]
    for k in range(1, n):
        pk = p[k]
        rho = np.array(
            [[w0 + w1 * (1 - pk), c0 * np.conj(c1) * math.sqrt(pk)],
             [np.conj(c0) * c1 * math.sqrt(pk), w1 * pk]],
            dtype=complex,
        )
        ev, vecs = np.linalg.eigh(rho)
        order = np.argsort(ev)[::-1]
        ev, vecs = np.clip(ev[order], 0.0, None), vecs[:, order]
        lam = np.sqrt(ev)
        keep = max(1, int(np.count_nonzero(lam > max(threshold, LAMBDA_GUARD) * lam[0])))
        lam = lam[:keep] / np.linalg.norm(lam[:keep])
        bases.append(vecs[:, :keep])
        lambdas.append(lam)
    # the full segment is pure: one "Schmidt vector", the state itself
    bases.append(np.array([[c0], [c1]], dtype=complex))
    lambdas.append(np.ones(1))

    gammas = []
    for k in range(1, n + 1):
        left, right = bases[k - 1], bases[k]
        ratio = math.sqrt(p[k - 1] / p[k]) if p[k] > 0 else 0.0
        amp = f[k - 1] / math.sqrt(p[k]) if p[k] > 0 else 0.0
        a_l, b_l = left[0].conj(), left[1].conj()
        a_r, b_r = right[0], right[1]
        g = np.zeros((left.shape[1], bin_dim, right.shape[1]), dtype=complex)
        g[:, 0, :] = np.outer(a_l, a_r) + ratio * np.outer(b_l, b_r)
        g[:, 1, :] = amp * np.outer(a_l, b_r)
        inv = np.where(lambdas[k - 1] > LAMBDA_GUARD, 1 / lambdas[k - 1], 0.0)
        gammas.append(g * inv[:, None, None])
    return MpsState(gammas, lambdas[1:n], system_site_index=None)


def vacuum_segment(n_bins: int, bin_dim: int = 2) -> MpsState:
    return basis_product_state([bin_dim] * n_bins, [0] * n_bins, system_site_index=None)


def system_ground_segment(params: ProtocolParams) -> MpsState:
    return basis_product_state([params.d_sys], [0], system_site_index=0)


def build_waveguide_state(
    params: ProtocolParams,
    layout: WaveguideLayout,
    modes: Sequence[TemporalMode],
    coefficients: Sequence[tuple[complex, complex]],
) -> MpsState:
    """System ground state followed by the given modes in vacuum padding."""
    if layout.n_bins != params.waveguide_bins:
        raise LayoutError(
            f"layout has {layout.n_bins} bins, parameters call for {params.waveguide_bins}"
        )
    if layout.bin_dim != params.bin_dim:
        raise LayoutError("layout and parameters disagree on the bin dimension")
    order = sorted(range(len(modes)), key=lambda i: modes[i].start_bin)
    segments = [system_ground_segment(params)]
    cursor = 0
    for i in order:
        mode = modes[i]
        if mode.start_bin < cursor:
            raise LayoutError("temporal modes overlap")
        if mode.stop_bin > layout.n_bins:
            raise LayoutError("temporal mode extends past the waveguide")
        if mode.start_bin > cursor:
            segments.append(vacuum_segment(mode.start_bin - cursor, params.bin_dim))
        c0, c1 = coefficients[i]
        segments.append(decompose_mode_state(mode, c0, c1, bin_dim=params.bin_dim))
        cursor = mode.stop_bin
    if cursor < layout.n_bins:
        segments.append(vacuum_segment(layout.n_bins - cursor, params.bin_dim))
    return concatenate(segments, system_site_index=0)


def assemble_initial_state(
    params: ProtocolParams,
    layout: WaveguideLayout | None = None,
    modes: Sequence[TemporalMode] | None = None,
) -> MpsState:
    """``(1 + A1^+)(1 + A2^+)|vac>|0>_o|0>_m / 2`` with the system at site 0."""
    if layout is None:
        layout = WaveguideLayout.for_params(params)
    if modes is None:
        modes = layout_modes(params, layout)
    return build_waveguide_state(
        params, layout, modes, [(SQRT_HALF, SQRT_HALF)] * len(modes)
    )


def reference_basis_state(
    j: int,
    k: int,
    params: ProtocolParams,
    layout: WaveguideLayout | None = None,
    modes: Sequence[TemporalMode] | None = None,
) -> MpsState:
    """``A1^+^j A2^+^k |vac>|0>_o|0>_m`` for ``j, k`` in ``{0, 1}``."""
    if j not in (0, 1) or k not in (0, 1):
        raise ValueError("j and k must be 0 or 1")
    if layout is None:
        layout = WaveguideLayout.for_params(params)
    if modes is None:
        modes = layout_modes(params, layout)
    if len(modes) != 2:
        raise LayoutError("reference states need exactly two modes")
    coeffs = [(1.0 - j, float(j)), (1.0 - k, float(k))]
    return build_waveguide_state(params, layout, modes, coeffs)


def write_mode_csv(mode: TemporalMode, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_index", "re", "im"])
        for i, a in enumerate(mode.amplitudes):
            writer.writerow([mode.start_bin + i, repr(float(a.real)), repr(float(a.imag))])


def read_mode_csv(path: str | Path) -> TemporalMode:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    bins = [int(r["bin_index"]) for r in rows]
    if bins != list(range(bins[0], bins[0] + len(bins))):
        raise ValueError("mode CSV bins must be contiguous")
    amps = [float(r["re"]) + 1j * float(r["im"]) for r in rows]
    return TemporalMode.from_amplitudes(bins[0], amps)


def modes_from_config(entries: Sequence[dict], layout: WaveguideLayout) -> list[TemporalMode]:
    """Modes from config entries.

    Each entry is either ``{"center": t, "tau": tau}`` (times in 1/kappa) or
    ``{"start_bin": n, "amplitudes": [[re, im], ...]}``.
    """
    modes: list[TemporalMode] = []
    for entry in entries:
        if "amplitudes" in entry:
            amps = [complex(re, im) for re, im in entry["amplitudes"]]
            mode = TemporalMode.from_amplitudes(int(entry["start_bin"]), amps)
            if any(mode.overlaps(m) for m in modes):
                raise LayoutError("mode window overlaps an existing mode")
        else:
            mode = gaussian_mode(float(entry["center"]), float(entry["tau"]), layout, modes)
        modes.append(mode)
    return modes
