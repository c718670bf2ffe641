"""The feedback CPHASE protocol and its figures of merit.

The physical state starts in ``(|00> + |01> + |10> + |11>) / 2`` and is
evolved with the given coupling. Each basis state ``|jk>`` is evolved
separately with ``g0 = 0`` under the same schedule; overlaps with these
references strip away the linear (cavity) distortion of the wavepackets,
so what remains is the phase and leakage caused by the mechanics.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .dynamics import (
    DiscardedWeightExceeded,
    ProtocolParams,
    build_time_bin_unitary,
    check_mechanical_cutoff,
    swap_back,
    sweep_forward,
)
from .mps import MpsState, entropy_profile, overlap
from .state_prep import (
    TemporalMode,
    WaveguideLayout,
    assemble_initial_state,
    layout_modes,
    reference_basis_state,
)

logger = logging.getLogger(__name__)

BASIS_LABELS = ("00", "01", "10", "11")
MIN_OVERLAP = 1e-6
CSV_SCHEMA_VERSION = 1


class PhaseUndefinedError(ValueError):
    """An overlap is too small for its argument to mean anything."""


class BracketError(RuntimeError):
    pass


@dataclass
class ObservableRecord:
    rep_index: float
    entropy_profile: np.ndarray
    s_oo: float
    s_om: float
    phase: float
    overlaps: dict[str, complex]
    fidelity_F: float
    discarded_weight: float
    max_bond: int = 1
    mech_tail_population: float = 0.0

    @property
    def fidelities(self) -> dict[str, float]:
        return {k: abs(v) ** 2 for k, v in self.overlaps.items()}

    @property
    def infidelity(self) -> float:
        """``1/4 - F``: shortfall of the ``|11>`` overlap from its ideal value."""
        return 0.25 - self.fidelity_F


def entropy_from_phase(phi: float) -> float:
    """Entanglement entropy (bits) of ``(|00>+|01>+|10>+e^{i phi}|11>)/2``."""
    c = math.cos(phi / 2)
    acc = 0.0
    for x in (1 + c, 1 - c):
        if x > 0:
            acc += x * math.log2(x)
    return max(0.0, 1 - acc / 2)


def wrap_phase(x: float) -> float:
    """Map onto ``(-pi, pi]``."""
    y = math.remainder(x, 2 * math.pi)
    return math.pi if y == -math.pi else y


def conditional_phase(record: ObservableRecord | dict[str, complex]) -> float:
    """``arg<11|psi> - arg<10|psi> - arg<01|psi> + arg<00|psi>``, wrapped.

    Single-photon phases cancel, leaving the phase conditioned on both
    photons being present.
    """
    ov = record.overlaps if isinstance(record, ObservableRecord) else record
    small = [k for k in BASIS_LABELS if abs(ov[k]) < MIN_OVERLAP]
    if small:
        raise PhaseUndefinedError(f"overlaps {small} are below {MIN_OVERLAP}")
    phi = (
        np.angle(ov["11"]) - np.angle(ov["10"]) - np.angle(ov["01"]) + np.angle(ov["00"])
    )
    return wrap_phase(float(phi))


@dataclass(frozen=True)
class Bipartition:
    s_om_bond: int
    s_oo_bond: int


def bipartition_labels(
    layout: WaveguideLayout,
    modes: Sequence[TemporalMode],
    state: MpsState | None = None,
) -> Bipartition:
    """Bonds used for ``S_om`` (system | all bins) and ``S_oo`` (between modes).

    With the system at chain site 0, bin ``n`` sits at site ``n + 1`` and
    bond ``b`` separates bins ``< b`` from bins ``>= b``.
    """
    if state is not None:
        if state.system_site_index != 0:
            raise ValueError("bipartitions are defined with the system at site 0")
        if state.n_sites != layout.n_bins + 1:
            raise ValueError("state does not match the layout")
    if len(modes) != 2:
        raise ValueError("need exactly two modes")
    first, second = sorted(modes, key=lambda m: m.start_bin)
    if first.stop_bin > second.start_bin:
        raise ValueError("modes overlap")
    return Bipartition(0, (first.stop_bin + second.start_bin) // 2)


class ReferenceEvolution:
    """The four ``g0 = 0`` basis states, advanced one bounce at a time.

    Snapshots are cached by bounce count, so runs that differ only in ``g0``
    can share one instance.
    """

    def __init__(
        self,
        params: ProtocolParams,
        layout: WaveguideLayout,
        modes: Sequence[TemporalMode],
    ):
        self.params = params.with_(g0=0.0, n_rep=0)
        self.layout = layout
        self.modes = list(modes)
        self.gate = build_time_bin_unitary(self.params)
        self._states: dict[str, MpsState] = {}
        self._snapshots: list[dict[str, MpsState]] = []
        for label in BASIS_LABELS:
            j, k = int(label[0]), int(label[1])
            self._states[label] = reference_basis_state(j, k, self.params, layout, self.modes)
        self._snapshots.append({k: v.copy() for k, v in self._states.items()})

    def at(self, bounces: int) -> dict[str, MpsState]:
        while len(self._snapshots) <= bounces:
            for label, st in self._states.items():
                # the vacuum reference is stationary
                if label != "00":
                    sweep_forward(st, self.gate, self.params, in_place=True)
                    swap_back(st, self.params, in_place=True)
            self._snapshots.append({k: v.copy() for k, v in self._states.items()})
        return self._snapshots[bounces]


_REFERENCE_CACHE: dict[tuple, ReferenceEvolution] = {}


def shared_references(
    params: ProtocolParams, layout: WaveguideLayout, modes: Sequence[TemporalMode]
) -> ReferenceEvolution:
    key = (
        params.with_(g0=0.0, n_rep=0),
        layout.n_bins,
        layout.dt,
        tuple((m.start_bin, m.amplitudes.tobytes()) for m in modes),
    )
    if key not in _REFERENCE_CACHE:
        _REFERENCE_CACHE[key] = ReferenceEvolution(params, layout, modes)
    return _REFERENCE_CACHE[key]


def clear_reference_cache() -> None:
    _REFERENCE_CACHE.clear()


def make_record(
    state: MpsState,
    refs: dict[str, MpsState],
    rep_index: float,
    bipartition: Bipartition,
    params: ProtocolParams,
    previous_phase: float | None = None,
) -> ObservableRecord:
    overlaps = {k: overlap(refs[k], state) for k in BASIS_LABELS}
    profile = entropy_profile(state)
    try:
        raw = conditional_phase(overlaps)
    except PhaseUndefinedError:
        raw = math.nan
    if previous_phase is None or math.isnan(raw) or math.isnan(previous_phase):
        phase = raw
    else:
        phase = previous_phase + wrap_phase(raw - previous_phase)
    return ObservableRecord(
        rep_index=rep_index,
        entropy_profile=profile,
        s_oo=float(profile[bipartition.s_oo_bond]),
        s_om=float(profile[bipartition.s_om_bond]),
        phase=phase,
        overlaps=overlaps,
        fidelity_F=abs(overlaps["11"]) ** 2,
        discarded_weight=state.discarded_weight,
        max_bond=state.max_bond_dim,
        mech_tail_population=check_mechanical_cutoff(state, params),
    )


def run_protocol(
    params: ProtocolParams,
    layout: WaveguideLayout | None = None,
    modes: Sequence[TemporalMode] | None = None,
    references: ReferenceEvolution | None = None,
    include_initial: bool = False,
    progress: Callable[[int, int, float], None] | None = None,
) -> list[ObservableRecord]:
    """Evolve the protocol state and record observables after every bounce.

    Returns one record per bounce (``rep_index`` 0.5, 1.0, ..., ``n_rep``),
    preceded by the ``rep_index = 0`` record if ``include_initial``.
    """
    if layout is None:
        layout = WaveguideLayout.for_params(params)
    if modes is None:
        modes = layout_modes(params, layout)
    if references is None:
        references = shared_references(params, layout, modes)
    parts = bipartition_labels(layout, modes)
    gate = build_time_bin_unitary(params)
    state = assemble_initial_state(params, layout, modes)

    records: list[ObservableRecord] = []
    prev: float | None = None
    if include_initial:
        rec = make_record(state, references.at(0), 0.0, parts, params)
        records.append(rec)
        prev = rec.phase
    for half in range(1, 2 * params.n_rep + 1):
        sweep_forward(state, gate, params, progress=progress, in_place=True)
        swap_back(state, params, in_place=True)
        rec = make_record(state, references.at(half), half / 2, parts, params, prev)
        prev = rec.phase
        records.append(rec)
        logger.info(
            "g0=%g rep %.1f: phase %.5f, 4F %.6f, S_om %.2e, S_oo %.4f, chi %d",
            params.g0, rec.rep_index, rec.phase, 4 * rec.fidelity_F, rec.s_om,
            rec.s_oo, rec.max_bond,
        )
        if (
            params.discarded_budget is not None
            and state.discarded_weight > params.discarded_budget
        ):
            raise DiscardedWeightExceeded(
                f"discarded weight {state.discarded_weight:.3g} over budget"
            )
    return records


def full_repetition_records(records: Iterable[ObservableRecord]) -> list[ObservableRecord]:
    return [r for r in records if float(r.rep_index).is_integer() and r.rep_index > 0]


# --- pi-gate search ----------------------------------------------------------


@dataclass
class PiGatePoint:
    n_rep: int
    g0: float
    phase: float
    fidelity_4F: float
    iterations: int
    s_om: float = math.nan
    extra: dict = field(default_factory=dict)


def semiclassical_seed(n_rep: int, target_phase: float = math.pi) -> float:
    """Coupling for which ``n_rep`` ideal kicks give ``target_phase``."""
    return math.sqrt(target_phase / (32 * n_rep))


def bisect_phase(
    phase_of: Callable[[float], float],
    seed: float,
    target: float = math.pi,
    tolerance: float = 1e-3,
    lo_factor: float = 0.7,
    hi_factor: float = 1.4,
    max_expand: int = 6,
    max_iter: int = 60,
) -> tuple[float, int]:
    """Solve ``phase_of(g) = target`` for ``g`` by bisection around ``seed``.

    ``phase_of`` must increase with ``g`` inside the bracket. The bracket is
    widened geometrically up to ``max_expand`` times before giving up.
    """
    lo, hi = seed * lo_factor, seed * hi_factor
    f_lo, f_hi = phase_of(lo) - target, phase_of(hi) - target
    calls = 2
    for _ in range(max_expand):
        if f_lo <= 0 <= f_hi:
            break
        if f_lo > 0:
            hi, f_hi = lo, f_lo
            lo *= lo_factor
            f_lo = phase_of(lo) - target
        else:
            lo, f_lo = hi, f_hi
            hi *= hi_factor
            f_hi = phase_of(hi) - target
        calls += 1
    else:
        if not f_lo <= 0 <= f_hi:
            raise BracketError(f"no sign change of phase - target in [{lo:g}, {hi:g}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = phase_of(mid) - target
        calls += 1
        if abs(f_mid) < tolerance:
            return mid, calls
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    raise BracketError(f"bisection did not reach tolerance {tolerance}")


def pi_gate_search(
    params_base: ProtocolParams,
    n_reps: Sequence[int],
    target_phase: float = math.pi,
    tolerance: float = 1e-3,
    layout: WaveguideLayout | None = None,
) -> list[PiGatePoint]:
    """For each ``n_rep``, the coupling that accumulates ``target_phase``."""
    if layout is None:
        layout = WaveguideLayout.for_params(params_base)
    modes = layout_modes(params_base, layout)
    refs = shared_references(params_base, layout, modes)
    points = []
    for n in n_reps:
        cache: dict[float, list[ObservableRecord]] = {}

        def phase_of(g0: float, n=n, cache=cache) -> float:
            recs = run_protocol(params_base.with_(g0=g0, n_rep=n), layout, modes, refs)
            cache[g0] = recs
            return recs[-1].phase

        g_star, calls = bisect_phase(
            phase_of, semiclassical_seed(n, target_phase), target_phase, tolerance
        )
        last = cache[g_star][-1]
        points.append(
            PiGatePoint(n, g_star, last.phase, 4 * last.fidelity_F, calls, last.s_om)
        )
        logger.info("pi gate at n_rep=%d: g0=%.5f, 4F=%.5f", n, g_star, 4 * last.fidelity_F)
    return points


# --- output ------------------------------------------------------------------

RECORD_COLUMNS = [
    "rep", "s_oo", "s_om", "phase", "F00", "F01", "F10", "F11", "discarded_weight",
]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_records_csv(records: Sequence[ObservableRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_COLUMNS)
        for r in records:
            fid = r.fidelities
            w.writerow(
                [_fmt(r.rep_index), _fmt(r.s_oo), _fmt(r.s_om), _fmt(r.phase)]
                + [_fmt(fid[k]) for k in BASIS_LABELS]
                + [_fmt(r.discarded_weight)]
            )


def write_entropy_profile_csv(record: ObservableRecord, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bond_index", "S"])
        for i, s in enumerate(record.entropy_profile):
            w.writerow([i, _fmt(s)])


def write_pi_search_json(points: Sequence[PiGatePoint], path: str | Path, **meta) -> None:
    doc = {
        "schema_version": CSV_SCHEMA_VERSION,
        **meta,
        "points": [
            {
                "n_rep": p.n_rep,
                "g0": p.g0,
                "phase": p.phase,
                "fidelity_4F": p.fidelity_4F,
                "s_om": p.s_om,
                "evaluations": p.iterations,
            }
            for p in points
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))

