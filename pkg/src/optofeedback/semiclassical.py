"""Closed-form and kick-by-kick semiclassical model of the protocol.

The mechanics is a coherent state ``|beta>`` (position unit ``x_zp = 1``).
A photon passing through the cavity displaces it in momentum by roughly
``r = 4 g0 / kappa``; a displaced oscillator shifts the cavity so later
kicks are weaker. Between kicks the oscillator rotates by a quarter period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class SemiclassicalState:
    beta: complex = 0j
    phase: float = 0.0
    r: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.beta.real) and math.isfinite(self.beta.imag)):
            raise ValueError("beta must be finite")
        if self.r < 0:
            raise ValueError("kick strength r must be non-negative")

    @classmethod
    def for_coupling(cls, g0_over_kappa: float) -> "SemiclassicalState":
        return cls(0j, 0.0, 4 * abs(g0_over_kappa))


def phi1(g0_over_kappa: float) -> float:
    """Conditional phase of one repetition for instantaneous, unsaturated kicks."""
    return 32 * g0_over_kappa**2


def kick_amplitude(beta: complex, r: float) -> complex:
    """Displacement from one photon when the oscillator sits at ``beta``.

    The cavity shift from a displacement ``x = beta + beta*`` reduces the
    kick to ``-i r / (1 + (r/2)^2 x^2)``.
    """
    x = 2 * beta.real
    return -1j * r / (1 + (r / 2) ** 2 * x * x)


def photon_kick(state: SemiclassicalState, photon_present: int) -> SemiclassicalState:
    """Displace ``beta`` if a photon is present.

    Displacements compose as ``D(a) D(b) = exp(i Im(a b*)) D(a + b)``; the
    phase ``Im(a b*)`` is what the photon picks up.
    """
    if not photon_present:
        return state
    a = kick_amplitude(state.beta, state.r)
    return replace(
        state,
        beta=state.beta + a,
        phase=state.phase + (a * state.beta.conjugate()).imag,
    )


def quarter_period(state: SemiclassicalState) -> SemiclassicalState:
    """Free rotation over ``T_m / 4``: ``beta -> -i beta``."""
    b = state.beta
    return replace(state, beta=complex(b.imag, -b.real))


def run_semiclassical_protocol(
    j: int, k: int, g0_over_kappa: float, n_rep: int
) -> tuple[float, complex]:
    """Kick sequence ``j, k, j, k`` with quarter periods in between, ``n_rep`` times.

    Returns:
        The accumulated phase and ``beta`` one full period after the start of
        the last repetition (i.e. after the trailing quarter period).
    """
    state = SemiclassicalState.for_coupling(g0_over_kappa)
    for _ in range(n_rep):
        for photon in (j, k, j, k):
            state = quarter_period(photon_kick(state, photon))
    return state.phase, state.beta


def semiclassical_conditional_phase(g0_over_kappa: float, n_rep: int) -> float:
    ph = {
        (j, k): run_semiclassical_protocol(j, k, g0_over_kappa, n_rep)[0]
        for j in (0, 1)
        for k in (0, 1)
    }
    return ph[1, 1] - ph[1, 0] - ph[0, 1] + ph[0, 0]


def residual_beta(r: float) -> complex:
    """Closed-form ``beta`` right after the fourth kick of one repetition.

    Evaluated as printed in the source derivation; equals the kick-by-kick
    value before the trailing quarter period.
    """
    b5 = r**5 / ((1 + r**4) ** 2 + r**4)
    return complex(b5, r * (1 / (1 + r**4) - 1 / (1 + r**2 * b5**2)))


def semiclassical_fidelity(beta_final: complex) -> float:
    """``|<0|beta>|^2``."""
    return math.exp(-abs(beta_final) ** 2)


def loss_penalty(fidelity: float, eta: float, n_rep: int) -> float:
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    return fidelity * eta**n_rep


def parasitic_closed_form(sigma_over_kappa: float) -> float:
    return 0.5 * (1 + math.exp(-32 * sigma_over_kappa**2))


def parasitic_dephasing_fidelity(
    sigma_over_kappa: float,
    n_samples: int,
    seed: int | np.random.SeedSequence | None = None,
    chunk: int = 1 << 18,
) -> tuple[float, float, float]:
    """Average fidelity of ``(|10> + |01>)/sqrt 2`` under parasitic-mode jitter.

    Four independent frequency offsets ``xi_i ~ N(0, sigma^2)`` (one per
    bounce) give a relative phase ``theta = 4 (xi1 + xi3 - xi2 - xi4)``
    between the two components; ``F(theta) = (1 + cos theta) / 2``.

    Samples are drawn in chunks, each from its own child of ``seed``'s
    SeedSequence, so the result does not depend on how the work is split.

    Returns:
        ``(monte_carlo_mean, closed_form, standard_error)``.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    if not (math.isfinite(sigma_over_kappa) and sigma_over_kappa >= 0):
        raise ValueError("sigma must be finite and non-negative")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    n_chunks = -(-n_samples // chunk)
    total = total_sq = 0.0
    for i, child in enumerate(ss.spawn(n_chunks)):
        m = min(chunk, n_samples - i * chunk)
        xi = np.random.default_rng(child).normal(0.0, sigma_over_kappa, size=(m, 4))
        theta = 4 * (xi[:, 0] + xi[:, 2] - xi[:, 1] - xi[:, 3])
        f = 0.5 * (1 + np.cos(theta))
        total += float(f.sum())
        total_sq += float((f * f).sum())
    mean = total / n_samples
    var = max(total_sq / n_samples - mean * mean, 0.0)
    stderr = math.sqrt(var / n_samples) if n_samples > 1 else math.inf
    return mean, parasitic_closed_form(sigma_over_kappa), stderr


@dataclass
class SemiclassicalPoint:
    g0_over_kappa: float
    n_rep: int
    phase: float
    beta_sq: float
    fidelity: float


def semiclassical_table(
    g0_values: Sequence[float], n_reps: Sequence[int]
) -> list[SemiclassicalPoint]:
    rows = []
    for g in g0_values:
        for n in n_reps:
            _, beta = run_semiclassical_protocol(1, 1, g, n)
            rows.append(
                SemiclassicalPoint(
                    g, n, semiclassical_conditional_phase(g, n), abs(beta) ** 2,
                    semiclassical_fidelity(beta),
                )
            )
    return rows


def semiclassical_pi_curve(
    n_reps: Sequence[int],
    target: float = math.pi,
    tolerance: float = 1e-10,
) -> list[SemiclassicalPoint]:
    """Coupling giving ``target`` phase for each ``n_rep``; unreachable ones skipped.

    The saturating kick caps the phase one repetition can produce, so small
    ``n_rep`` may have no solution.
    """
    from .protocol import BracketError, bisect_phase, semiclassical_seed

    out = []
    for n in n_reps:
        try:
            g, _ = bisect_phase(
                lambda g, n=n: semiclassical_conditional_phase(g, n),
                semiclassical_seed(n, target), target, tolerance,
                lo_factor=0.9, hi_factor=1.1, max_expand=20, max_iter=200,
            )
        except BracketError:
            continue
        _, beta = run_semiclassical_protocol(1, 1, g, n)
        out.append(
            SemiclassicalPoint(g, n, semiclassical_conditional_phase(g, n), abs(beta) ** 2,
                               semiclassical_fidelity(beta))
        )
    return out
