"""Finite matrix product states in Vidal's Gamma-lambda form.

A state on ``n`` sites is stored as ``n`` rank-3 tensors ``gammas[k]`` with
index order ``(left bond, physical, right bond)`` and ``n - 1`` Schmidt
vectors ``lambdas[k]`` living on the bond between sites ``k`` and ``k + 1``.
The outer boundary bonds have dimension one and an implicit Schmidt vector
``[1.0]``.

One site of the chain is the optomechanical "system" site. Its position
moves as the system is swapped through the waveguide, so it is tracked in
``MpsState.system_site_index``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

# Schmidt values below this fraction of the largest one are numerically zero:
# they are never kept, and never divided by when restoring Gamma tensors.
LAMBDA_GUARD = 1e-12

DEFAULT_SVD_THRESHOLD = 1e-4
DEFAULT_MAX_BOND = 64

CHECKPOINT_FORMAT = "optofeedback-mps"
CHECKPOINT_VERSION = 1


class BondDimensionError(RuntimeError):
    """Raised in strict mode when truncation cannot respect ``max_bond``."""


class LayoutMismatchError(ValueError):
    """Raised when two states do not share the same site layout."""


@dataclass
class TwoSiteGate:
    """Unitary acting on an ordered pair of neighbouring sites.

    Rows and columns are indexed by ``i_A * d_B + i_B``.
    """

    matrix: np.ndarray
    dims: tuple[int, int]

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        d = self.dims[0] * self.dims[1]
        if self.matrix.shape != (d, d):
            raise ValueError(
                f"gate of shape {self.matrix.shape} does not match dims {self.dims}"
            )

    def unitarity_error(self) -> float:
        m = self.matrix
        return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))))

    def is_unitary(self, tol: float = 1e-12) -> bool:
        return self.unitarity_error() < tol

    @classmethod
    def identity(cls, d_a: int, d_b: int) -> "TwoSiteGate":
        return cls(np.eye(d_a * d_b, dtype=complex), (d_a, d_b))


@dataclass
class MpsState:
    gammas: list[np.ndarray]
    lambdas: list[np.ndarray]
    # None for a bare waveguide segment without a system site.
    system_site_index: int | None = 0
    discarded_weight: float = 0.0
    # Strict mode turns silent bond capping into BondDimensionError.
    strict: bool = False
    # When False, truncated Schmidt vectors are left unnormalized so that the
    # lost norm can be compared against ``discarded_weight``.
    renormalize: bool = True

    def __post_init__(self):
        if len(self.lambdas) != len(self.gammas) - 1:
            raise ValueError("need exactly one Schmidt vector per internal bond")
        if self.system_site_index is not None and not (
            0 <= self.system_site_index < len(self.gammas)
        ):
            raise ValueError("system site index out of range")
        self.gammas = [np.asarray(g, dtype=complex) for g in self.gammas]
        self.lambdas = [np.asarray(lam, dtype=float) for lam in self.lambdas]
        self.check_bonds()

    def __len__(self) -> int:
        return len(self.gammas)

    @property
    def n_sites(self) -> int:
        return len(self.gammas)

    @property
    def site_dims(self) -> list[int]:
        return [g.shape[1] for g in self.gammas]

    @property
    def bond_dims(self) -> list[int]:
        return [lam.shape[0] for lam in self.lambdas]

    @property
    def max_bond_dim(self) -> int:
        return max(self.bond_dims, default=1)

    def copy(self) -> "MpsState":
        return MpsState(
            gammas=[g.copy() for g in self.gammas],
            lambdas=[lam.copy() for lam in self.lambdas],
            system_site_index=self.system_site_index,
            discarded_weight=self.discarded_weight,
            strict=self.strict,
            renormalize=self.renormalize,
        )

    def check_bonds(self):
        """Verify that neighbouring tensors agree on every bond dimension."""
        g = self.gammas
        if g[0].shape[0] != 1 or g[-1].shape[2] != 1:
            raise ValueError("outer bonds must have dimension 1")
        for k, lam in enumerate(self.lambdas):
            if not (g[k].shape[2] == lam.shape[0] == g[k + 1].shape[0]):
                raise ValueError(
                    f"bond {k}: {g[k].shape[2]} / {lam.shape[0]} / {g[k + 1].shape[0]}"
                )

    def left_lambda(self, site: int) -> np.ndarray:
        return self.lambdas[site - 1] if site > 0 else np.ones(1)

    def right_lambda(self, site: int) -> np.ndarray:
        return self.lambdas[site] if site < len(self.lambdas) else np.ones(1)

    def site_tensor(self, site: int) -> np.ndarray:
        """``lambda_left * Gamma * lambda_right`` for one site."""
        return (
            self.left_lambda(site)[:, None, None]
            * self.gammas[site]
            * self.right_lambda(site)[None, None, :]
        )

    def reduced_density_matrix(self, site: int) -> np.ndarray:
        """Single-site reduced density matrix, valid in canonical form."""
        t = self.site_tensor(site)
        return np.einsum("aib,ajb->ij", t, t.conj())

    def expectation(self, site: int, op: np.ndarray) -> complex:
        return complex(np.trace(self.reduced_density_matrix(site) @ op))

    # The in-place kernels below are what the sweeps use; the module-level
    # functions wrap them with a copy so that callers get value semantics.

    def apply_gate_(
        self,
        left_site: int,
        gate: TwoSiteGate | np.ndarray | None,
        svd_threshold: float = DEFAULT_SVD_THRESHOLD,
        max_bond: int | None = DEFAULT_MAX_BOND,
        swap: bool = False,
    ) -> None:
        k = left_site
        if not 0 <= k < self.n_sites - 1:
            raise IndexError(f"no site pair starting at {k} in a {self.n_sites}-site chain")
        ga, gb = self.gammas[k], self.gammas[k + 1]
        da, db = ga.shape[1], gb.shape[1]
        matrix = gate.matrix if isinstance(gate, TwoSiteGate) else gate
        if matrix is not None and matrix.shape != (da * db, da * db):
            raise ValueError(
                f"gate of shape {matrix.shape} cannot act on sites of dims ({da}, {db})"
            )

        lam_l = self.left_lambda(k)
        lam_m = self.lambdas[k]
        lam_r = self.right_lambda(k + 1)
        chi_l, chi_r = ga.shape[0], gb.shape[2]

        theta = np.tensordot(
            lam_l[:, None, None] * ga * lam_m[None, None, :], gb * lam_r[None, None, :],
            axes=(2, 0),
        )
        if matrix is not None:
            theta = theta.reshape(chi_l, da * db, chi_r)
            theta = np.tensordot(matrix, theta, axes=(1, 1)).transpose(1, 0, 2)
            theta = theta.reshape(chi_l, da, db, chi_r)
        if swap:
            theta = theta.transpose(0, 2, 1, 3)
            da, db = db, da
        theta = theta.reshape(chi_l * da, db * chi_r)

        u, s, vh = truncated_svd(theta)
        keep = _n_kept(s, svd_threshold)
        if max_bond is not None and keep > max_bond:
            if self.strict:
                raise BondDimensionError(
                    f"bond {k} needs {keep} Schmidt values above threshold, cap is {max_bond}"
                )
            keep = max_bond
        total = float(np.sum(s**2))
        dropped = float(np.sum(s[keep:] ** 2))
        s = s[:keep]
        if self.renormalize:
            self.discarded_weight += dropped / total if total > 0 else 0.0
            s = s / np.sqrt(np.sum(s**2))
        else:
            self.discarded_weight += dropped

        u = u[:, :keep].reshape(chi_l, da, keep)
        vh = vh[:keep, :].reshape(keep, db, chi_r)
        self.gammas[k] = u * _guarded_inverse(lam_l)[:, None, None]
        self.gammas[k + 1] = vh * _guarded_inverse(lam_r)[None, None, :]
        self.lambdas[k] = s

        if swap:
            if self.system_site_index == k:
                self.system_site_index = k + 1
            elif self.system_site_index == k + 1:
                self.system_site_index = k


def _guarded_inverse(lam: np.ndarray) -> np.ndarray:
    out = np.zeros_like(lam)
    big = lam > LAMBDA_GUARD * lam.max()
    out[big] = 1.0 / lam[big]
    return out


def _n_kept(s: np.ndarray, svd_threshold: float) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 1
    cut = max(svd_threshold, LAMBDA_GUARD)
    return max(1, int(np.count_nonzero(s > cut * s[0])))


def truncated_svd(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD with a fixed phase gauge on the singular vectors.

    Each left singular vector is rotated so that its first "large" entry
    (at least a tenth of the column maximum) is real and positive; the right
    vector absorbs the conjugate phase. This makes repeated decompositions of
    the same matrix reproducible for non-degenerate spectra.
    """
    if not np.all(np.isfinite(theta)):
        raise FloatingPointError("non-finite entries in two-site block")
    try:
        u, s, vh = np.linalg.svd(theta, full_matrices=False)
    except np.linalg.LinAlgError:
        logger.warning("gesdd failed on a %s block, retrying with gesvd", theta.shape)
        u, s, vh = scipy.linalg.svd(theta, full_matrices=False, lapack_driver="gesvd")
    mag = np.abs(u)
    pivot = np.argmax(mag >= 0.1 * mag.max(axis=0, keepdims=True), axis=0)
    ref = u[pivot, np.arange(u.shape[1])]
    phase = np.ones_like(ref)
    nz = np.abs(ref) > 0
    phase[nz] = ref[nz].conj() / np.abs(ref[nz])
    return u * phase[None, :], s, vh * phase.conj()[:, None]


def apply_two_site_gate(
    state: MpsState,
    left_site: int,
    gate: TwoSiteGate | np.ndarray,
    svd_threshold: float = DEFAULT_SVD_THRESHOLD,
    max_bond: int | None = DEFAULT_MAX_BOND,
    swap: bool = False,
) -> MpsState:
    """Apply a gate to sites ``left_site`` and ``left_site + 1``.

    The two-site block is contracted with the gate and split again by SVD.
    Singular values at or below ``svd_threshold`` times the largest one are
    dropped, at most ``max_bond`` are kept, and the kept ones are rescaled to
    unit square sum. The dropped weight is added to
    ``state.discarded_weight``.

    With ``swap=True`` the two physical legs trade places after the gate is
    applied, which is how the system site is walked along the chain.

    Returns:
        A new state; the input is not modified.
    """
    out = state.copy()
    out.apply_gate_(left_site, gate, svd_threshold, max_bond, swap=swap)
    return out


def swap_adjacent(
    state: MpsState,
    left_site: int,
    svd_threshold: float = DEFAULT_SVD_THRESHOLD,
    max_bond: int | None = DEFAULT_MAX_BOND,
) -> MpsState:
    """Exchange the physical contents of two neighbouring sites."""
    out = state.copy()
    out.apply_gate_(left_site, None, svd_threshold, max_bond, swap=True)
    return out


def schmidt_spectrum(state: MpsState, bond: int) -> np.ndarray:
    if not 0 <= bond < len(state.lambdas):
        raise IndexError(f"bond {bond} is not an internal bond")
    return state.lambdas[bond].copy()


def entropy_of_spectrum(lam: np.ndarray) -> float:
    """Von Neumann entropy in bits of a Schmidt spectrum."""
    p = np.asarray(lam, dtype=float) ** 2
    p = p[p > 0]
    return float(max(0.0, -np.sum(p * np.log2(p))))


def entanglement_entropy(state: MpsState, bond: int) -> float:
    return entropy_of_spectrum(schmidt_spectrum(state, bond))


def entropy_profile(state: MpsState) -> np.ndarray:
    return np.array([entropy_of_spectrum(lam) for lam in state.lambdas])


def overlap(a: MpsState, b: MpsState) -> complex:
    """``<a|b>`` by a left-to-right transfer-matrix contraction."""
    if a.site_dims != b.site_dims or a.system_site_index != b.system_site_index:
        raise LayoutMismatchError("states have different site layouts")
    env = np.ones((1, 1), dtype=complex)
    for k in range(a.n_sites):
        ta = a.gammas[k] * a.right_lambda(k)[None, None, :]
        tb = b.gammas[k] * b.right_lambda(k)[None, None, :]
        env = np.tensordot(env, ta.conj(), axes=(0, 0))
        env = np.tensordot(env, tb, axes=([0, 1], [0, 1]))
    return complex(env[0, 0])


def norm_squared(state: MpsState) -> float:
    return overlap(state, state).real


def canonicalize(state: MpsState) -> MpsState:
    """Bring any MPS with consistent bonds into Vidal canonical form.

    The chain is first made left-orthonormal by QR, then split right to left
    with gauge-fixed SVDs. Schmidt values at the numerical-zero guard are
    dropped; the state is normalized.
    """
    n = state.n_sites
    mats = [state.gammas[k] * state.right_lambda(k)[None, None, :] for k in range(n)]
    # left sweep: plain QR
    for k in range(n - 1):
        chi_l, d, chi_r = mats[k].shape
        q, r = np.linalg.qr(mats[k].reshape(chi_l * d, chi_r))
        mats[k] = q.reshape(chi_l, d, q.shape[1])
        mats[k + 1] = np.tensordot(r, mats[k + 1], axes=(1, 0))
    nrm = np.linalg.norm(mats[-1])
    if nrm == 0:
        raise ValueError("cannot canonicalize the zero state")
    mats[-1] = mats[-1] / nrm

    # right sweep: SVD, producing right-orthonormal tensors and lambdas
    lambdas: list[np.ndarray] = [np.ones(1)] * (n - 1)
    right: list[np.ndarray] = [np.empty(0)] * n
    carry = mats[-1]
    for k in range(n - 1, 0, -1):
        chi_l, d, chi_r = carry.shape
        u, s, vh = truncated_svd(carry.reshape(chi_l, d * chi_r))
        keep = _n_kept(s, 0.0)
        s = s[:keep] / np.linalg.norm(s[:keep])
        right[k] = vh[:keep].reshape(keep, d, chi_r)
        lambdas[k - 1] = s
        carry = np.tensordot(mats[k - 1], u[:, :keep] * s[None, :], axes=(2, 0))
    right[0] = carry / np.linalg.norm(carry)

    gammas = [
        right[k] * _guarded_inverse(lambdas[k] if k < n - 1 else np.ones(1))[None, None, :]
        for k in range(n)
    ]
    return MpsState(
        gammas=gammas,
        lambdas=lambdas,
        system_site_index=state.system_site_index,
        discarded_weight=state.discarded_weight,
        strict=state.strict,
        renormalize=state.renormalize,
    )


def product_state(
    local_states: Sequence[np.ndarray], system_site_index: int | None = 0
) -> MpsState:
    """MPS of a product of normalized single-site vectors."""
    gammas = []
    for v in local_states:
        v = np.asarray(v, dtype=complex)
        v = v / np.linalg.norm(v)
        gammas.append(v.reshape(1, -1, 1))
    lambdas = [np.ones(1) for _ in range(len(gammas) - 1)]
    return MpsState(gammas, lambdas, system_site_index=system_site_index)


def basis_product_state(
    site_dims: Sequence[int], occupations: Sequence[int], system_site_index: int | None = 0
) -> MpsState:
    vecs = []
    for d, i in zip(site_dims, occupations):
        v = np.zeros(d, dtype=complex)
        v[i] = 1.0
        vecs.append(v)
    return product_state(vecs, system_site_index)


def concatenate(
    segments: Sequence[MpsState], system_site_index: int | None = 0
) -> MpsState:
    """Join MPS segments that are mutually unentangled (product between them)."""
    gammas: list[np.ndarray] = []
    lambdas: list[np.ndarray] = []
    for seg in segments:
        if gammas:
            lambdas.append(np.ones(1))
        gammas.extend(g.copy() for g in seg.gammas)
        lambdas.extend(lam.copy() for lam in seg.lambdas)
    return MpsState(gammas, lambdas, system_site_index=system_site_index)


# --- checkpoint format -------------------------------------------------------
#
# JSON document:
#   {"format": "optofeedback-mps", "version": 1,
#    "system_site_index": int, "discarded_weight": float,
#    "sites": [{"shape": [chi_l, d, chi_r], "data": [re, im, re, im, ...]}, ...],
#    "lambdas": [[...], ...]}
# Gamma data is flattened in row-major (C) order and stored as interleaved
# (real, imaginary) pairs. Floats are written with repr precision so a
# round trip is exact.


def to_checkpoint(state: MpsState) -> dict:
    sites = []
    for g in state.gammas:
        pairs = np.stack([g.real.ravel(), g.imag.ravel()], axis=1).ravel()
        sites.append({"shape": list(g.shape), "data": pairs.tolist()})
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "system_site_index": state.system_site_index,
        "discarded_weight": state.discarded_weight,
        "sites": sites,
        "lambdas": [lam.tolist() for lam in state.lambdas],
    }


def from_checkpoint(doc: dict) -> MpsState:
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not an MPS checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    gammas = []
    for site in doc["sites"]:
        pairs = np.asarray(site["data"], dtype=float).reshape(-1, 2)
        g = np.empty(len(pairs), dtype=complex)
        # assigned part by part so signed zeros survive the round trip
        g.real, g.imag = pairs[:, 0], pairs[:, 1]
        gammas.append(g.reshape(site["shape"]))
    return MpsState(
        gammas=gammas,
        lambdas=[np.asarray(lam, dtype=float) for lam in doc["lambdas"]],
        system_site_index=doc["system_site_index"],
        discarded_weight=doc["discarded_weight"],
    )


def save_checkpoint(state: MpsState, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_checkpoint(state)))


def load_checkpoint(path: str | Path) -> MpsState:
    return from_checkpoint(json.loads(Path(path).read_text()))
