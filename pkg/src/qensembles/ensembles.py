"""Ensemble construction and k-copy moment machinery.

Weighted ensembles of pure states, dense k-th moment operators accumulated by
blocked Gram products, the closed-form Haar moment, exact random-phase
(infinite-interval) moments via multiset enumeration, finite-interval moments
with the sinc kernel, and projected ensembles with their weighted moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement, permutations
from math import comb
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from ._util import (
    Caps,
    DEFAULT_CAPS,
    DegenerateWeightError,
    check_cap,
    parallel_block_reduce,
)
from .hilbert import (
    Bipartition,
    HermitianOperator,
    MeasurementBasis,
    PureState,
    n_qubit_dims,
    projection_table,
    tensor_power,
)
from .spectral import SpectralData

ZERO_OUTCOME_CUTOFF = 1e-14
PANEL_WIDTH = 64


@dataclass(frozen=True)
class WeightedEnsemble:
    """Finite list of (weight, state) pairs.

    normalized convention: states are unit vectors and weights sum to one.
    unnormalized convention: weights are uniform 1/len(members); the measure
    is carried by the state norms.
    """

    members: tuple
    convention: str = "normalized"
    label: str = ""
    dropped_members: int = 0

    def __post_init__(self):
        members = tuple((float(w), s) for w, s in self.members)
        object.__setattr__(self, "members", members)
        if not members:
            raise ValueError("ensemble needs at least one member")
        ws = np.array([w for w, _ in members])
        if np.any(ws < 0):
            raise ValueError("weights must be nonnegative")
        if self.convention == "normalized":
            total = float(ws.sum())
            if abs(total - 1.0) > 1e-10:
                raise ValueError(f"normalized ensemble weights sum to {total}")
            for _, s in members:
                if abs(s.norm() - 1.0) > 1e-10:
                    raise ValueError("normalized ensemble contains a non-unit state")
        elif self.convention == "unnormalized":
            if np.abs(ws - 1.0 / len(members)).max() > 1e-12:
                raise ValueError("unnormalized ensemble weights must be uniform")
        else:
            raise ValueError(f"unknown convention {self.convention!r}")

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def dim(self) -> int:
        return self.members[0][1].dim


@dataclass(frozen=True)
class MomentOperator:
    """Hermitian operator on the k-fold tensor power space."""

    k: int
    space_dim: int
    matrix: np.ndarray
    convention: str  # "normalized" | "unnormalized" | "weighted-projected"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.space_dim**self.k
        if m.shape != (d, d):
            raise ValueError("moment matrix has the wrong shape")
        herm = float(np.abs(m - m.conj().T).max())
        if herm > 1e-9 * max(1.0, float(np.abs(np.trace(m)))):
            raise ValueError(f"moment deviates from Hermitian by {herm:.3e}")
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)


def moment_defects(m: MomentOperator) -> dict:
    """Measured convention invariants: PSD margin, trace, copy-permutation symmetry."""
    eigs = np.linalg.eigvalsh(m.matrix)
    out = {
        "min_eigenvalue": float(eigs[0]),
        "trace": m.trace,
        "hermiticity": float(np.abs(m.matrix - m.matrix.conj().T).max()),
    }
    sym = 0.0
    for sigma in permutations(range(m.k)):
        p = perm_operator(m.space_dim, m.k, sigma)
        sym = max(sym, float(np.abs(p @ m.matrix @ p.conj().T - m.matrix).max()))
    out["symmetrization_defect"] = sym
    return out


# ---------------------------------------------------------------------------
# permutation operators and multiset bookkeeping
# ---------------------------------------------------------------------------


def tuple_index(t: Sequence[int], d: int) -> int:
    """Flatten copy digits, copy 0 most significant: i = sum_j t_j d^(k-1-j)."""
    i = 0
    for digit in t:
        i = i * d + int(digit)
    return i


def perm_operator(d: int, k: int, sigma: Sequence[int], caps: Caps = DEFAULT_CAPS) -> np.ndarray:
    """Operator sending |v_1 ... v_k> to |v_sigma(1) ... v_sigma(k)>."""
    check_cap(caps, "max_moment_entries", (d**k) ** 2)
    dk = d**k
    rows = np.arange(dk)
    digits = np.empty((k, dk), dtype=np.int64)
    rem = rows.copy()
    for j in range(k - 1, -1, -1):
        digits[j] = rem % d
        rem //= d
    # row digit j equals column digit sigma(j): column = digits re-scattered
    cols = np.zeros(dk, dtype=np.int64)
    for j in range(k):
        cols = cols * d + digits[sigma[j]]
    p = np.zeros((dk, dk), dtype=complex)
    p[rows, cols] = 1.0
    return p


def symmetrizer_sum(d: int, k: int, caps: Caps = DEFAULT_CAPS) -> np.ndarray:
    """Sum of all k! copy-permutation operators."""
    out = np.zeros((d**k, d**k), dtype=complex)
    for sigma in permutations(range(k)):
        out += perm_operator(d, k, sigma, caps)
    return out


def multisets(d: int, k: int) -> list[tuple[int, ...]]:
    """Non-decreasing index tuples (odometer order)."""
    return list(combinations_with_replacement(range(d), k))


def distinct_orderings(t: Sequence[int]) -> list[tuple[int, ...]]:
    """Distinct permutation images of a tuple (deduplicated symmetric-group orbit)."""
    return sorted(set(permutations(t)))


# ---------------------------------------------------------------------------
# moment accumulation
# ---------------------------------------------------------------------------


def _moment_from_columns(
    columns: np.ndarray, weights: np.ndarray, k: int, caps: Caps
) -> np.ndarray:
    """sum_j w_j |col_j><col_j|^(x)k via blocked panel Grams (fixed order)."""
    d, n = columns.shape
    dk = d**k
    check_cap(caps, "max_moment_entries", dk * dk)
    sqrt_w = np.sqrt(weights)

    def block(idx_block):
        panel = np.empty((dk, len(idx_block)), dtype=complex)
        for out_col, j in enumerate(idx_block):
            panel[:, out_col] = sqrt_w[j] * tensor_power(columns[:, j], k, caps)
        return panel @ panel.conj().T

    acc = parallel_block_reduce(list(range(n)), PANEL_WIDTH, block, lambda a, b: a + b)
    return (acc + acc.conj().T) / 2


def moment_k(ens: WeightedEnsemble, k: int, caps: Caps = DEFAULT_CAPS) -> MomentOperator:
    """k-th statistical moment sum_j w_j |psi_j><psi_j|^(x)k."""
    d = ens.dim
    cols = np.stack([s.amplitudes for _, s in ens.members], axis=1)
    w = np.array([w for w, _ in ens.members])
    m = _moment_from_columns(cols, w, k, caps)
    return MomentOperator(k, d, m, ens.convention)


def haar_moment(d: int, k: int, caps: Caps = DEFAULT_CAPS) -> MomentOperator:
    """Closed-form Haar moment: symmetrizer sum over prod_{i<k}(d+i)."""
    denom = 1.0
    for i in range(k):
        denom *= d + i
    return MomentOperator(k, d, symmetrizer_sum(d, k, caps) / denom, "normalized")


def random_phase_moment_exact(
    populations: Sequence[float], k: int, caps: Caps = DEFAULT_CAPS
) -> MomentOperator:
    """Exact k-th moment of the fixed-magnitude random-phase ensemble.

    Expressed in the basis whose populations are given (the energy eigenbasis
    for temporal ensembles). Entry (r, c) equals prod_j p_{r_j} whenever the
    digit multisets of r and c coincide, each distinct ordered pair exactly
    once; zero otherwise.
    """
    p = np.asarray(populations, dtype=float)
    d = p.size
    check_cap(caps, "max_multiset_terms", comb(d + k - 1, k))
    check_cap(caps, "max_moment_entries", (d**k) ** 2)
    m = np.zeros((d**k, d**k), dtype=complex)
    for ms in multisets(d, k):
        w = float(np.prod(p[list(ms)]))
        orderings = [tuple_index(t, d) for t in distinct_orderings(ms)]
        for r in orderings:
            m[r, orderings] = w
    return MomentOperator(k, d, m, "normalized")


class ProductFormMoment(NamedTuple):
    moment: MomentOperator
    error_bound: float

    @property
    def vacuous(self) -> bool:
        """Bounds at or above unit trace distance carry no information."""
        return self.error_bound >= 1.0


def product_form_moment(rho_d, k: int, caps: Caps = DEFAULT_CAPS) -> ProductFormMoment:
    """Product approximation rho_d^(x)k * symmetrizer, with its trace-norm error bound.

    The bound on the distance to the exact random-phase moment is
    k! * exp(pi sqrt(2k/3)) * tr(rho_d^2); it is vacuous for nearly pure
    rho_d (flagged via .vacuous).
    """
    rho = rho_d.entries if isinstance(rho_d, HermitianOperator) else np.asarray(rho_d, dtype=complex)
    d = rho.shape[0]
    check_cap(caps, "max_moment_entries", (d**k) ** 2)
    rk = np.array([[1.0 + 0j]])
    for _ in range(k):
        rk = np.kron(rk, rho)
    m = rk @ symmetrizer_sum(d, k, caps)
    m = (m + m.conj().T) / 2
    purity = float(np.trace(rho @ rho).real)
    bound = math.factorial(k) * math.exp(math.pi * math.sqrt(2 * k / 3)) * purity
    return ProductFormMoment(MomentOperator(k, d, m, "unnormalized"), bound)


def product_vs_random_phase_distance_k2(populations: Sequence[float]) -> float:
    """Trace distance between the k=2 product form and the exact random-phase moment.

    Both operators share the multiset sparsity pattern in the populations'
    basis; their difference is sum_E p_E^2 |E,E><E,E|, so the distance is
    computable at any dimension without densifying.
    """
    p = np.asarray(populations, dtype=float)
    return 0.5 * float(np.sum(p**2))


def stable_sinc(x: np.ndarray) -> np.ndarray:
    """sin(x)/x with a series branch below 1e-4 and sinc(0) = 1."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, x)
    out = np.sin(safe) / safe
    x2 = x * x
    series = 1.0 - x2 / 6.0 * (1.0 - x2 / 20.0)
    return np.where(small, series, out)


def _kron_sum(values: np.ndarray, k: int) -> np.ndarray:
    """All ordered k-tuple sums, indexed like tensor powers."""
    s = np.zeros(1)
    for _ in range(k):
        s = (s[:, None] + values[None, :]).ravel()
    return s


def finite_time_temporal_moment(
    sd: SpectralData, k: int, tau: float, caps: Caps = DEFAULT_CAPS
) -> MomentOperator:
    """k-th moment of the trajectory over a time interval of width tau.

    Expressed in the k-fold energy eigenbasis: entry (r, c) is
    prod_j c_{r_j} conj(c_{c_j}) * sinc((sum E_r - sum E_c) tau / 2).
    tau = 0 reproduces |psi0><psi0|^(x)k exactly; tau -> infinity kills all
    off-shell terms and approaches the random-phase moment.
    """
    if sd.overlaps is None:
        raise ValueError("spectral data must be bound to an initial state")
    d = sd.dim
    dk = d**k
    check_cap(caps, "max_sinc_terms", dk * dk)
    w = np.ones(1, dtype=complex)
    for _ in range(k):
        w = np.kron(w, sd.overlaps)
    s = _kron_sum(sd.eigenvalues, k)
    kernel = stable_sinc((s[:, None] - s[None, :]) * (tau / 2.0))
    m = (w[:, None] * w[None, :].conj()) * kernel
    return MomentOperator(k, d, m, "normalized")


def finite_time_frobenius_distances(
    sd: SpectralData, k: int, taus: Sequence[float], caps: Caps = DEFAULT_CAPS
) -> np.ndarray:
    """Frobenius distance between the finite-interval and infinite-interval moments.

    Works at the multiset level without materializing either operator; exact
    whenever the spectrum has no k-fold resonances (true almost surely for
    continuous random spectra).
    """
    if sd.overlaps is None:
        raise ValueError("spectral data must be bound to an initial state")
    p = sd.populations
    d = sd.dim
    ms = multisets(d, k)
    check_cap(caps, "max_multiset_terms", len(ms))
    check_cap(caps, "max_sinc_terms", len(ms) ** 2)
    idx = np.array(ms, dtype=np.int64)
    a = np.prod(p[idx], axis=1)
    s = sd.eigenvalues[idx].sum(axis=1)
    counts = np.array(
        [math.factorial(k) // math.prod(math.factorial(c) for c in _multiplicities(t)) for t in ms],
        dtype=float,
    )
    v = a * counts
    perm_mass = float(np.sum(counts**2 * a**2))
    diff = s[:, None] - s[None, :]
    out = np.empty(len(taus))
    for i, tau in enumerate(np.asarray(taus, dtype=float)):
        kern = stable_sinc(diff * (tau / 2.0)) ** 2
        total = float(v @ kern @ v)
        out[i] = math.sqrt(max(total - perm_mass, 0.0))
    return out


def _multiplicities(t: Sequence[int]) -> list[int]:
    out = []
    prev = None
    for x in t:
        if x == prev:
            out[-1] += 1
        else:
            out.append(1)
            prev = x
    return out


# ---------------------------------------------------------------------------
# projected ensembles
# ---------------------------------------------------------------------------


def projected_ensemble(
    state: PureState, part: Bipartition, basis: MeasurementBasis
) -> WeightedEnsemble:
    """Measure B in a complete basis; outcomes weight the normalized A states.

    Outcomes with probability below 1e-14 are dropped and counted in
    dropped_members.
    """
    table = projection_table(state, part, basis)
    probs = np.sum(np.abs(table) ** 2, axis=0)
    dims_a = n_qubit_dims(len(part.sites_A))
    members = []
    dropped = 0
    for z in range(table.shape[1]):
        if probs[z] < ZERO_OUTCOME_CUTOFF:
            dropped += 1
            continue
        amps = table[:, z] / math.sqrt(probs[z])
        members.append((float(probs[z]), PureState(amps, dims_a, "normalized")))
    return WeightedEnsemble(
        tuple(members), "normalized", label="outcome basis", dropped_members=dropped
    )


def unnormalized_projected_ensemble(
    state: PureState, part: Bipartition, basis: MeasurementBasis
) -> WeightedEnsemble:
    """The same projection kept unnormalized: uniform weights, norms carry the measure."""
    table = projection_table(state, part, basis)
    dims_a = n_qubit_dims(len(part.sites_A))
    n = table.shape[1]
    members = tuple(
        (1.0 / n, PureState(table[:, z], dims_a, "unnormalized")) for z in range(n)
    )
    return WeightedEnsemble(members, "unnormalized", label="outcome basis")


def weighted_projected_moment(
    state: PureState,
    part: Bipartition,
    basis: MeasurementBasis,
    p_d: Sequence[float],
    k: int,
    caps: Caps = DEFAULT_CAPS,
) -> MomentOperator:
    """Projected k-th moment with outcome weights 1 / p_d(x)^(k-1).

    p_d holds the per-outcome time-averaged probabilities; outcomes whose
    instantaneous weight is nonzero but whose p_d vanishes are an error.
    """
    table = projection_table(state, part, basis)
    p_d = np.asarray(p_d, dtype=float)
    if p_d.shape != (table.shape[1],):
        raise ValueError("p_d must have one entry per outcome")
    inst = np.sum(np.abs(table) ** 2, axis=0)
    bad = (p_d <= 0) & (inst > ZERO_OUTCOME_CUTOFF)
    if np.any(bad):
        raise DegenerateWeightError(
            f"{int(bad.sum())} outcomes have zero time-averaged probability but "
            "nonzero instantaneous amplitude"
        )
    keep = p_d > 0
    weights = p_d[keep] ** (1 - k)
    m = _moment_from_columns(table[:, keep], weights, k, caps)
    return MomentOperator(k, table.shape[0], m, "weighted-projected")
