"""The Scrooge family: samplers, subentropy, exact moments, conditional-state tables.

The Scrooge ensemble attached to a density matrix rho is the rho-distortion of
the Haar ensemble (draw |psi> Haar, keep sqrt(rho)|psi> with weight equal to
its squared norm). Its k-th moments are computed exactly from a generating
function of rational-log terms in the inverse eigenvalues; mixed partial
derivatives are taken symbolically over a closed term representation and
evaluated in high precision, with symmetric epsilon-splitting plus Richardson
extrapolation for degenerate spectra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import mpmath as mp
import numpy as np
import scipy.integrate

from ._util import (
    Caps,
    DEFAULT_CAPS,
    DegeneracyError,
    NumericalFailureError,
    check_cap,
    parallel_block_reduce,
)
from .ensembles import (
    MomentOperator,
    distinct_orderings,
    multisets,
    symmetrizer_sum,
    tuple_index,
)
from .hilbert import (
    Bipartition,
    HermitianOperator,
    MeasurementBasis,
    PureState,
    apply_local_rotations,
    _subsystem_indices,
)
from .spectral import SpectralData

LN2 = math.log(2.0)
SUBENTROPY_LIMIT_BITS = (1.0 - np.euler_gamma) / LN2  # large-D maximally mixed value
SUPPORT_CUTOFF = 1e-13
CLUSTER_RTOL = 1e-9
SPLIT_EPSILONS = (1e-4, 5e-5)  # relative to the mean eigenvalue; ratio 2 for Richardson
ENGINE_DPS = 40


# ---------------------------------------------------------------------------
# eigenvalue bookkeeping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EigenSpectrum:
    """Descending eigenvalues of a density matrix with degeneracy clusters."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    clusters: tuple[tuple[int, ...], ...]

    @property
    def rank(self) -> int:
        return self.eigenvalues.size

    @property
    def degenerate(self) -> bool:
        return any(len(c) > 1 for c in self.clusters)


def _as_density(rho) -> np.ndarray:
    m = rho.entries if isinstance(rho, HermitianOperator) else np.asarray(rho, dtype=complex)
    tr = float(np.trace(m).real)
    if abs(tr - 1.0) > 1e-8:
        raise ValueError(f"density matrix trace is {tr}")
    return m


def eigen_spectrum(rho, cluster_rtol: float = CLUSTER_RTOL) -> EigenSpectrum:
    """Eigen-decomposition restricted to the support, clustered by relative gaps."""
    m = _as_density(rho)
    w, v = np.linalg.eigh(m)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    keep = w > SUPPORT_CUTOFF * max(w[0], 1e-300)
    w, v = w[keep], v[:, keep]
    mean = float(w.mean())
    clusters: list[list[int]] = [[0]]
    for i in range(1, w.size):
        if w[i - 1] - w[i] <= cluster_rtol * mean:
            clusters[-1].append(i)
        else:
            clusters.append([i])
    return EigenSpectrum(w, v, tuple(tuple(c) for c in clusters))


def _split_clusters(spec: EigenSpectrum, eps_rel: float) -> np.ndarray:
    """Symmetrically spread each degenerate cluster by +-eps (mean preserved)."""
    lam = spec.eigenvalues.astype(float).copy()
    mean = float(lam.mean())
    eps = eps_rel * mean
    for cluster in spec.clusters:
        m = len(cluster)
        if m == 1:
            continue
        center = float(lam[list(cluster)].mean())
        if eps >= center / 2:
            raise DegeneracyError("cluster too close to zero to split")
        offsets = np.linspace(1.0, -1.0, m)
        lam[list(cluster)] = center + eps * offsets
    gaps = np.abs(lam[:, None] - lam[None, :]) + np.eye(lam.size)
    if gaps.min() < 1e-12 * mean:
        raise DegeneracyError("eigenvalues remain unresolved after splitting")
    return lam


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def scrooge_sample_batch(
    rho, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw n states; returns (normalized, unnormalized) as (dim, n) column stacks.

    Unnormalized draws are independent complex Gaussians with variance lambda_m
    along each eigenvector of rho (support only). The squared norm of an
    unnormalized draw is the ensemble weight of its normalized state.
    """
    spec = eigen_spectrum(rho)
    r = spec.rank
    scale = np.sqrt(spec.eigenvalues / 2.0)
    g = scale[:, None] * (rng.standard_normal((r, n)) + 1j * rng.standard_normal((r, n)))
    raw = spec.eigenvectors @ g
    norms = np.linalg.norm(raw, axis=0)
    return raw / norms, raw


def scrooge_sample(rho, rng: np.random.Generator) -> tuple[PureState, np.ndarray]:
    """One draw from Scrooge[rho]; returns the normalized state and the raw vector."""
    normed, raw = scrooge_sample_batch(rho, 1, rng)
    d = normed.shape[0]
    dims = (2,) * int(round(math.log2(d))) if 2 ** int(round(math.log2(d))) == d else (d,)
    return PureState(normed[:, 0], dims, "normalized"), raw[:, 0]


# ---------------------------------------------------------------------------
# subentropy
# ---------------------------------------------------------------------------


def _support_eigenvalues(rho_or_eigs) -> np.ndarray:
    if isinstance(rho_or_eigs, HermitianOperator) or (
        isinstance(rho_or_eigs, np.ndarray) and rho_or_eigs.ndim == 2
    ):
        lam = np.linalg.eigvalsh(_as_density(rho_or_eigs))
    else:
        lam = np.asarray(rho_or_eigs, dtype=float)
        if abs(lam.sum() - 1.0) > 1e-8:
            raise ValueError("eigenvalues must sum to 1")
    lam = np.sort(lam)[::-1]
    return lam[lam > SUPPORT_CUTOFF]


def _harmonics(n: int) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, n + 1))])


def _poly_log_derivative(x: float, n: int, r: int, harm: np.ndarray) -> float:
    """g^(n)(x)/n! for g(t) = t^r ln t, evaluated in log space."""
    lx = math.log(x)
    bracket = lx + harm[r] - harm[r - n]
    if bracket == 0.0:
        return 0.0
    log_binom = math.lgamma(r + 1) - math.lgamma(n + 1) - math.lgamma(r - n + 1)
    log_mag = log_binom + (r - n) * lx + math.log(abs(bracket))
    if log_mag < -745.0:
        return 0.0
    return math.copysign(math.exp(log_mag), bracket)


def _confluent_divided_difference(nodes: np.ndarray, r: int) -> float:
    """Top entry of the Newton table of g(t) = t^r ln t with repeated nodes.

    Equal nodes must be adjacent; their entries use the exact derivative
    limit, which is the epsilon -> 0 limit of splitting them apart.
    """
    n = nodes.size
    harm = _harmonics(r)
    table = np.zeros((n, n))
    table[:, 0] = [nd**r * math.log(nd) for nd in nodes]
    for j in range(1, n):
        for i in range(n - j):
            if nodes[i + j] == nodes[i]:
                table[i, j] = _poly_log_derivative(nodes[i], j, r, harm)
            else:
                table[i, j] = (table[i + 1, j - 1] - table[i, j - 1]) / (nodes[i + j] - nodes[i])
    return float(table[0, n - 1])


def subentropy(rho_or_eigs, method: str = "stable") -> float:
    """Subentropy in bits: the measurement-basis-averaged mutual information of rho.

    Zero eigenvalues contribute nothing (the value restricts to the support).
    method "stable" evaluates the divided difference of t^r ln t with exact
    confluent limits for degenerate eigenvalues; "split-extrapolate" resolves
    degeneracies by symmetric epsilon-splitting with two-point Richardson
    extrapolation (the oracle form; small ranks only).
    """
    lam = _support_eigenvalues(rho_or_eigs)
    r = lam.size
    if r == 1:
        return 0.0
    if method == "stable":
        spec_clusters = _cluster_plain(lam)
        nodes = np.concatenate([[lam[list(c)].mean()] * len(c) for c in spec_clusters])
        return -_confluent_divided_difference(nodes, r) / LN2
    if method == "split-extrapolate":
        clusters = _cluster_plain(lam)
        if all(len(c) == 1 for c in clusters):
            return -_plain_sum_subentropy(lam) / LN2
        vals = []
        for eps in SPLIT_EPSILONS:
            split = _split_values(lam, clusters, eps)
            vals.append(-_plain_sum_subentropy(split) / LN2)
        return vals[1] + (vals[1] - vals[0]) / 3.0
    raise ValueError(f"unknown method {method!r}")


def _cluster_plain(lam: np.ndarray) -> list[list[int]]:
    mean = float(lam.mean())
    clusters: list[list[int]] = [[0]]
    for i in range(1, lam.size):
        if lam[i - 1] - lam[i] <= CLUSTER_RTOL * mean:
            clusters[-1].append(i)
        else:
            clusters.append([i])
    return clusters


def _split_values(lam: np.ndarray, clusters: list[list[int]], eps_rel: float) -> np.ndarray:
    out = lam.astype(float).copy()
    eps = eps_rel * float(lam.mean())
    for c in clusters:
        if len(c) == 1:
            continue
        center = float(lam[c].mean())
        out[c] = center + eps * np.linspace(1.0, -1.0, len(c))
    return out


def _plain_sum_subentropy(lam: np.ndarray) -> float:
    """Direct rational sum over distinct eigenvalues (natural log units)."""
    inv = 1.0 / lam
    total = 0.0
    for j in range(lam.size):
        a_j = 1.0
        for k in range(lam.size):
            if k != j:
                a_j /= inv[k] - inv[j]
        total += a_j * lam[j] ** 2 * math.log(lam[j])
    return float(np.prod(inv)) * total


def subentropy_unweighted_variant(rho_or_eigs) -> float:
    """Diagnostic variant missing one eigenvalue weight per term.

    Kept for comparison only: it is nonzero on pure states and can go
    negative, so it is not a valid subentropy.
    """
    lam = _support_eigenvalues(rho_or_eigs)
    if lam.size == 1:
        return -math.log(lam[0]) / LN2
    total = 0.0
    for j in range(lam.size):
        prod = 1.0
        for i in range(lam.size):
            if i != j:
                prod *= lam[j] / (lam[j] - lam[i])
        total -= prod * math.log2(lam[j])
    return total


# ---------------------------------------------------------------------------
# moment generating-function engine
#
# Each term is coeff * mu_j^p * (ln mu_j)^b * prod_i (mu_j - mu_i)^(-e_i),
# keyed by (j, p, b, poles); differentiation is closed over this family with
# exact integer coefficients. The starting function for order k is
# sum_j mu_j^(k-2) ln(mu_j) * prod_{i != j} (mu_i - mu_j)^(-1).
# ---------------------------------------------------------------------------

TermKey = tuple[int, int, int, tuple[tuple[int, int], ...]]


def _initial_terms(r: int, k: int) -> dict[TermKey, int]:
    # Generating function for k >= 2: sum_j lam_j^(2-k) ln(lam_j) / prod_{i!=j}(1/lam_i - 1/lam_j),
    # rewritten in mu = 1/lam with poles (mu_j - mu_i): the pole rewrite contributes
    # (-1)^(r-1) and ln(lam) = -ln(mu) one more sign.
    sign = 1 if r % 2 == 0 else -1
    terms: dict[TermKey, int] = {}
    for j in range(r):
        poles = tuple((i, 1) for i in range(r) if i != j)
        terms[(j, k - 2, 1, poles)] = sign
    return terms


def _diff_terms(terms: dict[TermKey, int], m: int) -> dict[TermKey, int]:
    out: dict[TermKey, int] = {}

    def add(key: TermKey, coeff: int):
        if coeff:
            out[key] = out.get(key, 0) + coeff
            if out[key] == 0:
                del out[key]

    for (j, p, b, poles), coeff in terms.items():
        if m == j:
            if p != 0:
                add((j, p - 1, b, poles), coeff * p)
            if b:
                add((j, p - 1, 0, poles), coeff)
            for idx, (i, e) in enumerate(poles):
                new = poles[:idx] + ((i, e + 1),) + poles[idx + 1 :]
                add((j, p, b, new), -coeff * e)
        else:
            for idx, (i, e) in enumerate(poles):
                if i == m:
                    new = poles[:idx] + ((i, e + 1),) + poles[idx + 1 :]
                    add((j, p, b, new), coeff * e)
                    break
    return out


def _eval_terms(terms: dict[TermKey, int], mu, log_mu, diffs):
    total = mp.mpf(0)
    for (j, p, b, poles), coeff in terms.items():
        val = mp.mpf(coeff) * (mu[j] ** p)
        if b:
            val *= log_mu[j]
        for i, e in poles:
            val /= diffs[j][i] ** e
        total += val
    return total


def _required_dps(lam: np.ndarray, k: int) -> int:
    """Working precision covering the worst-case cancellation of the pole products.

    Terms carry prod_{i != j} (mu_j - mu_i)^(-e) with exponents up to k + 1;
    clustered spectra make individual terms enormous while the combination is
    O(1), so the precision must absorb the largest log-magnitude."""
    mu = 1.0 / lam
    r = mu.size
    worst = 0.0
    for j in range(r):
        others = np.abs(mu[j] - np.delete(mu, j))
        scale = 1.0 + abs(mu[j])
        logs = np.log10(scale / others)
        worst = max(worst, float(np.sum(np.clip(logs, 0.0, None))) + (k + 1) * float(
            np.clip(logs, 0.0, None).max(initial=0.0)
        ))
    dps = int(math.ceil(ENGINE_DPS + worst))
    if dps > 600:
        raise DegeneracyError(
            f"spectrum needs ~{dps} digits after splitting; eigenvalues remain too close"
        )
    return dps


def _moment_coefficients(lam: np.ndarray, k: int) -> dict[tuple[int, ...], float]:
    """Multiset -> coefficient of the normalized Scrooge k-th moment, distinct spectra."""
    r = lam.size
    with mp.workdps(_required_dps(lam, k)):
        mu = [1 / mp.mpf(float(x)) for x in lam]
        log_mu = [mp.log(m) for m in mu]
        diffs = [[mu[j] - mu[i] for i in range(r)] for j in range(r)]
        prefactor = mp.mpf(1)
        for m in mu:
            prefactor *= m
        base = _initial_terms(r, k)
        coeffs: dict[tuple[int, ...], float] = {}
        for a in range(r):
            t1 = _diff_terms(base, a)
            for b in range(a, r):
                t2 = _diff_terms(t1, b)
                if k == 2:
                    coeffs[(a, b)] = float(prefactor * _eval_terms(t2, mu, log_mu, diffs))
                    continue
                for c in range(b, r):
                    t3 = _diff_terms(t2, c)
                    coeffs[(a, b, c)] = float(prefactor * _eval_terms(t3, mu, log_mu, diffs))
    return coeffs


def _cluster_reversal(spec: EigenSpectrum) -> np.ndarray:
    perm = np.arange(spec.rank)
    for cluster in spec.clusters:
        perm[list(cluster)] = list(cluster)[::-1]
    return perm


def _coeffs_with_degeneracy(spec: EigenSpectrum, k: int) -> dict[tuple[int, ...], float]:
    if not spec.degenerate:
        return _moment_coefficients(spec.eigenvalues, k)
    # Flipping the split direction permutes coefficients by within-cluster
    # reversal; averaging the two removes all odd orders in eps, after which
    # two-point Richardson in eps^2 leaves an O(eps^4) bias.
    rev = _cluster_reversal(spec)
    runs = []
    for eps in SPLIT_EPSILONS:
        raw = _moment_coefficients(_split_clusters(spec, eps), k)
        runs.append(
            {ms: 0.5 * (val + raw[tuple(sorted(rev[list(ms)]))]) for ms, val in raw.items()}
        )
    return {ms: runs[1][ms] + (runs[1][ms] - runs[0][ms]) / 3.0 for ms in runs[1]}


def scrooge_moment(rho, k: int, caps: Caps = DEFAULT_CAPS) -> MomentOperator:
    """Exact k-th moment of the Scrooge ensemble of rho (normalized convention).

    Nonzero entries connect copy-permutation-related eigenbasis tuples only;
    the coefficient of each multiset comes from the k-th mixed partials of the
    generating function at mu = 1/lambda over the support.
    """
    if k not in (1, 2, 3):
        raise ValueError("k must be 1, 2 or 3")
    if k == 1:
        m = _as_density(rho)
        return MomentOperator(1, m.shape[0], m, "normalized")
    spec = eigen_spectrum(rho)
    d = _as_density(rho).shape[0]
    r = spec.rank
    check_cap(caps, "max_moment_entries", (d**k) ** 2)
    check_cap(caps, "max_multiset_terms", math.comb(r + k - 1, k))
    coeffs = _coeffs_with_degeneracy(spec, k)
    ms_mat = np.zeros((r**k, r**k), dtype=complex)
    for ms, val in coeffs.items():
        orderings = [tuple_index(t, r) for t in distinct_orderings(ms)]
        for row in orderings:
            ms_mat[row, orderings] = val
    w = spec.eigenvectors  # support columns; zero modes never carry weight
    wk = np.array([[1.0 + 0j]])
    for _ in range(k):
        wk = np.kron(wk, w)
    full = wk @ ms_mat @ wk.conj().T
    return MomentOperator(k, d, (full + full.conj().T) / 2, "normalized")


def unnormalized_scrooge_moment(rho, k: int, caps: Caps = DEFAULT_CAPS) -> MomentOperator:
    """k-th moment of the unnormalized (Gaussian-distorted) ensemble: exact product form."""
    m = _as_density(rho)
    d = m.shape[0]
    check_cap(caps, "max_moment_entries", (d**k) ** 2)
    rk = np.array([[1.0 + 0j]])
    for _ in range(k):
        rk = np.kron(rk, m)
    out = rk @ symmetrizer_sum(d, k, caps)
    return MomentOperator(k, d, (out + out.conj().T) / 2, "unnormalized")


# ---------------------------------------------------------------------------
# conditional-state tables and the generalized moment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionalStateTable:
    """Per-outcome time-averaged weights p_d(x) and states rho_bar(x) on A."""

    outcomes: np.ndarray            # kept outcome indices
    probabilities: np.ndarray       # p_d per kept outcome
    states: np.ndarray              # (n_kept, D_A, D_A)
    dropped_outcomes: int = 0

    @property
    def d_a(self) -> int:
        return self.states.shape[1]

    def mixture(self) -> np.ndarray:
        """sum_x p_d(x) rho_bar(x); equals the reduced time-averaged state."""
        return np.einsum("x,xab->ab", self.probabilities, self.states)


def _projected_eigenvector_table(
    sd: SpectralData,
    part: Bipartition,
    basis: MeasurementBasis,
    weights: np.ndarray,
    chunk: int = 2048,
):
    """Yield per-chunk tensors T[a, x, e] = <a, x | E_e> * weights_e."""
    v = sd.eigenvectors
    d = sd.dim
    a_idx = _subsystem_indices(part.n_sites, part.sites_A)
    b_idx = _subsystem_indices(part.n_sites, part.sites_B)
    d_a, d_b = part.d_a, part.d_b
    us = None if basis.kind == "explicit" else basis.site_unitaries()
    for lo in range(0, d, chunk):
        hi = min(lo + chunk, d)
        block = v[:, lo:hi] * weights[lo:hi]
        t = np.zeros((d_a, d_b, hi - lo), dtype=complex)
        t[a_idx, b_idx, :] = block
        flat = np.moveaxis(t, 1, 2).reshape(d_a * (hi - lo), d_b)
        if us is None:
            flat = flat @ np.conj(basis.matrix)
        else:
            flat = apply_local_rotations(flat, us, conjugate=True)
        yield np.moveaxis(flat.reshape(d_a, hi - lo, d_b), 2, 1)


def conditional_states(
    sd: SpectralData, part: Bipartition, basis: MeasurementBasis
) -> ConditionalStateTable:
    """Time-averaged projected states built exactly from the diagonal ensemble.

    rho_bar(x) is the B-projection of the dephased density matrix, normalized
    per outcome; no time quadrature is involved. Outcomes with weight below
    1e-14 are dropped and counted.
    """
    if tuple(basis.sites) != tuple(part.sites_B):
        raise ValueError("basis must live on the B side of the bipartition")
    p = sd.populations
    d_a, d_b = part.d_a, part.d_b
    raw = np.zeros((d_b, d_a, d_a), dtype=complex)
    for t in _projected_eigenvector_table(sd, part, basis, np.sqrt(p)):
        raw += np.einsum("axe,cxe->xac", t, t.conj(), optimize=True)
    p_d = np.einsum("xaa->x", raw).real
    keep = np.flatnonzero(p_d >= 1e-14)
    states = raw[keep] / p_d[keep, None, None]
    states = (states + np.conj(np.swapaxes(states, 1, 2))) / 2
    return ConditionalStateTable(
        outcomes=keep,
        probabilities=p_d[keep],
        states=states,
        dropped_outcomes=int(d_b - keep.size),
    )


def conditional_states_from_window(
    sd: SpectralData,
    part: Bipartition,
    basis: MeasurementBasis,
    center_energy: float,
    window_eigenstates: int = 100,
) -> ConditionalStateTable:
    """Outcome-conditioned states averaged over eigenstates near an energy.

    For projected ensembles of eigenstates there is no time average to use;
    the per-outcome state is estimated over the `window_eigenstates`
    eigenstates closest to `center_energy` (window width is a sensitivity
    knob, not a derived quantity).
    """
    order = np.argsort(np.abs(sd.eigenvalues - center_energy), kind="stable")
    sel = np.sort(order[:window_eigenstates])
    weights = np.zeros(sd.dim)
    weights[sel] = 1.0 / math.sqrt(window_eigenstates)
    d_a, d_b = part.d_a, part.d_b
    raw = np.zeros((d_b, d_a, d_a), dtype=complex)
    for t in _projected_eigenvector_table(sd, part, basis, weights):
        raw += np.einsum("axe,cxe->xac", t, t.conj(), optimize=True)
    p_d = np.einsum("xaa->x", raw).real
    keep = np.flatnonzero(p_d >= 1e-14)
    states = raw[keep] / p_d[keep, None, None]
    states = (states + np.conj(np.swapaxes(states, 1, 2))) / 2
    return ConditionalStateTable(keep, p_d[keep], states, int(d_b - keep.size))


def generalized_scrooge_moment(
    table: ConditionalStateTable,
    k: int,
    convention: str = "normalized",
    caps: Caps = DEFAULT_CAPS,
) -> MomentOperator:
    """Outcome-weighted mixture of per-outcome Scrooge moments.

    convention "normalized" mixes exact Scrooge moments; "unnormalized" mixes
    the product-form moments of the unnormalized ensembles.
    """
    if convention not in ("normalized", "unnormalized"):
        raise ValueError("convention must be 'normalized' or 'unnormalized'")
    d_a = table.d_a
    check_cap(caps, "max_moment_entries", (d_a**k) ** 2)
    moment_of: Callable = scrooge_moment if convention == "normalized" else unnormalized_scrooge_moment

    def block(idx_block):
        acc = np.zeros((d_a**k, d_a**k), dtype=complex)
        for i in idx_block:
            acc += table.probabilities[i] * moment_of(table.states[i], k, caps).matrix
        return acc

    total = parallel_block_reduce(list(range(table.probabilities.size)), 64, block, lambda a, b: a + b)
    total /= table.probabilities.sum()
    return MomentOperator(k, d_a, (total + total.conj().T) / 2, convention)


# ---------------------------------------------------------------------------
# real Scrooge second moment
# ---------------------------------------------------------------------------


def real_haar_moment2(d: int) -> MomentOperator:
    """Second moment of uniformly random real unit vectors."""
    eye = np.eye(d)
    m = np.einsum("ab,cd->abcd", eye, eye)
    m = m + np.einsum("ac,bd->abcd", eye, eye) + np.einsum("ad,bc->abcd", eye, eye)
    m = m.reshape(d * d, d * d) / (d * (d + 2))
    return MomentOperator(2, d, m.astype(complex), "normalized")


def _real_pair_integral(lam: np.ndarray, n: int, m: int, rel_tol: float = 1e-10) -> float:
    """E[x_n^2 x_m^2 / |x|^2] for independent real Gaussians with variances lam."""
    powers = np.full(lam.size, 0.5)
    powers[n] += 1.0
    powers[m] += 1.0
    pref = 1.5 * lam[n] ** 2 if n == m else 0.5 * lam[n] * lam[m]

    def integrand(u: float) -> float:
        z = u / (1.0 - u)
        log_val = -np.sum(powers * np.log1p(lam * z))
        return math.exp(log_val) / (1.0 - u) ** 2

    val, err = scipy.integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=rel_tol, limit=200)
    if val != 0.0 and err > 100 * rel_tol * abs(val):
        raise NumericalFailureError(
            f"real-moment quadrature achieved relative error {err / abs(val):.2e}"
        )
    return pref * val


def real_scrooge_moment2(rho, caps: Caps = DEFAULT_CAPS) -> MomentOperator:
    """Second moment of the real-vector Scrooge ensemble of a real density matrix.

    Entries are fully symmetric in the four eigenbasis indices and vanish
    unless every index appears an even number of times; the nonzero values
    come from one-dimensional integrals of inverse square-root products,
    differentiated under the integral sign.
    """
    m = _as_density(rho)
    if float(np.abs(m.imag).max()) > 1e-10:
        raise ValueError("real Scrooge moments need a real density matrix")
    spec = eigen_spectrum(m.real.astype(complex))
    d = m.shape[0]
    check_cap(caps, "max_moment_entries", (d**2) ** 2)
    lam = spec.eigenvalues
    r = lam.size
    vals = np.zeros((r, r))
    for n in range(r):
        for mm in range(n, r):
            vals[n, mm] = vals[mm, n] = _real_pair_integral(lam, n, mm)
    ms_mat = np.zeros((r * r, r * r))
    for n in range(r):
        for mm in range(r):
            ms_mat[n * r + mm, n * r + mm] = vals[n, mm]
            ms_mat[n * r + mm, mm * r + n] = vals[n, mm]
            ms_mat[n * r + n, mm * r + mm] = vals[n, mm]
    w = spec.eigenvectors.real
    w2 = np.kron(w, w)
    full = w2 @ ms_mat @ w2.T
    return MomentOperator(2, d, ((full + full.T) / 2).astype(complex), "normalized")
