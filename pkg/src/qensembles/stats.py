"""Distances, Porter-Thomas statistics, and information-theoretic functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.special

from ._util import FitError
from .ensembles import MomentOperator
from .hilbert import (
    Bipartition,
    HermitianOperator,
    MeasurementBasis,
    PureState,
    apply_local_rotations,
    split_bipartite,
)
from .scrooge import ConditionalStateTable, subentropy
from .spectral import SpectralData, energy_moments, evolve_grid

LN2 = math.log(2.0)
EULER_GAMMA = float(np.euler_gamma)


def shannon_entropy_bits(p: np.ndarray) -> float:
    """Shannon entropy with the 0 log 0 := 0 convention; base-2 output.

    Terms are summed in sorted order so the value is bit-exact under any
    relabeling of the outcomes.
    """
    p = np.asarray(p, dtype=float)
    nz = np.sort(p[p > 0])
    return float(-(nz * np.log(nz)).sum() / LN2)


def von_neumann_entropy_bits(rho) -> float:
    m = rho.entries if isinstance(rho, HermitianOperator) else np.asarray(rho)
    lam = np.linalg.eigvalsh(m)
    return shannon_entropy_bits(np.clip(lam.real, 0.0, None))


def trace_distance(m1: MomentOperator, m2: MomentOperator) -> float:
    """Half the trace norm of the difference of two same-shape moments."""
    if (m1.k, m1.space_dim, m1.convention) != (m2.k, m2.space_dim, m2.convention):
        raise ValueError(
            f"moment shapes differ: ({m1.k},{m1.space_dim},{m1.convention}) vs "
            f"({m2.k},{m2.space_dim},{m2.convention})"
        )
    diff = m1.matrix - m2.matrix
    return 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())


# ---------------------------------------------------------------------------
# Porter-Thomas tests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PTReport:
    """Weighted moments and KS distance of nonnegative samples to a target law."""

    sample_count: int
    moments: tuple[float, float, float]  # weighted E[x], E[x^2], E[x^3]
    ks_statistic: float
    target: str
    histogram_edges: np.ndarray = field(repr=False, default=None)
    histogram_density: np.ndarray = field(repr=False, default=None)

    @property
    def m1(self) -> float:
        return self.moments[0]

    @property
    def m2(self) -> float:
        return self.moments[1]

    @property
    def m3(self) -> float:
        return self.moments[2]


def _target_cdf(target):
    """CDF callable and a label for a PT-style target distribution."""
    if isinstance(target, str):
        name, param = target, None
    else:
        name, param = target
    if name in ("exponential", "complex-pt"):
        mu = 1.0 if param is None else float(param)
        return (lambda x: 1.0 - np.exp(-x / mu)), f"exponential(mean={mu:g})"
    if name in ("real-pt", "chi2-1"):
        return (lambda x: scipy.special.erf(np.sqrt(np.clip(x, 0, None) / 2.0))), "real-pt"
    if name == "erlang":
        n = int(param)
        return (lambda x: scipy.special.gammainc(n, n * np.clip(x, 0, None))), f"erlang({n})"
    raise ValueError(f"unknown target {target!r}")


def pt_test(
    values: Sequence[float],
    weights: Sequence[float] | None = None,
    target="exponential",
    bins: int = 50,
) -> PTReport:
    """Weighted moments m^(r) and KS statistic of `values` against a target CDF.

    The KS statistic is the maximum over sample points of the absolute
    difference between the right-continuous weighted empirical CDF and the
    target CDF (a point mass at 1 scores 1/e against the unit exponential).
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    if np.any(x < 0):
        raise ValueError("values must be nonnegative")
    if weights is None:
        w = np.full(x.size, 1.0 / x.size)
    else:
        w = np.asarray(weights, dtype=float)
        if abs(w.sum() - 1.0) > 1e-8:
            raise ValueError("weights must sum to 1")
    cdf, label = _target_cdf(target)
    order = np.argsort(x, kind="stable")
    xs, ws = x[order], w[order]
    cum = np.cumsum(ws)
    # right-continuous ECDF: at each sample, the total weight of values <= it
    last = np.searchsorted(xs, xs, side="right") - 1
    ks = float(np.abs(cum[last] - cdf(xs)).max())
    moments = tuple(float(np.sum(w * x**r)) for r in (1, 2, 3))
    hi = max(float(x.max()), 1e-12)
    edges = np.linspace(0.0, hi, bins + 1)
    counts, _ = np.histogram(x, bins=edges, weights=w)
    density = counts / (edges[1] - edges[0])
    return PTReport(x.size, moments, ks, label, edges, density)


# ---------------------------------------------------------------------------
# mutual information
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InfoReport:
    """A mutual-information-like quantity in bits, plus grid/prediction metadata."""

    kind: str
    bits: float
    prediction_bits: float | None = None
    metadata: dict = field(default_factory=dict)


def outcome_probabilities(psi: np.ndarray, basis: MeasurementBasis) -> np.ndarray:
    """|<z|psi>|^2 for a complete basis over the state's full space."""
    if basis.dim != psi.shape[0]:
        raise ValueError("basis must be complete over the state space")
    if basis.kind == "explicit":
        amps = basis.matrix.conj().T @ psi
    else:
        amps = apply_local_rotations(psi.reshape(1, -1), basis.site_unitaries(), conjugate=True)[0]
    return np.abs(amps) ** 2


def mutual_information_time(
    sd: SpectralData,
    psi0: PureState,
    basis: MeasurementBasis,
    tau: float,
    grid_points: int | None = None,
    t_start: float | None = None,
) -> InfoReport:
    """Information between measurement outcomes and the (uniform) evolution time.

    Estimated on a uniform grid over [t_start, t_start + tau]: the entropy of
    the grid-averaged outcome distribution minus the mean per-time entropy.
    The report carries the late-time prediction
    (1 - gamma - sqrt(pi)/(2 sigma_H tau)) / ln 2.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    p_pop = sd.populations
    e_mean = float(np.dot(p_pop, sd.eigenvalues))
    sigma_h = math.sqrt(max(float(np.dot(p_pop, sd.eigenvalues**2)) - e_mean**2, 0.0))
    if t_start is None:
        t_start = 20.0 / sigma_h if sigma_h > 0 else 0.0
    if grid_points is None:
        grid_points = max(int(math.ceil(5.0 * sigma_h * tau)) + 1, 64)
    times = t_start + np.linspace(0.0, tau, grid_points)
    if times.size < 2:
        raise ValueError("degenerate time grid")
    states = evolve_grid(sd, psi0, times)
    if basis.kind == "explicit":
        amps = basis.matrix.conj().T @ states
    else:
        amps = apply_local_rotations(states.T, basis.site_unitaries(), conjugate=True).T
    probs = np.abs(amps) ** 2  # (outcomes, times)
    h_mean = float(np.mean([shannon_entropy_bits(probs[:, i]) for i in range(times.size)]))
    p_bar = probs.mean(axis=1)
    value = shannon_entropy_bits(p_bar) - h_mean
    if sigma_h > 0:
        prediction = (1.0 - EULER_GAMMA - math.sqrt(math.pi) / (2.0 * sigma_h * tau)) / LN2
    else:
        prediction = None  # stationary state: no trajectory to resolve
    return InfoReport(
        kind="I(Z;T)",
        bits=value,
        prediction_bits=prediction,
        metadata={
            "tau": float(tau),
            "sigma_h": sigma_h,
            "sigma_h_tau": sigma_h * tau,
            "grid_points": int(grid_points),
            "t_start": float(t_start),
            "asymptote_bits": (1.0 - EULER_GAMMA) / LN2,
        },
    )


def joint_outcome_distribution(
    state: PureState,
    part: Bipartition,
    basis_a: MeasurementBasis,
    basis_b: MeasurementBasis,
) -> np.ndarray:
    """p(o_A, z_B) for product measurements on both sides; shape (D_A, D_B)."""
    m = split_bipartite(state, part)
    if basis_b.kind == "explicit":
        m = m @ np.conj(basis_b.matrix)
    else:
        m = apply_local_rotations(m, basis_b.site_unitaries(), conjugate=True)
    if basis_a.kind == "explicit":
        m = basis_a.matrix.conj().T @ m
    else:
        m = apply_local_rotations(m.T, basis_a.site_unitaries(), conjugate=True).T
    return np.abs(m) ** 2


def mutual_information_of_joint(p: np.ndarray) -> float:
    """I(row; column) of a joint distribution, in bits."""
    p = np.asarray(p, dtype=float)
    total = p.sum()
    if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-8):
        raise ValueError(f"joint distribution sums to {total}")
    return (
        shannon_entropy_bits(p.sum(axis=1))
        + shannon_entropy_bits(p.sum(axis=0))
        - shannon_entropy_bits(p.ravel())
    )


def conditional_mutual_information(
    state: PureState,
    part: Bipartition,
    basis_a: MeasurementBasis,
    basis_b: MeasurementBasis,
) -> InfoReport:
    """I(O_A; Z_B) of the outcome distribution of a single fixed-time state."""
    joint = joint_outcome_distribution(state, part, basis_a, basis_b)
    value = mutual_information_of_joint(joint)
    return InfoReport(kind="I(O_A;Z_B|T)", bits=value)


def time_averaged_joint_distribution(
    sd: SpectralData,
    part: Bipartition,
    basis_a: MeasurementBasis,
    basis_b: MeasurementBasis,
    chunk: int = 2048,
) -> np.ndarray:
    """E_t[p(o_A, x_B, t)]: diagonal of the dephased state in the product basis."""
    from .scrooge import _projected_eigenvector_table

    p = sd.populations
    out = np.zeros((part.d_a, part.d_b))
    us_a = None if basis_a.kind == "explicit" else basis_a.site_unitaries()
    for t in _projected_eigenvector_table(sd, part, basis_b, np.sqrt(p), chunk=chunk):
        d_a, d_b, c = t.shape
        flat = t.reshape(d_a, d_b * c).T
        if us_a is None:
            flat = flat @ np.conj(basis_a.matrix)
        else:
            flat = apply_local_rotations(flat, us_a, conjugate=True)
        out += (np.abs(flat) ** 2).T.reshape(d_a, d_b, c).sum(axis=2)
    return out


def interaction_information(
    sd: SpectralData,
    psi0: PureState,
    part: Bipartition,
    basis_a: MeasurementBasis,
    basis_b: MeasurementBasis,
    t: float,
    conditional_table: ConditionalStateTable | None = None,
) -> InfoReport:
    """I(O_A;X_B;T): fixed-time mutual information minus its time-averaged part.

    The report carries the weighted-subentropy prediction
    sum_x p_d(x) Q(rho_bar(x)) and the concavity bound Q(rho_A); the fixed-time
    and time-averaged mutual informations ride along in the metadata.
    """
    from .spectral import evolve
    from .scrooge import conditional_states

    state_t = evolve(sd, psi0, t)
    i_fixed = conditional_mutual_information(state_t, part, basis_a, basis_b).bits
    p_avg = time_averaged_joint_distribution(sd, part, basis_a, basis_b)
    i_avg = mutual_information_of_joint(p_avg)
    table = conditional_table
    if table is None:
        table = conditional_states(sd, part, basis_b)
    weighted_q = float(
        np.sum(table.probabilities * np.array([subentropy(s) for s in table.states]))
    )
    rho_a = table.mixture()
    return InfoReport(
        kind="I(O_A;X_B;T)",
        bits=i_fixed - i_avg,
        prediction_bits=weighted_q,
        metadata={
            "t": float(t),
            "fixed_time_bits": i_fixed,
            "time_averaged_bits": i_avg,
            "subentropy_bound_bits": subentropy(rho_a.astype(complex)),
            "weighted_subentropy_bits": weighted_q,
        },
    )


def holevo_sandwich(rho_a) -> tuple[float, float]:
    """(subentropy, von Neumann entropy) of a reduced state, in bits."""
    m = rho_a.entries if isinstance(rho_a, HermitianOperator) else np.asarray(rho_a)
    return subentropy(m.astype(complex)), von_neumann_entropy_bits(m)


# ---------------------------------------------------------------------------
# ensemble entropies
# ---------------------------------------------------------------------------


def ensemble_entropy(kind: str, arg) -> float:
    """Entropy of a maximally-entropic ensemble relative to its reference measure.

    kind "scrooge": arg is a density matrix; value sum_j log2(D lambda_j)
    (zero modes give -inf). kind "temporal-finite-part": arg is the vector of
    energy populations; value sum_E log2(D |c_E|^2), the finite part of the
    fixed-magnitude ensemble entropy.
    """
    if kind == "scrooge":
        m = arg.entries if isinstance(arg, HermitianOperator) else np.asarray(arg)
        lam = np.linalg.eigvalsh(m).real
        d = lam.size
        if np.any(lam < 1e-15):
            return float("-inf")
        return float(np.sum(np.log2(d * lam)))
    if kind == "temporal-finite-part":
        p = np.asarray(arg, dtype=float)
        d = p.size
        if np.any(p < 1e-300):
            return float("-inf")
        return float(np.sum(np.log2(d * p)))
    raise ValueError(f"unknown ensemble entropy kind {kind!r}")


# ---------------------------------------------------------------------------
# eigenstate-overlap analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OverlapAnalysis:
    """Smooth-envelope fit and fluctuation statistics of initial-state overlaps."""

    beta_fit: float
    log_prefactor: float
    pt_report: PTReport
    participation_ratio_times_dim: float  # D * sum |c_E|^4
    window: tuple[float, float]
    n_fit_bins: int

    @property
    def ratio(self) -> float:
        return self.participation_ratio_times_dim


def eigenstate_overlap_analysis(
    sd: SpectralData, n_bins: int = 50, weight_fraction: float = 0.98
) -> OverlapAnalysis:
    """Fit ln|c_E|^2 against E on energy-binned means and test the residuals.

    The fit window covers the central `weight_fraction` of the spectral
    weight; binned means are fit by weighted least squares to
    f(E) = exp(a + b E), and |c_E|^2 / f(E) inside the window is tested
    against the unit exponential law. Also reports D * sum |c_E|^4.
    """
    p = sd.populations
    e = sd.eigenvalues
    d = e.size
    ratio = float(d * np.sum(p**2))
    cum = np.cumsum(p)
    tail = (1.0 - weight_fraction) / 2.0
    lo_i = int(np.searchsorted(cum, tail))
    hi_i = int(np.searchsorted(cum, 1.0 - tail))
    hi_i = min(max(hi_i, lo_i + 2), d - 1)
    e_lo, e_hi = float(e[lo_i]), float(e[hi_i])
    mask = (e >= e_lo) & (e <= e_hi)
    if mask.sum() < 4:
        raise FitError("too few eigenstates in the fit window")
    edges = np.linspace(e_lo, e_hi, n_bins + 1)
    which = np.clip(np.digitize(e[mask], edges) - 1, 0, n_bins - 1)
    counts = np.bincount(which, minlength=n_bins).astype(float)
    sums = np.bincount(which, weights=p[mask], minlength=n_bins)
    good = (counts > 0) & (sums > 0)
    if good.sum() < 2:
        raise FitError(f"only {int(good.sum())} populated bins; cannot fit a slope")
    centers = 0.5 * (edges[:-1] + edges[1:])[good]
    y = np.log(sums[good] / counts[good])
    wts = counts[good]
    design = np.stack([np.ones_like(centers), centers], axis=1)
    sw = np.sqrt(wts)
    sol, residuals, rank, _ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
    if rank < 2:
        raise FitError(f"degenerate envelope fit (rank {rank}); residuals {residuals}")
    a_fit, b_fit = float(sol[0]), float(sol[1])
    f = np.exp(a_fit + b_fit * e[mask])
    rescaled = p[mask] / f
    rescaled = rescaled / rescaled.mean()
    report = pt_test(rescaled, target="exponential")
    return OverlapAnalysis(
        beta_fit=b_fit,
        log_prefactor=a_fit,
        pt_report=report,
        participation_ratio_times_dim=ratio,
        window=(e_lo, e_hi),
        n_fit_bins=int(good.sum()),
    )
