"""Shared, cached computation pipelines used by experiments and acceptance checks.

Full spectra are expensive (dense diagonalization up to D = 2^14) and are
reused across many analyses, so they are cached per process keyed by the
model specification. The cache can be released explicitly; large-chain
workflows should group their uses and then drop it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import ensembles as en
from . import hilbert as hb
from . import scrooge as sc
from . import spectral as sp
from . import stats as st
from ._util import Caps, DEFAULT_CAPS


class SpectrumCache:
    """Process-level cache of diagonalized model Hamiltonians."""

    def __init__(self, caps: Caps = DEFAULT_CAPS):
        self._store: dict[str, sp.SpectralData] = {}
        self.caps = caps

    @staticmethod
    def _key(model: dict) -> str:
        return json.dumps({k: v for k, v in sorted(model.items()) if k != "matrix"}, default=str)

    def spectrum(self, model: dict) -> sp.SpectralData:
        key = self._key(model)
        if key not in self._store:
            h = hb.build_hamiltonian(model, self.caps)
            self._store[key] = sp.diagonalize(h, self.caps)
        return self._store[key]

    def bound(self, model: dict, theta: float) -> sp.SpectralData:
        n = int(model["n"])
        return sp.bind_state(self.spectrum(model), hb.product_state(theta, n))

    def release(self, model: dict | None = None) -> None:
        if model is None:
            self._store.clear()
        else:
            self._store.pop(self._key(model), None)


GLOBAL_CACHE = SpectrumCache()


def quench_state(cache: SpectrumCache, model: dict, theta: float, t: float) -> hb.PureState:
    n = int(model["n"])
    sd = cache.spectrum(model)
    return sp.evolve(sd, hb.product_state(theta, n), t)


@dataclass(frozen=True)
class ProjectedComparison:
    """Trace distances of a projected k-th moment to its reference ensembles."""

    n: int
    k: int
    t: float
    basis_letter: str
    dist_scrooge: float
    dist_haar: float
    dist_generalized: float | None = None


def projected_moment_comparison(
    cache: SpectrumCache,
    model: dict,
    theta: float,
    t: float,
    subsystem_width: int,
    basis_letter: str,
    k: int,
    include_generalized: bool = False,
    caps: Caps = DEFAULT_CAPS,
) -> ProjectedComparison:
    """Distance of the projected moment to Scrooge[rho_A], Haar and optionally
    the outcome-conditioned (generalized) prediction, at one (N, k, t)."""
    n = int(model["n"])
    part = hb.Bipartition(n, hb.central_sites(n, subsystem_width))
    basis = hb.pauli_basis(part.sites_B, basis_letter)
    state = quench_state(cache, model, theta, t)
    ens = en.projected_ensemble(state, part, basis)
    proj = en.moment_k(ens, k, caps)
    rho_a = hb.partial_trace(state, part, "A").entries
    d_scr = st.trace_distance(proj, sc.scrooge_moment(rho_a, k, caps))
    d_haar = st.trace_distance(proj, en.haar_moment(part.d_a, k, caps))
    d_gen = None
    if include_generalized:
        bound = cache.bound(model, theta)
        table = sc.conditional_states(bound, part, basis)
        gen = sc.generalized_scrooge_moment(table, k, "normalized", caps)
        d_gen = st.trace_distance(proj, gen)
    return ProjectedComparison(n, k, t, basis_letter, d_scr, d_haar, d_gen)


def basis_information_scan(
    cache: SpectrumCache,
    model: dict,
    theta: float,
    t: float,
    subsystem_width: int,
    letters: tuple[str, ...] = ("X", "Y", "Z"),
    basis_b_letter: str = "Z",
):
    """I(O_A; Z_B) at a fixed time for several A bases, plus the entropy bounds.

    Returns (rows, q_bits, s_bits, energy_density) with one row per A basis.
    """
    n = int(model["n"])
    part = hb.Bipartition(n, hb.central_sites(n, subsystem_width))
    state = quench_state(cache, model, theta, t)
    rho_a = hb.partial_trace(state, part, "A")
    q_bits, s_bits = st.holevo_sandwich(rho_a)
    h = hb.build_hamiltonian(model)
    e, _ = sp.energy_moments(hb.product_state(theta, n), h)
    basis_b = hb.pauli_basis(part.sites_B, basis_b_letter)
    rows = []
    for letter in letters:
        rep = st.conditional_mutual_information(
            state, part, hb.pauli_basis(part.sites_A, letter), basis_b
        )
        rows.append((letter, rep.bits))
    return rows, q_bits, s_bits, e / n


def interaction_information_scan(
    cache: SpectrumCache,
    model: dict,
    theta: float,
    t: float,
    subsystem_width: int,
    letters: tuple[str, ...] = ("X", "Y", "Z"),
    basis_b_letter: str = "X",
):
    """Interaction information per A basis against the weighted-subentropy value."""
    n = int(model["n"])
    part = hb.Bipartition(n, hb.central_sites(n, subsystem_width))
    bound = cache.bound(model, theta)
    psi0 = hb.product_state(theta, n)
    basis_b = hb.pauli_basis(part.sites_B, basis_b_letter)
    table = sc.conditional_states(bound, part, basis_b)
    rows = []
    for letter in letters:
        rep = st.interaction_information(
            bound, psi0, part, hb.pauli_basis(part.sites_A, letter), basis_b, t,
            conditional_table=table,
        )
        rows.append(
            {
                "basis": letter,
                "interaction_bits": rep.bits,
                "weighted_subentropy_bits": rep.prediction_bits,
                "fixed_time_bits": rep.metadata["fixed_time_bits"],
                "time_averaged_bits": rep.metadata["time_averaged_bits"],
                "subentropy_bound_bits": rep.metadata["subentropy_bound_bits"],
            }
        )
    return rows


def rescaled_joint_probability_ks(
    cache: SpectrumCache,
    model: dict,
    theta: float,
    t: float,
    subsystem_width: int,
    basis_letter: str = "X",
) -> dict:
    """KS statistics of joint outcome probabilities, raw vs time-average-rescaled.

    Raw probabilities are scaled by the full dimension D (unit mean); the
    rescaled ones divide by the dephased time average per (o_A, x_B) pair.
    """
    n = int(model["n"])
    part = hb.Bipartition(n, hb.central_sites(n, subsystem_width))
    basis_a = hb.pauli_basis(part.sites_A, basis_letter)
    basis_b = hb.pauli_basis(part.sites_B, basis_letter)
    state = quench_state(cache, model, theta, t)
    joint = st.joint_outcome_distribution(state, part, basis_a, basis_b)
    bound = cache.bound(model, theta)
    avg = st.time_averaged_joint_distribution(bound, part, basis_a, basis_b)
    keep = avg > 1e-14
    rescaled = (joint[keep] / avg[keep]).ravel()
    raw = (joint * joint.size).ravel()
    rep_rescaled = st.pt_test(rescaled / rescaled.mean())
    rep_raw = st.pt_test(raw)
    return {
        "ks_rescaled": rep_rescaled.ks_statistic,
        "ks_raw": rep_raw.ks_statistic,
        "m2_rescaled": rep_rescaled.m2,
        "sample_count": int(rescaled.size),
    }


def eigenstate_projected_comparison(
    sd: sp.SpectralData,
    index: int,
    part: hb.Bipartition,
    basis: hb.MeasurementBasis,
    k: int = 2,
    caps: Caps = DEFAULT_CAPS,
) -> dict:
    """Projected-moment distances for one energy eigenstate (complex references)."""
    n = part.n_sites
    eig = hb.PureState(sd.eigenvectors[:, index], (2,) * n)
    ens = en.projected_ensemble(eig, part, basis)
    proj = en.moment_k(ens, k, caps)
    rho_a = hb.partial_trace(eig, part, "A").entries
    return {
        "index": index,
        "energy_density": float(sd.eigenvalues[index]) / n,
        "dist_scrooge": st.trace_distance(proj, sc.scrooge_moment(rho_a, k, caps)),
        "dist_haar": st.trace_distance(proj, en.haar_moment(part.d_a, k, caps)),
    }


# Takagi factor of the single-site X operator: W W^T = X. In a chain mapped to
# its complex conjugate by prod_j X_j, projecting onto X-ray outcomes on B and
# expressing A in the W frame leaves every projected state real up to a
# per-outcome global phase.
TAKAGI_X_FRAME = ((1.0 - 1.0j) / 2.0) * np.array([[1.0, 1.0j], [1.0j, 1.0]])


def real_projected_table(
    sd: sp.SpectralData, index: int, part: hb.Bipartition
) -> tuple[np.ndarray, float]:
    """Projected states of one eigenstate, as real columns in the A Takagi frame.

    Measures B in the X basis; returns the (D_A, D_B) real table (per-outcome
    phases fixed) and the worst relative imaginary leak before discarding it.
    """
    n = part.n_sites
    eig = hb.PureState(sd.eigenvectors[:, index], (2,) * n)
    basis = hb.pauli_basis(part.sites_B, "X")
    table = hb.projection_table(eig, part, basis)
    us_a = [TAKAGI_X_FRAME] * len(part.sites_A)
    rotated = hb.apply_local_rotations(table.T, us_a, conjugate=True).T
    leak = 0.0
    out = np.zeros(rotated.shape)
    for z in range(rotated.shape[1]):
        col = rotated[:, z]
        norm = np.linalg.norm(col)
        if norm < 1e-12:
            continue
        phase = col[np.abs(col).argmax()]
        col = col * (np.conj(phase) / abs(phase))
        leak = max(leak, float(np.abs(col.imag).max() / norm))
        out[:, z] = col.real
    return out, leak


def eigenstate_real_projected_comparison(
    sd: sp.SpectralData,
    index: int,
    part: hb.Bipartition,
    caps: Caps = DEFAULT_CAPS,
) -> dict:
    """Real-ensemble distances for one eigenstate of a time-reversal-symmetric chain.

    The projected second moment (built from the real projected states) is
    compared against the real Scrooge ensemble of the reduced state and the
    uniform real-vector reference.
    """
    n = part.n_sites
    table, imag_leak = real_projected_table(sd, index, part)
    probs = np.sum(table**2, axis=0)
    keep = probs > 1e-14
    cols = table[:, keep] / np.sqrt(probs[keep])
    c2 = np.einsum("az,bz->abz", cols, cols).reshape(part.d_a**2, -1)
    proj = en.MomentOperator(
        2, part.d_a, ((c2 * probs[keep]) @ c2.T).astype(complex), "normalized"
    )
    rho_a = (table @ table.T).astype(complex)
    d_scr = st.trace_distance(proj, sc.real_scrooge_moment2(rho_a, caps))
    d_haar = st.trace_distance(proj, sc.real_haar_moment2(part.d_a))
    return {
        "index": index,
        "energy_density": float(sd.eigenvalues[index]) / n,
        "dist_real_scrooge": d_scr,
        "dist_real_haar": d_haar,
        "imag_leak": imag_leak,
    }


def eigenstate_window_rescaled_probabilities(
    sd: sp.SpectralData,
    part: hb.Bipartition,
    center_energy: float,
    window_eigenstates: int = 100,
    basis_letter: str = "X",
) -> np.ndarray:
    """Joint outcome probabilities of windowed eigenstates, rescaled by the window mean.

    For each eigenstate in the window, p_E(o_A, x_B) is divided by the
    eigenstate-averaged probability of the same outcome pair; the pooled
    values have unit mean and are PT-distributed when the window states form
    outcome-conditioned maximum-entropy ensembles.
    """
    n = part.n_sites
    order = np.argsort(np.abs(sd.eigenvalues - center_energy), kind="stable")
    sel = np.sort(order[:window_eigenstates])
    basis_a = hb.pauli_basis(part.sites_A, basis_letter)
    basis_b = hb.pauli_basis(part.sites_B, basis_letter)
    joints = []
    for idx in sel:
        eig = hb.PureState(sd.eigenvectors[:, idx], (2,) * n)
        joints.append(st.joint_outcome_distribution(eig, part, basis_a, basis_b))
    joints = np.stack(joints)
    mean = joints.mean(axis=0)
    keep = mean > 1e-14
    vals = (joints[:, keep] / mean[keep]).ravel()
    return vals / vals.mean()
