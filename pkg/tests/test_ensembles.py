import numpy as np
import pytest

from qensembles import CapacityError, Caps
from qensembles import ensembles as en
from qensembles import hilbert as hb
from qensembles import spectral as sp
from qensembles._util import task_rng


def random_state(d, rng):
    amps = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    n = int(round(np.log2(d)))
    return hb.PureState(amps / np.linalg.norm(amps), (2,) * n)


class TestPermOperators:
    def test_swap_action(self, rng):
        s = en.perm_operator(3, 2, (1, 0), Caps())
        a = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        b = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        assert np.allclose(s @ np.kron(a, b), np.kron(b, a))

    def test_composition(self):
        d = 2
        p1 = en.perm_operator(d, 3, (1, 2, 0))
        p2 = en.perm_operator(d, 3, (2, 0, 1))
        assert np.allclose(p1 @ p2, np.eye(d**3))

    def test_identity(self):
        assert np.allclose(en.perm_operator(4, 2, (0, 1)), np.eye(16))


class TestMomentK:
    def test_single_state_rank_one(self, rng):
        psi = random_state(4, rng)
        ens = en.WeightedEnsemble(((1.0, psi),))
        m = en.moment_k(ens, 2)
        evals = np.linalg.eigvalsh(m.matrix)
        assert evals[-1] == pytest.approx(1.0, abs=1e-10)
        assert np.abs(evals[:-1]).max() <= 1e-10

    def test_classical_mixture(self):
        zero = hb.qubit_state([1, 0])
        one = hb.qubit_state([0, 1])
        ens = en.WeightedEnsemble(((0.5, zero), (0.5, one)))
        m = en.moment_k(ens, 2)
        assert np.allclose(m.matrix, np.diag([0.5, 0, 0, 0.5]))

    def test_matches_direct_sum(self, rng):
        states = [random_state(4, rng) for _ in range(150)]
        w = rng.random(150)
        w /= w.sum()
        ens = en.WeightedEnsemble(tuple(zip(w, states)))
        m = en.moment_k(ens, 2).matrix
        direct = np.zeros((16, 16), dtype=complex)
        for wi, s in zip(w, states):
            col = np.kron(s.amplitudes, s.amplitudes)
            direct += wi * np.outer(col, col.conj())
        assert np.abs(m - direct).max() <= 1e-12

    def test_deterministic_across_thread_counts(self, rng, monkeypatch):
        states = [random_state(4, rng) for _ in range(200)]
        ens = en.WeightedEnsemble(tuple((1.0 / 200, s) for s in states))
        monkeypatch.setenv("QENSEMBLES_THREADS", "1")
        m1 = en.moment_k(ens, 2).matrix
        monkeypatch.setenv("QENSEMBLES_THREADS", "8")
        m8 = en.moment_k(ens, 2).matrix
        assert np.array_equal(m1, m8)


class TestHaarMoment:
    def test_d2_k2_entries(self):
        m = en.haar_moment(2, 2).matrix
        assert np.allclose(np.diag(m).real, [1 / 3, 1 / 6, 1 / 6, 1 / 3])
        assert m[1, 2] == pytest.approx(1 / 6)
        assert m[2, 1] == pytest.approx(1 / 6)

    def test_k1_is_maximally_mixed(self):
        assert np.allclose(en.haar_moment(5, 1).matrix, np.eye(5) / 5)

    def test_trace_one(self):
        assert en.haar_moment(3, 3).trace == pytest.approx(1.0, abs=1e-12)

    def test_monte_carlo_haar_states(self, rng):
        d, n = 4, 100_000
        g = rng.standard_normal((d, n)) + 1j * rng.standard_normal((d, n))
        g /= np.linalg.norm(g, axis=0)
        cols = np.einsum("in,jn->ijn", g, g).reshape(d * d, n)
        mc = cols @ cols.conj().T / n
        se = np.abs(cols - cols.mean(axis=1, keepdims=True)).std(axis=1).max() / np.sqrt(n)
        m = en.haar_moment(d, 2).matrix
        assert np.abs(mc - m).max() <= 5 * max(se, 1e-4)


class TestRandomPhaseMoment:
    def test_k1_is_diagonal_ensemble(self, rng):
        p = rng.random(6)
        p /= p.sum()
        m = en.random_phase_moment_exact(p, 1).matrix
        assert np.allclose(m, np.diag(p))

    def test_d2_uniform_k2(self):
        m = en.random_phase_moment_exact([0.5, 0.5], 2).matrix
        assert np.allclose(np.diag(m).real, [0.25, 0.25, 0.25, 0.25])
        assert m[1, 2] == pytest.approx(0.25)  # swap coupling
        assert m[0, 3] == pytest.approx(0.0)  # different multisets

    def test_monte_carlo_phase_draws(self, rng):
        d, n = 4, 200_000
        p = rng.random(d)
        p /= p.sum()
        mags = np.sqrt(p)
        exact = en.random_phase_moment_exact(p, 2).matrix
        phases = rng.uniform(0, 2 * np.pi, size=(d, n))
        states = mags[:, None] * np.exp(1j * phases)
        cols = np.einsum("in,jn->ijn", states, states).reshape(d * d, n)
        mc = cols @ cols.conj().T / n
        # exact per-entry standard error of the mean of cols_i conj(cols_j)
        mags2 = np.abs(cols) ** 2
        se = np.sqrt(np.clip(mags2 @ mags2.T / n - np.abs(mc) ** 2, 0, None) / n)
        err = np.abs(mc - exact)
        assert np.all(err <= 5 * se + 1e-12)

    def test_moment_invariants(self, rng):
        p = rng.random(4)
        p /= p.sum()
        m = en.random_phase_moment_exact(p, 2)
        d = en.moment_defects(m)
        assert d["min_eigenvalue"] >= -1e-9
        assert d["trace"] == pytest.approx(1.0, abs=1e-8)
        assert d["symmetrization_defect"] <= 1e-10


class TestProductForm:
    def test_pure_state_bound_is_vacuous(self):
        rho = np.diag([1.0, 0.0]).astype(complex)
        pf = en.product_form_moment(rho, 2)
        expected = 2 * np.exp(np.pi * np.sqrt(4.0 / 3.0))
        assert pf.error_bound == pytest.approx(expected, rel=1e-12)
        assert pf.vacuous

    def test_maximally_mixed_trace(self):
        d = 16
        pf = en.product_form_moment(np.eye(d, dtype=complex) / d, 2)
        assert pf.moment.trace == pytest.approx(1.0 + 1.0 / d, abs=1e-10)
        assert pf.error_bound == pytest.approx(2 * np.exp(np.pi * np.sqrt(4 / 3)) / d, rel=1e-12)

    def test_k2_distance_identity_small_d(self, rng):
        # the factored distance formula equals the dense trace distance
        p = rng.random(8)
        p /= p.sum()
        pf = en.product_form_moment(np.diag(p).astype(complex), 2).moment
        exact = en.random_phase_moment_exact(p, 2)
        diff = pf.matrix - exact.matrix
        dense = 0.5 * np.abs(np.linalg.eigvalsh(diff)).sum()
        factored = en.product_vs_random_phase_distance_k2(p)
        assert dense == pytest.approx(factored, abs=1e-12)

    def test_distance_below_bound_at_n10(self, spectrum_factory):
        bound_sd = spectrum_factory("mfim", 10, 0.6)
        p = bound_sd.populations
        dist = en.product_vs_random_phase_distance_k2(p)
        bound = 2 * np.exp(np.pi * np.sqrt(4 / 3)) * float(np.sum(p**2))
        assert dist <= bound


class TestFiniteTimeMoment:
    def _bound_gue(self, d, rng):
        g = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(d)
        h = hb.HermitianOperator((g + g.conj().T) / 2, (2,) * int(np.log2(d)))
        sd = sp.diagonalize(h)
        return sp.bind_state(sd, random_state(d, rng))

    def test_tau_zero_is_initial_projector(self, rng):
        bound = self._bound_gue(4, rng)
        m = en.finite_time_temporal_moment(bound, 2, 0.0).matrix
        c2 = np.kron(bound.overlaps, bound.overlaps)
        assert np.abs(m - np.outer(c2, c2.conj())).max() <= 1e-12

    def test_large_tau_matches_random_phase(self, rng):
        bound = self._bound_gue(8, rng)
        tau = 1e12 / bound.spectral_width()
        m = en.finite_time_temporal_moment(bound, 2, tau).matrix
        exact = en.random_phase_moment_exact(bound.populations, 2).matrix
        assert np.abs(m - exact).max() <= 1e-6

    def test_frobenius_shortcut_matches_dense(self, rng):
        bound = self._bound_gue(8, rng)
        taus = [0.5, 3.0, 40.0]
        fast = en.finite_time_frobenius_distances(bound, 2, taus)
        exact = en.random_phase_moment_exact(bound.populations, 2).matrix
        for tau, dist in zip(taus, fast):
            m = en.finite_time_temporal_moment(bound, 2, tau).matrix
            assert np.linalg.norm(m - exact) == pytest.approx(dist, rel=1e-10)

    def test_k1_late_time_slope(self, rng):
        from qensembles import rmt

        bound = self._bound_gue(64, rng)
        taus = np.logspace(2, 4, 8) / bound.spectral_width() * 64
        dists = en.finite_time_frobenius_distances(bound, 1, taus)
        fit = rmt.fit_power_law(taus, dists, (taus[0], taus[-1]))
        assert fit.slope == pytest.approx(-1.0, abs=0.2)

    def test_sinc_series_branch(self):
        xs = np.array([0.0, 1e-9, 5e-5, 1e-3, 0.5, 3.0])
        vals = en.stable_sinc(xs)
        ref = np.array([1.0] + [np.sin(x) / x for x in xs[1:]])
        assert np.abs(vals - ref).max() <= 1e-15

    def test_capacity_guard(self, rng):
        bound = self._bound_gue(8, rng)
        caps = Caps(max_sinc_terms=10)
        with pytest.raises(CapacityError):
            en.finite_time_temporal_moment(bound, 2, 1.0, caps)


class TestProjectedEnsemble:
    def test_bell_state(self):
        bell = hb.qubit_state([1, 0, 0, 1] / np.sqrt(2))
        part = hb.Bipartition(2, (0,))
        ens = en.projected_ensemble(bell, part, hb.pauli_basis(part.sites_B, "Z"))
        assert ens.size == 2
        ws = sorted(w for w, _ in ens.members)
        assert np.allclose(ws, [0.5, 0.5])

    def test_product_state_members_identical(self):
        s = hb.product_state(0.8, 4)
        part = hb.Bipartition(4, (1,))
        ens = en.projected_ensemble(s, part, hb.pauli_basis(part.sites_B, "XYZ"))
        ref = ens.members[0][1].amplitudes
        ref = ref / ref[np.abs(ref).argmax()]
        for _, st in ens.members:
            cur = st.amplitudes / st.amplitudes[np.abs(st.amplitudes).argmax()]
            assert np.allclose(cur, ref)

    def test_first_moment_is_partial_trace(self, rng):
        s = random_state(256, rng)
        part = hb.Bipartition(8, (2, 5))
        basis = hb.pauli_basis(part.sites_B, "ZXZYZX")
        ens = en.projected_ensemble(s, part, basis)
        m1 = en.moment_k(ens, 1).matrix
        rho = hb.partial_trace(s, part, "A").entries
        assert np.abs(m1 - rho).max() <= 1e-10

    def test_outcome_probabilities_sum_to_one(self, rng):
        s = random_state(64, rng)
        part = hb.Bipartition(6, (0, 3))
        ens = en.projected_ensemble(s, part, hb.pauli_basis(part.sites_B, "XXXX"))
        assert sum(w for w, _ in ens.members) == pytest.approx(1.0, abs=1e-10)


class TestWeightedProjectedMoment:
    def test_k1_independent_of_pd(self, rng):
        s = random_state(16, rng)
        part = hb.Bipartition(4, (0, 1))
        basis = hb.pauli_basis(part.sites_B, "ZZ")
        pd1 = np.full(4, 0.25)
        pd2 = np.array([0.1, 0.2, 0.3, 0.4])
        m1 = en.weighted_projected_moment(s, part, basis, pd1, 1).matrix
        m2 = en.weighted_projected_moment(s, part, basis, pd2, 1).matrix
        assert np.abs(m1 - m2).max() <= 1e-12
        rho = hb.partial_trace(s, part, "A").entries
        assert np.abs(m1 - rho).max() <= 1e-12

    def test_stationary_state_equals_time_average(self):
        # an eigenstate's weighted moment has no time fluctuation at all
        h = hb.build_hamiltonian({"model": "mfim", "n": 4})
        sd = sp.diagonalize(h)
        eig = hb.PureState(sd.eigenvectors[:, 5], (2,) * 4)
        part = hb.Bipartition(4, (0, 1))
        basis = hb.pauli_basis(part.sites_B, "ZZ")
        table = hb.projection_table(eig, part, basis)
        pd = np.sum(np.abs(table) ** 2, axis=0)
        m = en.weighted_projected_moment(eig, part, basis, pd, 2).matrix
        bound = sp.bind_state(sd, eig)
        from qensembles import scrooge as sc

        tab = sc.conditional_states(bound, part, basis)
        direct = np.zeros_like(m)
        for i, x in enumerate(tab.outcomes):
            col = table[:, x] / np.sqrt(pd[x])
            c2 = np.kron(col, col)
            direct += pd[x] * np.outer(c2, c2.conj())
        assert np.abs(m - direct).max() <= 1e-10

    def test_zero_pd_with_amplitude_raises(self, rng):
        from qensembles import DegenerateWeightError

        s = random_state(16, rng)
        part = hb.Bipartition(4, (0, 1))
        basis = hb.pauli_basis(part.sites_B, "ZZ")
        with pytest.raises(DegenerateWeightError):
            en.weighted_projected_moment(s, part, basis, np.array([0.0, 0.3, 0.3, 0.4]), 2)


class TestParseval:
    def test_all_outcome_probabilities_normalized_along_trajectory(self, rng):
        h = hb.build_hamiltonian({"model": "mfim", "n": 6})
        sd = sp.diagonalize(h)
        psi0 = hb.product_state(0.6, 6)
        states = sp.evolve_grid(sd, psi0, np.linspace(1.0, 30.0, 7))
        part = hb.Bipartition(6, (2, 3))
        basis = hb.pauli_basis(part.sites_B, "XZXZ")
        for i in range(states.shape[1]):
            st = hb.PureState(states[:, i] / np.linalg.norm(states[:, i]), (2,) * 6)
            table = hb.projection_table(st, part, basis)
            assert np.sum(np.abs(table) ** 2) == pytest.approx(1.0, abs=1e-10)
