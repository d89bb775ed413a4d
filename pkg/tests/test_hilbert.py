import numpy as np
import pytest

from qensembles import InvalidMatrixError, InvalidModelError
from qensembles import hilbert as hb

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)


def kron_chain(*ops):
    """Little-endian embedding: first argument acts on site 0 (least significant)."""
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(op, out)
    return out


class TestBuildHamiltonian:
    def test_single_site_field_matrix(self):
        h = hb.build_hamiltonian({"model": "mfim", "n": 1, "hx": 0.890, "hy": 0.9045, "j": 1})
        assert np.allclose(h.entries, 0.890 * X + 0.9045 * Y)

    def test_zero_couplings_give_zero_matrix(self):
        h = hb.build_hamiltonian({"model": "mfim", "n": 3, "hx": 0, "hy": 0, "j": 0})
        assert np.all(h.entries == 0)

    def test_two_site_hand_expansion(self):
        # X_0 + X_1 + X_0 X_1, expanded entrywise by hand
        h = hb.build_hamiltonian({"model": "mfim", "n": 2, "hx": 1, "hy": 0, "j": 1})
        expected = kron_chain(X, np.eye(2)) + kron_chain(np.eye(2), X) + kron_chain(X, X)
        assert np.allclose(h.entries, expected)
        assert np.allclose(np.diag(h.entries), 0)
        assert np.allclose(h.entries - np.diag(np.diag(h.entries)), 1 - np.eye(4))

    def test_default_parameters_are_the_standard_point(self):
        h = hb.build_hamiltonian({"model": "mfim", "n": 2})
        href = hb.build_hamiltonian({"model": "mfim", "n": 2, "hx": 0.890, "hy": 0.9045, "j": 1})
        assert np.allclose(h.entries, href.entries)

    def test_tfim_is_mfim_without_x_field(self):
        h = hb.build_hamiltonian({"model": "tfim", "n": 3})
        href = hb.build_hamiltonian({"model": "mfim", "n": 3, "hx": 0.0})
        assert np.allclose(h.entries, href.entries)

    def test_broken_trs_extra_terms(self):
        h = hb.build_hamiltonian({"model": "mfim_broken_trs", "n": 2})
        base = hb.build_hamiltonian({"model": "mfim", "n": 2})
        extra = 0.5 * (kron_chain(Z, np.eye(2)) + kron_chain(np.eye(2), Z)) + 0.4 * kron_chain(Y, Y)
        assert np.allclose(h.entries, base.entries + extra)

    def test_xxz_couplings(self):
        j, delta, delta2 = np.sqrt(2.0), (np.sqrt(5.0) + 1) / 4, 1.0
        h = hb.build_hamiltonian({"model": "xxz", "n": 3})
        expected = np.zeros((8, 8), dtype=complex)
        for s, ops in [(0, (X, X, np.eye(2))), (1, (np.eye(2), X, X))]:
            expected += j / 4 * kron_chain(*ops)
        for s, ops in [(0, (Y, Y, np.eye(2))), (1, (np.eye(2), Y, Y))]:
            expected += j / 4 * kron_chain(*ops)
        for s, ops in [(0, (Z, Z, np.eye(2))), (1, (np.eye(2), Z, Z))]:
            expected += delta / 4 * kron_chain(*ops)
        expected += delta2 / 4 * kron_chain(Z, np.eye(2), Z)
        assert np.allclose(h.entries, expected)

    def test_every_model_is_hermitian(self):
        for spec in (
            {"model": "mfim", "n": 4},
            {"model": "mfim_broken_trs", "n": 4},
            {"model": "xxz", "n": 4},
            {"model": "tfim", "n": 4},
        ):
            h = hb.build_hamiltonian(spec)
            assert np.abs(h.entries - h.entries.conj().T).max() <= 1e-12

    def test_parity_symmetry_of_x_only_chain(self):
        # with h_y = 0 the chain commutes with the product of all X
        h = hb.build_hamiltonian({"model": "mfim", "n": 4, "hy": 0.0}).entries
        parity = kron_chain(X, X, X, X)
        assert np.linalg.norm(h @ parity - parity @ h) <= 1e-10

    def test_invalid_inputs(self):
        with pytest.raises(InvalidModelError):
            hb.build_hamiltonian({"model": "mfim", "n": 0})
        with pytest.raises(InvalidModelError):
            hb.build_hamiltonian({"model": "unknown", "n": 2})
        with pytest.raises(InvalidModelError):
            hb.build_hamiltonian({"model": "mfim", "n": 2, "boundary": "periodic"})
        with pytest.raises(InvalidMatrixError):
            hb.build_hamiltonian({"model": "explicit", "matrix": np.array([[0, 1], [0, 0]])})

    def test_explicit_matrix_roundtrip(self):
        m = np.array([[1.0, 2.0], [2.0, -1.0]], dtype=complex)
        h = hb.build_hamiltonian({"model": "explicit", "matrix": m})
        assert np.allclose(h.entries, m)


class TestProductState:
    def test_theta_zero_is_all_zeros(self):
        s = hb.product_state(0.0, 3)
        expected = np.zeros(8)
        expected[0] = 1.0
        assert np.allclose(s.amplitudes, expected)

    def test_full_flip(self):
        s = hb.product_state(np.pi, 1)
        assert abs(abs(s.amplitudes[1]) ** 2 - 1.0) < 1e-12

    def test_single_site_vector(self):
        s = hb.product_state(0.6, 1)
        assert np.allclose(s.amplitudes, [np.cos(0.3), 1j * np.sin(0.3)])

    def test_normalized(self):
        assert abs(hb.product_state(1.234, 5).norm() - 1.0) < 1e-12


class TestProjection:
    def test_bell_state_z_outcome(self):
        bell = hb.qubit_state([1, 0, 0, 1] / np.sqrt(2))
        part = hb.Bipartition(2, (0,))
        basis = hb.pauli_basis(part.sites_B, "Z")
        st, p = hb.project_outcome(bell, part, basis, 0)
        assert abs(p - 0.5) < 1e-12
        assert np.allclose(st.amplitudes, [1 / np.sqrt(2), 0])

    def test_product_state_projection_is_outcome_independent(self):
        s = hb.product_state(0.7, 3)
        part = hb.Bipartition(3, (0,))
        basis = hb.pauli_basis(part.sites_B, "XY")
        states = []
        for z in range(4):
            st, p = hb.project_outcome(s, part, basis, z)
            if p > 1e-12:
                states.append(st.amplitudes / np.linalg.norm(st.amplitudes))
        ref = states[0] / states[0][np.abs(states[0]).argmax()]
        for st in states[1:]:
            st = st / st[np.abs(st).argmax()]
            assert np.allclose(st, ref)

    def test_ghz_x_measurement(self):
        ghz = hb.qubit_state([1, 0, 0, 0, 0, 0, 0, 1] / np.sqrt(2))
        part = hb.Bipartition(3, (0,))
        basis = hb.pauli_basis(part.sites_B, "XX")
        st, p = hb.project_outcome(ghz, part, basis, 0)
        assert abs(p - 0.25) < 1e-12
        normed = st.amplitudes / np.linalg.norm(st.amplitudes)
        target = np.array([1, 1]) / np.sqrt(2)
        overlap = abs(np.vdot(target, normed))
        assert abs(overlap - 1.0) < 1e-12

    def test_probabilities_sum_to_one_and_reconstruct(self, rng):
        amps = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        state = hb.PureState(amps / np.linalg.norm(amps), (2,) * 4)
        part = hb.Bipartition(4, (1, 3))
        basis = hb.pauli_basis(part.sites_B, "XZ")
        table = hb.projection_table(state, part, basis)
        probs = np.sum(np.abs(table) ** 2, axis=0)
        assert abs(probs.sum() - 1.0) <= 1e-10
        # reconstruction: sum_z |psi(z)> (x) |z> recovers the state
        u = hb.basis_matrix(basis)
        m = np.zeros((part.d_a, part.d_b), dtype=complex)
        for z in range(part.d_b):
            m += np.outer(table[:, z], u[:, z])
        rebuilt = hb.merge_bipartite(m, part)
        assert np.abs(rebuilt.amplitudes - state.amplitudes).max() <= 1e-10

    def test_out_of_range_outcome(self):
        bell = hb.qubit_state([1, 0, 0, 1] / np.sqrt(2))
        part = hb.Bipartition(2, (0,))
        basis = hb.pauli_basis(part.sites_B, "Z")
        with pytest.raises(IndexError):
            hb.project_outcome(bell, part, basis, 2)


class TestPartialTrace:
    def test_bell_state_is_maximally_mixed(self):
        bell = hb.qubit_state([1, 0, 0, 1] / np.sqrt(2))
        part = hb.Bipartition(2, (0,))
        rho = hb.partial_trace(bell, part, "A")
        assert np.allclose(rho.entries, np.eye(2) / 2)

    def test_product_state_gives_rank_one_projector(self):
        s = hb.product_state(0.9, 3)
        part = hb.Bipartition(3, (1,))
        rho = hb.partial_trace(s, part, "A").entries
        local = np.array([np.cos(0.45), 1j * np.sin(0.45)])
        assert np.allclose(rho, np.outer(local, local.conj()))

    def test_trace_preserved_on_random_state(self, rng):
        amps = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        s = hb.PureState(amps / np.linalg.norm(amps), (2,) * 3)
        part = hb.Bipartition(3, (0, 2))
        for keep in ("A", "B"):
            rho = hb.partial_trace(s, part, keep)
            assert abs(np.trace(rho.entries).real - 1.0) <= 1e-12
            assert np.linalg.eigvalsh(rho.entries).min() >= -1e-12

    def test_operator_and_state_paths_agree(self, rng):
        amps = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        s = hb.PureState(amps / np.linalg.norm(amps), (2,) * 4)
        part = hb.Bipartition(4, (0, 3))
        dm = hb.HermitianOperator(np.outer(s.amplitudes, s.amplitudes.conj()), (2,) * 4)
        a1 = hb.partial_trace(s, part, "A").entries
        a2 = hb.partial_trace(dm, part, "A").entries
        assert np.abs(a1 - a2).max() <= 1e-12

    def test_projection_resolves_partial_trace(self, rng):
        # sum_z |psi(z)><psi(z)| over a complete B basis equals tr_B
        amps = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        s = hb.PureState(amps / np.linalg.norm(amps), (2,) * 5)
        part = hb.Bipartition(5, (0, 2))
        basis = hb.pauli_basis(part.sites_B, "YXZ")
        table = hb.projection_table(s, part, basis)
        mix = table @ table.conj().T
        rho = hb.partial_trace(s, part, "A").entries
        assert np.abs(mix - rho).max() <= 1e-10


class TestTensorPower:
    def test_basis_vector(self):
        out = hb.tensor_power(np.array([1.0, 0.0]), 3)
        expected = np.zeros(8)
        expected[0] = 1
        assert np.allclose(out, expected)

    def test_norm_multiplicativity(self, rng):
        v = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        out = hb.tensor_power(v, 3)
        assert abs(np.linalg.norm(out) - np.linalg.norm(v) ** 3) < 1e-10

    def test_explicit_k2(self):
        a, b = 0.3 + 0.1j, -0.7 + 0.2j
        out = hb.tensor_power(np.array([a, b]), 2)
        assert np.allclose(out, [a * a, a * b, b * a, b * b])

    def test_capacity_error(self):
        from qensembles import CapacityError

        with pytest.raises(CapacityError):
            hb.tensor_power(np.ones(2), 40)


class TestBases:
    def test_gram_defect_product(self):
        basis = hb.pauli_basis((0, 1, 2), "XYZ")
        assert hb.basis_gram_defect(basis) <= 1e-12

    def test_explicit_basis_columns(self, rng):
        g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        q, _ = np.linalg.qr(g)
        basis = hb.explicit_basis((0, 1), q)
        assert hb.basis_gram_defect(basis) <= 1e-12

    def test_basis_matrix_little_endian(self):
        basis = hb.pauli_basis((0, 1), "XZ")
        u = hb.basis_matrix(basis)
        # outcome z=1 flips the X-basis site (bit 0): |-> on site 0, |0> on site 1
        minus = np.array([1, -1]) / np.sqrt(2)
        expected = np.kron(np.array([1.0, 0.0]), minus)
        assert np.allclose(u[:, 1], expected)

    def test_central_sites(self):
        assert hb.central_sites(8, 4) == (2, 3, 4, 5)
        assert hb.central_sites(14, 4) == (5, 6, 7, 8)
