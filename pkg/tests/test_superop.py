import numpy as np
import pytest

from conftest import PAULI, random_channel, random_kraus
from qrenewal import superop as so
from qrenewal.errors import (
    DimensionMismatch,
    IllConditionedEigenbasis,
    KrausNotTracePreserving,
)


def ptm_by_conjugation(kraus):
    """Independent oracle: A_ij = (1/2) Tr(sigma_i sum_k K sigma_j K^dag) in unnormalized Paulis."""
    sigmas = [PAULI["i"], PAULI["x"], PAULI["y"], PAULI["z"]]
    out = np.zeros((4, 4), dtype=complex)
    for j, sj in enumerate(sigmas):
        image = sum(k @ sj @ k.conj().T for k in kraus)
        for i, si in enumerate(sigmas):
            out[i, j] = 0.5 * np.trace(si @ image)
    return out


def nc_amplitude_damping_kraus(gamma):
    # textbook matrices written with the decay target as the first basis vector
    return [
        np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex),
        np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex),
    ]


class TestBasis:
    def test_orthonormal(self):
        for d in (1, 2, 3):
            basis = so.hermitian_basis(d)
            gram = np.einsum("iab,jba->ij", basis, basis)
            assert np.allclose(gram, np.eye(d * d), atol=1e-14)

    def test_qubit_order_is_pauli(self):
        basis = so.hermitian_basis(2)
        for k, name in enumerate("ixyz"):
            assert np.allclose(basis[k], PAULI[name] / np.sqrt(2), atol=1e-15)

    def test_coords_round_trip(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        assert np.allclose(so.coords_to_operator(so.operator_coords(x)), x, atol=1e-14)


class TestDensityMatrix:
    def test_from_bloch(self):
        rho = so.DensityMatrix.from_bloch([0, 0, 1])
        assert np.allclose(rho.entries, np.diag([1.0, 0.0]), atol=1e-15)
        assert rho.excited_population() == pytest.approx(1.0)

    def test_invariants_rejected(self):
        with pytest.raises(ValueError):
            so.DensityMatrix(2, np.diag([0.6, 0.6]))
        with pytest.raises(ValueError):
            so.DensityMatrix(2, np.array([[1.2, 0], [0, -0.2]]))
        with pytest.raises(ValueError):
            so.DensityMatrix.from_bloch([0, 0, 1.5])


class TestKraus:
    def test_identity_channel(self):
        rep = so.superop_from_kraus([np.eye(2)])
        assert np.allclose(rep.matrix, np.eye(4), atol=1e-14)

    def test_nc_amplitude_damping_entries(self):
        # gamma from the worked two-level example; affine block from the
        # direct-conjugation oracle
        kraus = nc_amplitude_damping_kraus(0.8)
        rep = so.superop_from_kraus(kraus)
        oracle = ptm_by_conjugation(kraus)
        assert np.allclose(rep.matrix, oracle, atol=1e-12)
        assert rep.matrix[3, 3] == pytest.approx(0.2, abs=1e-12)
        assert rep.matrix[3, 0] == pytest.approx(0.8, abs=1e-12)

    def test_library_amplitude_damping_drains_excited(self):
        rep = so.amplitude_damping(0.8)
        oracle = ptm_by_conjugation(so.amplitude_damping_kraus(0.8))
        assert np.allclose(rep.matrix, oracle, atol=1e-12)
        assert rep.matrix[3, 0] == pytest.approx(-0.8, abs=1e-12)
        assert rep.matrix[3, 3] == pytest.approx(0.2, abs=1e-12)

    def test_sigma_x_channel(self):
        kraus = [PAULI["x"]]
        rep = so.superop_from_kraus(kraus)
        assert np.allclose(rep.matrix, ptm_by_conjugation(kraus), atol=1e-13)
        assert np.allclose(rep.matrix, np.diag([1, 1, -1, -1]), atol=1e-13)

    def test_not_trace_preserving(self):
        with pytest.raises(KrausNotTracePreserving):
            so.superop_from_kraus([0.9 * np.eye(2)])

    def test_every_kraus_channel_is_cpt(self):
        for seed in range(25):
            rng = np.random.default_rng(seed)
            rep = random_channel(rng, n_ops=int(rng.integers(1, 4)))
            report = so.certify_cpt(rep, tol=1e-9)
            assert report.is_cpt, f"seed {seed}: {report}"


class TestLindblad:
    def test_pure_dephasing(self):
        lam = 0.7
        gen = so.LindbladGenerator(np.zeros((2, 2)), ((PAULI["z"], lam),))
        rep = so.superop_from_lindblad(gen)
        # sigma_z X sigma_z - X acts as -2 on sigma_x, sigma_y and 0 elsewhere
        assert np.allclose(rep.matrix, np.diag([0, -2 * lam, -2 * lam, 0]), atol=1e-13)

    def test_no_jumps_zero(self):
        gen = so.LindbladGenerator(np.zeros((2, 2)), ())
        assert np.allclose(so.superop_from_lindblad(gen).matrix, 0.0, atol=1e-15)

    def test_pauli_decay_rates(self):
        rep = so.pauli_decay_generator(0.9, 1.3, 1.1)
        assert np.allclose(rep.matrix, np.diag([0, -0.9, -1.3, -1.1]), atol=1e-13)

    def test_trace_row_vanishes(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        gen = so.LindbladGenerator(np.zeros((2, 2)), ((a, 0.8),))
        rep = so.superop_from_lindblad(gen)
        assert np.max(np.abs(rep.matrix[0])) < 1e-13


class TestApplyCompose:
    def test_apply_identity(self, excited):
        assert np.allclose(so.apply(so.identity_superop(2), excited), excited.entries)

    def test_apply_basis_flip(self):
        flip = so.SuperOp(2, np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex))
        plus = (PAULI["i"] + PAULI["z"]) / 2
        minus = (PAULI["i"] - PAULI["z"]) / 2
        assert np.allclose(so.apply(flip, plus), minus, atol=1e-14)

    def test_amplitude_damping_action(self):
        # direct Kraus conjugation oracle: excited population scales by 1 - gamma,
        # the ground state is the fixed point
        chan = so.amplitude_damping(0.8)
        excited = (PAULI["i"] + PAULI["z"]) / 2
        ground = (PAULI["i"] - PAULI["z"]) / 2
        out = so.apply(chan, excited)
        oracle = sum(k @ excited @ k.conj().T for k in so.amplitude_damping_kraus(0.8))
        assert np.allclose(out, oracle, atol=1e-13)
        assert out[0, 0] == pytest.approx(0.2, abs=1e-13)
        assert np.allclose(so.apply(chan, ground), ground, atol=1e-13)

    def test_apply_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            so.apply(so.identity_superop(2), np.eye(3))

    def test_compose_identity(self):
        rng = np.random.default_rng(1)
        a = random_channel(rng)
        out = so.compose(so.identity_superop(2), a)
        assert np.allclose(out.matrix, a.matrix)

    def test_compose_diagonal(self):
        a = so.SuperOp(2, np.diag([1.0, 0.3, 0.4, 0.5]).astype(complex))
        b = so.SuperOp(2, np.diag([1.0, 0.6, 0.7, 0.8]).astype(complex))
        assert np.allclose(so.compose(a, b).matrix, np.diag([1.0, 0.18, 0.28, 0.4]))

    def test_compose_amplitude_damping(self):
        # Kraus-composition oracle: products of the two Kraus sets
        g1, g2 = 0.35, 0.6
        k1 = so.amplitude_damping_kraus(g1)
        k2 = so.amplitude_damping_kraus(g2)
        products = [a @ b for a in k1 for b in k2]
        oracle = so.superop_from_kraus(products)
        composed = so.compose(so.amplitude_damping(g1), so.amplitude_damping(g2))
        assert np.allclose(composed.matrix, oracle.matrix, atol=1e-13)
        expected = so.amplitude_damping(g1 + g2 - g1 * g2)
        assert np.allclose(composed.matrix, expected.matrix, atol=1e-13)

    def test_compose_associative_random_triples(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            a, b, c = (random_channel(rng, n_ops=2) for _ in range(3))
            left = so.compose(so.compose(a, b), c).matrix
            right = so.compose(a, so.compose(b, c)).matrix
            assert np.max(np.abs(left - right)) < 1e-12

    def test_matrix_representation_round_trip(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            chan = random_channel(rng)
            rebuilt = so.superop_from_action(2, lambda x: so.apply(chan, x))
            assert np.max(np.abs(rebuilt.matrix - chan.matrix)) < 1e-12


class TestSemigroup:
    def test_t_zero(self):
        gen = so.pauli_decay_generator(1.0, 1.0, 1.0)
        assert np.allclose(so.semigroup(gen, 0.0).matrix, np.eye(4))

    def test_diagonal_formula(self):
        gen = so.pauli_decay_generator(0.5, 0.9, 1.1)
        t = 0.8
        expected = np.diag([1.0, np.exp(-0.5 * t), np.exp(-0.9 * t), np.exp(-1.1 * t)])
        assert np.allclose(so.semigroup(gen, t).matrix, expected, atol=1e-13)

    def test_semigroup_property(self):
        rng = np.random.default_rng(7)
        from conftest import random_lindblad

        gen = random_lindblad(rng)
        a = so.compose(so.semigroup(gen, 0.4), so.semigroup(gen, 1.1))
        b = so.semigroup(gen, 1.5)
        assert np.max(np.abs(a.matrix - b.matrix)) < 1e-10

    def test_semigroup_cpt_on_log_grid(self):
        rng = np.random.default_rng(11)
        from conftest import random_lindblad

        gen = random_lindblad(rng)
        for t in np.logspace(-3, 1, 9):
            report = so.certify_cpt(so.semigroup(gen, t), tol=1e-9)
            assert report.min_choi_eigenvalue >= -1e-9
            assert report.is_cpt


class TestChoi:
    def test_identity_rank_one(self):
        eigs = np.linalg.eigvalsh(so.choi(so.identity_superop(2)))
        assert np.allclose(sorted(eigs), [0, 0, 0, 2], atol=1e-12)

    def test_depolarizing(self):
        # rho -> 1/2: Kraus {sigma/2}; direct-construction oracle sum_ab E_ab x A[E_ab]
        kraus = [m / 2 for m in (PAULI["i"], PAULI["x"], PAULI["y"], PAULI["z"])]
        chan = so.superop_from_kraus(kraus)
        direct = np.zeros((4, 4), dtype=complex)
        for a in range(2):
            for b in range(2):
                e_ab = np.zeros((2, 2), dtype=complex)
                e_ab[a, b] = 1.0
                direct += np.kron(e_ab, sum(k @ e_ab @ k.conj().T for k in kraus))
        got = so.choi(chan)
        assert np.allclose(got, direct, atol=1e-13)
        assert np.allclose(np.linalg.eigvalsh(got), 0.5, atol=1e-12)

    def test_transpose_map_not_cp(self):
        transpose = so.SuperOp(2, np.diag([1.0, 1.0, -1.0, 1.0]).astype(complex))
        eigs = np.linalg.eigvalsh(so.choi(transpose))
        assert eigs.min() < -0.5


class TestCertify:
    def test_identity(self):
        report = so.certify_cpt(so.identity_superop(2))
        assert report.is_cpt and report.trace_defect == 0.0
        assert report.min_choi_eigenvalue == pytest.approx(0.0, abs=1e-12)

    def test_transpose_fails(self):
        transpose = so.SuperOp(2, np.diag([1.0, 1.0, -1.0, 1.0]).astype(complex))
        assert not so.certify_cpt(transpose).is_cpt

    def test_amplitude_damping_043(self):
        assert so.certify_cpt(so.amplitude_damping(0.43)).is_cpt

    def test_tolerance_validated(self):
        with pytest.raises(ValueError):
            so.certify_cpt(so.identity_superop(2), tol=0.0)


class TestSpectral:
    def test_diagonal(self):
        gen = so.SuperOp(2, np.diag([0.0, -1.0, -2.0, -3.0]).astype(complex))
        data = so.spectral_decompose(gen)
        assert np.allclose(sorted(data.eigenvalues.real), [-3, -2, -1, 0])

    def test_decay_generator_eigenvalues(self):
        gen = so.pauli_decay_generator(1.1, 1.1, 1.1)
        data = so.spectral_decompose(gen)
        assert np.allclose(sorted(data.eigenvalues.real), [-1.1, -1.1, -1.1, 0.0], atol=1e-12)

    def test_reconstruction_residual(self):
        rng = np.random.default_rng(2)
        from conftest import random_lindblad

        gen = random_lindblad(rng)
        data = so.spectral_decompose(gen)
        recon = (data.eigenvectors * data.eigenvalues) @ data.eigenvectors_inv
        scale = np.max(np.abs(gen.matrix))
        assert np.max(np.abs(recon - gen.matrix)) <= 1e-8 * scale

    def test_jordan_block_rejected(self):
        jordan = np.eye(4, dtype=complex) * (-1.0)
        jordan[0, 1] = 1.0
        with pytest.raises(IllConditionedEigenbasis):
            so.spectral_decompose(so.SuperOp(2, jordan))


class TestNamedChannels:
    def test_dephasing(self):
        assert np.allclose(so.dephasing_channel(1.0).matrix, np.diag([1, 0, 0, 1]), atol=1e-13)
        assert np.allclose(so.dephasing_channel(0.4).matrix, np.diag([1, 0.6, 0.6, 1]), atol=1e-13)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            so.amplitude_damping(1.2)
        with pytest.raises(ValueError):
            so.dephasing_channel(-0.1)
        with pytest.raises(ValueError):
            so.pauli_decay_generator(3.0, 1.0, 1.0)
