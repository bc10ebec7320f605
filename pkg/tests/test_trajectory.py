import numpy as np
import pytest
import scipy.linalg
import scipy.stats

from qrenewal import laplace as lp
from qrenewal import superop as so
from qrenewal import trajectory as tj
from qrenewal import wtd as wt
from qrenewal.errors import TruncationTooLoose, ValidationError
from qrenewal.laplace import Ordering, RenewalSpec

EYE4 = np.eye(4, dtype=complex)


def qubit_spec(mod_rates=(), gamma=0.8, lam=1.1, base_rate=1.0, **kwargs):
    gen = so.pauli_decay_generator(lam, lam, lam)
    seq = wt.ModifiedWtdSequence(
        base=wt.WaitingTime.exponential(base_rate),
        modified=tuple(wt.WaitingTime.exponential(r) for r in mod_rates),
    )
    return RenewalSpec.build(gen, so.amplitude_damping(gamma), seq, **kwargs)


class TestSampling:
    def test_zero_horizon(self, fig3a_spec):
        traj = tj.sample_trajectory(fig3a_spec, 0.0, np.random.default_rng(0))
        assert traj.n_jumps == 0

    def test_jump_times_ordered_within_horizon(self, fig3a_spec):
        rng = np.random.default_rng(1)
        for _ in range(50):
            traj = tj.sample_trajectory(fig3a_spec, 3.0, rng)
            times = np.array(traj.jump_times)
            assert np.all(np.diff(times) > 0)
            assert traj.n_jumps == 0 or times[-1] <= 3.0

    def test_poisson_jump_counts(self):
        # unmodified exponential process: counts ~ Poisson(mu t)
        spec = qubit_spec()
        rng = np.random.default_rng(5)
        t, n = 2.0, 100_000
        counts = np.array([tj.sample_trajectory(spec, t, rng).n_jumps for _ in range(n)])
        kmax = int(counts.max())
        observed = np.bincount(counts, minlength=kmax + 1)
        expected = scipy.stats.poisson.pmf(np.arange(kmax + 1), 2.0) * n
        # pool the tail so every expected bin is populated
        keep = expected > 10
        obs = np.append(observed[keep], observed[~keep].sum())
        exp = np.append(expected[keep], expected[~keep].sum())
        stat = scipy.stats.chisquare(obs, exp * obs.sum() / exp.sum())
        assert stat.pvalue > 0.01

    def test_modified_first_interval_survival(self):
        # k = 1 with doubled first rate: P(no jump by t) = exp(-2 mu t)
        spec = qubit_spec(mod_rates=(2.0,))
        rng = np.random.default_rng(6)
        t, n = 0.8, 100_000
        none = sum(tj.sample_trajectory(spec, t, rng).n_jumps == 0 for _ in range(n))
        p = np.exp(-2.0 * t)
        sigma = np.sqrt(p * (1 - p) / n)
        assert abs(none / n - p) < 3 * sigma

    def test_inverse_ordering_fills_horizon(self, fig4a_spec):
        rng = np.random.default_rng(7)
        tmax = 4.0
        traj = tj.sample_trajectory(fig4a_spec, tmax, rng)
        assert all(0 <= t < tmax for t in traj.jump_times)

    def test_jump_count_marginal_matches_probabilities(self):
        spec = qubit_spec(mod_rates=(2.0, 5.0))
        rng = np.random.default_rng(8)
        t, n = 1.5, 100_000
        counts = np.array([tj.sample_trajectory(spec, t, rng).n_jumps for _ in range(n)])
        probs = wt.jump_count_probs(spec.wtds, t, 12)
        for k in range(8):
            p = probs[k]
            se = np.sqrt(p * (1 - p) / n)
            assert abs(np.mean(counts == k) - p) < 3 * se + 1e-12


class TestPropagation:
    def test_no_jumps_semigroup(self, excited):
        spec = qubit_spec()
        out = tj.propagate_trajectory(spec, tj.Trajectory((), 2.0), 2.0, excited)
        expected = so.apply(so.semigroup(spec.M, 2.0), excited)
        assert np.max(np.abs(out - expected)) < 1e-12

    def test_identity_jumps_give_pure_semigroup(self, excited):
        gen = so.pauli_decay_generator(1.0, 1.0, 1.0)
        seq = wt.ModifiedWtdSequence(base=wt.WaitingTime.exponential(1.0))
        spec = RenewalSpec.build(gen, so.identity_superop(2), seq)
        traj = tj.Trajectory((0.3, 0.9, 1.4), 2.0)
        out = tj.propagate_trajectory(spec, traj, 2.0, excited)
        expected = so.apply(so.semigroup(gen, 2.0), excited)
        assert np.max(np.abs(out - expected)) < 1e-12

    def test_one_jump_hand_composition(self, fig3a_spec, excited):
        t1, t = 0.7, 1.9
        traj = tj.Trajectory((t1,), t)
        out = tj.propagate_trajectory(fig3a_spec, traj, t, excited)
        chain = (
            scipy.linalg.expm(fig3a_spec.L.matrix * (t - t1))
            @ fig3a_spec.E.matrix
            @ scipy.linalg.expm(fig3a_spec.L.matrix * t1)
        )
        expected = so.coords_to_operator(chain @ so.operator_coords(excited.entries))
        assert np.max(np.abs(out - expected)) < 1e-12

    def test_per_trajectory_trace_preserved(self, fig3a_spec, excited):
        rng = np.random.default_rng(9)
        for _ in range(40):
            traj = tj.sample_trajectory(fig3a_spec, 3.0, rng)
            out = tj.propagate_trajectory(fig3a_spec, traj, 3.0, excited)
            assert abs(np.trace(out).real - 1.0) < 1e-10


class TestMonteCarlo:
    def test_identity_jumps_exact(self, excited):
        gen = so.pauli_decay_generator(0.9, 0.9, 1.2)
        seq = wt.ModifiedWtdSequence(base=wt.WaitingTime.exponential(1.0))
        spec = RenewalSpec.build(gen, so.identity_superop(2), seq)
        grid = np.array([0.5, 1.5, 3.0])
        res = tj.monte_carlo(spec, excited, grid, n=200, seed=1)
        for i, t in enumerate(grid):
            expected = so.apply(so.semigroup(gen, t), excited)
            assert np.max(np.abs(res.states[i] - expected)) < 1e-11

    def test_exponential_matches_merged_generator(self, excited):
        # (L + mu(E - 1)) semigroup oracle within 3 sigma
        spec = qubit_spec()
        grid = np.linspace(0.4, 5.0, 6)
        res = tj.monte_carlo(spec, excited, grid, n=50_000, seed=3)
        gen = spec.L.matrix + 1.0 * (spec.E.matrix - EYE4)
        x0 = so.operator_coords(excited.entries)
        for i, t in enumerate(grid):
            pe = 0.5 + (scipy.linalg.expm(gen * t) @ x0)[3].real / np.sqrt(2)
            assert abs(res.pe[i] - pe) < 3 * max(res.pe_stderr[i], 1e-6)

    def test_modified_matches_laplace(self, fig3a_spec, excited):
        grid = np.linspace(0.5, 5.0, 5)
        res = tj.monte_carlo(fig3a_spec, excited, grid, n=50_000, seed=4)
        fam = lp.map_family(fig3a_spec, "modified")
        for i, t in enumerate(grid):
            pe = so.apply(lp.invert_laplace(fam, t), excited)[0, 0].real
            assert abs(res.pe[i] - pe) < 3 * max(res.pe_stderr[i], 1e-6)

    def test_inverse_ordering_matches_laplace(self, fig4a_spec, excited):
        grid = np.linspace(0.5, 6.0, 5)
        res = tj.monte_carlo(fig4a_spec, excited, grid, n=50_000, seed=5)
        fam = lp.map_family(fig4a_spec, "inverse")
        for i, t in enumerate(grid):
            pe = so.apply(lp.invert_laplace(fam, t), excited)[0, 0].real
            assert abs(res.pe[i] - pe) < 3 * max(res.pe_stderr[i], 1e-6)

    def test_reproducible(self, fig3a_spec, excited):
        grid = np.linspace(0.5, 3.0, 4)
        a = tj.monte_carlo(fig3a_spec, excited, grid, n=5_000, seed=11)
        b = tj.monte_carlo(fig3a_spec, excited, grid, n=5_000, seed=11)
        assert np.array_equal(a.coords, b.coords)
        assert np.array_equal(a.coord_stderr, b.coord_stderr)

    def test_trace_defect_tiny(self, fig3a_spec, excited):
        res = tj.monte_carlo(fig3a_spec, excited, np.array([1.0, 2.0]), n=2_000, seed=12)
        assert res.trace_defect.max() < 1e-10

    def test_mean_states_near_physical(self, fig3a_spec, excited):
        res = tj.monte_carlo(fig3a_spec, excited, np.array([0.8, 2.4]), n=20_000, seed=13)
        for i in range(2):
            state = res.states[i]
            tol = 3 * res.coord_stderr[i].max() + 1e-12
            assert np.max(np.abs(state - state.conj().T)) < tol
            assert np.linalg.eigvalsh((state + state.conj().T) / 2).min() > -tol

    def test_right_side_rejected(self, excited):
        spec = qubit_spec(side=lp.Side.RIGHT)
        with pytest.raises(ValidationError):
            tj.monte_carlo(spec, excited, np.array([1.0]), n=10, seed=0)


class TestDysonSeries:
    def test_zero_jump_term(self, excited):
        spec = qubit_spec(mod_rates=(2.0,))
        t = 0.9
        state, _ = tj.dyson_series(spec, excited, t, n_max=0)
        g = wt.survival(spec.wtds.interval_wtd(1), t)
        expected = g * so.apply(so.semigroup(spec.M, t), excited)
        assert np.max(np.abs(state - expected)) < 1e-12

    def test_converges_to_merged_generator(self, excited):
        spec = qubit_spec()
        gen = spec.L.matrix + 1.0 * (spec.E.matrix - EYE4)
        x0 = so.operator_coords(excited.entries)
        for t in (0.5, 2.0, 4.0):
            state, bound = tj.dyson_series(spec, excited, t, tol=1e-8)
            expected = so.coords_to_operator(scipy.linalg.expm(gen * t) @ x0)
            assert np.max(np.abs(state - expected)) < max(1e-9, 2 * bound)

    def test_truncation_bound_honest(self, excited):
        spec = qubit_spec()
        gen = spec.L.matrix + 1.0 * (spec.E.matrix - EYE4)
        x0 = so.operator_coords(excited.entries)
        t = 2.0
        state, bound = tj.dyson_series(spec, excited, t, n_max=3)
        exact_pe = 0.5 + (scipy.linalg.expm(gen * t) @ x0)[3].real / np.sqrt(2)
        assert bound > 1e-3  # truncation clearly visible
        assert abs(state[0, 0].real - exact_pe) <= bound

    def test_truncation_too_loose_raised(self, excited):
        spec = qubit_spec()
        with pytest.raises(TruncationTooLoose):
            tj.dyson_series(spec, excited, 3.0, n_max=1, tol=1e-6)

    def test_dual_representations_agree(self, excited):
        # interval (f, g) form vs sprinkling (E-1, S) form
        spec = qubit_spec()
        for t in (0.5, 2.0, 5.0):
            a, _ = tj.dyson_series(spec, excited, t, form="interval", tol=1e-8)
            b, _ = tj.dyson_series(spec, excited, t, form="sprinkling")
            assert np.max(np.abs(a - b)) < 1e-6

    def test_dual_forms_erlang_base(self, excited):
        gen = so.pauli_decay_generator(1.1, 1.1, 1.1)
        seq = wt.ModifiedWtdSequence(base=wt.WaitingTime.erlang(2, 1.4))
        spec = RenewalSpec.build(gen, so.amplitude_damping(0.6), seq)
        for t in (0.8, 2.5):
            a, _ = tj.dyson_series(spec, excited, t, form="interval", tol=1e-8)
            b, _ = tj.dyson_series(spec, excited, t, form="sprinkling")
            assert np.max(np.abs(a - b)) < 1e-6

    def test_gauss_matches_exact_small_orders(self, excited):
        spec = qubit_spec(mod_rates=(3.0,))
        for t in (0.4, 1.1):
            a, _ = tj.dyson_series(spec, excited, t, n_max=3, method="gauss", quad_order=24)
            b, _ = tj.dyson_series(spec, excited, t, n_max=3, method="exact")
            assert np.max(np.abs(a - b)) < 1e-9

    def test_gauss_sprinkling_matches_exact(self, excited):
        spec = qubit_spec()
        t = 0.7
        a, _ = tj.dyson_series(spec, excited, t, n_max=3, method="gauss", form="sprinkling")
        b, _ = tj.dyson_series(spec, excited, t, n_max=3, method="exact", form="sprinkling")
        assert np.max(np.abs(a - b)) < 1e-9

    def test_general_last_interval_generator(self, excited):
        # M != L exercises the per-term block path against Laplace inversion
        gen_l = so.pauli_decay_generator(1.1, 1.1, 1.1)
        gen_m = so.pauli_decay_generator(0.4, 0.4, 0.7)
        seq = wt.ModifiedWtdSequence(base=wt.WaitingTime.exponential(1.0))
        spec = RenewalSpec.build(gen_l, so.amplitude_damping(0.5), seq, M=gen_m)
        fam = lp.map_family(spec, "semimarkov")
        for t in (0.6, 1.8):
            state, bound = tj.dyson_series(spec, excited, t, tol=1e-7)
            expected = so.apply(lp.invert_laplace(fam, t), excited)
            assert np.max(np.abs(state - expected)) < 1e-7 + bound

    def test_inverse_ordering_matches_laplace(self, fig4b_spec, excited):
        fam = lp.map_family(fig4b_spec, "inverse")
        for t in (0.5, 1.6):
            state, bound = tj.dyson_series(fig4b_spec, excited, t, tol=1e-7)
            expected = so.apply(lp.invert_laplace(fam, t), excited)
            assert np.max(np.abs(state - expected)) < 1e-7 + bound

    def test_time_zero(self, fig3a_spec, excited):
        state, bound = tj.dyson_series(fig3a_spec, excited, 0.0)
        assert np.allclose(state, excited.entries)
        assert bound == 0.0
