"""Time-domain propagation: stochastic unraveling and truncated jump series.

A realization of the process is a piecewise dynamics

    exp(M (t - t_n)) E exp(L dt_n) J ... E exp(L dt_1) J rho_0

with renewal-distributed interval lengths (the first k possibly modified).
Monte Carlo averages such compositions over sampled jump times; for the
inverse ordering the same sampled interval sequence is composed in
reversed order, which reproduces the last-k-modified map exactly with
unit importance weights.

The deterministic route evaluates the jump-number expansion term by term.
Each n-jump term is a nested convolution of phase-type weighted semigroup
factors, computed either exactly (matrix exponential of the block
bidiagonal phase chain realizing the convolution) or by tensor-product
Gauss-Legendre quadrature over the time-ordered simplex.  Two equivalent
representations are provided: interval form (pdf weights f, survival g)
and sprinkling form (renewal-density weights S with E - 1 insertions).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import expm_multiply

from . import wtd as wtdmod
from .errors import DimensionMismatch, QuadratureFailure, TruncationTooLoose, ValidationError
from .laplace import Ordering, RenewalSpec, Side
from .superop import DensityMatrix, coords_to_operator, operator_coords
from .wtd import ModifiedWtdSequence, WaitingTime

_MAX_ROUNDS = 100000
_GAUSS_MAX_JUMPS = 6


@dataclass(frozen=True)
class Trajectory:
    """Ordered jump times within a horizon."""

    jump_times: Tuple[float, ...]
    horizon: float

    def __post_init__(self):
        times = tuple(float(t) for t in self.jump_times)
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("jump times must be strictly increasing")
        if times and (times[0] < 0 or times[-1] > self.horizon):
            raise ValueError("jump times must lie in [0, horizon]")
        object.__setattr__(self, "jump_times", times)

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    """Monte Carlo ensemble average over trajectories."""

    grid: np.ndarray
    states: np.ndarray  # (G, d, d) mean states
    coords: np.ndarray  # (G, d^2) mean basis coordinates
    coord_stderr: np.ndarray  # (G, d^2) per-coordinate standard error
    n_trajectories: int
    seed: int

    def mean_state(self, i: int) -> np.ndarray:
        return self.states[i]

    @property
    def pe(self) -> np.ndarray:
        """Excited population (1 + r_3)/2 per grid point (qubit observable)."""
        return 0.5 + self.coords[:, 3].real / np.sqrt(2.0)

    @property
    def pe_stderr(self) -> np.ndarray:
        return self.coord_stderr[:, 3] / np.sqrt(2.0)

    @property
    def trace_defect(self) -> np.ndarray:
        d = self.states.shape[1]
        return np.abs(np.sqrt(d) * self.coords[:, 0].real - 1.0)


class _BatchSemigroup:
    """Apply exp(gen * dt) with per-element dt to batches of vectors or matrices."""

    def __init__(self, gen: np.ndarray):
        diag = np.diag(gen)
        if np.max(np.abs(gen - np.diag(diag))) <= 1e-13 * max(1.0, float(np.max(np.abs(gen)))):
            self.lam = diag.astype(complex)
            self.v = None
            self.vinv = None
        else:
            lam, v = np.linalg.eig(gen)
            self.lam = lam
            self.v = v
            self.vinv = np.linalg.inv(v)

    def rows(self, dts: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """xs: (K, D); returns exp(gen*dt_k) @ xs[k] stacked as rows."""
        scale = np.exp(np.outer(dts, self.lam))
        if self.v is None:
            return xs * scale
        return (xs @ self.vinv.T) * scale @ self.v.T

    def left_matrices(self, dts: np.ndarray, mats: np.ndarray) -> np.ndarray:
        """mats: (K, D, D); returns exp(gen*dt_k) @ mats[k]."""
        scale = np.exp(np.outer(dts, self.lam))[:, :, None]
        if self.v is None:
            return mats * scale
        w = np.einsum("ij,kjl->kil", self.vinv, mats)
        return np.einsum("ij,kjl->kil", self.v, w * scale)

    def right_matrices(self, dts: np.ndarray, mats: np.ndarray) -> np.ndarray:
        """mats: (K, D, D); returns mats[k] @ exp(gen*dt_k)."""
        scale = np.exp(np.outer(dts, self.lam))[:, None, :]
        if self.v is None:
            return mats * scale
        return ((mats @ self.v) * scale) @ self.vinv


def _forward_intervals(seq: ModifiedWtdSequence, horizon: float, rng: np.random.Generator):
    """Interval draws f_1, ..., f_k, f, f, ... until the horizon is passed."""
    intervals = []
    total = 0.0
    n = 0
    while total <= horizon:
        n += 1
        dt = wtdmod.sample(seq.interval_wtd(n), rng)
        intervals.append(dt)
        total += dt
        if n > _MAX_ROUNDS:
            raise RuntimeError("trajectory exceeded the interval cap")
    return intervals


def sample_trajectory(spec: RenewalSpec, horizon: float, rng: np.random.Generator) -> Trajectory:
    """Draw one trajectory.

    Forward ordering: waiting times follow f_1 ... f_k then the base WTD.
    Inverse ordering: the same interval draw is laid out in reversed order
    (residual first), so the last k completed intervals before the horizon
    follow f_k ... f_1.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if horizon == 0:
        return Trajectory((), 0.0)
    intervals = _forward_intervals(spec.wtds, horizon, rng)
    if spec.ordering is Ordering.FORWARD:
        times = np.cumsum(intervals)
        return Trajectory(tuple(times[times <= horizon]), horizon)
    completed = intervals[:-1]  # the final draw overshoots the horizon
    if not completed:
        return Trajectory((), horizon)
    residual = horizon - float(np.sum(completed))
    times = residual + np.concatenate([[0.0], np.cumsum(completed[::-1])[:-1]])
    return Trajectory(tuple(times[times < horizon]), horizon)


def propagate_trajectory(spec: RenewalSpec, traj: Trajectory, t: float, rho0) -> np.ndarray:
    """Compose the piecewise maps along fixed jump times (rightmost acts first)."""
    if isinstance(rho0, DensityMatrix):
        rho0 = rho0.entries
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape[0] != spec.dim:
        raise DimensionMismatch("initial state dimension does not match the spec")
    if traj.jump_times and traj.jump_times[-1] > t:
        raise ValueError("trajectory extends beyond the requested time")
    x = operator_coords(rho0)
    last = 0.0
    for tj in traj.jump_times:
        x = spec.J.matrix @ x
        x = scipy.linalg.expm(spec.L.matrix * (tj - last)) @ x
        x = spec.E.matrix @ x
        last = tj
    x = scipy.linalg.expm(spec.M.matrix * (t - last)) @ x
    return coords_to_operator(x)


def _round_generator(seed: int, round_index: int) -> np.random.Generator:
    key = np.array([seed % (2**64), round_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _sample_interval_rounds(seq: ModifiedWtdSequence, n: int, t_max: float, seed: int) -> np.ndarray:
    """(n, R) interval draws; round r holds interval r+1 of every trajectory."""
    intervals = []
    total = np.zeros(n)
    r = 0
    while np.any(total <= t_max):
        w = seq.interval_wtd(r + 1)
        rng = _round_generator(seed, r)
        draws = rng.exponential(1.0, size=(n, w.n_stages)) / np.asarray(w.rates)
        dt = draws.sum(axis=1)
        intervals.append(dt)
        total += dt
        r += 1
        if r > _MAX_ROUNDS:
            raise RuntimeError("interval sampling exceeded the round cap")
    return np.column_stack(intervals)


def monte_carlo(
    spec: RenewalSpec,
    rho0,
    grid,
    n: int,
    seed: int = 0,
) -> EnsembleResult:
    """Unbiased ensemble average of the piecewise dynamics on a time grid.

    Reproducible and grid independent: trajectory i draws its r-th interval
    from a Philox stream keyed by (seed, r), row i.
    """
    if n < 1:
        raise ValueError("need at least one trajectory")
    if spec.side is not Side.LEFT:
        raise ValidationError("Monte Carlo unraveling implements the left-ordered dynamics")
    if spec.ordering is Ordering.INVERSE and not spec.is_reference_form():
        raise ValidationError("inverse ordering requires J = identity, M = L")
    if isinstance(rho0, DensityMatrix):
        rho0 = rho0.entries
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) <= 0) or np.any(grid < 0):
        raise ValueError("grid must be strictly increasing and nonnegative")
    x0 = operator_coords(np.asarray(rho0, dtype=complex))
    dd = x0.size

    intervals = _sample_interval_rounds(spec.wtds, n, float(grid[-1]), seed)
    cum = np.cumsum(intervals, axis=1)
    n_rounds = intervals.shape[1]
    counts = np.empty((len(grid), n), dtype=np.int32)
    for g, tg in enumerate(grid):
        counts[g] = np.sum(cum <= tg, axis=1)

    sg_l = _BatchSemigroup(spec.L.matrix)
    sg_m = _BatchSemigroup(spec.M.matrix)
    e_mat, j_mat = spec.E.matrix, spec.J.matrix

    sums = np.zeros((len(grid), dd), dtype=complex)
    sqsums = np.zeros((len(grid), dd))
    forward = spec.ordering is Ordering.FORWARD

    if forward:
        state = np.broadcast_to(x0, (n, dd)).copy()
    else:
        state = np.broadcast_to(np.eye(dd, dtype=complex), (n, dd, dd)).copy()
    last_jump = np.zeros(n)

    for m in range(n_rounds + 1):
        for g, tg in enumerate(grid):
            rows = np.flatnonzero(counts[g] == m)
            if rows.size == 0:
                continue
            resid = tg - last_jump[rows]
            if forward:
                x = sg_m.rows(resid, state[rows])
            else:
                b = sg_l.rows(resid, np.broadcast_to(x0, (rows.size, dd)))
                x = np.einsum("kij,kj->ki", state[rows], b)
            sums[g] += x.sum(axis=0)
            sqsums[g] += (x.real**2).sum(axis=0)
        if m == n_rounds:
            break
        active = np.flatnonzero(counts[-1] > m)
        if active.size == 0:
            break
        dts = intervals[active, m]
        if forward:
            y = state[active] @ j_mat.T
            y = sg_l.rows(dts, y)
            state[active] = y @ e_mat.T
        else:
            state[active] = sg_l.right_matrices(dts, state[active]) @ e_mat
        last_jump[active] = cum[active, m]

    means = sums / n
    var = np.clip(sqsums / n - means.real**2, 0.0, None)
    stderr = np.sqrt(var / n)
    states = np.array([coords_to_operator(c) for c in means])
    return EnsembleResult(
        grid=grid,
        states=states,
        coords=means,
        coord_stderr=stderr,
        n_trajectories=n,
        seed=seed,
    )


# --- deterministic jump-number expansion --------------------------------------


def _phase_blocks(seq: ModifiedWtdSequence, n: int):
    """Phase representations of intervals 1..n+1 (the last one is pending)."""
    return [wtdmod.phase_representation(seq.interval_wtd(i)) for i in range(1, n + 2)]


def _term_interval_exact(l_mat, m_mat, e_mat, j_mat, seq: ModifiedWtdSequence, t: float, n: int):
    """Exact n-jump term of the interval (f/g) expansion as a D x D matrix.

    One matrix exponential of the block bidiagonal generator on
    (waiting phases) x (system coordinates) realizes the nested
    convolution; reading out the final block inserts the survival weight.
    """
    dd = l_mat.shape[0]
    reps = _phase_blocks(seq, n)
    sizes = [rep[0].shape[0] * dd for rep in reps]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    big = np.zeros((offsets[-1], offsets[-1]), dtype=complex)
    for i, (alpha, t_sub, tau) in enumerate(reps):
        m = alpha.shape[0]
        gen = m_mat if i == n else l_mat
        # phase_representation is row-convention (alpha exp(Tt) tau); the block
        # chain evolves column vectors, hence the transpose
        big[offsets[i] : offsets[i + 1], offsets[i] : offsets[i + 1]] = np.kron(
            t_sub.T, np.eye(dd)
        ) + np.kron(np.eye(m), gen)
        if i < n:
            nxt_alpha = reps[i + 1][0]
            jump = e_mat if i == n - 1 else j_mat @ e_mat
            big[offsets[i + 1] : offsets[i + 2], offsets[i] : offsets[i + 1]] = np.kron(
                np.outer(nxt_alpha, tau), jump
            )
    vin = np.zeros((offsets[-1], dd), dtype=complex)
    vin[offsets[0] : offsets[1]] = np.kron(reps[0][0][:, None], j_mat if n > 0 else np.eye(dd))
    vout = expm_multiply(big * t, vin)
    m_last = reps[n][0].shape[0]
    return vout[offsets[n] : offsets[n + 1]].reshape(m_last, dd, dd).sum(axis=0)


def _terms_interval_chain(l_mat, e_mat, seq: ModifiedWtdSequence, t: float, n_max: int):
    """All interval-form terms 0..n_max from one chain exponential (M = L, J = 1)."""
    dd = l_mat.shape[0]
    reps = _phase_blocks(seq, n_max)
    sizes = [rep[0].shape[0] * dd for rep in reps]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    big = np.zeros((offsets[-1], offsets[-1]), dtype=complex)
    for i, (alpha, t_sub, tau) in enumerate(reps):
        m = alpha.shape[0]
        big[offsets[i] : offsets[i + 1], offsets[i] : offsets[i + 1]] = np.kron(
            t_sub.T, np.eye(dd)
        ) + np.kron(np.eye(m), l_mat)
        if i < n_max:
            nxt_alpha = reps[i + 1][0]
            big[offsets[i + 1] : offsets[i + 2], offsets[i] : offsets[i + 1]] = np.kron(
                np.outer(nxt_alpha, tau), e_mat
            )
    vin = np.zeros((offsets[-1], dd), dtype=complex)
    vin[offsets[0] : offsets[1]] = np.kron(reps[0][0][:, None], np.eye(dd))
    vout = expm_multiply(big * t, vin)
    terms = []
    for i, (alpha, _, _) in enumerate(reps):
        m = alpha.shape[0]
        terms.append(vout[offsets[i] : offsets[i + 1]].reshape(m, dd, dd).sum(axis=0))
    return terms


def _term_sprinkling_exact(l_mat, e_mat, base: WaitingTime, t: float, n: int):
    """Exact n-insertion term of the sprinkling (E-1, S) expansion."""
    dd = l_mat.shape[0]
    if n == 0:
        return scipy.linalg.expm(l_mat * t)
    a_sub, b_vec, c_vec = wtdmod.sprinkling_realization(base)
    m = a_sub.shape[0]
    em1 = e_mat - np.eye(dd)
    block = np.kron(a_sub, np.eye(dd)) + np.kron(np.eye(m), l_mat)
    hop = np.kron(np.outer(b_vec, c_vec), em1)
    size = n * m * dd + dd
    big = np.zeros((size, size), dtype=complex)
    for i in range(n):
        big[i * m * dd : (i + 1) * m * dd, i * m * dd : (i + 1) * m * dd] = block
        if i + 1 < n:
            big[(i + 1) * m * dd : (i + 2) * m * dd, i * m * dd : (i + 1) * m * dd] = hop
    big[n * m * dd :, n * m * dd :] = l_mat
    big[n * m * dd :, (n - 1) * m * dd : n * m * dd] = np.kron(c_vec[None, :], em1)
    vin = np.zeros((size, dd), dtype=complex)
    vin[: m * dd] = np.kron(b_vec[:, None], np.eye(dd))
    vout = expm_multiply(big * t, vin)
    return vout[n * m * dd :]


def _simplex_nodes(t: float, n: int, order: int):
    """Tensor-product Gauss-Legendre nodes on 0 <= t_1 <= ... <= t_n <= t."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    grids = np.meshgrid(*([x] * n), indexing="ij")
    weights = np.ones_like(grids[0])
    for wi in np.meshgrid(*([w] * n), indexing="ij"):
        weights = weights * wi
    times = np.empty((n,) + grids[0].shape)
    jac = np.full_like(grids[0], t)
    upper = t
    for i in range(n - 1, -1, -1):
        times[i] = upper * grids[i]
        if i > 0:
            jac = jac * times[i]
        upper = times[i]
    times = times.reshape(n, -1).T  # (K, n), ordered ascending
    weights = (weights * jac).ravel()
    deltas = np.diff(np.concatenate([np.zeros((times.shape[0], 1)), times], axis=1), axis=1)
    resid = t - times[:, -1]
    return deltas, resid, weights


def _term_interval_gauss(l_mat, m_mat, e_mat, j_mat, seq, t, n, order):
    """n-jump interval term by tensor-product Gauss-Legendre over the simplex."""
    dd = l_mat.shape[0]
    if n == 0:
        return wtdmod.survival(seq.interval_wtd(1), t) * scipy.linalg.expm(m_mat * t)
    if n > _GAUSS_MAX_JUMPS:
        raise QuadratureFailure(f"tensor-product quadrature impractical for {n} jumps")
    deltas, resid, weights = _simplex_nodes(t, n, order)
    k = deltas.shape[0]
    dens = np.ones(k)
    for i in range(n):
        dens *= wtdmod.pdf_many(seq.interval_wtd(i + 1), deltas[:, i])
    dens *= wtdmod.survival_many(seq.interval_wtd(n + 1), resid)

    sg_l = _BatchSemigroup(l_mat)
    sg_m = _BatchSemigroup(m_mat)
    states = np.broadcast_to(np.eye(dd, dtype=complex), (k, dd, dd)).copy()
    for i in range(n):
        states = np.einsum("ij,kjl->kil", j_mat, states)
        states = sg_l.left_matrices(deltas[:, i], states)
        states = np.einsum("ij,kjl->kil", e_mat, states)
    states = sg_m.left_matrices(resid, states)
    return np.einsum("k,kij->ij", weights * dens, states)


def _term_sprinkling_gauss(l_mat, e_mat, base: WaitingTime, t: float, n: int, order: int):
    """n-insertion sprinkling term by tensor-product Gauss-Legendre."""
    dd = l_mat.shape[0]
    if n == 0:
        return scipy.linalg.expm(l_mat * t)
    if n > _GAUSS_MAX_JUMPS:
        raise QuadratureFailure(f"tensor-product quadrature impractical for {n} insertions")
    deltas, resid, weights = _simplex_nodes(t, n, order)
    k = deltas.shape[0]
    dens = np.ones(k)
    for i in range(n):
        dens *= wtdmod.sprinkling_many(base, deltas[:, i])
    em1 = e_mat - np.eye(dd)
    sg_l = _BatchSemigroup(l_mat)
    states = np.broadcast_to(np.eye(dd, dtype=complex), (k, dd, dd)).copy()
    for i in range(n):
        states = sg_l.left_matrices(deltas[:, i], states)
        states = np.einsum("ij,kjl->kil", em1, states)
    states = sg_l.left_matrices(resid, states)
    return np.einsum("k,kij->ij", weights * dens, states)


def dyson_series(
    spec: RenewalSpec,
    rho0,
    t: float,
    n_max: Optional[int] = None,
    quad_order: int = 24,
    form: str = "interval",
    method: str = "exact",
    tol: Optional[float] = None,
) -> Tuple[np.ndarray, float]:
    """Truncated jump-number expansion of rho(t); returns (state, truncation bound).

    form 'interval' sums survival/pdf weighted piecewise terms; form
    'sprinkling' sums the equivalent (E - 1) S(dt) representation
    (unmodified reference processes only).  method 'exact' evaluates each
    nested convolution through the phase-chain block exponential; 'gauss'
    uses tensor-product Gauss-Legendre of order quad_order (practical for
    few jumps only).  With n_max = None the series grows until the bound
    falls below tol (default 1e-6); with an explicit tol the bound is
    enforced and TruncationTooLoose raised when it cannot be met.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    if isinstance(rho0, DensityMatrix):
        rho0 = rho0.entries
    rho0 = np.asarray(rho0, dtype=complex)
    x0 = operator_coords(rho0)
    adaptive = n_max is None
    tol_eff = tol if tol is not None else 1e-6
    if t == 0:
        return rho0.copy(), 0.0

    seq = spec.wtds
    inverse = spec.ordering is Ordering.INVERSE
    if inverse and not spec.is_reference_form():
        raise ValidationError("inverse ordering requires J = identity, M = L")
    if form == "sprinkling":
        if seq.k != 0:
            raise ValidationError("the sprinkling form applies to unmodified processes")
        if not spec.is_reference_form():
            raise ValidationError("the sprinkling form requires J = identity, M = L")
    elif form != "interval":
        raise ValueError(f"unknown series form {form!r}")
    if method not in ("exact", "gauss"):
        raise ValueError(f"unknown quadrature method {method!r}")

    # Transpose device: the reversed-order map equals the transpose of the
    # forward construction built from transposed factor matrices.
    if inverse:
        l_mat, m_mat = spec.L.matrix.T, spec.M.matrix.T
        e_mat, j_mat = spec.E.matrix.T, spec.J.matrix.T
    else:
        l_mat, m_mat = spec.L.matrix, spec.M.matrix
        e_mat, j_mat = spec.E.matrix, spec.J.matrix

    if form == "interval":
        if adaptive:
            probs = wtdmod.jump_count_probs_adaptive(seq, t, tail=min(tol_eff * 0.1, 1e-7))
            n_terms = len(probs) - 1
        else:
            n_terms = n_max
            probs = wtdmod.jump_count_probs(seq, t, n_terms)
        bound = float(max(1.0 - probs.sum(), 0.0))
        if tol is not None and bound > tol:
            raise TruncationTooLoose(f"probability tail {bound:.3e} exceeds tolerance {tol:.3e}")
        dd = l_mat.shape[0]
        chain_ok = (
            method == "exact"
            and np.max(np.abs(m_mat - l_mat)) < 1e-15
            and np.max(np.abs(j_mat - np.eye(dd))) < 1e-15
        )
        if chain_ok:
            terms = _terms_interval_chain(l_mat, e_mat, seq, t, n_terms)
        elif method == "exact":
            terms = [
                _term_interval_exact(l_mat, m_mat, e_mat, j_mat, seq, t, n)
                for n in range(n_terms + 1)
            ]
        else:
            terms = [
                _term_interval_gauss(l_mat, m_mat, e_mat, j_mat, seq, t, n, quad_order)
                for n in range(n_terms + 1)
            ]
        total = np.sum(terms, axis=0)
    else:
        base = seq.base
        terms, norms = [], []
        n_terms = _MAX_ROUNDS if adaptive else n_max
        n = 0
        while n <= n_terms:
            if method == "exact":
                term = _term_sprinkling_exact(l_mat, e_mat, base, t, n)
            else:
                term = _term_sprinkling_gauss(l_mat, e_mat, base, t, n, quad_order)
            terms.append(term)
            norms.append(float(np.max(np.abs(term))))
            if adaptive and n >= 2 and max(norms[-2:]) < tol_eff * 0.01:
                break
            n += 1
        if len(norms) >= 2 and norms[-2] > 0:
            ratio = min(norms[-1] / norms[-2], 0.95)
            bound = float(norms[-1] * ratio / (1.0 - ratio))
        else:
            bound = float(norms[-1])
        if tol is not None and bound > tol:
            raise TruncationTooLoose(f"series bound {bound:.3e} exceeds tolerance {tol:.3e}")
        total = np.sum(terms, axis=0)

    if inverse:
        total = total.T
    return coords_to_operator(total @ x0), bound
