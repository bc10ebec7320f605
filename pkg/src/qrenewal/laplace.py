"""Laplace-domain dynamical maps, memory kernels and inhomogeneous terms.

A renewal process specification fixes two semigroup generators L (between
jumps) and M (last interval), two CPT jump channels E (applied after an
interval) and J (applied before), and a sequence of waiting time
distributions.  All maps are built from matrix functions of u - L and
u - M evaluated spectrally (with an exact diagonal fast path), combined in
the factor orderings that distinguish the left/right unmodified dynamics
and the forward/inverse modified dynamics:

    unmodified, left ordering      Lhat_l(u)  = ghat(u-M) (1 - E fhat(u-L) J)^-1
    unmodified, right ordering     Lhat_r(u)  = (1 - E fhat(u-L) J)^-1 ghat(u-M)
    first-k modified (forward)     Lhat_k(u)  = sum_j ghat_j (E fhat_{j-1}) ... (E fhat_1)
                                                + ghat (1 - E fhat)^-1 (E fhat_k) ... (E fhat_1)
    last-k modified (inverse)      term-by-term factor reversal of the forward map

with every ghat/fhat above taken at argument u - L (u - M for the last
unmodified interval).  Memory kernels obey Khat = u - Lhat^-1 and the
modified dynamics satisfy

    u Lhat_k - 1 = Khat_ref Lhat_k + Ihat_k

with the reference kernel Khat_ref = L + (E - 1) khat(u-L) (or its
order-reversed partner) and the inhomogeneous term built from sprinkling
distribution differences.  Time-domain maps come from fixed-Talbot
inversion applied entrywise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import wtd as wtdmod
from .errors import PoleAtShiftedU, PoleAtU, SingularResolvent, ValidationError
from .inversion import talbot_checked
from .superop import SuperOp, certify_cpt, identity_superop, spectral_decompose
from .wtd import ModifiedWtdSequence, WaitingTime


class Side(enum.Enum):
    LEFT = "left"
    RIGHT = "right"


class Ordering(enum.Enum):
    FORWARD = "forward"
    INVERSE = "inverse"


@dataclass(frozen=True, eq=False)
class RenewalSpec:
    """Full quantum renewal process specification."""

    L: SuperOp
    M: SuperOp
    E: SuperOp
    J: SuperOp
    wtds: ModifiedWtdSequence
    ordering: Ordering = Ordering.FORWARD
    side: Side = Side.LEFT

    def __post_init__(self):
        dims = {self.L.dim, self.M.dim, self.E.dim, self.J.dim}
        if len(dims) != 1:
            raise ValidationError(f"all maps must share one dimension, got {dims}")
        for name, gen in (("L", self.L), ("M", self.M)):
            row = np.max(np.abs(gen.matrix[0]))
            if row > 1e-9 * max(1.0, np.max(np.abs(gen.matrix))):
                raise ValidationError(f"generator {name} does not annihilate the trace row ({row:.3e})")
        for name, ch in (("E", self.E), ("J", self.J)):
            report = certify_cpt(ch)
            if not report.is_cpt:
                raise ValidationError(
                    f"jump channel {name} is not CPT: trace defect {report.trace_defect:.3e}, "
                    f"min Choi eigenvalue {report.min_choi_eigenvalue:.3e}"
                )

    @property
    def dim(self) -> int:
        return self.L.dim

    @classmethod
    def build(
        cls,
        L: SuperOp,
        E: SuperOp,
        wtds: ModifiedWtdSequence,
        J: Optional[SuperOp] = None,
        M: Optional[SuperOp] = None,
        ordering: Ordering = Ordering.FORWARD,
        side: Side = Side.LEFT,
    ) -> "RenewalSpec":
        """Spec with the reference-process defaults J = identity, M = L."""
        if J is None:
            J = identity_superop(L.dim)
        if M is None:
            M = L
        return cls(L=L, M=M, E=E, J=J, wtds=wtds, ordering=ordering, side=side)

    def is_reference_form(self) -> bool:
        """True when J = identity and M = L (the modified-process setting)."""
        d2 = self.dim * self.dim
        return (
            np.max(np.abs(self.J.matrix - np.eye(d2))) < 1e-12
            and np.max(np.abs(self.M.matrix - self.L.matrix)) < 1e-12
        )

    def with_ordering(self, ordering: Ordering) -> "RenewalSpec":
        return RenewalSpec(self.L, self.M, self.E, self.J, self.wtds, ordering, self.side)

    def with_wtds(self, wtds: ModifiedWtdSequence) -> "RenewalSpec":
        return RenewalSpec(self.L, self.M, self.E, self.J, wtds, self.ordering, self.side)


class MatrixFunction:
    """Evaluator of scalar functions at matrix argument u - gen.

    Diagonal generators use the exact per-entry shift formula
    h(u - gen) = diag(h(u - g_0), ..., h(u - g_{D-1})); otherwise the
    spectral decomposition V diag(h(u - lambda_i)) V^-1 is used, rejecting
    ill-conditioned eigenbases.
    """

    def __init__(self, gen: SuperOp):
        self.gen = gen
        m = gen.matrix
        diag = np.diag(m)
        scale = max(1.0, float(np.max(np.abs(m))))
        if np.max(np.abs(m - np.diag(diag))) <= 1e-13 * scale:
            self.eigenvalues = diag.astype(complex)
            self.v = None
            self.vinv = None
        else:
            data = spectral_decompose(gen)
            self.eigenvalues = data.eigenvalues
            self.v = data.eigenvectors
            self.vinv = data.eigenvectors_inv

    def evaluate(self, h: Callable, u: complex) -> np.ndarray:
        try:
            values = np.asarray(h(u - self.eigenvalues), dtype=complex)
        except PoleAtU as exc:
            raise PoleAtShiftedU(str(exc)) from exc
        if self.v is None:
            return np.diag(values)
        return (self.v * values) @ self.vinv

    def resolvent(self, u: complex) -> np.ndarray:
        return self.evaluate(lambda v: 1.0 / v, u)


def matfun(gen: SuperOp, h: Callable, u: complex) -> SuperOp:
    """h(u - gen) for a vectorized scalar function h."""
    return SuperOp(gen.dim, MatrixFunction(gen).evaluate(h, u))


def _inv(mat: np.ndarray, what: str, u) -> np.ndarray:
    try:
        out = np.linalg.inv(mat)
    except np.linalg.LinAlgError as exc:
        raise SingularResolvent(f"{what} singular at u = {u}") from exc
    if not np.all(np.isfinite(out)):
        raise SingularResolvent(f"{what} numerically singular at u = {u}")
    return out


class _Ctx:
    """Per-spec cache of spectral data and WTD transform shortcuts."""

    def __init__(self, spec: RenewalSpec):
        self.spec = spec
        self.seq = spec.wtds
        self.fun_l = MatrixFunction(spec.L)
        self.fun_m = self.fun_l if spec.M is spec.L else MatrixFunction(spec.M)
        self.e = spec.E.matrix
        self.j = spec.J.matrix
        self.d2 = spec.dim * spec.dim
        self.eye = np.eye(self.d2, dtype=complex)

    def fhat_l(self, u, w: Optional[WaitingTime] = None):
        w = w or self.seq.base
        return self.fun_l.evaluate(lambda v: wtdmod.laplace_pdf(w, v), u)

    def ghat_l(self, u, w: Optional[WaitingTime] = None):
        w = w or self.seq.base
        return self.fun_l.evaluate(lambda v: wtdmod.laplace_survival(w, v), u)

    def fhat_m(self, u):
        return self.fun_m.evaluate(lambda v: wtdmod.laplace_pdf(self.seq.base, v), u)

    def ghat_m(self, u):
        return self.fun_m.evaluate(lambda v: wtdmod.laplace_survival(self.seq.base, v), u)

    def ghat_m_inv(self, u):
        return self.fun_m.evaluate(lambda v: 1.0 / wtdmod.laplace_survival(self.seq.base, v), u)

    def khat_l(self, u):
        return self.fun_l.evaluate(lambda v: wtdmod.classical_kernel_hat(self.seq.base, v), u)

    def shat_l(self, u):
        return self.fun_l.evaluate(lambda v: wtdmod.sprinkling_hat(self.seq.base, v), u)

    def shat_diff_l(self, u, w: WaitingTime):
        """(Shat_r - Shat)(u - L) for a modified interval distribution w."""
        base = self.seq.base

        def diff(v):
            return wtdmod.sprinkling_hat_modified(w, base, v) - wtdmod.sprinkling_hat(base, v)

        return self.fun_l.evaluate(diff, u)

    def require_reference_form(self, what: str):
        if not self.spec.is_reference_form():
            raise ValidationError(
                f"{what} is defined for the reference setting J = identity, M = L only"
            )


# --- unmodified quantum semi-Markov maps and kernels -------------------------


def map_hat_semimarkov(spec: RenewalSpec, u: complex) -> SuperOp:
    """Lhat_l(u) = ghat(u-M)(1 - E fhat(u-L) J)^-1, or the right-ordered partner."""
    ctx = _Ctx(spec)
    core = ctx.eye - ctx.e @ ctx.fhat_l(u) @ ctx.j
    core_inv = _inv(core, "1 - E fhat J", u)
    g = ctx.ghat_m(u)
    mat = g @ core_inv if spec.side is Side.LEFT else core_inv @ g
    return SuperOp(spec.dim, mat)


def kernel_hat_semimarkov(spec: RenewalSpec, u: complex) -> SuperOp:
    """Khat(u) = M + (E fhat(u-L) J - fhat(u-M)) ghat(u-M)^-1 (left ordering).

    The right ordering carries ghat(u-M)^-1 on the left instead; both satisfy
    Khat = u - Lhat^-1 with the matching map ordering.
    """
    ctx = _Ctx(spec)
    num = ctx.e @ ctx.fhat_l(u) @ ctx.j - ctx.fhat_m(u)
    g_inv = ctx.ghat_m_inv(u)
    if spec.side is Side.LEFT:
        mat = spec.M.matrix + num @ g_inv
    else:
        mat = spec.M.matrix + g_inv @ num
    return SuperOp(spec.dim, mat)


# --- modified processes -------------------------------------------------------


def _map_modified(ctx: _Ctx, u: complex) -> np.ndarray:
    total = np.zeros((ctx.d2, ctx.d2), dtype=complex)
    prod = ctx.eye  # running E fhat_j ... E fhat_1
    for j in range(1, ctx.seq.k + 1):
        w = ctx.seq.modified[j - 1]
        total += ctx.ghat_l(u, w) @ prod
        prod = ctx.e @ ctx.fhat_l(u, w) @ prod
    core_inv = _inv(ctx.eye - ctx.e @ ctx.fhat_l(u), "1 - E fhat", u)
    return total + ctx.ghat_l(u) @ core_inv @ prod


def _map_inverse(ctx: _Ctx, u: complex) -> np.ndarray:
    total = np.zeros((ctx.d2, ctx.d2), dtype=complex)
    prod = ctx.eye  # running fhat_1 E ... fhat_j E
    for j in range(1, ctx.seq.k + 1):
        w = ctx.seq.modified[j - 1]
        total += prod @ ctx.ghat_l(u, w)
        prod = prod @ ctx.fhat_l(u, w) @ ctx.e
    core_inv = _inv(ctx.eye - ctx.fhat_l(u) @ ctx.e, "1 - fhat E", u)
    return total + prod @ core_inv @ ctx.ghat_l(u)


def map_hat_modified(spec: RenewalSpec, u: complex) -> SuperOp:
    """Forward (first-k modified) map; k = 0 gives the unmodified reference map."""
    ctx = _Ctx(spec)
    ctx.require_reference_form("the modified map")
    return SuperOp(spec.dim, _map_modified(ctx, u))


def map_hat_inverse_order(spec: RenewalSpec, u: complex) -> SuperOp:
    """Inverse (last-k modified) map: term-by-term factor reversal of the forward one."""
    ctx = _Ctx(spec)
    ctx.require_reference_form("the inverse-ordered map")
    return SuperOp(spec.dim, _map_inverse(ctx, u))


def map_hat(spec: RenewalSpec, u: complex) -> SuperOp:
    """Modified map in the ordering carried by the spec."""
    if spec.ordering is Ordering.FORWARD:
        return map_hat_modified(spec, u)
    return map_hat_inverse_order(spec, u)


def kernel_hat_reference(spec: RenewalSpec, u: complex, ordering: Optional[Ordering] = None) -> SuperOp:
    """Reference kernel L + (E - 1) khat(u-L), order-reversed for the inverse case."""
    ctx = _Ctx(spec)
    ctx.require_reference_form("the reference kernel")
    ordering = ordering or spec.ordering
    k = ctx.khat_l(u)
    em1 = ctx.e - ctx.eye
    if ordering is Ordering.FORWARD:
        mat = spec.L.matrix + em1 @ k
    else:
        mat = spec.L.matrix + k @ em1
    return SuperOp(spec.dim, mat)


def map_hat_reference(spec: RenewalSpec, u: complex, ordering: Optional[Ordering] = None) -> SuperOp:
    """Unmodified (k = 0) map in either ordering; partner of kernel_hat_reference."""
    stripped = spec.with_wtds(ModifiedWtdSequence(base=spec.wtds.base))
    if (ordering or spec.ordering) is Ordering.FORWARD:
        return map_hat_modified(stripped, u)
    return map_hat_inverse_order(stripped, u)


def _inhom_forward(ctx: _Ctx, u: complex) -> np.ndarray:
    em1 = ctx.e - ctx.eye
    total = np.zeros((ctx.d2, ctx.d2), dtype=complex)
    prod = ctx.eye  # E fhat_{r-1} ... E fhat_1
    for r in range(1, ctx.seq.k + 1):
        w = ctx.seq.modified[r - 1]
        total += em1 @ ctx.shat_diff_l(u, w) @ prod
        prod = ctx.e @ ctx.fhat_l(u, w) @ prod
    return total


def _inhom_forward_reversed(ctx: _Ctx, u: complex) -> np.ndarray:
    """Factor-order reversal of the forward inhomogeneous term."""
    em1 = ctx.e - ctx.eye
    total = np.zeros((ctx.d2, ctx.d2), dtype=complex)
    prod = ctx.eye  # fhat_1 E ... fhat_{r-1} E
    for r in range(1, ctx.seq.k + 1):
        w = ctx.seq.modified[r - 1]
        total += prod @ ctx.shat_diff_l(u, w) @ em1
        prod = prod @ ctx.fhat_l(u, w) @ ctx.e
    return total


def inhom_hat_modified(spec: RenewalSpec, u: complex) -> SuperOp:
    """Ihat_k(u) = sum_r (E-1)(Shat_r - Shat)(u-L) E fhat_{r-1} ... E fhat_1."""
    ctx = _Ctx(spec)
    ctx.require_reference_form("the inhomogeneous term")
    return SuperOp(spec.dim, _inhom_forward(ctx, u))


def inhom_hat_inverse(spec: RenewalSpec, u: complex) -> SuperOp:
    """Ihat for inverse ordering: Lhat_ref^-1 Ihat_forward^T Lhat_ref.

    The T reversal is constructed factor by factor, never as a literal
    matrix transpose.
    """
    ctx = _Ctx(spec)
    ctx.require_reference_form("the inverse inhomogeneous term")
    rev = _inhom_forward_reversed(ctx, u)
    lam0 = _inv(ctx.eye - ctx.fhat_l(u) @ ctx.e, "1 - fhat E", u) @ ctx.ghat_l(u)
    lam0_inv = _inv(lam0, "reference map", u)
    return SuperOp(spec.dim, lam0_inv @ rev @ lam0)


def kernel_hat_modified(spec: RenewalSpec, u: complex) -> SuperOp:
    """Homogeneous modified kernel, forward ordering:

        Khat_k = L + (1 + Ihat_k)^-1 { (E-1) khat(u-L) + Ihat_k (u - L) },

    and its factor-order reversal for the inverse ordering.
    """
    ctx = _Ctx(spec)
    ctx.require_reference_form("the modified kernel")
    shift = u * ctx.eye - spec.L.matrix
    em1k = (ctx.e - ctx.eye) @ ctx.khat_l(u)
    if spec.ordering is Ordering.FORWARD:
        ih = _inhom_forward(ctx, u)
        mat = spec.L.matrix + _inv(ctx.eye + ih, "1 + Ihat", u) @ (em1k + ih @ shift)
    else:
        ih = _inhom_forward_reversed(ctx, u)
        rev_em1k = ctx.khat_l(u) @ (ctx.e - ctx.eye)
        mat = spec.L.matrix + (rev_em1k + shift @ ih) @ _inv(ctx.eye + ih, "1 + Ihat", u)
    return SuperOp(spec.dim, mat)


def kernel_hat_modified_k1(spec: RenewalSpec, u: complex) -> SuperOp:
    """Compact k = 1 kernel

        Khat_1 = L + (1 - (E-1)(Shat - Shat_1)(u-L))^-1 (E-1) khat_1(u-L)

    with khat_1 = fhat_1/ghat (first modified pdf over the base survival).
    """
    ctx = _Ctx(spec)
    ctx.require_reference_form("the compact k = 1 kernel")
    if ctx.seq.k != 1:
        raise ValidationError("compact kernel requires exactly one modified interval")
    first = ctx.seq.modified[0]
    base = ctx.seq.base
    k1 = ctx.fun_l.evaluate(
        lambda v: wtdmod.laplace_pdf(first, v) / wtdmod.laplace_survival(base, v), u
    )
    em1 = ctx.e - ctx.eye
    core = ctx.eye + em1 @ ctx.shat_diff_l(u, first)  # 1 - (E-1)(Shat - Shat_1)
    return SuperOp(spec.dim, spec.L.matrix + _inv(core, "1 - (E-1)(Shat - Shat_1)", u) @ em1 @ k1)


def identity_fs_check(spec: RenewalSpec, u: complex) -> float:
    """Max-entry residual of

        ghat(u-L)(1 - E fhat(u-L))^-1 = (u-L)^-1 (1 - (E-1) Shat(u-L))^-1.
    """
    ctx = _Ctx(spec)
    lhs = ctx.ghat_l(u) @ _inv(ctx.eye - ctx.e @ ctx.fhat_l(u), "1 - E fhat", u)
    res = ctx.fun_l.resolvent(u)
    rhs = res @ _inv(ctx.eye - (ctx.e - ctx.eye) @ ctx.shat_l(u), "1 - (E-1) Shat", u)
    return float(np.max(np.abs(lhs - rhs)))


# --- map families and time-domain inversion -----------------------------------


@dataclass(frozen=True, eq=False)
class LaplaceMapFamily:
    """u -> superoperator matrix, analytic right of the abscissa."""

    evaluator: Callable[[complex], np.ndarray]
    dim: int
    abscissa: float = 0.0

    def __call__(self, u: complex) -> np.ndarray:
        return self.evaluator(u)


def map_family(spec: RenewalSpec, variant: str = "auto") -> LaplaceMapFamily:
    """Evaluator family for one of the map constructions.

    variant: 'semimarkov' (uses spec.side), 'modified' (forward),
    'inverse' (inverse ordering), or 'auto' (spec.ordering picks
    modified/inverse).
    """
    ctx = _Ctx(spec)
    if variant == "auto":
        variant = "modified" if spec.ordering is Ordering.FORWARD else "inverse"
    if variant == "semimarkov":

        def evaluator(u):
            core_inv = _inv(ctx.eye - ctx.e @ ctx.fhat_l(u) @ ctx.j, "1 - E fhat J", u)
            g = ctx.ghat_m(u)
            return g @ core_inv if spec.side is Side.LEFT else core_inv @ g

    elif variant == "modified":
        ctx.require_reference_form("the modified map family")

        def evaluator(u):
            return _map_modified(ctx, u)

    elif variant == "inverse":
        ctx.require_reference_form("the inverse map family")

        def evaluator(u):
            return _map_inverse(ctx, u)

    else:
        raise ValueError(f"unknown map variant {variant!r}")
    return LaplaceMapFamily(evaluator=evaluator, dim=spec.dim)


def invert_laplace(
    family: LaplaceMapFamily,
    t: float,
    node_count: int = 32,
    agreement_tol: float = 1e-7,
) -> SuperOp:
    """Fixed-Talbot inversion of a map family at time t (identity at t = 0)."""
    if t < 0:
        raise ValueError("inversion time must be nonnegative")
    if t == 0:
        return identity_superop(family.dim)
    mat = talbot_checked(family.evaluator, t, node_count, agreement_tol)
    d2 = family.dim * family.dim
    return SuperOp(family.dim, np.asarray(mat, dtype=complex).reshape(d2, d2))


def check_analytic(family: LaplaceMapFamily, points, tol: float = 1e-5, step: float = 1e-6) -> float:
    """Largest Cauchy-Riemann defect of the evaluator over the sample points.

    Compares finite-difference derivatives along the real and imaginary
    axes; for an analytic family the relative mismatch stays below tol.
    """
    worst = 0.0
    for u in points:
        f0 = np.asarray(family(u))
        scale = max(1.0, float(np.max(np.abs(f0))))
        h = step * max(1.0, abs(u))
        d_re = (np.asarray(family(u + h)) - f0) / h
        d_im = (np.asarray(family(u + 1j * h)) - f0) / (1j * h)
        worst = max(worst, float(np.max(np.abs(d_re - d_im))) / scale)
    if worst > tol:
        raise ValidationError(f"map family fails the analyticity check: defect {worst:.3e}")
    return worst
