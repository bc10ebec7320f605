"""Waiting time distributions and the classical semi-Markov oracle.

The distribution family is phase-type with a sequential stage structure
(exponential, Erlang, hypoexponential), so every Laplace transform is an
exact rational function:

    fhat(u) = prod_i mu_i / (mu_i + u) = P(0) / P(u),      P(u) = prod_i (u + mu_i)
    ghat(u) = (1 - fhat(u)) / u = Q(u) / P(u),             Q(u) = (P(u) - P(0)) / u
    khat(u) = fhat(u) / ghat(u) = P(0) / Q(u)
    Shat(u) = fhat(u) / (1 - fhat(u)) = P(0) / (u Q(u))

Q is a polynomial (the division by u is exact), which makes ghat and khat
free of the removable singularity at u = 0; ghat(0) is the mean waiting
time automatically.  Densities and survival probabilities in the time
domain come from the phase chain alpha exp(T t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import scipy.linalg

from .errors import (
    NegativeTime,
    PoleAtU,
    RenewalPole,
    SingularResolvent,
    ZeroSurvival,
)


@dataclass(frozen=True)
class WaitingTime:
    """Phase-type waiting time given by sequential stage rates (units 1/time)."""

    rates: Tuple[float, ...]

    def __post_init__(self):
        if len(self.rates) == 0:
            raise ValueError("waiting time needs at least one stage")
        if any(r <= 0 for r in self.rates):
            raise ValueError(f"stage rates must be positive, got {self.rates}")
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))

    @classmethod
    def exponential(cls, rate: float) -> "WaitingTime":
        return cls((rate,))

    @classmethod
    def erlang(cls, shape: int, rate: float) -> "WaitingTime":
        if shape < 1:
            raise ValueError("Erlang shape must be >= 1")
        return cls((rate,) * shape)

    @classmethod
    def hypoexponential(cls, rates: Sequence[float]) -> "WaitingTime":
        return cls(tuple(rates))

    @property
    def kind(self) -> str:
        if len(self.rates) == 1:
            return "exponential"
        if len(set(self.rates)) == 1:
            return "erlang"
        return "hypoexponential"

    @property
    def n_stages(self) -> int:
        return len(self.rates)


def mean(w: WaitingTime) -> float:
    return float(sum(1.0 / r for r in w.rates))


def phase_representation(w: WaitingTime) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(alpha, T, tau) with pdf f(t) = alpha exp(T t) tau and survival alpha exp(T t) 1."""
    m = w.n_stages
    rates = np.asarray(w.rates)
    alpha = np.zeros(m)
    alpha[0] = 1.0
    t_mat = np.diag(-rates)
    for i in range(m - 1):
        t_mat[i, i + 1] = rates[i]
    tau = np.zeros(m)
    tau[-1] = rates[-1]
    return alpha, t_mat, tau


def _denominator_coeffs(w: WaitingTime) -> np.ndarray:
    # monic coefficients of P(u) = prod (u + mu_i), highest power first
    return np.atleast_1d(np.poly(-np.asarray(w.rates)))


def _q_coeffs(w: WaitingTime) -> np.ndarray:
    # Q(u) = (P(u) - P(0)) / u drops the constant coefficient exactly
    return _denominator_coeffs(w)[:-1]


def _rate_product(w: WaitingTime) -> float:
    return float(np.prod(w.rates))


def pdf(w: WaitingTime, t: float) -> float:
    """Probability density at t >= 0."""
    if t < 0:
        raise NegativeTime(f"pdf evaluated at t = {t}")
    rates = np.asarray(w.rates)
    m = w.n_stages
    if m == 1:
        return float(rates[0] * np.exp(-rates[0] * t))
    if w.kind == "erlang":
        mu = rates[0]
        return float(mu**m * t ** (m - 1) * np.exp(-mu * t) / math.factorial(m - 1))
    alpha, t_mat, tau = phase_representation(w)
    return float(alpha @ scipy.linalg.expm(t_mat * t) @ tau)


def survival(w: WaitingTime, t: float) -> float:
    """g(t) = 1 - integral of the pdf up to t."""
    if t < 0:
        raise NegativeTime(f"survival evaluated at t = {t}")
    rates = np.asarray(w.rates)
    m = w.n_stages
    if m == 1:
        return float(np.exp(-rates[0] * t))
    if w.kind == "erlang":
        mu = rates[0]
        terms = [(mu * t) ** j / math.factorial(j) for j in range(m)]
        return float(np.exp(-mu * t) * np.sum(terms))
    alpha, t_mat, _ = phase_representation(w)
    return float(np.real(np.sum(alpha @ scipy.linalg.expm(t_mat * t))))


def _distinct_rate_weights(rates: np.ndarray) -> np.ndarray:
    # Lagrange-type weights W_i = prod_{j != i} mu_j / (mu_j - mu_i)
    m = len(rates)
    weights = np.empty(m)
    for i in range(m):
        others = np.delete(rates, i)
        weights[i] = np.prod(others / (others - rates[i]))
    return weights


def pdf_many(w: WaitingTime, ts: np.ndarray) -> np.ndarray:
    """Vectorized pdf over an array of nonnegative times."""
    ts = np.asarray(ts, dtype=float)
    if np.any(ts < 0):
        raise NegativeTime("pdf evaluated at negative times")
    rates = np.asarray(w.rates)
    m = w.n_stages
    if m == 1:
        return rates[0] * np.exp(-rates[0] * ts)
    if w.kind == "erlang":
        mu = rates[0]
        return mu**m * ts ** (m - 1) * np.exp(-mu * ts) / math.factorial(m - 1)
    if len(set(w.rates)) == m:
        weights = _distinct_rate_weights(rates)
        return np.einsum("i,i,ki->k", weights, rates, np.exp(-np.outer(ts, rates)))
    return np.array([pdf(w, t) for t in ts])


def survival_many(w: WaitingTime, ts: np.ndarray) -> np.ndarray:
    """Vectorized survival probability over an array of nonnegative times."""
    ts = np.asarray(ts, dtype=float)
    if np.any(ts < 0):
        raise NegativeTime("survival evaluated at negative times")
    rates = np.asarray(w.rates)
    m = w.n_stages
    if m == 1:
        return np.exp(-rates[0] * ts)
    if w.kind == "erlang":
        mu = rates[0]
        powers = np.array([(mu * ts) ** j / math.factorial(j) for j in range(m)])
        return np.exp(-mu * ts) * powers.sum(axis=0)
    if len(set(w.rates)) == m:
        weights = _distinct_rate_weights(rates)
        return np.exp(-np.outer(ts, rates)) @ weights
    return np.array([survival(w, t) for t in ts])


def sprinkling_many(w: WaitingTime, ts: np.ndarray) -> np.ndarray:
    """Vectorized renewal density S(t) = c exp(A t) b from the rational realization."""
    ts = np.asarray(ts, dtype=float)
    if np.any(ts < 0):
        raise NegativeTime("sprinkling density evaluated at negative times")
    a_mat, b, c = sprinkling_realization(w)
    lam, v = np.linalg.eig(a_mat)
    cond = np.linalg.cond(v)
    if np.isfinite(cond) and cond < 1e10:
        left = c @ v
        right = np.linalg.solve(v, b.astype(complex))
        return np.real(np.exp(np.outer(ts, lam)) @ (left * right))
    return np.array([float(c @ scipy.linalg.expm(a_mat * t) @ b) for t in ts])


def _check_poles(w: WaitingTime, u) -> None:
    u = np.asarray(u)
    scale = max(w.rates)
    shifted = u[..., None] + np.asarray(w.rates)
    if np.any(np.abs(shifted) < 1e-13 * scale):
        raise PoleAtU(f"u = {u} lies on a pole of the Laplace transform (rates {w.rates})")


def laplace_pdf(w: WaitingTime, u):
    """fhat(u) = prod_i mu_i / (mu_i + u); accepts complex scalars or arrays."""
    _check_poles(w, u)
    u = np.asarray(u, dtype=complex)
    out = np.ones_like(u)
    for r in w.rates:
        out = out * (r / (r + u))
    return out if out.ndim else complex(out)


def laplace_survival(w: WaitingTime, u):
    """ghat(u) = (1 - fhat(u))/u as the exact rational Q(u)/P(u); ghat(0) = mean."""
    _check_poles(w, u)
    u = np.asarray(u, dtype=complex)
    num = np.polyval(_q_coeffs(w), u)
    den = np.ones_like(u)
    for r in w.rates:
        den = den * (r + u)
    out = num / den
    return out if out.ndim else complex(out)


def classical_kernel_hat(w: WaitingTime, u):
    """khat(u) = fhat(u)/ghat(u) = P(0)/Q(u); constant mu for the exponential."""
    u = np.asarray(u, dtype=complex)
    q = np.polyval(_q_coeffs(w), u)
    if np.any(np.abs(q) < 1e-300):
        raise ZeroSurvival(f"survival transform vanishes at u = {u}")
    out = _rate_product(w) / q
    return out if out.ndim else complex(out)


def sprinkling_hat(w: WaitingTime, u):
    """Shat(u) = fhat/(1 - fhat) = P(0)/(u Q(u)); pole of the renewal density at u = 0."""
    u = np.asarray(u, dtype=complex)
    den = u * np.polyval(_q_coeffs(w), u)
    if np.any(np.abs(den) < 1e-13 * max(w.rates) ** w.n_stages):
        raise RenewalPole(f"sprinkling transform has a pole at u = {u}")
    out = _rate_product(w) / den
    return out if out.ndim else complex(out)


def sprinkling_hat_modified(first: WaitingTime, base: WaitingTime, u):
    """Shat_1(u) = fhat_1(u)/(1 - fhat(u)) for a modified first interval."""
    u = np.asarray(u, dtype=complex)
    den = u * np.polyval(_q_coeffs(base), u)
    if np.any(np.abs(den) < 1e-13 * max(base.rates) ** base.n_stages):
        raise RenewalPole(f"modified sprinkling transform has a pole at u = {u}")
    out = laplace_pdf(first, u) * np.polyval(_denominator_coeffs(base), u) / den
    return out if out.ndim else complex(out)


def sprinkling_realization(w: WaitingTime) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """State-space (A, b, c) with S(t) = c exp(A t) b, from Shat = P(0)/(u Q(u)).

    Controllable canonical form of the strictly proper rational transform;
    used for exact time-domain evaluation of sprinkling-weighted series.
    """
    q = _q_coeffs(w)
    den = np.polymul(q, [1.0, 0.0])  # u * Q(u), monic, highest first
    m = len(den) - 1
    a_mat = np.zeros((m, m))
    a_mat[np.arange(m - 1), np.arange(1, m)] = 1.0
    a_mat[-1, :] = -den[1:][::-1]
    b = np.zeros(m)
    b[-1] = 1.0
    c = np.zeros(m)
    c[0] = _rate_product(w)
    return a_mat, b, c


def sample(w: WaitingTime, rng: np.random.Generator) -> float:
    """One draw: sum of independent exponential stages."""
    return float(sum(rng.exponential(1.0 / r) for r in w.rates))


def sample_many(w: WaitingTime, rng: np.random.Generator, size: int) -> np.ndarray:
    draws = rng.exponential(1.0, size=(size, w.n_stages)) / np.asarray(w.rates)
    return draws.sum(axis=1)


@dataclass(frozen=True)
class ModifiedWtdSequence:
    """First k intervals follow `modified`, all later ones the base WTD."""

    base: WaitingTime
    modified: Tuple[WaitingTime, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "modified", tuple(self.modified))

    @property
    def k(self) -> int:
        return len(self.modified)

    def interval_wtd(self, n: int) -> WaitingTime:
        """Distribution of the n-th interval (1-based)."""
        if n < 1:
            raise ValueError("interval index is 1-based")
        if n <= self.k:
            return self.modified[n - 1]
        return self.base

    def is_vacuous(self) -> bool:
        return all(w == self.base for w in self.modified)


def _stacked_chain(seq: ModifiedWtdSequence, n_max: int) -> Tuple[np.ndarray, list]:
    """Generator of the stage chain tracking the jump count up to n_max.

    Column convention dp/dt = Q p.  Block n holds the stages of interval
    n + 1; completing block n_max feeds one absorbing overflow state.
    """
    blocks = [seq.interval_wtd(n + 1).rates for n in range(n_max + 1)]
    offsets = np.cumsum([0] + [len(b) for b in blocks])
    size = offsets[-1] + 1  # + absorbing overflow state
    q = np.zeros((size, size))
    for n, rates in enumerate(blocks):
        base = offsets[n]
        for s, r in enumerate(rates):
            idx = base + s
            q[idx, idx] -= r
            if s + 1 < len(rates):
                nxt = idx + 1
            elif n < n_max:
                nxt = offsets[n + 1]
            else:
                nxt = size - 1
            q[nxt, idx] += r
    block_slices = [slice(offsets[n], offsets[n + 1]) for n in range(n_max + 1)]
    return q, block_slices


def jump_count_probs(seq: ModifiedWtdSequence, t: float, n_max: int) -> np.ndarray:
    """p(n, t) for n = 0..n_max: probability of exactly n jumps up to time t.

    Exact stage-occupancy computation; p(0, t) is the survival of the first
    WTD and sum_n p(n, t) -> 1 as n_max grows.
    """
    if t < 0:
        raise NegativeTime(f"jump counts requested at t = {t}")
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    q, block_slices = _stacked_chain(seq, n_max)
    p0 = np.zeros(q.shape[0])
    p0[0] = 1.0
    p = scipy.linalg.expm(q * t) @ p0
    return np.array([p[s].sum() for s in block_slices])


def jump_count_probs_adaptive(
    seq: ModifiedWtdSequence, t: float, tail: float = 1e-8, n_start: int = 8, n_limit: int = 4096
) -> np.ndarray:
    """Grow n_max until the tail probability 1 - sum p(n, t) drops below `tail`."""
    n_max = n_start
    while True:
        probs = jump_count_probs(seq, t, n_max)
        if 1.0 - probs.sum() < tail:
            return probs
        if n_max >= n_limit:
            raise ValueError(f"jump-count tail still {1.0 - probs.sum():.3e} at n_max = {n_limit}")
        n_max *= 2


@dataclass(frozen=True)
class SemiMarkovSpec:
    """Classical semi-Markov process: column-stochastic jump matrix + per-site WTDs."""

    stochastic_matrix: np.ndarray
    wtds: Tuple[WaitingTime, ...]

    def __post_init__(self):
        pi = np.asarray(self.stochastic_matrix, dtype=float)
        n = len(self.wtds)
        if pi.shape != (n, n):
            raise ValueError(f"stochastic matrix shape {pi.shape} does not match {n} sites")
        if np.any(pi < 0):
            raise ValueError("stochastic matrix entries must be nonnegative")
        if np.max(np.abs(pi.sum(axis=0) - 1.0)) > 1e-12:
            raise ValueError("stochastic matrix columns must sum to 1 within 1e-12")
        pi = pi.copy()
        pi.flags.writeable = False
        object.__setattr__(self, "stochastic_matrix", pi)
        object.__setattr__(self, "wtds", tuple(self.wtds))

    @property
    def sites(self) -> int:
        return len(self.wtds)


def semi_markov_T_hat(spec: SemiMarkovSpec, u) -> np.ndarray:
    """Laplace-domain solution That(u) = ghat(u) (1 - pi fhat(u))^-1, site-diagonal f, g.

    The survival factor of the *arrival* site multiplies from the left;
    column-stochasticity of pi then gives sum_n That_nm = 1/u exactly
    (probability conservation), and exponential WTDs reduce to the Markov
    resolvent (u - (pi - 1) diag(mu))^-1.
    """
    fh = np.array([laplace_pdf(w, u) for w in spec.wtds])
    gh = np.array([laplace_survival(w, u) for w in spec.wtds])
    core = np.eye(spec.sites, dtype=complex) - spec.stochastic_matrix * fh[None, :]
    try:
        return np.diag(gh) @ np.linalg.inv(core)
    except np.linalg.LinAlgError as exc:
        raise SingularResolvent(f"1 - pi fhat singular at u = {u}") from exc


def semi_markov_T(spec: SemiMarkovSpec, t: float, node_count: int = 32) -> np.ndarray:
    """Transition probabilities T(t) by numerical inversion; columns sum to 1."""
    from .inversion import talbot

    if t < 0:
        raise NegativeTime(f"transition matrix requested at t = {t}")
    if t == 0:
        return np.eye(spec.sites)
    return np.real(talbot(lambda u: semi_markov_T_hat(spec, u), t, node_count))
