"""Finite-dimensional operator and superoperator algebra.

States, channels and semigroup generators are represented in a fixed
Hermitian orthonormal operator basis {sigma_0 = 1/sqrt(d), sigma_1, ...,
sigma_{d^2-1}} (normalized identity plus generalized Gell-Mann matrices;
for d = 2 the normalized Pauli basis ordered x, y, z).  A linear map A on
operators becomes the real-friendly d^2 x d^2 matrix

    A_ij = Tr(sigma_i A[sigma_j]),

which for d = 2 coincides with the conventional Pauli transfer matrix
(1/2) Tr(sigma_i A[sigma_j]) in unnormalized Paulis.  Map composition is
matrix multiplication, the top row of a trace-preserving map is
(1, 0, ..., 0), and complete positivity is equivalent to positive
semidefiniteness of the Choi matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    IllConditionedEigenbasis,
    KrausNotTracePreserving,
    NotTracePreservingGenerator,
)

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12
EIG_TOL = 1e-12
KRAUS_TOL = 1e-10
CPT_TOL = 1e-9
EIGENBASIS_COND_LIMIT = 1e8


@lru_cache(maxsize=32)
def hermitian_basis(d: int) -> np.ndarray:
    """Orthonormal Hermitian operator basis for d-dimensional systems.

    Returns an array of shape (d^2, d, d).  Element 0 is 1/sqrt(d); the
    traceless part is ordered as symmetric pair matrices, antisymmetric
    pair matrices, then diagonal matrices, which for d = 2 yields
    (sigma_x, sigma_y, sigma_z)/sqrt(2).
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    mats = [np.eye(d, dtype=complex) / np.sqrt(d)]
    sym, antisym = [], []
    for j in range(d):
        for k in range(j + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = m[k, j] = 1.0 / np.sqrt(2.0)
            sym.append(m)
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = -1j / np.sqrt(2.0)
            m[k, j] = 1j / np.sqrt(2.0)
            antisym.append(m)
    diag = []
    for l in range(1, d):
        m = np.zeros((d, d), dtype=complex)
        norm = 1.0 / np.sqrt(l * (l + 1))
        for j in range(l):
            m[j, j] = norm
        m[l, l] = -l * norm
        diag.append(m)
    basis = np.array(mats + sym + antisym + diag)
    basis.flags.writeable = False
    return basis


def operator_coords(x: np.ndarray) -> np.ndarray:
    """Coordinates of a d x d operator in the Hermitian basis."""
    x = np.asarray(x, dtype=complex)
    d = x.shape[0]
    return np.einsum("kab,ba->k", hermitian_basis(d), x)


def coords_to_operator(coords: np.ndarray) -> np.ndarray:
    """Inverse of operator_coords."""
    coords = np.asarray(coords)
    d = int(round(np.sqrt(coords.shape[0])))
    return np.tensordot(coords, hermitian_basis(d), axes=(0, 0))


def _check_square(x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise DimensionMismatch(f"{name} must be a square matrix, got shape {x.shape}")
    return x


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """d x d Hermitian unit-trace positive-semidefinite state."""

    dim: int
    entries: np.ndarray

    def __post_init__(self):
        entries = _check_square(self.entries, "entries")
        if entries.shape[0] != self.dim:
            raise DimensionMismatch(f"entries shape {entries.shape} does not match dim {self.dim}")
        if np.max(np.abs(entries - entries.conj().T)) > HERMITICITY_TOL:
            raise ValueError("density matrix is not Hermitian within 1e-12")
        if abs(np.trace(entries) - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace {np.trace(entries)} != 1 within 1e-12")
        if np.min(np.linalg.eigvalsh((entries + entries.conj().T) / 2)) < -EIG_TOL:
            raise ValueError("density matrix has an eigenvalue below -1e-12")
        entries = entries.copy()
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_bloch(cls, bloch: Sequence[float]) -> "DensityMatrix":
        """Qubit state (1 + r . sigma)/2 from a Bloch vector r."""
        r = np.asarray(bloch, dtype=float)
        if r.shape != (3,):
            raise DimensionMismatch("Bloch vector must have 3 components")
        if np.linalg.norm(r) > 1.0 + 1e-12:
            raise ValueError("Bloch vector lies outside the unit ball")
        basis = hermitian_basis(2)
        rho = np.eye(2, dtype=complex) / 2 + np.tensordot(r / np.sqrt(2.0), basis[1:], axes=(0, 0))
        return cls(2, rho)

    def coords(self) -> np.ndarray:
        return operator_coords(self.entries)

    def excited_population(self) -> float:
        """Population of the Bloch (0, 0, 1) basis state (qubit only)."""
        if self.dim != 2:
            raise DimensionMismatch("excited_population is defined for qubits")
        return float(np.real(self.entries[0, 0]))


@dataclass(frozen=True, eq=False)
class SuperOp:
    """Linear map on operators, stored as its matrix in the Hermitian basis."""

    dim: int
    matrix: np.ndarray

    def __post_init__(self):
        m = _check_square(self.matrix, "matrix")
        if m.shape[0] != self.dim * self.dim:
            raise DimensionMismatch(
                f"matrix shape {m.shape} incompatible with Hilbert-space dim {self.dim}"
            )
        m = np.ascontiguousarray(m, dtype=complex)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class LindbladGenerator:
    """Hamiltonian plus weighted jump operators, generating a CPT semigroup."""

    hamiltonian: np.ndarray
    jumps: tuple = ()

    def __post_init__(self):
        h = _check_square(self.hamiltonian, "hamiltonian")
        if np.max(np.abs(h - h.conj().T)) > 1e-12:
            raise ValueError("Hamiltonian must be Hermitian")
        jumps = []
        for op, rate in self.jumps:
            op = _check_square(op, "jump operator")
            if op.shape != h.shape:
                raise DimensionMismatch("jump operator dimension differs from Hamiltonian")
            if rate < 0:
                raise ValueError("jump rates must be nonnegative")
            op = op.copy()
            op.flags.writeable = False
            jumps.append((op, float(rate)))
        h = h.copy()
        h.flags.writeable = False
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "jumps", tuple(jumps))

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def action(self, x: np.ndarray) -> np.ndarray:
        """L[x] = -i[H, x] + sum_k rate_k (A_k x A_k^dag - {A_k^dag A_k, x}/2)."""
        h = self.hamiltonian
        out = -1j * (h @ x - x @ h)
        for op, rate in self.jumps:
            anti = op.conj().T @ op
            out += rate * (op @ x @ op.conj().T - 0.5 * (anti @ x + x @ anti))
        return out


@dataclass(frozen=True)
class CptReport:
    is_trace_preserving: bool
    trace_defect: float
    min_choi_eigenvalue: float
    is_cpt: bool
    tol: float


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Eigendecomposition gen = V diag(eigenvalues) V^-1 with a condition estimate."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    eigenvectors_inv: np.ndarray
    condition: float


def superop_from_action(dim: int, action: Callable[[np.ndarray], np.ndarray]) -> SuperOp:
    """Matrix representation of an arbitrary linear map given by its action."""
    basis = hermitian_basis(dim)
    images = np.array([action(sigma) for sigma in basis])
    matrix = np.einsum("iab,jba->ij", basis, images)
    return SuperOp(dim, matrix)


def identity_superop(dim: int) -> SuperOp:
    return SuperOp(dim, np.eye(dim * dim, dtype=complex))


def superop_from_kraus(kraus: Sequence[np.ndarray], atol: float = KRAUS_TOL) -> SuperOp:
    """Channel rho -> sum_k K rho K^dag from Kraus operators.

    Raises KrausNotTracePreserving unless sum_k K^dag K = 1 within atol.
    """
    if len(kraus) == 0:
        raise ValueError("need at least one Kraus operator")
    ops = [_check_square(k, "Kraus operator") for k in kraus]
    d = ops[0].shape[0]
    if any(op.shape[0] != d for op in ops):
        raise DimensionMismatch("Kraus operators must share one dimension")
    total = sum(op.conj().T @ op for op in ops)
    defect = np.max(np.abs(total - np.eye(d)))
    if defect > atol:
        raise KrausNotTracePreserving(f"sum K^dag K deviates from identity by {defect:.3e}")

    def act(x):
        return sum(op @ x @ op.conj().T for op in ops)

    return superop_from_action(d, act)


def superop_from_lindblad(gen: LindbladGenerator, atol: float = 1e-12) -> SuperOp:
    """Matrix representation of a Lindblad generator; trace row must vanish."""
    rep = superop_from_action(gen.dim, gen.action)
    defect = np.max(np.abs(rep.matrix[0]))
    if defect > max(atol, atol * np.max(np.abs(rep.matrix))):
        raise NotTracePreservingGenerator(f"dual generator does not annihilate identity: {defect:.3e}")
    return rep


def apply(mp: SuperOp, state) -> np.ndarray:
    """Apply a map to a state (DensityMatrix or d x d matrix); returns a matrix."""
    if isinstance(state, DensityMatrix):
        x = state.entries
    else:
        x = _check_square(state, "state")
    if x.shape[0] != mp.dim:
        raise DimensionMismatch(f"map dim {mp.dim} does not match state dim {x.shape[0]}")
    return coords_to_operator(mp.matrix @ operator_coords(x))


def compose(a: SuperOp, b: SuperOp) -> SuperOp:
    """(a o b)[rho] = a[b[rho]]; matrix product of representations."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"cannot compose maps of dims {a.dim} and {b.dim}")
    return SuperOp(a.dim, a.matrix @ b.matrix)


def _expm(matrix: np.ndarray) -> np.ndarray:
    # Spectral route when the eigenbasis is well conditioned, Pade otherwise.
    if np.max(np.abs(matrix - np.diag(np.diag(matrix)))) == 0.0:
        return np.diag(np.exp(np.diag(matrix)))
    try:
        lam, v = np.linalg.eig(matrix)
        cond = np.linalg.cond(v)
        if np.isfinite(cond) and cond < 1e6:
            return (v * np.exp(lam)) @ np.linalg.inv(v)
    except np.linalg.LinAlgError:
        pass
    return scipy.linalg.expm(matrix)


def semigroup(gen: SuperOp, t: float) -> SuperOp:
    """exp(gen * t); semigroup(gen, 0) is the identity."""
    if t < 0:
        raise ValueError("semigroup time must be nonnegative")
    if t == 0:
        return identity_superop(gen.dim)
    return SuperOp(gen.dim, _expm(gen.matrix * t))


def choi(mp: SuperOp) -> np.ndarray:
    """Choi matrix (1 ⊗ A)[|Omega><Omega|] with unnormalized |Omega> = sum_i |ii>.

    The map is completely positive iff the result is positive semidefinite.
    """
    d = mp.dim
    basis = hermitian_basis(d)
    # coords of E_ab in the basis: x_k = Tr(sigma_k E_ab) = sigma_k[b, a]
    in_coords = basis.transpose(0, 2, 1)  # (k, a, b)
    out_coords = np.einsum("kl,lab->kab", mp.matrix, in_coords)
    images = np.einsum("kab,kij->abij", out_coords, basis)  # A[E_ab][i, j]
    return images.transpose(0, 2, 1, 3).reshape(d * d, d * d)


def certify_cpt(mp: SuperOp, tol: float = CPT_TOL) -> CptReport:
    """Trace-row and Choi-spectrum certification of a map."""
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    d = mp.dim
    expected = np.zeros(d * d)
    expected[0] = 1.0
    # max_j |Tr(A[sigma_j]) - Tr(sigma_j)| = sqrt(d) * max |row_0 - e_0|
    trace_defect = float(np.sqrt(d) * np.max(np.abs(mp.matrix[0] - expected)))
    c = choi(mp)
    min_eig = float(np.min(np.linalg.eigvalsh((c + c.conj().T) / 2)))
    tp = trace_defect <= tol
    return CptReport(
        is_trace_preserving=tp,
        trace_defect=trace_defect,
        min_choi_eigenvalue=min_eig,
        is_cpt=bool(tp and min_eig >= -tol),
        tol=tol,
    )


def spectral_decompose(gen: SuperOp, cond_limit: float = EIGENBASIS_COND_LIMIT) -> SpectralData:
    """Diagonalize a superoperator, rejecting ill-conditioned eigenbases.

    Raises IllConditionedEigenbasis when the eigenvector condition number
    exceeds cond_limit or the reconstruction residual is above
    1e-8 * max|gen|; callers must then take an analytic path or refuse.
    """
    m = gen.matrix
    scale = max(np.max(np.abs(m)), 1.0)
    lam, v = np.linalg.eig(m)
    cond = float(np.linalg.cond(v))
    if not np.isfinite(cond) or cond > cond_limit:
        raise IllConditionedEigenbasis(f"eigenvector condition number {cond:.3e} exceeds {cond_limit:.1e}")
    vinv = np.linalg.inv(v)
    residual = np.max(np.abs((v * lam) @ vinv - m))
    if residual > 1e-8 * scale:
        raise IllConditionedEigenbasis(f"spectral reconstruction residual {residual:.3e} too large")
    return SpectralData(eigenvalues=lam, eigenvectors=v, eigenvectors_inv=vinv, condition=cond)


# --- Named qubit channels and generators used by the scenario layer ---------


def amplitude_damping_kraus(gamma: float) -> list:
    """Two Kraus operators draining the excited state (Bloch (0, 0, 1)).

    Written in the basis whose first vector is the excited state, so the
    Bloch-vector action is r_3 -> (1 - gamma) r_3 - gamma (decay toward
    the ground state at Bloch (0, 0, -1)).
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("amplitude damping parameter must lie in [0, 1]")
    k0 = np.array([[np.sqrt(1.0 - gamma), 0.0], [0.0, 1.0]], dtype=complex)
    k1 = np.array([[0.0, 0.0], [np.sqrt(gamma), 0.0]], dtype=complex)
    return [k0, k1]


def amplitude_damping(gamma: float) -> SuperOp:
    return superop_from_kraus(amplitude_damping_kraus(gamma))


def pauli_x_channel() -> SuperOp:
    return superop_from_kraus([np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)])


def dephasing_channel(p: float = 1.0) -> SuperOp:
    """Damps x, y Bloch coordinates by 1 - p; p = 1 removes them entirely."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("dephasing parameter must lie in [0, 1]")
    sz = np.diag([1.0, -1.0]).astype(complex)
    return superop_from_kraus([np.sqrt(1 - p / 2) * np.eye(2, dtype=complex), np.sqrt(p / 2) * sz])


def pauli_decay_generator(lambda1: float, lambda2: float, lambda3: float) -> SuperOp:
    """Qubit generator with exp(L t)[sigma_i] = exp(-lambda_i t) sigma_i.

    Realized as a Lindblad generator with sigma_x, sigma_y, sigma_z jumps at
    rates (lambda_j + lambda_k - lambda_i)/4, which must be nonnegative for
    the semigroup to be completely positive.
    """
    lams = np.array([lambda1, lambda2, lambda3], dtype=float)
    rates = np.array(
        [
            (-lams[0] + lams[1] + lams[2]) / 4,
            (lams[0] - lams[1] + lams[2]) / 4,
            (lams[0] + lams[1] - lams[2]) / 4,
        ]
    )
    if np.any(rates < -1e-14):
        raise ValueError(f"decay rates {lams} violate complete positivity of the semigroup")
    rates = np.clip(rates, 0.0, None)
    paulis = np.sqrt(2.0) * hermitian_basis(2)[1:]
    gen = LindbladGenerator(
        hamiltonian=np.zeros((2, 2), dtype=complex),
        jumps=tuple((paulis[i], rates[i]) for i in range(3)),
    )
    return superop_from_lindblad(gen)
