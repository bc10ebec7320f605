import numpy as np
import pytest

from qrenewal import cli, superop as so, wtd as wt
from qrenewal.laplace import Ordering, RenewalSpec

PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def random_kraus(rng, d=2, n_ops=3):
    """Random channel Kraus set from a Haar-ish random isometry."""
    g = rng.standard_normal((n_ops * d, d)) + 1j * rng.standard_normal((n_ops * d, d))
    q, _ = np.linalg.qr(g)
    return [q[i * d : (i + 1) * d, :] for i in range(n_ops)]


def random_channel(rng, d=2, n_ops=3):
    return so.superop_from_kraus(random_kraus(rng, d, n_ops))


def random_lindblad(rng, d=2, n_jumps=2):
    h = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    h = (h + h.conj().T) / 2
    jumps = []
    for _ in range(n_jumps):
        a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        a /= np.linalg.norm(a)
        jumps.append((a, float(rng.uniform(0.2, 0.8))))
    return so.superop_from_lindblad(so.LindbladGenerator(hamiltonian=h, jumps=tuple(jumps)))


def random_wtd(rng):
    kind = rng.integers(0, 3)
    if kind == 0:
        return wt.WaitingTime.exponential(float(rng.uniform(0.5, 3.0)))
    if kind == 1:
        return wt.WaitingTime.erlang(int(rng.integers(2, 4)), float(rng.uniform(0.5, 3.0)))
    return wt.WaitingTime.hypoexponential(sorted(rng.uniform(0.5, 4.0, size=2)))


def scenario_spec(name: str) -> RenewalSpec:
    return cli.parse_scenario(cli.bundled_scenario_path(name)).to_renewal_spec()


@pytest.fixture(scope="session")
def fig3a_spec():
    return scenario_spec("fig3a")


@pytest.fixture(scope="session")
def fig4a_spec():
    return scenario_spec("fig4a")


@pytest.fixture(scope="session")
def fig4b_spec():
    return scenario_spec("fig4b")


@pytest.fixture
def excited():
    return so.DensityMatrix.from_bloch([0.0, 0.0, 1.0])
