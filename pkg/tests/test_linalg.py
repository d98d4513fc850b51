from __future__ import annotations

import itertools

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_hermitian, random_state
from trotterscar.linalg import (
    SX,
    SZ,
    NumericalError,
    apply_local,
    basis_state,
    eigendecompose_hermitian,
    exact_evolve,
    kron_embed,
    unitary_log_generator,
)
from trotterscar.models import build_heisenberg


def brute_embed(local, sites, L):
    """Element-by-element construction from bit strings."""
    dim = 1 << L
    out = np.zeros((dim, dim), dtype=complex)
    k = len(sites)
    for row, col in itertools.product(range(dim), repeat=2):
        rb = [(row >> (L - s)) & 1 for s in range(1, L + 1)]
        cb = [(col >> (L - s)) & 1 for s in range(1, L + 1)]
        if any(rb[s - 1] != cb[s - 1] for s in range(1, L + 1) if s not in sites):
            continue
        r = sum(rb[s - 1] << (k - 1 - i) for i, s in enumerate(sites))
        c = sum(cb[s - 1] << (k - 1 - i) for i, s in enumerate(sites))
        out[row, col] = local[r, c]
    return out


def rk4(H, psi, t, h):
    f = lambda v: -1j * (H @ v)  # noqa: E731
    for _ in range(round(t / h)):
        k1 = f(psi)
        k2 = f(psi + h / 2 * k1)
        k3 = f(psi + h / 2 * k2)
        k4 = f(psi + h * k3)
        psi = psi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return psi


def test_embed_trivial_and_bit_order():
    assert np.array_equal(kron_embed(SX, [1], 1), SX)
    assert np.allclose(kron_embed(SZ, [2], 2), np.diag([1, -1, 1, -1]))


@pytest.mark.parametrize("sites", [[1, 2], [2, 3], [1, 3]])
def test_embed_matches_brute_force(sites, rng):
    local = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    assert np.max(np.abs(kron_embed(local, sites, 3) - brute_embed(local, sites, 3))) < 1e-15


def test_embed_xx():
    xx = np.kron(SX, SX)
    assert np.max(np.abs(kron_embed(xx, [1, 2], 3) - np.kron(xx, np.eye(2)))) < 1e-15


@pytest.mark.parametrize("sites", [[0], [4], [2, 1], [1, 1]])
def test_embed_rejects_bad_sites(sites):
    with pytest.raises(ValueError):
        kron_embed(np.eye(1 << len(sites)), sites, 3)


def test_embed_rejects_shape():
    with pytest.raises(ValueError):
        kron_embed(np.eye(2), [1, 2], 3)


@pytest.mark.parametrize("sites", [[2], [1, 3], [2, 3, 4], [4, 1 + 4]])
def test_apply_local_equals_dense(sites, rng):
    L = 5
    k = len(sites)
    gate = rng.standard_normal((1 << k, 1 << k)) + 0j
    psi = random_state(rng, 1 << L)
    assert np.allclose(apply_local(gate, sites, psi, L), kron_embed(gate, sites, L) @ psi, atol=1e-13)


def test_eigendecompose_examples():
    spec = eigendecompose_hermitian(np.diag([3.0, 1.0, 2.0]).astype(complex))
    assert np.allclose(spec.energies, [1, 2, 3])
    assert np.allclose(np.abs(spec.basis), np.eye(3)[:, [1, 2, 0]])
    assert np.allclose(eigendecompose_hermitian(SX).energies, [-1, 1])
    spec = eigendecompose_hermitian(build_heisenberg(2, 0.0).dense)
    assert np.allclose(spec.energies, [-0.75, 0.25, 0.25, 0.25], atol=1e-14)


def test_eigendecompose_rejects_non_hermitian():
    with pytest.raises(ValueError):
        eigendecompose_hermitian(np.array([[0, 1], [0, 0]], dtype=complex))


def test_eigendecompose_deterministic(rng):
    H = random_hermitian(rng, 12)
    a, b = eigendecompose_hermitian(H), eigendecompose_hermitian(H)
    assert np.array_equal(a.energies, b.energies) and np.array_equal(a.basis, b.basis)


@settings(max_examples=25, deadline=None)
@given(dim=st.integers(1, 16), seed=st.integers(0, 2**32 - 1))
def test_reconstruction_residual(dim, seed):
    H = random_hermitian(np.random.default_rng(seed), dim)
    spec = eigendecompose_hermitian(H)
    rebuilt = (spec.basis * spec.energies) @ spec.basis.conj().T
    assert np.linalg.norm(rebuilt - H, 2) < 1e-9 * max(1.0, np.linalg.norm(H, 2))
    assert np.all(np.diff(spec.energies) >= 0)


def test_exact_evolve_basics(rng):
    ham = build_heisenberg(3, 0.5)
    spec = eigendecompose_hermitian(ham.dense)
    psi = random_state(rng, 8)
    assert np.allclose(exact_evolve(spec, psi, 0.0), psi)
    eig = spec.basis[:, 2]
    assert abs(abs(np.vdot(eig, exact_evolve(spec, eig, 3.3))) - 1) < 1e-12
    assert abs(np.linalg.norm(exact_evolve(spec, psi, 7.0)) - 1) < 1e-12


def test_exact_evolve_matches_rk4(rng):
    H = build_heisenberg(3, 0.5).dense
    psi = random_state(rng, 8)
    got = exact_evolve(eigendecompose_hermitian(H), psi, 1.7)
    assert np.max(np.abs(got - rk4(H, psi, 1.7, 1e-4))) < 1e-6


def test_group_property(rng):
    spec = eigendecompose_hermitian(random_hermitian(rng, 16))
    psi = random_state(rng, 16)
    twice = exact_evolve(spec, exact_evolve(spec, psi, 0.4), 1.1)
    assert np.max(np.abs(twice - exact_evolve(spec, psi, 1.5))) < 1e-10


def test_log_generator_examples():
    assert np.allclose(unitary_log_generator(np.eye(4), 0.1), 0)
    U = scipy.linalg.expm(-1j * 0.3 * SZ)
    assert np.max(np.abs(unitary_log_generator(U, 0.3) - SZ)) < 1e-10


def test_log_generator_branch_cut():
    U = np.diag([1.0, -1.0]).astype(complex)
    with pytest.raises(NumericalError, match="reduce dt"):
        unitary_log_generator(U, 1.0)


def test_log_generator_rejects_non_unitary():
    with pytest.raises(ValueError):
        unitary_log_generator(2 * np.eye(2), 1.0)


@settings(max_examples=25, deadline=None)
@given(dim=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
def test_log_inverts_exponential(dim, seed):
    H = random_hermitian(np.random.default_rng(seed), dim)
    dt = 0.9 * np.pi / max(np.max(np.abs(np.linalg.eigvalsh(H))), 1e-3)
    U = scipy.linalg.expm(-1j * dt * H)
    assert np.max(np.abs(unitary_log_generator(U, dt) - H)) < 1e-9 * max(1.0, np.abs(H).max())


def test_basis_state():
    assert basis_state("10")[2] == 1
    with pytest.raises(ValueError):
        basis_state("12")
