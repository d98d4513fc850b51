"""Dense complex linear algebra and state-vector helpers.

Bit ordering is fixed project-wide: site 1 is the most significant bit of the
basis index, so ``|s_1 s_2 ... s_L>`` has index ``int("s_1 s_2 ... s_L", 2)``.
Single-qubit ``|0>`` is the ``sigma^z = +1`` state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

SX = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SY = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SZ = np.array([[1, 0], [0, -1]], dtype=np.complex128)
I2 = np.eye(2, dtype=np.complex128)

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
NORM_TOL = 1e-10
BRANCH_CUT_TOL = 1e-8


class NumericalError(RuntimeError):
    """A numerical routine failed or was asked to work outside its domain."""


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues (ascending) and the unitary whose columns are eigenvectors."""

    energies: np.ndarray
    basis: np.ndarray

    @property
    def dim(self) -> int:
        return self.energies.shape[0]

    def coefficients(self, psi: np.ndarray) -> np.ndarray:
        """Amplitudes ``c_n = <n|psi>``."""
        _check_dim(psi, self.dim)
        return self.basis.conj().T @ psi

    def to_eigenbasis(self, op: np.ndarray) -> np.ndarray:
        return self.basis.conj().T @ op @ self.basis

    def propagator(self, t: float) -> np.ndarray:
        return (self.basis * np.exp(-1j * self.energies * t)) @ self.basis.conj().T

    def clusters(self, tol: float = 1e-9) -> list[np.ndarray]:
        """Index groups of (numerically) degenerate eigenvalues."""
        scale = max(1.0, float(np.max(np.abs(self.energies)))) if self.dim else 1.0
        groups: list[list[int]] = []
        for n, e in enumerate(self.energies):
            if groups and e - self.energies[groups[-1][-1]] <= tol * scale:
                groups[-1].append(n)
            else:
                groups.append([n])
        return [np.array(g) for g in groups]


def n_qubits(psi: np.ndarray) -> int:
    dim = psi.shape[0]
    L = dim.bit_length() - 1
    if dim < 1 or 1 << L != dim:
        raise ValueError(f"state length {dim} is not a power of two")
    return L


def check_state(psi: np.ndarray, normalized: bool = True) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.ndim != 1:
        raise ValueError("a state must be a 1-d amplitude vector")
    n_qubits(psi)
    if normalized and abs(np.linalg.norm(psi) - 1.0) > NORM_TOL:
        raise ValueError(f"state norm {np.linalg.norm(psi):.3e} differs from 1")
    return psi


def basis_state(bits: str) -> np.ndarray:
    """Computational basis state from a bit string such as ``"1010"``."""
    if not bits or set(bits) - {"0", "1"}:
        raise ValueError(f"invalid bit string {bits!r}")
    psi = np.zeros(1 << len(bits), dtype=np.complex128)
    psi[int(bits, 2)] = 1.0
    return psi


def product_state(local_states) -> np.ndarray:
    psi = np.ones(1, dtype=np.complex128)
    for v in local_states:
        psi = np.kron(psi, np.asarray(v, dtype=np.complex128))
    return psi


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) < tol * scale)


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    eye = np.eye(u.shape[0])
    return bool(np.max(np.abs(u.conj().T @ u - eye), initial=0.0) < tol)


def spectral_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, 2)) if a.size else 0.0


def _check_dim(psi: np.ndarray, dim: int) -> None:
    if psi.shape[0] != dim:
        raise ValueError(f"dimension mismatch: vector {psi.shape[0]} vs operator {dim}")


def _check_sites(sites, L: int) -> list[int]:
    sites = [int(s) for s in sites]
    if not sites:
        raise ValueError("at least one site is required")
    if any(s < 1 or s > L for s in sites):
        raise ValueError(f"site out of range in {sites} for L={L}")
    if any(b <= a for a, b in zip(sites, sites[1:])):
        raise ValueError(f"sites must be distinct and ascending, got {sites}")
    return sites


def kron_embed(local: np.ndarray, sites, L: int) -> np.ndarray:
    """Embed ``local`` acting on ``sites`` (1-based, ascending) into ``2**L`` dims."""
    sites = _check_sites(sites, L)
    k = len(sites)
    local = np.asarray(local, dtype=np.complex128)
    if local.shape != (1 << k, 1 << k):
        raise ValueError(f"local operator shape {local.shape} does not match {k} sites")
    if sites == list(range(sites[0], sites[0] + k)):
        left = np.eye(1 << (sites[0] - 1))
        right = np.eye(1 << (L - sites[-1]))
        return np.kron(np.kron(left, local), right)
    # Non-contiguous support: embed on the leading sites, then permute axes.
    rest = [s for s in range(1, L + 1) if s not in sites]
    full = np.kron(local, np.eye(1 << (L - k))).reshape([2] * (2 * L))
    order = sites + rest
    perm = [order.index(s) for s in range(1, L + 1)]
    full = full.transpose(perm + [L + p for p in perm])
    return full.reshape(1 << L, 1 << L)


def apply_local(gate: np.ndarray, sites, psi: np.ndarray, L: int) -> np.ndarray:
    """Apply a ``2**k`` square matrix on ``sites`` to a state without forming 2^L matrices."""
    sites = _check_sites(sites, L)
    k = len(sites)
    axes = [s - 1 for s in sites]
    tensor = psi.reshape([2] * L)
    g = gate.reshape([2] * (2 * k))
    out = np.tensordot(g, tensor, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(out, list(range(k)), axes).reshape(-1)


def eigendecompose_hermitian(H: np.ndarray) -> SpectralDecomposition:
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    if not is_hermitian(H):
        raise ValueError("matrix is not Hermitian within tolerance")
    try:
        energies, basis = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver did not converge: {exc}") from exc
    return SpectralDecomposition(energies=energies, basis=basis)


def expm_hermitian(H: np.ndarray, coeff: float) -> np.ndarray:
    """``exp(-i * coeff * H)`` through the eigendecomposition of ``H``."""
    if H.shape == (1, 1) or not np.any(H):
        return scipy.linalg.expm(-1j * coeff * H)
    w, v = np.linalg.eigh(H)
    return (v * np.exp(-1j * coeff * w)) @ v.conj().T


def exact_evolve(spec: SpectralDecomposition, psi0: np.ndarray, t: float) -> np.ndarray:
    """``sum_n c_n exp(-i E_n t) |n>``."""
    c = spec.coefficients(np.asarray(psi0, dtype=np.complex128))
    return spec.basis @ (np.exp(-1j * spec.energies * t) * c)


def unitary_log_generator(U: np.ndarray, dt: float) -> np.ndarray:
    """Hermitian ``H_eff`` with ``exp(-i H_eff dt) = U`` on the principal branch.

    The complex Schur form of a unitary is diagonal with a unitary Schur basis,
    which keeps the reconstructed generator exactly Hermitian even for
    degenerate phases.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    U = np.asarray(U, dtype=np.complex128)
    if not is_unitary(U):
        raise ValueError("matrix is not unitary within tolerance")
    T, Z = scipy.linalg.schur(U, output="complex")
    phases = np.angle(np.diag(T))
    if np.any(np.abs(phases) > np.pi - BRANCH_CUT_TOL):
        raise NumericalError(
            "eigenphase at the branch cut; reduce dt so that |E| dt < pi for all levels"
        )
    H = (Z * (-phases / dt)) @ Z.conj().T
    return 0.5 * (H + H.conj().T)
