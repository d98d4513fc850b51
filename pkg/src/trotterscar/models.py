"""Spin-chain Hamiltonians split into two groups of mutually commuting local terms.

Open boundary conditions throughout. Single-site fields are absorbed into the
bond terms: an interior site gives half of its field to each adjacent bond, a
chain end gives its full field to its single bond. Bond ``j`` joins sites
``j, j+1`` and belongs to the odd group when ``j`` is odd. PXP terms are
grouped by the parity of the flipped site.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .linalg import I2, SX, SY, SZ, commutator, is_hermitian, kron_embed

COMMUTE_TOL = 1e-12
COMMUTE_CHECK_MAX_L = 10


@dataclass(frozen=True)
class LocalTerm:
    sites: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        if len(self.sites) not in (1, 2, 3):
            raise ValueError("local terms act on 1 to 3 sites")
        if self.matrix.shape != (1 << len(self.sites),) * 2:
            raise ValueError("matrix size does not match the term support")
        if not is_hermitian(self.matrix):
            raise ValueError("local term is not Hermitian")

    def embed(self, L: int) -> np.ndarray:
        return kron_embed(self.matrix, self.sites, L)


@dataclass(frozen=True)
class ModelSpec:
    """Model name, parameters and its predicted ladder frequency."""

    name: str
    params: dict = field(default_factory=dict)
    omega: float | None = None
    validity: str = ""

    def strobe_times(self, count: int = 5) -> list[float]:
        if not self.omega:
            return []
        return [2 * math.pi * p / self.omega for p in range(1, count + 1)]

    def to_dict(self) -> dict:
        return {"name": self.name, **self.params}


@dataclass(frozen=True, eq=False)
class SplitHamiltonian:
    L: int
    odd_terms: tuple[LocalTerm, ...]
    even_terms: tuple[LocalTerm, ...]
    model_spec: ModelSpec

    @property
    def dim(self) -> int:
        return 1 << self.L

    def group(self, name: str) -> tuple[LocalTerm, ...]:
        if name == "odd":
            return self.odd_terms
        if name == "even":
            return self.even_terms
        raise ValueError(f"unknown group {name!r}")

    def _assemble(self, terms) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=np.complex128)
        for term in terms:
            out += term.embed(self.L)
        return out

    @cached_property
    def h_odd(self) -> np.ndarray:
        return self._assemble(self.odd_terms)

    @cached_property
    def h_even(self) -> np.ndarray:
        return self._assemble(self.even_terms)

    @cached_property
    def dense(self) -> np.ndarray:
        return self.h_odd + self.h_even

    def check_commuting(self) -> None:
        """Raise if two terms of the same group fail to commute."""
        for terms in (self.odd_terms, self.even_terms):
            mats = [t.embed(self.L) for t in terms]
            for i in range(len(mats)):
                for j in range(i + 1, len(mats)):
                    if np.max(np.abs(commutator(mats[i], mats[j]))) >= COMMUTE_TOL:
                        raise ValueError(
                            f"terms on {terms[i].sites} and {terms[j].sites} do not commute"
                        )


def _field_weight(site: int, L: int) -> float:
    return 1.0 if site in (1, L) else 0.5


def _bond_terms(L: int, coupling: np.ndarray, site_field) -> list[LocalTerm]:
    terms = []
    for j in range(1, L):
        m = coupling.copy()
        m += _field_weight(j, L) * np.kron(site_field(j), I2)
        m += _field_weight(j + 1, L) * np.kron(I2, site_field(j + 1))
        terms.append(LocalTerm((j, j + 1), m))
    return terms


def _split(L, terms, parity_of, spec) -> SplitHamiltonian:
    odd = tuple(t for t in terms if parity_of(t) % 2 == 1)
    even = tuple(t for t in terms if parity_of(t) % 2 == 0)
    ham = SplitHamiltonian(L, odd, even, spec)
    if L <= COMMUTE_CHECK_MAX_L:
        ham.check_commuting()
    return ham


def build_heisenberg(L: int, h_x: float) -> SplitHamiltonian:
    """Isotropic chain ``sum S_j.S_{j+1} + h_x sum S^x_j`` with ``S = sigma/2``."""
    if L < 2:
        raise ValueError("Heisenberg chain needs L >= 2")
    exchange = (np.kron(SX, SX) + np.kron(SY, SY) + np.kron(SZ, SZ)) / 4
    terms = _bond_terms(L, exchange, lambda j: h_x * SX / 2)
    spec = ModelSpec(
        "heisenberg",
        {"L": L, "h_x": h_x},
        omega=h_x if h_x else None,
        validity="within a total-spin multiplet",
    )
    return _split(L, terms, lambda t: t.sites[0], spec)


def build_stark(L: int, J_x: float, h_x: float, h_y: float, h_z: float) -> SplitHamiltonian:
    """``J_x sum X_j X_{j+1} + sum_j (h_x X_j + h_y Y_j + j h_z Z_j)``."""
    if L < 2:
        raise ValueError("Stark chain needs L >= 2")
    coupling = J_x * np.kron(SX, SX)
    terms = _bond_terms(L, coupling, lambda j: h_x * SX + h_y * SY + j * h_z * SZ)
    spec = ModelSpec(
        "stark",
        {"L": L, "J_x": J_x, "h_x": h_x, "h_y": h_y, "h_z": h_z},
        omega=2 * h_z if h_z else None,
        validity="strong Stark field; exact only when J_x = h_x = h_y = 0",
    )
    return _split(L, terms, lambda t: t.sites[0], spec)


def build_pxp(L: int) -> SplitHamiltonian:
    """``sum_{j=2}^{L-1} P_{j-1} X_j P_{j+1}`` with ``P = (1 - Z)/2``."""
    if L < 3:
        raise ValueError("PXP chain needs L >= 3")
    P = (I2 - SZ) / 2
    pxp = np.kron(np.kron(P, SX), P)
    terms = [LocalTerm((j - 1, j, j + 1), pxp) for j in range(2, L)]
    spec = ModelSpec(
        "pxp",
        {"L": L},
        omega=1.0,
        validity="within isolated-active-site invariant subspaces",
    )
    return _split(L, terms, lambda t: t.sites[1], spec)


MODEL_DEFAULTS = {
    "heisenberg": {"h_x": 0.5},
    "stark": {"J_x": 1.0, "h_x": 0.8, "h_y": 0.9, "h_z": 4.0},
    "pxp": {},
}


def build_model(name: str, L: int, **params) -> SplitHamiltonian:
    """Build a model by name; missing parameters take the figure defaults."""
    if name not in MODEL_DEFAULTS:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODEL_DEFAULTS)}")
    unknown = set(params) - set(MODEL_DEFAULTS[name])
    if unknown:
        raise ValueError(f"unknown parameters for {name}: {sorted(unknown)}")
    kw = {**MODEL_DEFAULTS[name], **params}
    if name == "heisenberg":
        return build_heisenberg(L, **kw)
    if name == "stark":
        return build_stark(L, **kw)
    return build_pxp(L)


def neel_state(L: int) -> np.ndarray:
    """``|1010...>`` in the computational basis."""
    bits = "".join("1" if j % 2 == 0 else "0" for j in range(L))
    psi = np.zeros(1 << L, dtype=np.complex128)
    psi[int(bits, 2)] = 1.0
    return psi
