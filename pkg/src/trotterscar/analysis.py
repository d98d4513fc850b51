"""Spectral error prediction, Loschmidt echoes, ladder diagnostics and observables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

import scipy.linalg

from .formulas import ErrorKernel, TrotterStepper, schedule_for_order, step_matrix
from .linalg import (
    SX,
    SY,
    SZ,
    SpectralDecomposition,
    apply_local,
    eigendecompose_hermitian,
    kron_embed,
    n_qubits,
)
from .models import SplitHamiltonian

SMALL_PHASE = 1e-7


def stroboscopic_weight(omega, t: float) -> np.ndarray:
    """``2 sin(omega t / 2) / omega``, continued analytically to ``t`` at omega = 0."""
    omega = np.asarray(omega, dtype=float)
    x = omega * t
    out = np.empty_like(x)
    small = np.abs(x) < SMALL_PHASE
    big = ~small
    out[big] = 2.0 * np.sin(x[big] / 2) / omega[big]
    xs = x[small]
    out[small] = t * (1 - xs**2 / 24 + xs**4 / 1920)
    return out


class ErrorPredictor:
    """Leading-order error norm from the spectrum of H and the kernel matrix elements."""

    def __init__(self, spec: SpectralDecomposition, kernel: ErrorKernel):
        if kernel.matrix.shape != (spec.dim, spec.dim):
            raise ValueError("kernel and spectrum dimensions differ")
        self.spec = spec
        self.order = kernel.order
        self.k_eig = spec.to_eigenbasis(kernel.matrix)
        self.gaps = spec.energies[:, None] - spec.energies[None, :]

    def amplitudes(self, c: np.ndarray, t: float) -> np.ndarray:
        """Eigenbasis components of the error vector without the ``dt^q`` prefactor."""
        if t == 0:
            return np.zeros_like(c)
        phase = np.exp(0.5j * self.gaps * t) * stroboscopic_weight(self.gaps, t)
        return (self.k_eig * phase) @ c

    def error(self, psi0: np.ndarray, dt: float, t: float) -> float:
        if t < 0:
            raise ValueError("t must be non-negative")
        c = self.spec.coefficients(np.asarray(psi0, dtype=np.complex128))
        return dt**self.order * float(np.linalg.norm(self.amplitudes(c, t)))

    def curve(self, psi0: np.ndarray, dt: float, times) -> np.ndarray:
        c = self.spec.coefficients(np.asarray(psi0, dtype=np.complex128))
        return np.array(
            [dt**self.order * np.linalg.norm(self.amplitudes(c, t)) for t in times]
        )


def perturbative_error(spec, kernel, psi0, dt: float, t: float) -> float:
    return ErrorPredictor(spec, kernel).error(psi0, dt, t)


def loschmidt_exact(spec: SpectralDecomposition, psi0, times) -> np.ndarray:
    """``F(t) = |sum_n |c_n|^2 exp(-i E_n t)|^2``."""
    w = np.abs(spec.coefficients(np.asarray(psi0, dtype=np.complex128))) ** 2
    phases = np.exp(-1j * np.outer(np.asarray(times, dtype=float), spec.energies))
    return np.abs(phases @ w) ** 2


def loschmidt_trotter(psi0, trajectory) -> np.ndarray:
    psi0 = np.asarray(psi0, dtype=np.complex128)
    return np.array([abs(np.vdot(psi0, psi)) ** 2 for psi in trajectory])


# -- ladder diagnostics ------------------------------------------------------


@dataclass
class LadderReport:
    omega: float | None
    strobe_times: list[float]
    residual: float
    top_overlaps: list[tuple[float, float]]
    coverage: float = 0.0
    commensurate: bool = False
    total_weight: float = 1.0
    support: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "omega": self.omega,
            "strobe_times": self.strobe_times,
            "residual": self.residual,
            "coverage": self.coverage,
            "commensurate": self.commensurate,
            "total_weight": self.total_weight,
            "support": self.support,
            "top_overlaps": [list(p) for p in self.top_overlaps],
        }


def cluster_weights(spec: SpectralDecomposition, psi0) -> tuple[np.ndarray, np.ndarray]:
    """Mean energy and projector weight of every degenerate cluster."""
    c = spec.coefficients(np.asarray(psi0, dtype=np.complex128))
    p = np.abs(c) ** 2
    groups = spec.clusters()
    energies = np.array([spec.energies[g].mean() for g in groups])
    weights = np.array([p[g].sum() for g in groups])
    return energies, weights


def _misfit(gaps, omega):
    n = np.round(gaps / omega)
    return np.abs(gaps - n * omega), n


def _refine(gaps, w, omega, tol: float, sweeps: int = 3) -> float:
    """Weighted least squares for omega over the gaps already on its ladder."""
    for _ in range(sweeps):
        dist, n = _misfit(gaps, omega)
        on = dist <= tol * omega
        denom = np.sum(w[on] * n[on] ** 2)
        if denom <= 0:
            break
        omega = float(np.sum(w[on] * n[on] * gaps[on]) / denom)
    return omega


def estimate_ladder_frequency(
    energies,
    weights,
    tol: float = 0.05,
    min_coverage: float = 0.95,
    k_max: int = 16,
    n_seed: int = 8,
) -> tuple[float | None, float, float]:
    """Largest spacing ``omega`` whose integer multiples carry most of the gap weight.

    Each gap ``E_j - E_i`` carries weight ``w_i w_j``. A gap lies on the ladder
    when it is within ``tol * omega`` of ``omega * Z``. Candidates are divisors
    ``gap / k`` (``k <= k_max``) of gaps among the ``n_seed`` heaviest levels,
    each refined by weighted least squares over its on-ladder gaps. The first
    candidate, scanning downwards, whose on-ladder weight fraction reaches
    ``min_coverage`` is returned; otherwise the candidate of largest coverage.

    Returns ``(omega, residual, coverage)`` where ``residual`` is the largest
    distance of any gap from ``omega * Z``.
    """
    energies = np.asarray(energies, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if energies.size < 2:
        return None, 0.0, 0.0
    i, j = np.triu_indices(energies.size, 1)
    gaps = np.abs(energies[j] - energies[i])
    w = weights[i] * weights[j]
    keep = gaps > 1e-9 * max(1.0, float(np.max(np.abs(energies))))
    gaps, w = gaps[keep], w[keep]
    if gaps.size == 0:
        return None, 0.0, 0.0
    omega_min = gaps.max() / k_max
    heavy = np.argsort(-weights)[:n_seed]
    seeds = {abs(energies[a] - energies[b]) for a in heavy for b in heavy if a < b}
    candidates = {
        round(g / k, 12) for g in seeds if g > 0 for k in range(1, k_max + 1) if g / k >= omega_min
    }
    total = float(np.sum(w))
    best = None
    for cand in sorted(candidates, reverse=True):
        omega = _refine(gaps, w, cand, tol)
        if omega < omega_min * (1 - 1e-9):
            continue
        dist, _ = _misfit(gaps, omega)
        coverage = float(np.sum(w[dist <= tol * omega])) / total
        if best is None or coverage > best[1] + 1e-12:
            best = (omega, coverage)
        if coverage >= min_coverage:
            best = (omega, coverage)
            break
    if best is None:
        return None, 0.0, 0.0
    omega, coverage = best
    return omega, float(np.max(_misfit(gaps, omega)[0])), coverage


def ladder_report(
    spec: SpectralDecomposition,
    psi0,
    weight_cutoff: float = 1e-4,
    K: int = 20,
    tol: float = 0.05,
    min_coverage: float = 0.95,
    n_strobes: int = 5,
) -> LadderReport:
    if not 0 < weight_cutoff < 1:
        raise ValueError("weight_cutoff must lie in (0, 1)")
    if K < 2:
        raise ValueError("K must be at least 2")
    energies, weights = cluster_weights(spec, psi0)
    order = np.argsort(-weights, kind="stable")
    top = [(float(energies[n]), float(weights[n])) for n in order[:K]]
    mask = weights >= weight_cutoff
    omega, residual, coverage = estimate_ladder_frequency(
        energies[mask], weights[mask], tol=tol, min_coverage=min_coverage
    )
    strobes = [2 * math.pi * p / omega for p in range(1, n_strobes + 1)] if omega else []
    return LadderReport(
        omega=omega,
        strobe_times=strobes,
        residual=residual,
        top_overlaps=top,
        coverage=coverage,
        commensurate=omega is not None and coverage >= min_coverage,
        total_weight=float(weights.sum()),
        support=[float(e) for e in energies[mask]],
    )


def commensurate_ladder_state(
    spec: SpectralDecomposition,
    kernel: ErrorKernel,
    omega: float,
    dt: float,
    n_periods: int = 3,
    gap_tol: float = 0.02,
) -> tuple[np.ndarray, tuple[int, int]]:
    """Equal superposition of two eigenvectors on a commensurate ladder.

    Among non-degenerate eigenvector pairs whose gap lies within ``gap_tol`` of
    a non-zero multiple of ``omega``, pick the pair whose predicted error dips
    deepest at the stroboscopic times relative to the preceding maximum. The
    stroboscopic period must be an integer multiple of ``dt``.
    """
    period = 2 * math.pi / omega
    n1 = round(period / dt)
    if abs(n1 * dt - period) > 1e-9 * period:
        raise ValueError("the stroboscopic period must be an integer multiple of dt")
    singles = [int(g[0]) for g in spec.clusters() if g.size == 1]
    E = spec.energies
    predictor = ErrorPredictor(spec, kernel)
    times = np.arange(1, n_periods * n1 + 1) * dt
    best = None
    for ia, a in enumerate(singles):
        for b in singles[ia + 1:]:
            gap = E[b] - E[a]
            k = round(gap / omega)
            if k == 0 or abs(gap - k * omega) > gap_tol:
                continue
            c = np.zeros(spec.dim, dtype=np.complex128)
            c[[a, b]] = 1 / math.sqrt(2)
            cols = predictor.k_eig[:, [a, b]] * c[[a, b]]
            w = predictor.gaps[:, [a, b]]
            curve = np.empty(times.size)
            for i, t in enumerate(times):
                amp = np.exp(0.5j * w * t) * stroboscopic_weight(w, t)
                curve[i] = np.linalg.norm(np.sum(cols * amp, axis=1))
            score = max(
                curve[p * n1 - 1] / curve[(p - 1) * n1 : p * n1 - 1].max()
                for p in range(1, n_periods + 1)
            )
            if best is None or score < best[0]:
                best = (score, a, b)
    if best is None:
        raise ValueError("no eigenvector pair lies on the requested ladder")
    _, a, b = best
    psi = (spec.basis[:, a] + spec.basis[:, b]) / math.sqrt(2)
    return psi, (a, b)


# -- observables -------------------------------------------------------------


def reduced_density_matrix(psi, site: int) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.complex128)
    L = n_qubits(psi)
    if not 1 <= site <= L:
        raise ValueError(f"site {site} out of range for L={L}")
    m = psi.reshape(1 << (site - 1), 2, 1 << (L - site))
    return np.einsum("aib,ajb->ij", m, m.conj())


def local_expectations(psi, site: int) -> tuple[float, float, float]:
    """Bloch vector ``(<X>, <Y>, <Z>)`` of one site."""
    rho = reduced_density_matrix(psi, site)
    return (
        float(2 * rho[0, 1].real),
        float(-2 * rho[0, 1].imag),
        float((rho[0, 0] - rho[1, 1]).real),
    )


def total_spin_expectation(psi) -> float:
    """``<S^2>`` with ``S = sum_j sigma_j / 2``."""
    psi = np.asarray(psi, dtype=np.complex128)
    L = n_qubits(psi)
    total = 0.0
    for pauli in (SX, SY, SZ):
        v = sum(apply_local(pauli / 2, [j], psi, L) for j in range(1, L + 1))
        total += float(np.vdot(v, v).real)
    return total


def total_spin_squared(L: int) -> np.ndarray:
    dim = 1 << L
    out = np.zeros((dim, dim), dtype=np.complex128)
    for pauli in (SX, SY, SZ):
        s = sum(kron_embed(pauli / 2, [j], L) for j in range(1, L + 1))
        out += s @ s
    return out


def resolve_total_spin(spec: SpectralDecomposition, L: int):
    """Eigenbasis refined inside each degenerate cluster so that S^2 is diagonal.

    Returns ``(basis, spins)`` where ``spins[n]`` is the total spin ``S`` of column n.
    """
    s2 = total_spin_squared(L)
    basis = spec.basis.copy()
    values = np.empty(spec.dim)
    for g in spec.clusters():
        v = spec.basis[:, g]
        w, u = np.linalg.eigh(v.conj().T @ s2 @ v)
        basis[:, g] = v @ u
        values[g] = w
    spins = (-1 + np.sqrt(1 + 4 * np.clip(values, 0, None))) / 2
    return basis, spins


# -- trajectories --------------------------------------------------------------


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    loschmidt_exact: np.ndarray
    loschmidt_trotter: np.ndarray
    trotter_error: np.ndarray
    predicted_error: np.ndarray  # NaN where no kernel is available
    bloch: dict[int, np.ndarray]  # site -> (T, 3), exact evolution

    def columns(self) -> list[str]:
        cols = ["time", "loschmidt_exact", "loschmidt_trotter", "trotter_error", "predicted_error"]
        for site in self.bloch:
            cols += [f"bloch_x_{site}", f"bloch_y_{site}", f"bloch_z_{site}"]
        return cols

    def rows(self):
        for i, t in enumerate(self.times):
            row = [
                t,
                self.loschmidt_exact[i],
                self.loschmidt_trotter[i],
                self.trotter_error[i],
                self.predicted_error[i],
            ]
            for site in self.bloch:
                row.extend(self.bloch[site][i])
            yield row


def compute_trajectory(
    ham: SplitHamiltonian,
    psi0,
    order: int,
    dt: float,
    n_steps: int,
    stride: int = 1,
    sites=(),
    spec: SpectralDecomposition | None = None,
    kernel: ErrorKernel | None = None,
) -> TrajectoryRecord:
    """Sample echoes, errors and Bloch vectors every ``stride`` Trotter steps."""
    psi0 = np.asarray(psi0, dtype=np.complex128)
    spec = spec or eigendecompose_hermitian(ham.dense)
    stepper = TrotterStepper(ham, schedule_for_order(order), dt)
    states = stepper.evolve(psi0, n_steps, stride)
    times = np.arange(len(states)) * stride * dt
    c = spec.coefficients(psi0)
    exact = [spec.basis @ (np.exp(-1j * spec.energies * t) * c) for t in times]
    errors = np.array([np.linalg.norm(e - s) for e, s in zip(exact, states)])
    if kernel is not None:
        predicted = ErrorPredictor(spec, kernel).curve(psi0, dt, times)
    else:
        predicted = np.full(times.size, np.nan)
    bloch = {
        site: np.array([local_expectations(e, site) for e in exact]) for site in sites
    }
    return TrajectoryRecord(
        times=times,
        loschmidt_exact=loschmidt_exact(spec, psi0, times),
        loschmidt_trotter=loschmidt_trotter(psi0, states),
        trotter_error=errors,
        predicted_error=predicted,
        bloch=bloch,
    )


def ensemble_curves(
    ham: SplitHamiltonian,
    order: int,
    dt: float,
    step_indices,
    states,
    spec: SpectralDecomposition | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Trotter error and Trotter echo for many initial states at once.

    Uses the eigendecomposition of the dense single-step unitary, so the state
    after n steps is ``Z diag(lam^n) Z^dagger psi``. Returns two arrays of shape
    ``(len(states), len(step_indices))``.
    """
    spec = spec or eigendecompose_hermitian(ham.dense)
    U = step_matrix(ham, schedule_for_order(order), dt)
    T, Z = scipy.linalg.schur(U, output="complex")
    lam = np.diag(T) / np.abs(np.diag(T))
    psi = np.array(states, dtype=np.complex128).T
    d = Z.conj().T @ psi
    c = spec.basis.conj().T @ psi
    errors = np.empty((psi.shape[1], len(step_indices)))
    echoes = np.empty_like(errors)
    for i, n in enumerate(step_indices):
        trotter = Z @ (lam[:, None] ** n * d)
        exact = spec.basis @ (np.exp(-1j * spec.energies * n * dt)[:, None] * c)
        errors[:, i] = np.linalg.norm(exact - trotter, axis=0)
        echoes[:, i] = np.abs(np.sum(psi.conj() * trotter, axis=0)) ** 2
    return errors, echoes
