"""Product-formula schedules, Trotterized propagation and leading error kernels."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import (
    apply_local,
    commutator,
    eigendecompose_hermitian,
    expm_hermitian,
    exact_evolve,
    spectral_norm,
    unitary_log_generator,
)
from .models import SplitHamiltonian

GROUPS = ("odd", "even")


@dataclass(frozen=True)
class ProductFormulaSchedule:
    """Exponential layers in application order; coefficients are fractions of dt.

    The operator for one step is the product of the layers with the first
    layer rightmost, so ``[("even", 1), ("odd", 1)]`` is ``e^{-iH_o dt} e^{-iH_e dt}``.
    """

    order: int
    layers: tuple[tuple[str, float], ...]

    def group_sums(self) -> dict[str, float]:
        sums = dict.fromkeys(GROUPS, 0.0)
        for group, c in self.layers:
            sums[group] += c
        return sums


def _merge(layers) -> list[tuple[str, float]]:
    out: list[tuple[str, float]] = []
    for group, c in layers:
        if out and out[-1][0] == group:
            out[-1] = (group, out[-1][1] + c)
        else:
            out.append((group, c))
    return out


def suzuki_coefficients(k: int) -> tuple[float, float]:
    """``(p_k, s_k)`` lifting an order-2k formula to order 2k+2."""
    if k < 1:
        raise ValueError("Suzuki coefficients are defined for k >= 1")
    p = 1.0 / (4.0 - 4.0 ** (1.0 / (2 * k + 1)))
    return p, 1.0 - 4.0 * p


def suzuki_schedule(k: int) -> ProductFormulaSchedule:
    """k=0: Lie-Trotter; k=1: symmetric second order; k>=2: order 2k by recursion."""
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0:
        return ProductFormulaSchedule(1, (("even", 1.0), ("odd", 1.0)))
    if k == 1:
        return ProductFormulaSchedule(2, (("odd", 0.5), ("even", 1.0), ("odd", 0.5)))
    inner = suzuki_schedule(k - 1).layers
    p, s = suzuki_coefficients(k - 1)
    layers = []
    for scale in (p, p, s, p, p):
        layers.extend((g, scale * c) for g, c in inner)
    return ProductFormulaSchedule(2 * k, tuple(_merge(layers)))


def schedule_for_order(q: int) -> ProductFormulaSchedule:
    if q == 1:
        return suzuki_schedule(0)
    if q >= 2 and q % 2 == 0:
        return suzuki_schedule(q // 2)
    raise ValueError(f"product-formula order must be 1 or even, got {q}")


def _term_gates(terms, coeff_dt: float):
    return [(t.sites, expm_hermitian(t.matrix, coeff_dt)) for t in terms]


def apply_group_exponential(terms, coeff_dt: float, psi: np.ndarray) -> np.ndarray:
    """``exp(-i coeff_dt sum(terms)) psi`` for mutually commuting ``terms``."""
    psi = np.asarray(psi, dtype=np.complex128)
    L = psi.shape[0].bit_length() - 1
    if 1 << L != psi.shape[0]:
        raise ValueError("state length is not a power of two")
    for sites, gate in _term_gates(terms, coeff_dt):
        if sites[-1] > L:
            raise ValueError(f"term on sites {sites} does not fit L={L}")
        psi = apply_local(gate, sites, psi, L)
    return psi


class TrotterStepper:
    """Precomputed local gates for one step of a schedule at fixed dt."""

    def __init__(self, ham: SplitHamiltonian, schedule: ProductFormulaSchedule, dt: float):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.ham = ham
        self.schedule = schedule
        self.dt = dt
        cache: dict[tuple[str, float], list] = {}
        self._layers = []
        for group, c in schedule.layers:
            key = (group, c)
            if key not in cache:
                cache[key] = _term_gates(ham.group(group), c * dt)
            self._layers.append(cache[key])

    def step(self, psi: np.ndarray) -> np.ndarray:
        L = self.ham.L
        for gates in self._layers:
            for sites, gate in gates:
                psi = apply_local(gate, sites, psi, L)
        return psi

    def evolve(self, psi0: np.ndarray, n_steps: int, stride: int = 1) -> list[np.ndarray]:
        """States after 0, stride, 2*stride, ... steps up to ``n_steps``."""
        if n_steps < 0:
            raise ValueError("n_steps must be non-negative")
        psi = np.asarray(psi0, dtype=np.complex128)
        if psi.shape[0] != self.ham.dim:
            raise ValueError("dimension mismatch between state and Hamiltonian")
        out = [psi]
        for n in range(1, n_steps + 1):
            psi = self.step(psi)
            if n % stride == 0:
                out.append(psi)
        return out


def trotter_evolve(ham, schedule, dt: float, n_steps: int, psi0) -> list[np.ndarray]:
    """States after each of ``n_steps`` applications of the schedule (first is psi0)."""
    return TrotterStepper(ham, schedule, dt).evolve(psi0, n_steps)


def step_matrix(ham: SplitHamiltonian, schedule: ProductFormulaSchedule, dt: float) -> np.ndarray:
    """Dense single-step unitary built from dense group exponentials."""
    dense = {"odd": ham.h_odd, "even": ham.h_even}
    U = np.eye(ham.dim, dtype=np.complex128)
    for group, c in schedule.layers:
        U = expm_hermitian(dense[group], c * dt) @ U
    return U


@dataclass(frozen=True)
class ErrorKernel:
    order: int
    matrix: np.ndarray


def _kernel_k1(h_o, h_e) -> np.ndarray:
    return -0.5j * commutator(h_o, h_e)


def _kernel_k2(h_o, h_e) -> np.ndarray:
    c = commutator(h_o, h_e)
    return (commutator(h_o, c) + 2 * commutator(h_e, c)) / 24


def _richardson_step(ham: SplitHamiltonian) -> float:
    scale = spectral_norm(ham.h_odd) + spectral_norm(ham.h_even)
    return 0.8 / max(scale, 1e-12)


def second_order_w5(ham: SplitHamiltonian, h: float | None = None) -> np.ndarray:
    """Fifth-order coefficient of the symmetric second-order step generator.

    ``H_eff(dt) = H + dt^2 W3 + dt^4 W5 + dt^6 W7 + ...``; the remainder
    ``(H_eff - H - dt^2 W3) / dt^4`` is extrapolated to dt -> 0 over three
    halvings, cancelling the dt^2 and dt^4 tails.
    """
    h = _richardson_step(ham) if h is None else h
    H = ham.dense
    w3 = _kernel_k2(ham.h_odd, ham.h_even)
    s2 = suzuki_schedule(1)
    rem = []
    for dt in (h, h / 2, h / 4):
        heff = unitary_log_generator(step_matrix(ham, s2, dt), dt)
        rem.append((heff - H - dt**2 * w3) / dt**4)
    r1 = (4 * rem[1] - rem[0]) / 3
    r2 = (4 * rem[2] - rem[1]) / 3
    w5 = (16 * r2 - r1) / 15
    return 0.5 * (w5 + w5.conj().T)


def error_kernel(ham: SplitHamiltonian, order: int) -> ErrorKernel:
    """Leading kernel ``K_q`` with ``H_eff = H + dt^q K_q + ...`` for q in {1, 2, 4}."""
    h_o, h_e = ham.h_odd, ham.h_even
    if order == 1:
        k = _kernel_k1(h_o, h_e)
    elif order == 2:
        k = _kernel_k2(h_o, h_e)
    elif order == 4:
        p, s = suzuki_coefficients(1)
        w3 = _kernel_k2(h_o, h_e)
        H = ham.dense
        w5 = second_order_w5(ham)
        cross = commutator(H, commutator(H, w3))
        k = (4 * p**5 + s**5) * w5 - p * s * (2 * p + s) * (p**2 - s**2) / 3 * cross
    else:
        raise ValueError(f"explicit kernels are available for q in (1, 2, 4), not {order}")
    k = 0.5 * (k + k.conj().T)
    return ErrorKernel(order, k)


def steps_for_time(t: float, dt: float, tol: float = 1e-9) -> int:
    n = round(t / dt)
    if n < 0 or abs(n * dt - t) > tol * max(1.0, abs(t)):
        raise ValueError(f"time {t} is not a non-negative integer multiple of dt={dt}")
    return int(n)


def measured_trotter_error(ham, schedule, dt: float, psi0, times) -> np.ndarray:
    """``||exp(-iHt) psi0 - S(dt)^{t/dt} psi0||`` at each requested time."""
    psi0 = np.asarray(psi0, dtype=np.complex128)
    steps = [steps_for_time(t, dt) for t in times]
    spec = eigendecompose_hermitian(ham.dense)
    stepper = TrotterStepper(ham, schedule, dt)
    order = np.argsort(steps, kind="stable")
    out = np.empty(len(steps))
    psi, done = psi0, 0
    for idx in order:
        while done < steps[idx]:
            psi = stepper.step(psi)
            done += 1
        out[idx] = np.linalg.norm(exact_evolve(spec, psi0, steps[idx] * dt) - psi)
    return out


def heff_residual(ham: SplitHamiltonian, order: int, dt: float, kernel: ErrorKernel | None = None) -> float:
    """``|| i log S_q(dt) / dt - H - dt^q K_q ||_2``."""
    kernel = kernel or error_kernel(ham, order)
    heff = unitary_log_generator(step_matrix(ham, schedule_for_order(order), dt), dt)
    return spectral_norm(heff - ham.dense - dt**order * kernel.matrix)


def is_palindromic(schedule: ProductFormulaSchedule, tol: float = 1e-14) -> bool:
    layers = schedule.layers
    return all(
        a[0] == b[0] and math.isclose(a[1], b[1], rel_tol=0, abs_tol=tol)
        for a, b in zip(layers, reversed(layers))
    )

