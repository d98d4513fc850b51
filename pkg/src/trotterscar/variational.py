"""Product-state ansatz, composite Trotter-scar loss, analytic gradients and Adam."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .formulas import TrotterStepper, schedule_for_order, step_matrix, steps_for_time
from .linalg import NumericalError, eigendecompose_hermitian, product_state
from .models import SplitHamiltonian


def wrap_angle(x):
    """Reduce angles to (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, 2 * np.pi) - np.pi
    return np.where(y == -np.pi, np.pi, y)


@dataclass(frozen=True)
class VariationalParameters:
    theta: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        if theta.shape != phi.shape or theta.ndim != 1:
            raise ValueError("theta and phi must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(phi))):
            raise ValueError("variational parameters must be finite")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)

    @property
    def L(self) -> int:
        return self.theta.size

    @classmethod
    def from_vector(cls, x) -> VariationalParameters:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size % 2:
            raise ValueError("parameter vector must have even length 2L")
        L = x.size // 2
        return cls(x[:L], x[L:])

    def vector(self) -> np.ndarray:
        return np.concatenate([self.theta, self.phi])

    def canonical(self) -> VariationalParameters:
        return VariationalParameters(wrap_angle(self.theta), wrap_angle(self.phi))

    def to_dict(self) -> dict:
        c = self.canonical()
        return {"theta": c.theta.tolist(), "phi": c.phi.tolist()}


@dataclass(frozen=True)
class LossConfig:
    l1: float = 1.0
    l2: float = 1e-5
    T_l: float = 10.0
    dt: float = 0.01
    schedule_order: int = 2

    def __post_init__(self):
        if self.l1 < 0 or self.l2 < 0:
            raise ValueError("loss weights must be non-negative")
        if self.dt <= 0 or self.T_l <= 0:
            raise ValueError("dt and T_l must be positive")
        steps_for_time(self.T_l, self.dt)
        schedule_for_order(self.schedule_order)

    @property
    def n_steps(self) -> int:
        return steps_for_time(self.T_l, self.dt)


@dataclass(frozen=True)
class OptimizerConfig:
    iters: int = 2000
    lr0: float = 0.05
    lr_min: float = 1e-4
    seed: int = 0
    restarts: int = 8
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.iters < 1:
            raise ValueError("iters must be at least 1")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if not self.lr0 > self.lr_min >= 0:
            raise ValueError("need lr0 > lr_min >= 0")

    def learning_rate(self, i: int) -> float:
        return self.lr_min + (self.lr0 - self.lr_min) * (1 + math.cos(math.pi * i / self.iters)) / 2


@dataclass
class OptimizationHistory:
    """One row per Adam step: values at the parameters before that step."""

    loss: list[float] = field(default_factory=list)
    error_term: list[float] = field(default_factory=list)
    echo_term: list[float] = field(default_factory=list)
    learning_rate: list[float] = field(default_factory=list)
    params: list[np.ndarray] = field(default_factory=list)
    restart: int = 0
    final_loss: float = math.nan
    best_loss: float = math.nan
    diagnostics: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.loss)

    def record(self, values, lr: float, x: np.ndarray) -> None:
        total, err, echo = values
        self.loss.append(total)
        self.error_term.append(err)
        self.echo_term.append(echo)
        self.learning_rate.append(lr)
        self.params.append(np.array(x))

    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(np.asarray(self.loss))


# -- ansatz ----------------------------------------------------------------------


def _site_vector(theta: float, phi: float) -> np.ndarray:
    """``R_y(phi) R_x(theta) |0>`` with ``R_a(x) = exp(-i x sigma^a / 2)``."""
    ct, st = math.cos(theta / 2), math.sin(theta / 2)
    cp, sp = math.cos(phi / 2), math.sin(phi / 2)
    return np.array([cp * ct + 1j * sp * st, sp * ct - 1j * cp * st])


def _site_derivatives(theta: float, phi: float) -> tuple[np.ndarray, np.ndarray]:
    ct, st = math.cos(theta / 2), math.sin(theta / 2)
    cp, sp = math.cos(phi / 2), math.sin(phi / 2)
    d_theta = 0.5 * np.array([-cp * st + 1j * sp * ct, -sp * st - 1j * cp * ct])
    d_phi = 0.5 * np.array([-sp * ct + 1j * cp * st, cp * ct + 1j * sp * st])
    return d_theta, d_phi


def prepare_product_state(params: VariationalParameters) -> np.ndarray:
    return product_state(_site_vector(t, p) for t, p in zip(params.theta, params.phi))


def product_state_gradient(params: VariationalParameters, g: np.ndarray) -> np.ndarray:
    """``Re(g^dagger d psi / dx)`` for every parameter, theta block first.

    Each site's environment is the contraction of ``conj(g)`` with the other
    local factors, so the full Jacobian is never formed.
    """
    L = params.L
    sites = [_site_vector(t, p) for t, p in zip(params.theta, params.phi)]
    tensor = np.conj(g).reshape([2] * L)
    out = np.empty(2 * L)
    for j in range(L):
        env = _environment(tensor, sites, j)
        d_theta, d_phi = _site_derivatives(params.theta[j], params.phi[j])
        out[j] = float(np.real(env @ d_theta))
        out[L + j] = float(np.real(env @ d_phi))
    return out


def _environment(tensor: np.ndarray, sites, j: int) -> np.ndarray:
    # trailing sites first so that the remaining axes keep their positions
    env = tensor
    for i in range(len(sites) - 1, -1, -1):
        if i > j:
            env = np.tensordot(env, sites[i], axes=([env.ndim - 1], [0]))
    for i in range(j):
        env = np.tensordot(sites[i], env, axes=([0], [0]))
    return env


# -- loss ----------------------------------------------------------------------------


def _trapezoid_weights(n_steps: int) -> np.ndarray:
    w = np.ones(n_steps + 1)
    w[0] = w[-1] = 0.5
    return w


def composite_loss(params, ham: SplitHamiltonian, cfg: LossConfig) -> tuple[float, float, float]:
    """Composite loss by direct Trotter stepping: ``(total, l1 ||dpsi(T)||, (l2/T) int F_T dt)``."""
    psi0 = prepare_product_state(params)
    stepper = TrotterStepper(ham, schedule_for_order(cfg.schedule_order), cfg.dt)
    n = cfg.n_steps
    echoes = np.empty(n + 1)
    psi = psi0
    echoes[0] = 1.0
    for k in range(1, n + 1):
        psi = stepper.step(psi)
        echoes[k] = abs(np.vdot(psi0, psi)) ** 2
    spec = eigendecompose_hermitian(ham.dense)
    exact = spec.propagator(cfg.T_l) @ psi0
    err = cfg.l1 * float(np.linalg.norm(exact - psi))
    echo = cfg.l2 * cfg.dt / cfg.T_l * float(_trapezoid_weights(n) @ echoes)
    return err + echo, err, echo


class SpectralLoss:
    """Exact composite loss and its state gradient from one-time spectral precomputation.

    With ``U = Z diag(lam) Z^dagger`` the Trotter step, the state after n steps is
    ``Z lam^n Z^dagger psi``, so the echo at step n is ``|sum_k lam_k^n |d_k|^2|^2``
    with ``d = Z^dagger psi``, and the final error is ``||(e^{-iHT} - U^N) psi||``.
    Both agree with time stepping to rounding error.
    """

    def __init__(self, ham: SplitHamiltonian, cfg: LossConfig):
        self.cfg = cfg
        n = cfg.n_steps
        U = step_matrix(ham, schedule_for_order(cfg.schedule_order), cfg.dt)
        T, Z = scipy.linalg.schur(U, output="complex")
        lam = np.diag(T)
        lam = lam / np.abs(lam)
        self.Z = Z
        self.powers = np.exp(1j * np.outer(np.arange(n + 1), np.angle(lam)))
        spec = eigendecompose_hermitian(ham.dense)
        self.M = spec.propagator(cfg.T_l) - (Z * self.powers[-1]) @ Z.conj().T
        self.quad = cfg.l2 * cfg.dt / cfg.T_l * _trapezoid_weights(n)

    def _parts(self, psi):
        d = self.Z.conj().T @ psi
        f = self.powers @ (np.abs(d) ** 2)
        r = self.M @ psi
        return d, f, r

    def value(self, psi) -> tuple[float, float, float]:
        _, f, r = self._parts(psi)
        err = self.cfg.l1 * float(np.linalg.norm(r))
        echo = float(self.quad @ np.abs(f) ** 2)
        return err + echo, err, echo

    def value_and_state_gradient(self, psi):
        """Loss parts and ``g = 2 dL/d psi^*`` so that ``dL = Re(g^dagger d psi)``."""
        d, f, r = self._parts(psi)
        norm = float(np.linalg.norm(r))
        err = self.cfg.l1 * norm
        echo = float(self.quad @ np.abs(f) ** 2)
        g = np.zeros_like(psi)
        if self.cfg.l1 and norm > 0:
            g += self.cfg.l1 * (self.M.conj().T @ r) / norm
        if self.cfg.l2:
            a = 2 * ((self.quad * np.conj(f)) @ self.powers).real
            g += 2 * self.Z @ (a * d)
        return (err + echo, err, echo), g

    def __call__(self, params: VariationalParameters) -> tuple[float, float, float]:
        return self.value(prepare_product_state(params))

    def value_and_grad(self, params: VariationalParameters):
        values, g = self.value_and_state_gradient(prepare_product_state(params))
        return values, product_state_gradient(params, g)


def loss_gradient(params, ham: SplitHamiltonian, cfg: LossConfig, loss: SpectralLoss | None = None) -> np.ndarray:
    """Gradient of the total loss with respect to ``(theta, phi)``."""
    if cfg.l1 == 0 and cfg.l2 == 0:
        return np.zeros(2 * params.L)
    loss = loss or SpectralLoss(ham, cfg)
    return loss.value_and_grad(params)[1]


# -- optimization -----------------------------------------------------------------------


def _adam_run(loss: SpectralLoss, L: int, opt: OptimizerConfig, rng, restart: int) -> OptimizationHistory:
    hist = OptimizationHistory(restart=restart)
    x = rng.uniform(-np.pi, np.pi, 2 * L)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    best_x, best = x.copy(), math.inf
    for i in range(opt.iters):
        values, grad = loss.value_and_grad(VariationalParameters.from_vector(x))
        if not (math.isfinite(values[0]) and np.all(np.isfinite(grad))):
            hist.diagnostics.append(f"restart {restart}: non-finite loss at iteration {i}")
            break
        lr = opt.learning_rate(i)
        hist.record(values, lr, x)
        if values[0] < best:
            best, best_x = values[0], x.copy()
        m = opt.beta1 * m + (1 - opt.beta1) * grad
        v = opt.beta2 * v + (1 - opt.beta2) * grad**2
        m_hat = m / (1 - opt.beta1 ** (i + 1))
        v_hat = v / (1 - opt.beta2 ** (i + 1))
        x = x - lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    else:
        final = loss(VariationalParameters.from_vector(x))[0]
        hist.final_loss = final
        if math.isfinite(final) and final < best:
            best, best_x = final, x.copy()
    hist.best_loss = best
    hist.params.append(best_x)  # last snapshot is the returned optimum
    return hist


def optimize(
    ham: SplitHamiltonian,
    cfg: LossConfig,
    opt: OptimizerConfig | None = None,
    jobs: int = 1,
) -> tuple[VariationalParameters, OptimizationHistory]:
    """Adam with cosine annealing over seeded random restarts; returns the best.

    The parameter list of the returned history holds one snapshot per step
    followed by the best parameters found.
    """
    opt = opt or OptimizerConfig()
    loss = SpectralLoss(ham, cfg)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(opt.seed).spawn(opt.restarts)]
    tasks = list(enumerate(rngs))

    def run(task):
        r, rng = task
        return _adam_run(loss, ham.L, opt, rng, r)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            histories = list(pool.map(run, tasks))
    else:
        histories = [run(t) for t in tasks]
    ok = [h for h in histories if math.isfinite(h.best_loss)]
    if not ok:
        notes = "; ".join(d for h in histories for d in h.diagnostics)
        raise NumericalError(f"every restart failed: {notes}")
    best = min(ok, key=lambda h: h.best_loss)
    best.diagnostics = [d for h in histories for d in h.diagnostics]
    return VariationalParameters.from_vector(best.params[-1]).canonical(), best


def haar_random_product_state(L: int, seed) -> np.ndarray:
    """Tensor product of independent Haar-random qubit states."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((L, 2)) + 1j * rng.standard_normal((L, 2))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return product_state(z)


def haar_ensemble(L: int, size: int, seed) -> list[np.ndarray]:
    """``size`` independent Haar product states from child streams of ``seed``."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seqs = root.spawn(size)
    return [haar_random_product_state(L, s) for s in seqs]
