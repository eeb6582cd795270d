"""Linear periodic systems with memory: coefficient, delay taps, convolution kernel."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .grid import PeriodicGrid, StateSegment, interp_uniform, periodic_interp

VALIDATION_TOL = 1e-10


class InvalidSystemError(ValueError):
    pass


@dataclass(frozen=True)
class DelayTap:
    delay: float
    coefficient: Callable  # B_i(sigma) -> (n, n)

    def __post_init__(self):
        if not self.delay > 0:
            raise InvalidSystemError(f"delay must be positive, got {self.delay}")


@dataclass(frozen=True)
class LinearMemorySystem:
    """dz/dsigma = A(s) z(s) + sum_i B_i(s) z(s - d_i) + int_{s-r}^{s} K(s,t) z(t) dt + b(s).

    All evaluators are callbacks; A and B_i take a scalar sigma and return an
    (n, n) array, the kernel takes (sigma, tau_array) and returns
    (len(tau), n, n) (a scalar fallback per tau pair is also accepted), the
    forcing takes sigma and returns an n-vector.
    """

    dimension: int
    coefficient: Callable
    delay_taps: tuple = ()
    kernel: Optional[Callable] = None
    forcing: Optional[Callable] = None

    def __post_init__(self):
        if self.dimension < 1:
            raise InvalidSystemError("dimension must be >= 1")
        object.__setattr__(self, "delay_taps", tuple(self.delay_taps))

    @property
    def has_memory(self) -> bool:
        return bool(self.delay_taps) or self.kernel is not None

    def eval_coefficient(self, sigma: float) -> np.ndarray:
        return _as_matrix(self.coefficient(sigma), self.dimension, "A", sigma)

    def eval_tap(self, tap: DelayTap, sigma: float) -> np.ndarray:
        return _as_matrix(tap.coefficient(sigma), self.dimension, "B", sigma)

    def eval_kernel(self, sigma: float, taus: np.ndarray) -> np.ndarray:
        taus = np.asarray(taus, dtype=float)
        n = self.dimension
        try:
            out = np.asarray(self.kernel(sigma, taus), dtype=float)
            if out.shape == (len(taus), n, n):
                return out
            if n == 1 and out.shape == (len(taus),):
                return out.reshape(len(taus), 1, 1)
        except (TypeError, ValueError):
            pass
        out = np.empty((len(taus), n, n))
        for i, tau in enumerate(taus):
            out[i] = _as_matrix(self.kernel(sigma, tau), n, "K", sigma)
        return out

    def eval_forcing(self, sigma: float) -> np.ndarray:
        b = np.atleast_1d(np.asarray(self.forcing(sigma), dtype=float))
        if b.shape != (self.dimension,):
            raise InvalidSystemError(f"forcing at sigma={sigma} has shape {b.shape}")
        return b

    def fingerprint(self, grid: PeriodicGrid) -> str:
        """Hash of the sampled coefficients on the grid nodes."""
        parts = [np.array([self.dimension, grid.period, grid.samples_per_period, grid.memory_depth])]
        nodes = grid.period_nodes
        parts.append(np.array([self.eval_coefficient(s) for s in nodes]))
        for tap in self.delay_taps:
            parts.append(np.array([tap.delay]))
            parts.append(np.array([self.eval_tap(tap, s) for s in nodes]))
        if self.kernel is not None:
            for s in nodes[:: max(1, len(nodes) // 16)]:
                taus = s - np.linspace(0.0, grid.memory_depth, 17)
                parts.append(self.eval_kernel(s, taus))
        digest = hashlib.sha256()
        for p in parts:
            digest.update(np.ascontiguousarray(p, dtype=float).tobytes())
        return digest.hexdigest()


def _as_matrix(value, n: int, name: str, sigma: float) -> np.ndarray:
    mat = np.asarray(value)
    if mat.ndim == 0:
        mat = mat.reshape(1, 1)
    if mat.shape != (n, n):
        raise InvalidSystemError(f"{name}({sigma}) has shape {mat.shape}, expected {(n, n)}")
    return mat


def kernel_window(grid: PeriodicGrid, sigma: float):
    """Trapezoid nodes/weights for the moving window [sigma - r, sigma].

    Returns (taus, weights, n_uniform): the first n_uniform nodes are the
    grid-aligned points sigma - j*h (so that during stepping every interior
    node refers to already-known history); an extra node at the exact lower
    endpoint sigma - r is appended when r is not a whole number of steps.
    """
    r = grid.memory_depth
    h = grid.step
    nh = grid.history_points
    if nh == 0 or r == 0.0:
        return np.array([sigma]), np.array([0.0]), 1
    if nh == 1:
        taus = np.array([sigma, sigma - r])
        return taus, np.array([r / 2.0, r / 2.0]), 1
    taus = sigma - np.arange(nh) * h
    w = np.full(nh, h)
    w[0] = h / 2.0
    w[-1] = h / 2.0
    bottom = r - (nh - 1) * h
    if bottom > 1e-12 * h:
        taus = np.append(taus, sigma - r)
        w[-1] += bottom / 2.0
        w = np.append(w, bottom / 2.0)
    return taus, w, nh


def simpson_window(grid: PeriodicGrid, sigma: float):
    """Composite-Simpson nodes/weights on [sigma - r, sigma], grid-aligned.

    Simpson covers [sigma - M*h, sigma] with M even; the short remainder down
    to sigma - r (at most two steps wide, where an admissible kernel is near
    its truncation floor) is closed with a trapezoid.
    """
    r = grid.memory_depth
    h = grid.step
    nh = grid.history_points
    if nh == 0 or r == 0.0:
        return np.array([sigma]), np.array([0.0]), 1
    if nh < 4:
        return kernel_window(grid, sigma)
    m = nh - 1 if (nh - 1) % 2 == 0 else nh - 2
    taus = sigma - np.arange(m + 1) * h
    w = np.full(m + 1, 2.0)
    w[1::2] = 4.0
    w[0] = 1.0
    w[-1] = 1.0
    w *= h / 3.0
    bottom = r - m * h
    if bottom > 1e-12 * h:
        taus = np.append(taus, sigma - r)
        w[-1] += bottom / 2.0
        w = np.append(w, bottom / 2.0)
    return taus, w, m + 1


@dataclass
class ValidationReport:
    passed: bool
    coefficient_residual: float
    tap_residuals: tuple
    kernel_residual: float
    kernel_integral_bound: float
    messages: tuple = ()


def validate_system(system: LinearMemorySystem, grid: PeriodicGrid) -> ValidationReport:
    """Check Sigma-periodicity of A and B_i, bi-periodicity of K, and the
    boundedness of the kernel integral, on the grid nodes of [-r, Sigma]."""
    sig = grid.period
    nodes = np.concatenate([grid.segment_nodes[:-1], grid.period_nodes])
    msgs = []

    def residual_of(evaluator, name):
        res = 0.0
        for s in nodes:
            m0 = evaluator(s)
            m1 = evaluator(s + sig)
            if not (np.all(np.isfinite(m0)) and np.all(np.isfinite(m1))):
                raise InvalidSystemError(f"non-finite {name} at node sigma={s}")
            res = max(res, float(np.max(np.abs(m1 - m0))))
        return res

    coeff_res = residual_of(system.eval_coefficient, "A")
    tap_res = tuple(
        residual_of(lambda s, t=tap: system.eval_tap(t, s), "B") for tap in system.delay_taps
    )
    kern_res = 0.0
    bound = 0.0
    if system.kernel is not None:
        for s in grid.period_nodes:
            taus, w, _ = kernel_window(grid, s)
            k0 = system.eval_kernel(s, taus)
            k1 = system.eval_kernel(s + sig, taus + sig)
            if not (np.all(np.isfinite(k0)) and np.all(np.isfinite(k1))):
                raise InvalidSystemError(f"non-finite kernel at node sigma={s}")
            kern_res = max(kern_res, float(np.max(np.abs(k1 - k0))))
            norms = np.linalg.norm(k0, axis=(1, 2))
            bound = max(bound, float(np.dot(w, norms)))
    passed = coeff_res <= VALIDATION_TOL and kern_res <= VALIDATION_TOL and np.isfinite(bound)
    for i, tr in enumerate(tap_res):
        if tr > VALIDATION_TOL:
            passed = False
            msgs.append(f"delay tap {i} periodicity residual {tr:.3e}")
    if coeff_res > VALIDATION_TOL:
        msgs.append(f"coefficient periodicity residual {coeff_res:.3e}")
    if kern_res > VALIDATION_TOL:
        msgs.append(f"kernel bi-periodicity residual {kern_res:.3e}")
    return ValidationReport(passed, coeff_res, tap_res, kern_res, bound, tuple(msgs))


def apply_operator_from_samples(
    system: LinearMemorySystem,
    grid: PeriodicGrid,
    z: np.ndarray,
    t0: float,
    sigma,
    shift: float = 0.0,
) -> np.ndarray:
    """Evaluate L{z(. + shift)}(sigma) from uniform samples of z starting at t0.

    Memory integrals use the trapezoid window; delayed and off-node values use
    piecewise-cubic interpolation.
    """
    h = grid.step
    sigma = float(sigma)

    def z_at(times):
        return interp_uniform(z, t0, h, np.asarray(times) + shift)

    out = system.eval_coefficient(sigma) @ z_at([sigma])[0]
    for tap in system.delay_taps:
        out = out + system.eval_tap(tap, sigma) @ z_at([sigma - tap.delay])[0]
    if system.kernel is not None:
        taus, w, _ = kernel_window(grid, sigma)
        kmat = system.eval_kernel(sigma, taus)
        vals = z_at(taus)
        out = out + np.einsum("t,tij,tj->i", w, kmat, vals)
    return out


def shift_commutation_residual(
    system: LinearMemorySystem, grid: PeriodicGrid, probe: StateSegment
) -> float:
    """max-norm of L{T z} - T{L z} on one period, with z the probe extended by
    integration over [0, 2*Sigma]. Zero to quadrature accuracy iff the system
    commutes with the period shift (bi-periodic coefficients)."""
    from .integrate import propagate_history

    sig = grid.period
    n_steps = 2 * grid.samples_per_period
    hist0 = probe.samples[:, :, None].astype(float)
    hist = propagate_history(system, grid, hist0, n_steps, include_forcing=False)
    z = hist[:, :, 0]
    t0 = -grid.history_points * grid.step
    res = 0.0
    for s in grid.period_nodes:
        lhs = apply_operator_from_samples(system, grid, z, t0, s, shift=sig)
        rhs = apply_operator_from_samples(system, grid, z, t0, s + sig, shift=0.0)
        res = max(res, float(np.max(np.abs(lhs - rhs))))
    return res


def tabulated_coefficient(samples: np.ndarray, period: float) -> Callable:
    """Adapter turning uniform samples of a Sigma-periodic matrix over [0, Sigma)
    into an evaluator (cubic periodic interpolation)."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples.reshape(-1, 1, 1)

    def evaluator(sigma):
        return periodic_interp(samples, period, sigma)[0]

    return evaluator


def difference_kernel(profile: Callable, scale=None) -> Callable:
    """Kernel K(sigma, tau) = C * profile(sigma - tau); constant-coefficient
    difference kernels are automatically bi-periodic."""

    def kernel(sigma, taus):
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        vals = np.asarray(profile(sigma - taus), dtype=float)
        if scale is None:
            return vals.reshape(len(taus), 1, 1)
        c = np.asarray(scale, dtype=float)
        return vals[:, None, None] * c[None, :, :]

    return kernel
