"""Fixed-step RK4 integration of memory systems by the method of steps.

Delayed and convolution lookups only ever refer to already-computed history
(delays are required to be at least one step), so every step is explicit.
Several columns can be propagated at once by stacking them on a trailing axis;
the monodromy builder uses this to evolve all basis segments together.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import PeriodicGrid, StateSegment, interp_uniform
from .system import LinearMemorySystem, kernel_window, simpson_window

# cubic Lagrange weights at a half-step offset (centered and one-sided stencils)
_HALF_CENTERED = (-0.0625, 0.5625, 0.5625, -0.0625)
_HALF_ONESIDED = (0.0625, -0.3125, 0.9375, 0.3125)


class ResolutionError(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    values: np.ndarray  # (len(times), n)

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def _window_values(hist, known, grid, sigma, t, Z, taus, n_uni):
    """State samples on the kernel window nodes (taus[0] == sigma -> stage value).

    taus[1:n_uni] are the grid-aligned nodes sigma - j*h; at RK4 stage offsets
    they either coincide with stored rows or sit at a fixed half-step offset,
    so their values come from plain (reversed) slices of the history buffer.
    """
    nh = grid.history_points
    h = grid.step
    vals = np.empty((len(taus),) + hist.shape[1:], dtype=hist.dtype)
    vals[0] = Z
    if len(taus) == 1:
        return vals
    frac = (sigma - t) / h
    if n_uni >= 2:
        if abs(frac) < 1e-9:
            vals[1:n_uni] = hist[known - n_uni + 1 : known][::-1]
        elif abs(frac - 1.0) < 1e-9:
            vals[1:n_uni] = hist[known - n_uni + 2 : known + 1][::-1]
        elif abs(frac - 0.5) < 1e-9 and known >= 3:
            c = _HALF_ONESIDED
            vals[1] = (
                c[0] * hist[known - 3]
                + c[1] * hist[known - 2]
                + c[2] * hist[known - 1]
                + c[3] * hist[known]
            )
            if n_uni > 2:
                c = _HALF_CENTERED
                a = known - n_uni
                vals[2:n_uni] = (
                    c[0] * hist[a : known - 2][::-1]
                    + c[1] * hist[a + 1 : known - 1][::-1]
                    + c[2] * hist[a + 2 : known][::-1]
                    + c[3] * hist[a + 3 : known + 1][::-1]
                )
        else:
            vals[1:n_uni] = interp_uniform(hist[: known + 1], -nh * h, h, taus[1:n_uni])
    if len(taus) > n_uni:  # exact lower endpoint sigma - r, off the node lattice
        vals[n_uni:] = interp_uniform(hist[: known + 1], -nh * h, h, taus[n_uni:])
    return vals


def propagate_history(
    system: LinearMemorySystem,
    grid: PeriodicGrid,
    hist0: np.ndarray,
    n_steps: int,
    include_forcing: bool = False,
    quadrature: str = "trapezoid",
) -> np.ndarray:
    """Advance the initial history block n_steps; returns (nh+1+n_steps, n, m)."""
    n = system.dimension
    nh = grid.history_points
    h = grid.step
    hist0 = np.asarray(hist0)
    if hist0.ndim == 2:
        hist0 = hist0[:, :, None]
    if hist0.shape[:2] != (nh + 1, n):
        raise ValueError(f"initial history has shape {hist0.shape}, expected ({nh + 1}, {n}, m)")
    for tap in system.delay_taps:
        if tap.delay < h * (1 - 1e-9):
            raise ResolutionError(
                f"delay {tap.delay} is not resolved by step {h}; refine the grid"
            )
        if tap.delay > grid.memory_depth * (1 + 1e-9):
            raise ResolutionError(f"delay {tap.delay} exceeds memory depth {grid.memory_depth}")
    dtype = np.result_type(hist0.dtype, float)
    hist = np.zeros((nh + 1 + n_steps, n, hist0.shape[2]), dtype=dtype)
    hist[: nh + 1] = hist0
    use_kernel = system.kernel is not None and nh > 0
    if quadrature == "trapezoid":
        window = kernel_window
    elif quadrature == "simpson":
        window = simpson_window
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    t0 = -nh * h

    def rhs(sigma, Z, known, t):
        d = system.eval_coefficient(sigma) @ Z
        for tap in system.delay_taps:
            tau = sigma - tap.delay
            # the solution has a derivative kink where the initial history ends;
            # keep the interpolation stencil on one side of it
            if tau <= 0.0:
                zd = interp_uniform(hist[: nh + 1], t0, h, tau)[0]
            else:
                zd = interp_uniform(hist[nh : known + 1], 0.0, h, tau)[0]
            d = d + system.eval_tap(tap, sigma) @ zd
        if use_kernel:
            taus, w, n_uni = window(grid, sigma)
            kmat = system.eval_kernel(sigma, taus)
            vals = _window_values(hist, known, grid, sigma, t, Z, taus, n_uni)
            nt = len(taus)
            wk = (w[:, None, None] * kmat).transpose(1, 0, 2).reshape(n, nt * n)
            d = d + wk @ vals.reshape(nt * n, -1)
        if include_forcing and system.forcing is not None:
            d = d + system.eval_forcing(sigma)[:, None]
        return d

    for step in range(n_steps):
        known = nh + step
        t = step * h
        Z = hist[known]
        k1 = rhs(t, Z, known, t)
        k2 = rhs(t + 0.5 * h, Z + 0.5 * h * k1, known, t)
        k3 = rhs(t + 0.5 * h, Z + 0.5 * h * k2, known, t)
        k4 = rhs(t + h, Z + h * k3, known, t)
        hist[known + 1] = Z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return hist


def _check_span(grid: PeriodicGrid, span: float) -> int:
    steps = span / grid.step
    n_steps = int(round(steps))
    if n_steps < 1 or abs(steps - n_steps) > 1e-9 * max(1.0, steps):
        raise ValueError(f"span {span} is not a positive multiple of the step {grid.step}")
    return n_steps


def step_integrate(
    system: LinearMemorySystem,
    grid: PeriodicGrid,
    initial: StateSegment,
    span: float,
    quadrature: str = "trapezoid",
) -> Trajectory:
    """Integrate the homogeneous system from the initial history over [0, span]."""
    n_steps = _check_span(grid, span)
    hist = propagate_history(
        system, grid, initial.samples[:, :, None], n_steps, include_forcing=False,
        quadrature=quadrature,
    )
    nh = grid.history_points
    times = np.arange(n_steps + 1) * grid.step
    return Trajectory(times, hist[nh:, :, 0])
