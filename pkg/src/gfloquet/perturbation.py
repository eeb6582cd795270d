"""Linearization about limit cycles, stability verdicts, and forced responses."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.integrate

from .grid import PeriodicGrid, StateSegment, periodic_interp
from .integrate import Trajectory, _check_span, propagate_history
from .monodromy import FloquetDecomposition
from .system import DelayTap, InvalidSystemError, LinearMemorySystem, kernel_window


@dataclass(frozen=True)
class NonlinearMemorySystem:
    """dy/dt = f(y, t) + L'{g(y, t), t} with L' built from delay taps and/or a
    bi-periodic convolution kernel acting on g."""

    dimension: int
    vector_field: Callable  # f(y, t) -> n-vector, T-periodic in t
    memory_field: Optional[Callable] = None  # g(y, t) -> n-vector
    delay_taps: tuple = ()  # DelayTap entries applied to g
    kernel: Optional[Callable] = None  # K(t, tau_array) applied to g
    memory_depth: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "delay_taps", tuple(self.delay_taps))
        if (self.delay_taps or self.kernel is not None) and self.memory_field is None:
            raise InvalidSystemError("memory operator given but no memory field g")


@dataclass(frozen=True)
class LimitCycle:
    """T-periodic steady state sampled on N+1 uniform nodes (last row wraps)."""

    period: float
    samples: np.ndarray = field(repr=False)
    provenance: str = "user-supplied"
    wrap_tol: float = 1e-8

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        scale = max(float(np.abs(samples).max()), 1.0)
        wrap = float(np.max(np.abs(samples[-1] - samples[0])))
        if wrap > self.wrap_tol * scale:
            raise InvalidSystemError(
                f"limit cycle endpoint wrap residual {wrap:.3e} exceeds tolerance"
            )
        object.__setattr__(self, "samples", samples)

    @property
    def dimension(self) -> int:
        return self.samples.shape[1]

    def at(self, t):
        return periodic_interp(self.samples[:-1], self.period, t)

    def residual(self, nl: NonlinearMemorySystem, grid: PeriodicGrid) -> float:
        """Max defect of the nonlinear equation on the cycle nodes (5-point
        periodic derivative, trapezoid memory quadrature)."""
        y = self.samples[:-1]
        big_n = y.shape[0]
        h = self.period / big_n
        idx = np.arange(big_n)
        dy = (
            -y[(idx + 2) % big_n] + 8 * y[(idx + 1) % big_n]
            - 8 * y[(idx - 1) % big_n] + y[(idx - 2) % big_n]
        ) / (12 * h)
        res = 0.0
        for k in range(big_n):
            t = k * h
            rhs = np.asarray(nl.vector_field(y[k], t), dtype=float)
            rhs = rhs + _memory_operator_on_cycle(nl, self, grid, t)
            res = max(res, float(np.max(np.abs(dy[k] - rhs))))
        return res


def _memory_operator_on_cycle(nl, cycle, grid, t):
    out = np.zeros(cycle.dimension)
    if nl.memory_field is None:
        return out

    def g_at(taus):
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        ys = cycle.at(taus)
        return np.array([nl.memory_field(y, tau) for y, tau in zip(ys, taus)])

    for tap in nl.delay_taps:
        c = np.atleast_2d(np.asarray(tap.coefficient(t), dtype=float))
        out = out + c @ g_at(t - tap.delay)[0]
    if nl.kernel is not None:
        taus, w, _ = kernel_window(grid, t)
        gv = g_at(taus)
        km = np.asarray(nl.kernel(t, taus), dtype=float)
        if km.ndim == 1:
            km = km.reshape(-1, 1, 1)
        out = out + np.einsum("t,tij,tj->i", w, km, gv)
    return out


def _fd_jacobian(func, y, t, fd_step):
    n = len(y)
    jac = np.empty((n, n))
    for j in range(n):
        step = fd_step * (1.0 + abs(y[j]))
        yp = y.copy(); yp[j] += step
        ym = y.copy(); ym[j] -= step
        with np.errstate(invalid="ignore"):
            jac[:, j] = (np.asarray(func(yp, t)) - np.asarray(func(ym, t))) / (2 * step)
    if not np.all(np.isfinite(jac)):
        raise InvalidSystemError(f"non-finite Jacobian entries at t={t}")
    return jac


def linearize(
    nl: NonlinearMemorySystem,
    cycle: LimitCycle,
    fd_step: float = 1e-6,
    grid: Optional[PeriodicGrid] = None,
) -> LinearMemorySystem:
    """Central-difference Jacobians of f and g along the cycle; the memory
    operator structure (taps, kernel) is carried over onto the linearization."""
    scale = float(np.abs(cycle.samples).max())
    if not (0.0 < fd_step <= 1e-2 * max(scale, 1.0)):
        raise ValueError(f"fd_step {fd_step} outside (0, 1e-2*|y|]")
    n = cycle.dimension

    def coefficient(t):
        return _fd_jacobian(nl.vector_field, cycle.at(t)[0], t, fd_step)

    def g_jacobian(t):
        return _fd_jacobian(nl.memory_field, cycle.at(t)[0], t, fd_step)

    taps = tuple(
        DelayTap(
            tap.delay,
            lambda t, tap=tap: np.atleast_2d(np.asarray(tap.coefficient(t), dtype=float))
            @ g_jacobian(t - tap.delay),
        )
        for tap in nl.delay_taps
    )
    kernel = None
    if nl.kernel is not None:

        def kernel(t, taus):
            taus = np.atleast_1d(np.asarray(taus, dtype=float))
            km = np.asarray(nl.kernel(t, taus), dtype=float)
            if km.ndim == 1:
                km = km.reshape(-1, 1, 1)
            gj = np.array([g_jacobian(tau) for tau in taus])
            return np.einsum("tij,tjk->tik", km, gj)

    return LinearMemorySystem(n, coefficient, delay_taps=taps, kernel=kernel)


@dataclass
class StabilityReport:
    verdict: str  # STABLE | UNSTABLE | MARGINAL
    trivial_multiplier: Optional[complex]
    trivial_error: Optional[float]
    decisive_magnitude: float
    exponent_classes: tuple  # groups of (exponent, multiplier) with shared growth rate
    phase_mode_shape: Optional[np.ndarray] = None  # dy_S/dt samples, for manual checks


def stability_verdict(
    decomposition: FloquetDecomposition,
    autonomous: bool = False,
    unit_tol: float = 1e-3,
    cycle: Optional[LimitCycle] = None,
) -> StabilityReport:
    """Classify the retained spectrum; for autonomous cycles the multiplier
    nearest 1 is the trivial phase mode and is excluded from the verdict."""
    retained = decomposition.retained
    if retained.size == 0:
        raise ValueError("empty retained spectrum; nothing to classify")
    exps = decomposition.exponents[decomposition.converged]
    trivial_mu = None
    trivial_err = None
    mask = np.ones(retained.size, dtype=bool)
    if autonomous:
        j = int(np.argmin(np.abs(retained - 1.0)))
        trivial_mu = complex(retained[j])
        trivial_err = float(abs(retained[j] - 1.0))
        mask[j] = False
    mags = np.abs(retained[mask])
    decisive = float(mags.max()) if mags.size else 0.0
    if decisive < 1.0 - unit_tol:
        verdict = "STABLE"
    elif decisive > 1.0 + unit_tol:
        verdict = "UNSTABLE"
    else:
        verdict = "MARGINAL"
    # group exponents into classes: same real part, imaginary parts equal
    # modulo the base frequency (principal branch makes them equal outright)
    classes = []
    used = np.zeros(retained.size, dtype=bool)
    base = 2 * np.pi / decomposition.grid.period
    for i in range(retained.size):
        if used[i]:
            continue
        members = [(complex(exps[i]), complex(retained[i]))]
        used[i] = True
        for j in range(i + 1, retained.size):
            if used[j]:
                continue
            same_re = abs(exps[i].real - exps[j].real) <= 1e-6 * max(1.0, abs(exps[i].real))
            dk = (exps[i].imag - exps[j].imag) / base
            if same_re and abs(dk - round(dk)) <= 1e-6:
                members.append((complex(exps[j]), complex(retained[j])))
                used[j] = True
        classes.append(tuple(members))
    shape = None
    if autonomous and cycle is not None:
        y = cycle.samples[:-1]
        big_n = y.shape[0]
        h = cycle.period / big_n
        idx = np.arange(big_n)
        shape = (
            -y[(idx + 2) % big_n] + 8 * y[(idx + 1) % big_n]
            - 8 * y[(idx - 1) % big_n] + y[(idx - 2) % big_n]
        ) / (12 * h)
    return StabilityReport(verdict, trivial_mu, trivial_err, decisive, tuple(classes), shape)


def forced_response(
    system: LinearMemorySystem,
    grid: PeriodicGrid,
    initial: StateSegment,
    span: float,
    quadrature: str = "trapezoid",
) -> Trajectory:
    """Direct integration of the inhomogeneous system (forcing included)."""
    n_steps = _check_span(grid, span)
    hist = propagate_history(
        system, grid, initial.samples[:, :, None], n_steps,
        include_forcing=True, quadrature=quadrature,
    )
    times = np.arange(n_steps + 1) * grid.step
    return Trajectory(times, hist[grid.history_points :, :, 0])


def variation_of_constants_response(
    system: LinearMemorySystem,
    grid: PeriodicGrid,
    initial_value: np.ndarray,
    span: float,
) -> Trajectory:
    """Independent cross-check for the memoryless case: z = X(s) c0 +
    int_0^s X(s) X(eta)^-1 b(eta) deta, with the transition matrix from an
    adaptive integrator and the convolution by Simpson quadrature."""
    if grid.history_points != 0 or system.has_memory:
        raise ValueError("variation-of-constants form requires a memoryless system")
    n = system.dimension
    n_steps = _check_span(grid, span)
    times = np.arange(n_steps + 1) * grid.step

    def rhs(t, flat):
        return (system.eval_coefficient(t) @ flat.reshape(n, n)).ravel()

    sol = scipy.integrate.solve_ivp(
        rhs, (0.0, span), np.eye(n).ravel(), t_eval=times,
        rtol=1e-12, atol=1e-14, method="DOP853", dense_output=False,
    )
    if not sol.success:
        raise RuntimeError(f"transition-matrix integration failed: {sol.message}")
    xs = sol.y.T.reshape(-1, n, n)
    integrand = np.array(
        [np.linalg.solve(xs[k], system.eval_forcing(times[k])) for k in range(len(times))]
    )
    values = np.empty((len(times), n))
    c0 = np.asarray(initial_value, dtype=float)
    for k in range(len(times)):
        acc = scipy.integrate.simpson(integrand[: k + 1], x=times[: k + 1], axis=0) if k >= 2 else (
            scipy.integrate.trapezoid(integrand[: k + 1], x=times[: k + 1], axis=0) if k >= 1 else np.zeros(n)
        )
        values[k] = xs[k] @ (c0 + acc)
    return Trajectory(times, values)
