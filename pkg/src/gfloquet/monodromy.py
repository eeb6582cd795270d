"""Monodromy operators, Floquet spectra, periodic modes, and decomposition checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.sparse.linalg

from .grid import PeriodicGrid, interp_uniform
from .integrate import propagate_history
from .system import LinearMemorySystem, kernel_window

DEFAULT_CONVERGENCE_TOL = 1e-4
DEFAULT_MODES = 8
_DENSE_EIG_LIMIT = 900


class ConvergenceError(RuntimeError):
    pass


class NonTruncatableError(RuntimeError):
    pass


@dataclass(frozen=True)
class MonodromyOperator:
    """Dense representation of the period-shift map on discretized history segments."""

    matrix: np.ndarray = field(repr=False)
    grid: PeriodicGrid
    fingerprint: str

    def __post_init__(self):
        mat = np.asarray(self.matrix)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("monodromy matrix must be square")
        if not np.all(np.isfinite(mat)):
            raise ValueError("monodromy matrix must be finite")

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class PeriodicMode:
    multiplier: complex
    exponent: complex
    samples: np.ndarray = field(repr=False)  # (N+1, n) complex, r_j on one period
    periodicity_residual: float = 0.0


@dataclass(frozen=True)
class FloquetDecomposition:
    multipliers: np.ndarray  # sorted: |mu| descending, ties by ascending phase
    exponents: np.ndarray  # principal branch, Im in (-pi/Sigma, pi/Sigma]
    converged: np.ndarray  # bool per multiplier (two-grid agreement)
    modes: tuple  # PeriodicMode for the leading retained multipliers
    p_retained: int
    grid: PeriodicGrid
    refined_multipliers: np.ndarray = field(default=None, repr=False)

    @property
    def retained(self) -> np.ndarray:
        return self.multipliers[self.converged]


def sort_multipliers(mus: np.ndarray):
    """Deterministic total order: magnitude descending, ties by ascending phase."""
    mus = np.asarray(mus)
    phase = np.angle(mus)
    phase = np.where(phase <= -np.pi, np.pi, phase)
    return np.lexsort((phase, -np.abs(mus)))


def principal_exponents(mus: np.ndarray, period: float) -> np.ndarray:
    phase = np.angle(mus)
    phase = np.where(phase <= -np.pi, np.pi, phase)
    with np.errstate(divide="ignore"):
        return (np.log(np.abs(mus)) + 1j * phase) / period


def build_monodromy(
    system: LinearMemorySystem,
    grid: PeriodicGrid,
    quadrature: str = "trapezoid",
) -> MonodromyOperator:
    """Column j of the result is the history segment at time Sigma reached from
    the j-th canonical unit segment (forcing is ignored)."""
    n = system.dimension
    nh = grid.history_points
    m = grid.state_size(n)
    hist0 = np.eye(m).reshape(nh + 1, n, m)
    hist = propagate_history(system, grid, hist0, grid.samples_per_period,
                             include_forcing=False, quadrature=quadrature)
    u = hist[-(nh + 1):].reshape(m, m)
    return MonodromyOperator(u, grid, system.fingerprint(grid))


def _eig_leading(matrix: np.ndarray, k: int) -> np.ndarray:
    """Leading-magnitude eigenvalues; dense for small operators, ARPACK otherwise."""
    m = matrix.shape[0]
    if m <= _DENSE_EIG_LIMIT or k >= m - 2:
        return scipy.linalg.eigvals(matrix)
    try:
        return scipy.sparse.linalg.eigs(
            matrix, k=min(k, m - 2), which="LM", return_eigenvectors=False
        )
    except scipy.sparse.linalg.ArpackNoConvergence as err:
        if len(err.eigenvalues):
            return err.eigenvalues
        return scipy.linalg.eigvals(matrix)


def floquet_spectrum(
    system: LinearMemorySystem,
    grid: PeriodicGrid,
    modes: int = DEFAULT_MODES,
    convergence_tol: float = DEFAULT_CONVERGENCE_TOL,
    refine_factor: int = 2,
    quadrature: str = "trapezoid",
    operator: Optional[MonodromyOperator] = None,
) -> FloquetDecomposition:
    """Eigen-decompose the monodromy operator at the requested grid and flag as
    converged the multipliers that persist under grid refinement. Spurious
    discretization eigenvalues drift under refinement and stay unflagged."""
    if operator is None:
        operator = build_monodromy(system, grid, quadrature=quadrature)
    mus, vecs = scipy.linalg.eig(operator.matrix)
    grid_f = grid.refined(refine_factor)
    op_f = build_monodromy(system, grid_f, quadrature=quadrature)
    mus_f = _eig_leading(op_f.matrix, k=max(4 * modes, 32))

    order = sort_multipliers(mus)
    mus = mus[order]
    vecs = vecs[:, order]
    scale = np.maximum.outer(np.abs(mus), np.abs(mus_f))
    dist = np.abs(mus[:, None] - mus_f[None, :]) / np.maximum(scale, 1e-300)
    converged = np.any(dist <= convergence_tol, axis=1)
    p_retained = int(np.count_nonzero(converged))
    if p_retained == 0:
        raise ConvergenceError(
            "no multiplier agreed between the two grids; refine the grid "
            f"(N={grid.samples_per_period}) or relax convergence_tol"
        )
    exponents = principal_exponents(mus, grid.period)
    mode_list = []
    for j in np.nonzero(converged)[0][:modes]:
        if abs(mus[j]) < 1e-12:
            continue
        mode_list.append(
            extract_mode(operator, mus[j], system, grid,
                         eigenvector=vecs[:, j], quadrature=quadrature)
        )
    return FloquetDecomposition(
        multipliers=mus,
        exponents=exponents,
        converged=converged,
        modes=tuple(mode_list),
        p_retained=p_retained,
        grid=grid,
        refined_multipliers=np.asarray(mus_f),
    )


def extract_mode(
    operator: MonodromyOperator,
    mu: complex,
    system: LinearMemorySystem,
    grid: PeriodicGrid,
    eigenvector: Optional[np.ndarray] = None,
    quadrature: str = "trapezoid",
    match_tol: float = 1e-6,
) -> PeriodicMode:
    """Propagate the eigenvector's history segment over one period and peel off
    the exponential growth, leaving the periodic part r(sigma)."""
    n = system.dimension
    nh = grid.history_points
    if eigenvector is None:
        mus, vecs = scipy.linalg.eig(operator.matrix)
        j = int(np.argmin(np.abs(mus - mu)))
        if abs(mus[j] - mu) > match_tol * max(1.0, abs(mu)):
            raise ValueError(f"{mu} is not an eigenvalue of the monodromy operator")
        mu = mus[j]
        eigenvector = vecs[:, j]
    lam = complex(principal_exponents(np.array([mu]), grid.period)[0])
    seg = np.asarray(eigenvector, dtype=complex).reshape(nh + 1, n)
    hist = propagate_history(system, grid, seg[:, :, None], grid.samples_per_period,
                             include_forcing=False, quadrature=quadrature)
    z = hist[nh:, :, 0]
    t = np.arange(grid.samples_per_period + 1) * grid.step
    r = z * np.exp(-lam * t)[:, None]
    node_mag = np.linalg.norm(r, axis=1)
    residual = float(np.linalg.norm(r[-1] - r[0]) / max(node_mag.max(), 1e-300))
    # deterministic normalization: unit max node magnitude, leading component real
    k_star = int(np.argmax(node_mag > node_mag.max() * (1 - 1e-12)))
    c = r[k_star, int(np.argmax(np.abs(r[k_star])))]
    r = r * (abs(c) / c) / node_mag[k_star]
    return PeriodicMode(complex(mu), lam, r, residual)


@dataclass
class VerificationReport:
    shift_residual: float
    mode_periodicity_residuals: tuple
    operator_residuals: tuple  # per mode: dr/ds + lam r - exp(-lam s) L{exp(lam s) r}
    max_residual: float


def _mode_operator_residual(system, grid, mode: PeriodicMode) -> float:
    """Residual of the reduced equation for the periodic part, with the
    derivative by 4th-order centered differences on the periodic samples."""
    from .grid import periodic_interp

    n = system.dimension
    big_n = grid.samples_per_period
    h = grid.step
    lam = mode.exponent
    r = mode.samples[:big_n]  # drop the wrap node
    idx = np.arange(big_n)
    dr = (
        -r[(idx + 2) % big_n] + 8 * r[(idx + 1) % big_n]
        - 8 * r[(idx - 1) % big_n] + r[(idx - 2) % big_n]
    ) / (12 * h)

    def w_at(taus):
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        return periodic_interp(r, grid.period, taus) * np.exp(lam * taus)[:, None]

    res = 0.0
    for k in range(big_n):
        s = k * h
        lw = system.eval_coefficient(s).astype(complex) @ w_at(s)[0]
        for tap in system.delay_taps:
            lw = lw + system.eval_tap(tap, s) @ w_at(s - tap.delay)[0]
        if system.kernel is not None:
            taus, w, _ = kernel_window(grid, s)
            kmat = system.eval_kernel(s, taus)
            vals = w_at(taus)
            lw = lw + np.einsum("t,tij,tj->i", w, kmat, vals)
        resid = dr[k] + lam * r[k] - np.exp(-lam * s) * lw
        res = max(res, float(np.max(np.abs(resid))))
    return res / max(float(np.abs(mode.samples).max()), 1e-300)


def verify_floquet_form(
    system: LinearMemorySystem,
    grid: PeriodicGrid,
    decomposition: FloquetDecomposition,
    quadrature: str = "trapezoid",
) -> VerificationReport:
    """Check the three decomposition identities: the period-shift relation
    X(s+Sigma) = X(s) C over one period, periodicity of the stored modes, and
    the reduced equation satisfied by each periodic part."""
    n = system.dimension
    nh = grid.history_points
    m = grid.state_size(n)
    big_n = grid.samples_per_period
    hist0 = np.eye(m).reshape(nh + 1, n, m)
    hist = propagate_history(system, grid, hist0, 2 * big_n,
                             include_forcing=False, quadrature=quadrature)
    u = hist[big_n : big_n + nh + 1].reshape(m, m)
    u_norm = max(float(np.linalg.norm(u)), 1e-300)
    shift_res = 0.0
    for k in range(big_n + 1):
        s_k = hist[k : k + nh + 1].reshape(m, m)
        s_k_shift = hist[k + big_n : k + big_n + nh + 1].reshape(m, m)
        shift_res = max(shift_res, float(np.linalg.norm(s_k_shift - s_k @ u)) / u_norm)
    mode_res = tuple(mode.periodicity_residual for mode in decomposition.modes)
    op_res = tuple(_mode_operator_residual(system, grid, mode) for mode in decomposition.modes)
    all_res = (shift_res,) + mode_res + op_res
    return VerificationReport(shift_res, mode_res, op_res, max(all_res))


def _kernel_norms(kernel: Callable, dim_hint: int, sigma: float, taus: np.ndarray) -> np.ndarray:
    taus = np.asarray(taus, dtype=float)
    try:
        vals = np.asarray(kernel(sigma, taus), dtype=float)
        if vals.shape == (len(taus),):
            return np.abs(vals)
        if vals.ndim == 3 and vals.shape[0] == len(taus):
            return np.linalg.norm(vals, axis=(1, 2))
    except (TypeError, ValueError):
        pass
    out = np.empty(len(taus))
    for i, tau in enumerate(taus):
        out[i] = np.linalg.norm(np.atleast_2d(kernel(sigma, tau)))
    return out


def truncate_infinite_kernel(
    kernel: Callable,
    reference_amplitude,
    eps: float,
    grid: PeriodicGrid,
    max_doublings: int = 60,
) -> float:
    """Smallest grid-aligned memory depth r such that the kernel tail beyond r,
    weighted by the periodic reference amplitude, integrates below eps."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if callable(reference_amplitude):
        bound = reference_amplitude
    else:
        amp = float(reference_amplitude)
        bound = lambda taus: np.full(np.shape(taus), amp)
    h = grid.step
    sigmas = grid.period_nodes[:: max(1, grid.samples_per_period // 16)]

    def tail(r: float) -> float:
        worst = 0.0
        for sigma in sigmas:
            upper = sigma - r
            total = 0.0
            width = max(grid.period, r, 1.0)
            converged = False
            for _ in range(max_doublings):
                xs = np.linspace(upper - width, upper, 129)
                g = _kernel_norms(kernel, 1, sigma, xs) * np.asarray(bound(xs), dtype=float)
                block = float(scipy.integrate.trapezoid(g, xs))
                total += block
                if block < eps * 1e-3:
                    converged = True
                    break
                upper -= width
                width *= 2.0
            if not converged:
                raise NonTruncatableError(
                    "kernel tail integral failed to decay; the memory cannot be truncated"
                )
            worst = max(worst, total)
        return worst

    if tail(0.0) < eps:
        return 0.0
    r = h
    for _ in range(max_doublings):
        if tail(r) < eps:
            break
        r *= 2.0
    else:
        raise NonTruncatableError("no finite memory depth reached the requested tolerance")
    lo, hi = r / 2.0, r
    while hi - lo > h / 4.0:
        mid = 0.5 * (lo + hi)
        if tail(mid) < eps:
            hi = mid
        else:
            lo = mid
    return math.ceil(hi / h - 1e-9) * h
