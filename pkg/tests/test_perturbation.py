import numpy as np
import pytest

from gfloquet import (
    DelayTap, InvalidSystemError, LimitCycle, LinearMemorySystem,
    NonlinearMemorySystem, PeriodicGrid, StateSegment, floquet_spectrum,
    forced_response, linearize, stability_verdict, step_integrate,
    variation_of_constants_response,
)


def _cubic_cycle(nodes=64):
    ts = np.linspace(0.0, 1.0, nodes + 1)
    return LimitCycle(1.0, (0.5 + 0.3 * np.cos(2 * np.pi * ts)).reshape(-1, 1))


def test_limit_cycle_wrap_enforced():
    samples = np.linspace(0.0, 1.0, 17).reshape(-1, 1)  # endpoint mismatch
    with pytest.raises(InvalidSystemError):
        LimitCycle(1.0, samples)


def test_linearize_cubic_oracle():
    cycle = _cubic_cycle()
    nl = NonlinearMemorySystem(
        1, lambda y, t: np.array([-y[0] ** 3 + np.cos(2 * np.pi * t)]))
    lin = linearize(nl, cycle, fd_step=1e-6)
    for t in np.linspace(0.0, 1.0, 13):
        exact = -3.0 * cycle.at(t)[0, 0] ** 2
        assert abs(lin.eval_coefficient(t)[0, 0] - exact) < 2e-6 ** 2 * 100 + 1e-9


def test_linearize_exact_for_linear_field():
    m = np.array([[0.1, -0.4], [0.7, -0.2]])
    nl = NonlinearMemorySystem(2, lambda y, t: m @ y)
    ts = np.linspace(0.0, 1.0, 33)
    cyc = LimitCycle(1.0, np.stack([np.cos(2 * np.pi * ts), np.sin(2 * np.pi * ts)], 1),
                     wrap_tol=1e-8)
    lin = linearize(nl, cyc, fd_step=1e-4)
    assert np.max(np.abs(lin.eval_coefficient(0.37) - m)) < 1e-10


def test_linearize_memory_field_derivative():
    tap = DelayTap(0.5, lambda t: np.array([[1.0]]))
    nl = NonlinearMemorySystem(
        1, lambda y, t: np.array([-y[0]]),
        memory_field=lambda y, t: np.array([y[0] ** 2]),
        delay_taps=(tap,), memory_depth=0.5)
    cyc = LimitCycle(1.0, np.full((33, 1), 2.0))
    lin = linearize(nl, cyc, fd_step=1e-6)
    got = lin.eval_tap(lin.delay_taps[0], 0.2)[0, 0]
    assert abs(got - 4.0) < 1e-8


def test_linearize_jacobian_order():
    cycle = _cubic_cycle()
    nl = NonlinearMemorySystem(
        1, lambda y, t: np.array([-y[0] ** 3 + np.cos(2 * np.pi * t)]))
    errs = []
    for step in (2e-4, 1e-4):
        lin = linearize(nl, cycle, fd_step=step)
        errs.append(max(
            abs(lin.eval_coefficient(t)[0, 0] + 3.0 * cycle.at(t)[0, 0] ** 2)
            for t in np.linspace(0.0, 1.0, 9)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)


def test_linearize_rejects_bad_fd_step():
    cycle = _cubic_cycle()
    nl = NonlinearMemorySystem(1, lambda y, t: np.array([-y[0]]))
    with pytest.raises(ValueError):
        linearize(nl, cycle, fd_step=0.5)


def test_linearize_nonfinite_jacobian():
    cycle = _cubic_cycle()
    nl = NonlinearMemorySystem(1, lambda y, t: np.array([np.inf * y[0]]))
    lin = linearize(nl, cycle, fd_step=1e-6)
    with pytest.raises(InvalidSystemError):
        lin.eval_coefficient(0.0)


def _dec_from_multipliers(mus, period=1.0):
    from gfloquet.monodromy import FloquetDecomposition, principal_exponents

    mus = np.asarray(mus, dtype=complex)
    return FloquetDecomposition(
        multipliers=mus,
        exponents=principal_exponents(mus, period),
        converged=np.ones(len(mus), dtype=bool),
        modes=(),
        p_retained=len(mus),
        grid=PeriodicGrid(period, 16, 0.0),
    )


def test_verdict_stable_non_autonomous():
    rep = stability_verdict(_dec_from_multipliers([0.9, 0.5]))
    assert rep.verdict == "STABLE"
    assert rep.trivial_multiplier is None


def test_verdict_autonomous_trivial_identified():
    rep = stability_verdict(_dec_from_multipliers([1.0001, 0.3]), autonomous=True)
    assert rep.verdict == "STABLE"
    assert rep.trivial_multiplier == pytest.approx(1.0001)
    assert rep.trivial_error == pytest.approx(1e-4, rel=1e-6)
    assert rep.decisive_magnitude == pytest.approx(0.3)


def test_verdict_unstable_and_marginal():
    assert stability_verdict(_dec_from_multipliers([1.1, 0.2])).verdict == "UNSTABLE"
    assert stability_verdict(_dec_from_multipliers([1.0004, 0.2])).verdict == "MARGINAL"


def test_verdict_empty_raises():
    dec = _dec_from_multipliers([0.5])
    object.__setattr__(dec, "converged", np.zeros(1, dtype=bool))
    with pytest.raises(ValueError):
        stability_verdict(dec)


def test_van_der_pol_stability(vdp_cycle):
    period, samples = vdp_cycle
    cycle = LimitCycle(period, samples, wrap_tol=1e-6)
    nl = NonlinearMemorySystem(
        2, lambda y, t: np.array([y[1], (1.0 - y[0] ** 2) * y[1] - y[0]]))
    lin = linearize(nl, cycle, fd_step=1e-6)
    grid = PeriodicGrid(period, 256, 0.0)
    dec = floquet_spectrum(lin, grid, modes=2)
    rep = stability_verdict(dec, autonomous=True, cycle=cycle)
    assert rep.verdict == "STABLE"
    assert rep.trivial_error < 1e-3
    assert rep.decisive_magnitude < 1.0
    assert rep.phase_mode_shape is not None
    # trivial mode shape check: dy_S/dt should match the vector field
    mid = len(cycle.samples) // 3
    t_mid = mid * period / (len(cycle.samples) - 1)
    f_mid = nl.vector_field(cycle.samples[mid], t_mid)
    assert np.max(np.abs(rep.phase_mode_shape[mid] - f_mid)) < 1e-5


def test_forced_scalar_textbook():
    system = LinearMemorySystem(1, lambda t: np.array([[-1.0]]),
                                forcing=lambda t: np.array([1.0]))
    grid = PeriodicGrid(1.0, 128, 0.0)
    traj = forced_response(system, grid, StateSegment(grid, np.zeros((1, 1))), 3.0)
    exact = 1.0 - np.exp(-traj.times)
    assert np.max(np.abs(traj.values[:, 0] - exact)) < 1e-8


def test_forced_matches_variation_of_constants():
    a = np.array([[0.0, 1.0], [-4.0, -0.1]])
    system = LinearMemorySystem(
        2, lambda t: a,
        forcing=lambda t: np.array([np.sin(2 * np.pi * t), np.cos(2 * np.pi * t)]))
    grid = PeriodicGrid(1.0, 512, 0.0)
    z0 = np.array([0.3, -0.2])
    traj = forced_response(system, grid, StateSegment(grid, z0.reshape(1, -1)), 2.0)
    oracle = variation_of_constants_response(system, grid, z0, 2.0)
    assert np.max(np.abs(traj.values - oracle.values)) < 1e-7


def test_forced_zero_forcing_matches_homogeneous():
    system = LinearMemorySystem(1, lambda t: np.array([[-0.7]]),
                                forcing=lambda t: np.array([0.0]))
    grid = PeriodicGrid(1.0, 64, 0.0)
    seg = StateSegment(grid, np.array([[1.2]]))
    forced = forced_response(system, grid, seg, 2.0)
    plain = step_integrate(system, grid, seg, 2.0)
    assert np.array_equal(forced.values, plain.values)


def test_forced_linearity():
    a = np.array([[-0.5, 0.3], [-0.3, -0.5]])
    grid = PeriodicGrid(1.0, 64, 0.0)
    zero = StateSegment(grid, np.zeros((1, 2)))

    def run(forcing):
        system = LinearMemorySystem(2, lambda t: a, forcing=forcing)
        return forced_response(system, grid, zero, 2.0).values

    b1 = lambda t: np.array([np.sin(2 * np.pi * t), 0.0])
    b2 = lambda t: np.array([0.0, np.cos(2 * np.pi * t)])
    combo = lambda t: 2.0 * b1(t) - 0.5 * b2(t)
    lhs = run(combo)
    rhs = 2.0 * run(b1) - 0.5 * run(b2)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_exponent_class_reconstruction_invariance():
    # z = r e^{lam s} is unchanged under lam -> lam + 2 pi i / T with
    # r -> r e^{-2 pi i s / T}
    from gfloquet.builtins import delay_pi_over_2

    system, meta = delay_pi_over_2()
    grid = PeriodicGrid(1.0, 96, 1.0)
    dec = floquet_spectrum(system, grid, modes=2)
    mode = dec.modes[0]
    sig = np.arange(grid.samples_per_period + 1) * grid.step
    lam = mode.exponent
    z1 = mode.samples[:, 0] * np.exp(lam * sig)
    shift = 2j * np.pi / grid.period
    z2 = (mode.samples[:, 0] * np.exp(-shift * sig)) * np.exp((lam + shift) * sig)
    assert np.max(np.abs(z1 - z2)) < 1e-8
