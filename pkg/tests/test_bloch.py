import numpy as np
import pytest
from scipy.optimize import brentq

from gfloquet import (
    InvalidSystemError, NonlocalPotential1D, PeriodicGrid, band_scan,
    bloch_multipliers_collocation, cell_collocation_matrices,
    detect_interior_extrema, fixed_k_energies, kronig_penney_reference,
    local_cell_monodromy, multiplier_phases_to_k, propagating_multipliers,
    refine_bloch_mode_fixed_point, schrodinger_system, validate_potential,
)
from gfloquet.builtins import kronig_penney, separable_nonlocal

FREE = NonlocalPotential1D(1.0)
GRID = PeriodicGrid(1.0, 64, 0.0)


def _kp_discriminant(strength, a, energy):
    q = np.sqrt(energy)
    return np.cos(q * a) + strength * np.sin(q * a) / (q * a)


def test_potential_validation():
    pot, _ = separable_nonlocal()
    rep = validate_potential(pot)
    assert rep.passed
    asym = NonlocalPotential1D(
        1.0, kernel=lambda x, xp: (x - np.asarray(xp)) * 0 + x, kernel_range=0.3)
    assert not validate_potential(asym).passed  # W(x,x') = x is not symmetric


def test_schrodinger_system_free():
    sys_ = schrodinger_system(FREE, 4.0)
    a_mat = sys_.eval_coefficient(0.3)
    assert np.allclose(a_mat, [[0.0, 1.0], [-4.0, 0.0]])
    assert sys_.kernel is None


def test_schrodinger_system_rejects_deltas():
    pot, _ = kronig_penney()
    with pytest.raises(InvalidSystemError):
        schrodinger_system(pot, 1.0)


def test_schrodinger_system_nonlocal_kernel_slot():
    pot, _ = separable_nonlocal(gamma=-5.0)
    sys_ = schrodinger_system(pot, 1.0)
    k = sys_.eval_kernel(0.5, np.array([0.2, 0.4]))
    assert k.shape == (2, 2, 2)
    assert np.allclose(k[:, 0, :], 0.0) and np.allclose(k[:, 1, 1], 0.0)


def test_free_particle_plane_waves():
    ps = propagating_multipliers(FREE, 1.0, GRID)
    assert ps.p == 2
    assert np.min(np.abs(ps.propagating - np.exp(1j))) < 1e-8
    assert np.min(np.abs(ps.propagating - np.exp(-1j))) < 1e-8


def test_free_particle_dispersion():
    for energy in np.linspace(0.1, 9.0, 12):
        ps = propagating_multipliers(FREE, energy, GRID)
        k = max(multiplier_phases_to_k(ps.propagating, 1.0))
        assert abs(k - np.sqrt(energy)) / np.sqrt(energy) < 1e-6


def test_kronig_penney_reference_limits():
    free_ref = kronig_penney_reference(0.0, 1.0, 2.0)
    assert free_ref["allowed"] and free_ref["k"] == pytest.approx(
        np.arccos(np.cos(np.sqrt(2.0))))
    low = kronig_penney_reference(3.0, 1.0, 1e-6)
    assert not low["allowed"]  # D -> 1 + P > 1 as E -> 0+
    with pytest.raises(ValueError):
        kronig_penney_reference(3.0, 1.0, -1.0)


def test_kp_gap_has_real_reciprocal_pair():
    pot, _ = kronig_penney()
    e_gap = 11.0  # inside first gap (band 1 tops out at pi^2)
    assert not kronig_penney_reference(3.0, 1.0, e_gap)["allowed"]
    ps = propagating_multipliers(pot, e_gap, PeriodicGrid(1.0, 128, 0.0))
    assert ps.p == 0
    mus = ps.all_multipliers
    real = mus[np.abs(mus.imag) < 1e-8].real
    assert len(real) == 2
    assert real[0] * real[1] == pytest.approx(1.0, abs=1e-6)  # mu, 1/mu


def test_kp_scan_agrees_with_oracle():
    pot, _ = kronig_penney()
    grid = PeriodicGrid(1.0, 96, 0.0)
    disagreements = 0
    for energy in np.linspace(0.2, 40.0, 80):
        ref = kronig_penney_reference(3.0, 1.0, energy)
        ps = propagating_multipliers(pot, energy, grid)
        assert ps.p in (0, 2)
        if (ps.p == 2) != ref["allowed"]:
            disagreements += 1
    assert disagreements <= 2  # only band-edge grazing may differ


def test_kp_band_edge_bisection():
    pot, _ = kronig_penney()
    grid = PeriodicGrid(1.0, 128, 0.0)
    exact = brentq(lambda e: _kp_discriminant(3.0, 1.0, e) - 1.0, 0.1, 5.0)

    def is_allowed(e):
        return propagating_multipliers(pot, e, grid).p == 2

    lo, hi = exact - 0.3, exact + 0.3
    assert not is_allowed(lo) and is_allowed(hi)
    for _ in range(35):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if is_allowed(mid) else (mid, hi)
    assert abs(0.5 * (lo + hi) - exact) < 1e-4


def test_collocation_matches_transfer_for_free():
    mus = bloch_multipliers_collocation(FREE, 1.0, 64)
    near = mus[np.abs(np.abs(mus) - 1.0) < 1e-3]
    assert np.min(np.abs(near - np.exp(1j))) < 1e-8


def test_collocation_rejects_wide_kernel():
    pot = NonlocalPotential1D(1.0, kernel=lambda x, xp: 0.0 * np.asarray(xp),
                              kernel_range=1.2)
    with pytest.raises(InvalidSystemError):
        cell_collocation_matrices(pot, 1.0, 32)


def test_fixed_k_free_bands():
    pot = NonlocalPotential1D(1.0, kernel=lambda x, xp: 0.0 * np.asarray(xp),
                              kernel_range=0.3)
    got = fixed_k_energies(pot, 1.0, 96, 3)
    exact = sorted((1.0 + 2 * np.pi * m) ** 2 for m in (-1, 0, 1))[:3]
    assert np.max(np.abs(got - exact) / np.abs(exact)) < 1e-4


def test_reciprocal_pairing_nonlocal():
    pot, _ = separable_nonlocal()
    ps = propagating_multipliers(pot, -8.0, GRID)
    mus = ps.all_multipliers
    for mu in mus:
        if 0.05 < abs(mu) < 20.0:
            partner = 1.0 / np.conj(mu)
            assert np.min(np.abs(mus - partner)) < 1e-6 * max(1.0, abs(partner))


def test_band_scan_records_and_invariants():
    pot, _ = separable_nonlocal()
    energies = np.linspace(-13.0, 4.0, 60)
    diagram = band_scan(pot, energies, GRID)
    assert len(diagram.records) == 60
    assert not any(r.failed for r in diagram.records)
    for rec in diagram.records:
        assert rec.p % 2 == 0
        ks = np.array(rec.k_values)
        for k in ks:
            if abs(k - np.pi) > 1e-9:  # zone-edge k has itself as partner
                assert np.min(np.abs(ks + k)) < 1e-6
    assert max(r.p for r in diagram.records) == 4


def test_band_scan_rejects_bad_grid():
    pot, _ = kronig_penney()
    with pytest.raises(ValueError):
        band_scan(pot, [2.0, 1.0], GRID)
    with pytest.raises(ValueError):
        band_scan(pot, [], GRID)


def test_band_scan_parallel_identical():
    pot, _ = kronig_penney()
    energies = np.linspace(0.5, 20.0, 24)
    a = band_scan(pot, energies, GRID, jobs=1)
    b = band_scan(pot, energies, GRID, jobs=4)
    for ra, rb in zip(a.records, b.records):
        assert ra == rb


def test_interior_extremum_nonlocal_only():
    pot, _ = separable_nonlocal()
    diagram = band_scan(pot, np.linspace(-13.5, 4.5, 110), GRID)
    extrema = detect_interior_extrema(diagram)
    assert len(extrema) >= 1
    star = extrema[0]
    assert 0.1 < star.k_star < np.pi - 0.1
    # independent oracle: exact branch energy for a difference kernel is
    # kappa^2 + gamma * profile_FT(kappa); minimise over the folded branch
    us = np.linspace(-0.9, 0.9, 4001)
    win = np.cos(np.pi * us / 1.8) ** 2

    def branch(k):
        kap = k - 2 * np.pi
        ft = np.trapezoid(win * np.cos(2 * np.pi * us) * np.cos(kap * us), us)
        return kap ** 2 - 80.0 * ft

    ks = np.linspace(0.01, np.pi - 0.01, 2000)
    vals = np.array([branch(k) for k in ks])
    k_min = ks[np.argmin(vals)]
    assert abs(star.k_star - k_min) < 0.1
    assert abs(star.energy_star - vals.min()) < 0.3


def test_no_extrema_for_local_potentials():
    grid = GRID
    cases = [
        (FREE, np.linspace(0.05, 45.0, 120)),
        (kronig_penney()[0], np.linspace(0.2, 45.0, 120)),
        (NonlocalPotential1D(1.0, local=lambda x: 5.0 * np.cos(2 * np.pi * x)),
         np.linspace(-4.0, 45.0, 120)),
    ]
    for pot, energies in cases:
        diagram = band_scan(pot, energies, grid)
        assert detect_interior_extrema(diagram) == []
        assert all(r.p in (0, 2) for r in diagram.succeeded)


def test_fixed_point_matches_collocation():
    pot, _ = separable_nonlocal(gamma=-5.0)
    ps = propagating_multipliers(pot, 2.0, GRID)
    assert ps.p == 2
    mu = ps.propagating[np.argmax(np.angle(ps.propagating))]
    psi, iters, history = refine_bloch_mode_fixed_point(pot, 2.0, mu, n_nodes=64)
    assert history[-1] <= 1e-10
    bm, b0, bp = cell_collocation_matrices(pot, 2.0, 64)
    res = (bm / mu + b0 + bp * mu) @ psi
    assert np.max(np.abs(res)) / np.max(np.abs(psi)) < 1e-6


def test_fixed_point_contraction_bound():
    # convergence ratio grows with |gamma|; estimate the contraction constant
    pot_small, _ = separable_nonlocal(gamma=-2.0)
    ps = propagating_multipliers(pot_small, 2.0, GRID)
    mu = ps.propagating[np.argmax(np.angle(ps.propagating))]
    _, _, hist = refine_bloch_mode_fixed_point(pot_small, 2.0, mu, n_nodes=64)
    ratios = [hist[i + 1] / hist[i] for i in range(2, min(8, len(hist) - 1))]
    assert max(ratios) < 1.0  # contraction at this coupling


def test_local_cell_monodromy_det_one():
    pot, _ = kronig_penney()
    u = local_cell_monodromy(pot, 5.0, 128)
    assert np.linalg.det(u) == pytest.approx(1.0, abs=1e-10)  # Wronskian
