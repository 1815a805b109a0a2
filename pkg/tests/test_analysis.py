"""Numerical substrate: potentials, grids, transport, curvature.

Closed-form oracles on the unit interval (Guillemin potential and the
affine ray through it) pin the heavy machinery; the float-wall cases
near facets are asserted at the accuracy float64 actually supports.
"""
import math

import numpy as np
import pytest

from kstab.analysis import (
    Ray,
    ShiftedPotential,
    SmoothedPL,
    abreu_scalar_curvature,
    build_grid,
    bulk_grid,
    collar_depth_for,
    crease_ladder_depth,
    crease_points,
    guillemin_potential,
    line_grid,
    newton_transport,
    ray_state,
    ricci_reference,
    state_csv_rows,
)
from kstab.errors import NewtonDivergence, NonDelzant
from kstab.functionals import mixed_discriminant
from kstab.plconfig import make_config, normalize
from kstab.polytope import box, construct, interval, unit_simplex, volume_data


def interval_config(pieces, mode="min_zero"):
    return normalize(make_config(interval(0, 1), pieces), mode)


AFFINE = interval_config([((1,), 0)])          # g = x
KINK = interval_config([((1,), 0), ((-1,), 1)])  # g = max(x, 1-x)


# -- Guillemin potential ------------------------------------------------------


def test_guillemin_interval_closed_form():
    u0 = guillemin_potential(interval(0, 1))
    pts = np.array([[0.5], [0.25], [1e-12]])
    vals = u0.value(pts)
    assert abs(vals[0] - (-math.log(2.0) / 2.0)) < 1e-14
    expected_quarter = 0.5 * (0.25 * math.log(0.25) + 0.75 * math.log(0.75))
    assert abs(vals[1] - expected_quarter) < 1e-14
    grad = u0.gradient(pts)
    assert abs(grad[0, 0]) < 1e-14
    assert abs(grad[1, 0] - 0.5 * math.log(1.0 / 3.0)) < 1e-14
    hess = u0.hessian(pts)
    assert abs(hess[0, 0, 0] - 2.0) < 1e-13
    assert abs(hess[1, 0, 0] - 8.0 / 3.0) < 1e-13
    # hessian blows up like 1/(2 ell) toward the facet
    assert hess[2, 0, 0] > 1e11


def test_guillemin_square_separates():
    u0 = guillemin_potential(box(2))
    p = np.array([[0.25, 0.5]])
    one_d = guillemin_potential(interval(0, 1))
    expected = one_d.value(np.array([[0.25]]))[0] \
        + one_d.value(np.array([[0.5]]))[0]
    assert abs(u0.value(p)[0] - expected) < 1e-14
    hess = u0.hessian(p)[0]
    assert abs(hess[0, 1]) < 1e-15
    assert abs(hess[0, 0] - 1.0 / (2 * 0.25 * 0.75)) < 1e-12


def test_guillemin_rejects_non_delzant():
    bad = construct(vertices=[(0, 0), (2, 0), (0, 1)])
    with pytest.raises(NonDelzant):
        guillemin_potential(bad)


# -- smoothing ----------------------------------------------------------------


def test_smoothed_pl_bounds_and_exact_flag():
    g = KINK.g
    sm = SmoothedPL.from_fn(g, beta=25.0)
    assert not sm.exact
    pts = np.linspace(0.01, 0.99, 37)[:, None]
    exact_vals = np.max(
        [float(p.gradient[0]) * pts[:, 0] + float(p.constant)
         for p in g.pieces], axis=0)
    vals = sm.value(pts)
    assert np.all(vals >= exact_vals - 1e-14)
    assert np.all(vals <= exact_vals + math.log(2.0) / 25.0 + 1e-14)
    single = SmoothedPL.from_fn(AFFINE.g, beta=25.0)
    assert single.exact
    assert np.all(single.hessian(pts) == 0.0)


def test_shifted_potential_is_affine_in_s():
    u0 = guillemin_potential(interval(0, 1))
    sm = SmoothedPL.from_fn(KINK.g, beta=30.0)
    pts = np.array([[0.3], [0.62]])
    for s in (0.5, 2.0):
        pot = ShiftedPotential(u0, sm, s)
        assert np.allclose(pot.value(pts),
                           u0.value(pts) + s * sm.value(pts), atol=1e-14)
        assert np.allclose(pot.hessian(pts),
                           u0.hessian(pts) + s * sm.hessian(pts), atol=1e-12)


# -- grids --------------------------------------------------------------------


def test_collar_depth_schedule():
    assert collar_depth_for(1.0) == 24
    assert collar_depth_for(8.0) == 44
    assert collar_depth_for(12.0) == 46  # capped at the float64 wall
    assert collar_depth_for(30.0) == 46


def test_crease_ladder_depth_tracks_schedule():
    assert crease_ladder_depth(10.0, 1.0) == 8
    assert crease_ladder_depth(120.0, 12.0) >= 9
    assert crease_ladder_depth(1e9, 1e9) == 22


@pytest.mark.parametrize("base", [interval(0, 1), interval(-2, 1),
                                  box(2), unit_simplex(2)])
def test_grid_weights_sum_to_volume(base):
    grid = build_grid(base, depth=14)
    vol = float(volume_data(base).volume)
    assert abs(grid.integrate(np.ones(grid.size)) - vol) < 1e-12 * vol
    # all nodes strictly interior
    u0 = guillemin_potential(base)
    assert u0.slacks(grid.points).min() > 0.0


def test_grid_integrates_polynomials():
    grid = build_grid(interval(0, 1), depth=12)
    x = grid.points[:, 0]
    assert abs(grid.integrate(x ** 5) - 1.0 / 6.0) < 1e-13
    tri = build_grid(unit_simplex(2), depth=12)
    xy = tri.points[:, 0] * tri.points[:, 1]
    assert abs(tri.integrate(xy) - 1.0 / 24.0) < 1e-10


def test_crease_ladder_adds_panels():
    coarse = line_grid(interval(0, 1), depth=10, creases=(0.5,),
                       crease_depth=8)
    fine = line_grid(interval(0, 1), depth=10, creases=(0.5,),
                     crease_depth=14)
    assert fine.size > coarse.size
    assert abs(fine.integrate(np.ones(fine.size)) - 1.0) < 1e-12


def test_crease_points_of_kink():
    from fractions import Fraction
    assert crease_points(KINK.g) == (Fraction(1, 2),)
    assert crease_points(AFFINE.g) == ()


def test_rejects_unsupported_dimension():
    with pytest.raises(NonDelzant):
        build_grid(box(3), depth=8)


# -- Newton transport ---------------------------------------------------------


def test_forward_transport_matches_legendre_closed_form():
    ray = Ray(AFFINE, beta=10.0, tau_max=8.0)
    x = ray.grid.points[:, 0]
    for tau in (1.0, 8.0):
        moved = ray.transport(tau)[0][:, 0]
        q = math.exp(-2.0 * tau)
        exact = x * q / (1.0 - x + x * q)
        resolvable = np.minimum(exact, 1.0 - exact) > 1e-8
        assert np.max(np.abs(moved - exact)[resolvable]) < 1e-8


def test_transport_round_trip():
    ray = Ray(KINK, beta=40.0, tau_max=4.0)
    x = ray.grid.points[:, 0]
    bulk = np.abs(x - 0.5) < 0.4
    moved = ray.transport(4.0)[0]
    back = newton_transport(ray.u0, ray.potential(4.0).gradient(moved),
                            moved.copy())
    assert np.max(np.abs(back[:, 0] - x)[bulk]) < 1e-9


def test_transport_2d_factorizes():
    cfg = normalize(make_config(box(2), [((1, 0), 0)]), "min_zero")
    ray = Ray(cfg, beta=10.0, tau_max=2.0)
    pts = ray.grid.points
    moved = ray.transport(2.0)[0]
    q = math.exp(-4.0)
    exact_x = pts[:, 0] * q / (1.0 - pts[:, 0] + pts[:, 0] * q)
    ok = np.minimum.reduce([pts[:, 1], 1 - pts[:, 1],
                            exact_x, 1 - exact_x]) > 1e-8
    assert np.max(np.abs(moved[:, 1] - pts[:, 1])[ok]) < 1e-9
    assert np.max(np.abs(moved[:, 0] - exact_x)[ok]) < 1e-8


def test_newton_divergence_reports_node_count():
    u0 = guillemin_potential(interval(0, 1))
    targets = np.full((5, 1), 30.0)
    start = np.full((5, 1), 0.5)
    with pytest.raises(NewtonDivergence):
        newton_transport(u0, targets, start, max_iter=2)


# -- ray states ---------------------------------------------------------------


def test_state_at_zero_is_identity():
    ray = Ray(KINK, beta=20.0, tau_max=2.0)
    st = ray.state(0.0)
    assert np.all(st.phi == 0.0)
    assert np.all(st.log_volume_ratio == 0.0)
    assert abs(st.mass_ratio() - 1.0) < 1e-12


@pytest.mark.parametrize("tau", [1.0, 4.0, 8.0])
def test_mass_ratio_is_one(tau):
    """Total mass of the transported volume form is conserved."""
    ray = Ray(KINK, beta=20.0, tau_max=8.0)
    st = ray.state(tau)
    assert abs(st.mass_ratio() - 1.0) < 1e-6


def test_phi_dot_bounded_by_g_range():
    ray = Ray(KINK, beta=20.0, tau_max=6.0)
    st = ray.state(6.0)
    overshoot = math.log(2.0) / 20.0   # logsumexp excess at the kink
    assert st.phi_dot.max() <= 0.0 + 1e-12           # min g = 0 (min_zero)
    assert st.phi_dot.min() >= -0.5 - overshoot - 1e-12


def test_phi_convex_in_tau():
    ray = Ray(AFFINE, beta=10.0, tau_max=3.0)
    idx = np.argmin(np.abs(ray.grid.points[:, 0] - 0.5))
    phis = [ray.state(t).phi[idx] for t in (1.0, 2.0, 3.0)]
    assert phis[1] <= 0.5 * (phis[0] + phis[2]) + 1e-10


def test_ray_state_wrapper():
    u0 = guillemin_potential(interval(0, 1))
    st = ray_state(AFFINE, u0, tau=1.0, beta=10.0, tau_max=2.0)
    assert st.tau == 1.0
    assert st.phi.shape == (st.grid.size,)


def test_state_csv_rows_shape():
    ray = Ray(AFFINE, beta=10.0, tau_max=1.0)
    st = ray.state(1.0)
    rows = list(state_csv_rows(st))
    assert len(rows) == st.grid.size
    # coords, weight, phi, phi_dot, logdet, S (nan when not supplied)
    assert len(rows[0]) == 1 + 5
    assert math.isnan(rows[0][-1])
    curv = np.zeros(st.grid.size)
    rows_s = list(state_csv_rows(st, curvature=curv))
    assert rows_s[0][-1] == 0.0


# -- inverse transport --------------------------------------------------------


def test_inverse_transport_inverts_forward():
    ray = Ray(AFFINE, beta=10.0, tau_max=4.0)
    x_inv = ray.inverse_transport(4.0)[:, 0]
    y = ray.grid.points[:, 0]
    q = math.exp(-8.0)
    # y = x q / (1 - x + x q)  <=>  x = y / (q + y (1 - q))
    exact = y / (q + y * (1.0 - q))
    resolvable = np.minimum(exact, 1.0 - exact) > 1e-8
    assert np.max(np.abs(x_inv - exact)[resolvable]) < 1e-8


def test_inverse_transport_saturates_gracefully_at_float_wall():
    """Nodes mapping within one ulp of a facet stay finite and ordered."""
    ray = Ray(AFFINE, beta=10.0, tau_max=12.0)
    x_inv = ray.inverse_transport(12.0)[:, 0]
    assert np.all(np.isfinite(x_inv))
    assert np.all(x_inv <= 1.0)
    assert np.all(x_inv >= 0.0)
    y = ray.grid.points[:, 0]
    assert np.all(np.diff(x_inv[np.argsort(y)]) >= -1e-12)


# -- curvature ----------------------------------------------------------------


def test_abreu_interval_raw_and_calibrated():
    u0 = guillemin_potential(interval(0, 1))
    pts = np.linspace(0.05, 0.95, 19)[:, None]
    raw = abreu_scalar_curvature(u0, pts, raw=True)
    assert np.max(np.abs(raw - 4.0)) < 1e-7
    cal = abreu_scalar_curvature(u0, pts)
    assert np.max(np.abs(cal - 2.0)) < 1e-7


@pytest.mark.parametrize("base,n_mu", [
    (interval(0, 1), 2.0),
    (box(2), 4.0),
    (unit_simplex(2), 6.0),
])
def test_mean_curvature_equals_n_mu(base, n_mu):
    u0 = guillemin_potential(base)
    grid = bulk_grid(base)
    s_field = abreu_scalar_curvature(u0, grid.points)
    mean = grid.integrate(s_field) / float(volume_data(base).volume)
    assert abs(mean - n_mu) < 1e-6 * n_mu


def test_ricci_reference_interval_closed_form():
    u0 = guillemin_potential(interval(0, 1))
    pts = np.concatenate([np.linspace(0.1, 0.9, 9),
                          [1e-6, 1e-13]])[:, None]
    ric = ricci_reference(u0, pts)[:, 0, 0]
    exact = 4.0 * pts[:, 0] * (1.0 - pts[:, 0])
    assert np.max(np.abs(ric - exact) / (1.0 + exact)) < 1e-10


@pytest.mark.parametrize("base", [box(2), unit_simplex(2)])
def test_curvature_consistency_identity(base):
    """S equals n MD(ricci, G^(n-1)) / det G: ties the exact Ricci field
    to the finite-difference Abreu pathway.  Asserted away from facets,
    where the slack-limited stencil still resolves the field; nearer the
    boundary only integrated quantities are trustworthy (see the mean
    curvature test)."""
    u0 = guillemin_potential(base)
    grid = bulk_grid(base)
    pts = grid.points[::7]
    pts = pts[u0.slacks(pts).min(axis=1) > 5e-2]
    assert len(pts) > 100
    s_fd = abreu_scalar_curvature(u0, pts)
    ric = ricci_reference(u0, pts)
    hess = u0.hessian(pts)
    ginv = np.linalg.inv(hess)
    s_alg = 2.0 * mixed_discriminant(ric, ginv) / np.linalg.det(ginv)
    assert np.max(np.abs(s_fd - s_alg) / (1.0 + np.abs(s_alg))) < 1e-6
