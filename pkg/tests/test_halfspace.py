"""Half-space finite-difference solver: stencil accuracy and the phi budget."""

import numpy as np
import pytest

from hemicurv import bubbles as bb
from hemicurv import halfspace as hs


@pytest.fixture(scope="module")
def report_50():
    return hs.solve_phi_neumann(50.0, 1.0)


@pytest.fixture(scope="module")
def report_100():
    return hs.solve_phi_neumann(100.0, 1.0)


def test_graded_axis_shape():
    ax = hs.graded_axis(6.0, 0.04, 2.5, 1.08)
    assert ax[0] == 0.0
    assert ax[-1] == pytest.approx(6.0, abs=1e-12)
    assert np.all(np.diff(ax) > 0)
    # uniform fine region up front
    assert np.allclose(np.diff(ax)[:10], 0.04)
    ref = hs.refine_axis(ax)
    assert np.allclose(ref[::2], ax)


def test_manufactured_harmonic_solution():
    # u = 1/(s^2 + (t+1)^2) is harmonic in the 4D axisymmetric sense;
    # feed the solver its wall flux and exact far data, expect second order
    exact = lambda s, t: 1.0 / (s * s + (t + 1.0) ** 2)
    g = lambda s: -2.0 / (s * s + 1.0) ** 2
    s_ax = hs.graded_axis(6.0, 0.04, 2.5, 1.08)
    t_ax = hs.graded_axis(6.0, 0.04, 2.5, 1.08)
    F = hs._solve_on_grid(s_ax, t_ax, g, far=exact)
    SS, TT = np.meshgrid(s_ax, t_ax, indexing="ij")
    err = np.abs(F - exact(SS, TT)).max()
    assert err < 1.2e-3
    F2 = hs._solve_on_grid(hs.refine_axis(s_ax), hs.refine_axis(t_ax), g, far=exact)
    S2, T2 = np.meshgrid(hs.refine_axis(s_ax), hs.refine_axis(t_ax), indexing="ij")
    err2 = np.abs(F2 - exact(S2, T2)).max()
    assert 3.2 < err / err2 < 4.8


def test_wall_flux_matches_truncated_phi():
    # g(s) must equal -d/dt of the truncated phi at the wall
    lam, d = 37.0, 1.3
    a = np.array([0.0, 0.0, 0.0, d])
    h = 1e-5
    for s in (0.0, 0.4, 1.1, 2.7):
        f0 = bb.phi(a, lam, np.array([s, 0.0, 0.0, 0.0]))
        f1 = bb.phi(a, lam, np.array([s, 0.0, 0.0, h]))
        f2 = bb.phi(a, lam, np.array([s, 0.0, 0.0, 2 * h]))
        fd = (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)  # second-order one-sided
        assert hs.wall_flux_defect(s, lam, d) == pytest.approx(-fd, rel=1e-5)


def test_margins_positive(report_50, report_100):
    for rep in (report_50, report_100):
        assert rep.deviation_max < rep.budget
        assert rep.margin > 0.0
        assert rep.grid_error < 0.05 * rep.deviation_max
        assert 1.0 < rep.c_observed < 2.0


def test_deviation_follows_cubic_scale_law(report_50, report_100):
    # lam^3 d^4 max |f| is asymptotically constant; observed 1.487 at both
    assert report_50.c_observed == pytest.approx(report_100.c_observed, rel=0.01)
    assert report_100.c_observed == pytest.approx(1.487, abs=0.02)


def test_remainder_at_chart_sample(report_100):
    # the phi plug-in point (axis, height 2): the dropped remainder is far
    # below the stated budget there
    f = report_100.f_at(0.0, 2.0)
    assert abs(f) < 0.1 * report_100.budget
    phi_fd = bb.phi(np.array([0.0, 0, 0, 1.0]), 100.0, np.array([0.0, 0, 0, 2.0])) + f
    assert phi_fd == pytest.approx(0.0111101, abs=1e-6)


def test_calibration_supports_default_budget():
    assert hs.calibrate_budget_constant(lams=(50.0,)) < 2.0
