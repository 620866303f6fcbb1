"""Bubble closed forms, interactions, the functional, and its expansions.

The quadrature referees every expansion coefficient here, so most expected
values are exact constants (S = pi^2/6 and its combinations) rather than
stored decimals.
"""

import numpy as np
import pytest
from scipy.integrate import quad

from hemicurv import bubbles as bb
from hemicurv import geometry as geo
from hemicurv import greenfn, kfield
from hemicurv.constants import OMEGA3, S
from hemicurv.errors import RegimeError
from hemicurv.expr import parse_k

POLE = np.array([0.0, 0.0, 0.0, 0.0, 1.0])
E1 = np.array([1.0, 0.0, 0.0, 0.0, 0.0])

# point where the two Green conventions agree, at distance 0.5 from the equator
_A1 = float(np.sqrt(2.0) - 1.0)
_A5 = float(np.sin(0.5))
_A2 = float(np.sqrt(1.0 - _A1 * _A1 - _A5 * _A5))
LOCUS = np.array([_A1, _A2, 0.0, 0.0, _A5])


def radial_quarter_mass():
    # int_{R^4} (1+r^2)^{-4} over the volume element omega3 r^3 dr
    val, err = quad(lambda r: 2.0 * np.pi**2 * r**3 / (1.0 + r * r) ** 4, 0.0, np.inf)
    assert err < 1e-10
    return val


def test_bubble_mass_constant_oracle():
    assert radial_quarter_mass() == pytest.approx(S, rel=1e-12)
    assert S == pytest.approx(np.pi**2 / 6.0, rel=0, abs=0)


def test_delta_closed_form_values():
    # lam = 1 is the constant function 1/2
    for x in (E1, np.array([0.0, 0.6, 0.0, 0.0, 0.8]), POLE):
        assert bb.delta(POLE, 1.0, x) == pytest.approx(0.5, abs=1e-15)
    # peak value lam/2, antipodal value 1/(2 lam)
    assert bb.delta(POLE, 7.0, POLE) == pytest.approx(3.5, abs=1e-14)
    assert bb.delta(E1, 7.0, -E1) == pytest.approx(1.0 / 14.0, abs=1e-15)


def test_delta_batch_matches_single():
    X = geo.random_hemisphere_points(11, np.random.default_rng(3))
    vals = bb.delta(LOCUS, 9.0, X)
    assert vals.shape == (11,)
    for i in range(11):
        assert vals[i] == bb.delta(LOCUS, 9.0, X[i])
    grads = bb.delta_gradient(LOCUS, 9.0, X)
    assert grads.shape == (11, 5)
    assert np.allclose(grads[4], bb.delta_gradient(LOCUS, 9.0, X[4]), atol=0)


def _intrinsic_pde_residual(a, lam, x, h=1e-3):
    # Laplace-Beltrami via fourth-order stencils along an orthonormal
    # geodesic frame, then the bubble equation -Lap d + 2 d - 8 d^3
    f = lambda y: bb.delta(a, lam, y)
    lap = 0.0
    f0 = f(x)
    for t in geo.tangent_frame(x):
        vm2, vm1 = f(geo.geodesic(x, t, -2 * h)), f(geo.geodesic(x, t, -h))
        vp1, vp2 = f(geo.geodesic(x, t, h)), f(geo.geodesic(x, t, 2 * h))
        lap += (-vp2 + 16.0 * vp1 - 30.0 * f0 + 16.0 * vm1 - vm2) / (12.0 * h * h)
    return -lap + 2.0 * f0 - 8.0 * f0**3


def test_delta_solves_bubble_equation():
    rng = np.random.default_rng(7)
    for _ in range(15):
        lam = float(rng.uniform(1.5, 6.0))
        a = geo.random_hemisphere_points(1, rng)[0]
        x = geo.random_hemisphere_points(1, rng)[0]
        assert abs(_intrinsic_pde_residual(a, lam, x)) < 1e-6
    # concentrated bubbles, sampled at moderate distance from the center
    for _ in range(10):
        lam = float(rng.uniform(10.0, 100.0))
        a = geo.random_hemisphere_points(1, rng)[0]
        t = geo.tangent_frame(a)[0]
        x = geo.geodesic(a, t, float(rng.uniform(0.3, 2.8)))
        assert abs(_intrinsic_pde_residual(a, lam, x)) < 1e-6


def test_delta_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    h = 1e-5
    for _ in range(8):
        lam = float(rng.uniform(2.0, 25.0))
        a = geo.random_hemisphere_points(1, rng)[0]
        x = geo.random_hemisphere_points(1, rng)[0]
        g = bb.delta_gradient(a, lam, x)
        assert abs(np.dot(g, x)) < 1e-12 * max(1.0, np.linalg.norm(g))
        for t in geo.tangent_frame(x):
            fd = (bb.delta(a, lam, geo.geodesic(x, t, h))
                  - bb.delta(a, lam, geo.geodesic(x, t, -h))) / (2.0 * h)
            assert np.dot(g, t) == pytest.approx(fd, rel=2e-8, abs=1e-10)


def test_phi_boundary_is_plain_delta():
    b = bb.Bubble("boundary", E1, 30.0)
    X = geo.random_hemisphere_points(6, np.random.default_rng(5))
    assert np.array_equal(b.phi(X), b.delta(X))


def test_phi_interior_adds_scaled_regular_part():
    b = bb.Bubble("interior", LOCUS, 40.0)
    X = geo.random_hemisphere_points(6, np.random.default_rng(6))
    for conv in ("flat_model", "spherical_image"):
        expect = b.delta(X) + greenfn.regular_part(LOCUS, X, conv) / 40.0
        assert np.allclose(b.phi(X, conv), expect, rtol=0, atol=1e-15)
        g = b.phi_gradient(X, conv)
        ge = bb.delta_gradient(LOCUS, 40.0, X) + greenfn.regular_gradient(
            LOCUS, X, conv) / 40.0
        assert np.allclose(g, ge, rtol=0, atol=1e-15)


def test_phi_chart_coordinates():
    # half-space form: bubble at height 1, lam = 100, evaluated at height 2
    a = np.array([0.0, 0.0, 0.0, 1.0])
    x = np.array([0.0, 0.0, 0.0, 2.0])
    d = bb.delta_flat(a, 100.0, x)
    assert d == pytest.approx(100.0 / 10001.0, rel=1e-14)
    val = bb.phi(a, 100.0, x)
    # image kernel at distance 3 from the reflected center: 1/9, scaled by 1/lam
    assert val == pytest.approx(100.0 / 10001.0 + 1.0 / 900.0, rel=1e-14)
    assert val == pytest.approx(0.0111101, abs=1e-7)
    with pytest.raises(ValueError):
        bb.phi(a, 100.0, x, convention="spherical_image")


def test_phi_regime_rejection():
    shallow = geo.from_flat(np.array([0.0, 0.0, 0.0, 0.05]))
    with pytest.raises(RegimeError):
        bb.phi(shallow, 20.0, POLE)
    with pytest.raises(RegimeError):
        bb.phi(np.array([0.0, 0.0, 0.0, 0.05]), 20.0, np.array([0.0, 0.0, 0.0, 1.0]))


def test_bubble_validation():
    with pytest.raises(ValueError):
        bb.Bubble("edge", POLE, 20.0)
    with pytest.raises(ValueError):
        bb.Bubble("interior", POLE, -3.0)
    with pytest.raises(ValueError):
        bb.Bubble("interior", POLE, 20.0, alpha=0.0)
    with pytest.raises(ValueError):
        bb.Bubble("interior", 2.0 * POLE, 20.0)
    with pytest.raises(ValueError):
        bb.Bubble("boundary", LOCUS, 20.0)  # off the equator
    with pytest.raises(RegimeError):
        bb.Bubble("interior", LOCUS, 5.0)  # lam d = 2.5 < 10
    # lam d exactly at the threshold is admitted
    b = bb.Bubble("interior", LOCUS, 10.0 / geo.boundary_distance(LOCUS))
    assert b.kind == "interior"


def test_correction_budget_values():
    b = bb.Bubble("interior", POLE, 100.0)
    flat = bb.correction_budget([b], "flat_model")[0]
    assert flat == pytest.approx(2e-6, rel=1e-12)  # 2/(100^3 * 1^4), chart height 1
    assert flat / bb.delta(POLE, 100.0, POLE) == pytest.approx(4e-8, rel=1e-12)
    sph = bb.correction_budget([b], "spherical_image")[0]
    assert sph == pytest.approx(2.0 / (1e6 * (np.pi / 2.0) ** 4), rel=1e-12)
    assert bb.correction_budget([bb.Bubble("boundary", E1, 50.0)]) == [0.0]


# --- interaction kernel ----------------------------------------------------


def test_epsilon_trivial_values():
    b1 = bb.Bubble("boundary", E1, 9.0)
    b2 = bb.Bubble("boundary", E1, 9.0)
    assert bb.epsilon(b1, b2) == pytest.approx(0.5, abs=1e-15)
    b3 = bb.Bubble("boundary", -E1, 9.0)
    assert 1.0 / bb.epsilon(b1, b3) == pytest.approx(2.0 + 81.0, rel=1e-14)


def test_epsilon_decreases_with_distance():
    prev = None
    for d in (0.2, 0.5, 1.0, 2.0, 3.0):
        x = np.array([np.cos(d), np.sin(d), 0.0, 0.0, 0.0])
        e = bb.epsilon(bb.Bubble("boundary", E1, 12.0), bb.Bubble("boundary", x, 12.0))
        if prev is not None:
            assert e < prev
        prev = e


def test_epsilon_partials_match_finite_differences():
    rng = np.random.default_rng(17)
    hs = 1e-6
    for _ in range(10):
        a_i = geo.random_hemisphere_points(1, rng)[0]
        a_j = geo.random_hemisphere_points(1, rng)[0]
        li, lj = float(rng.uniform(5.0, 80.0)), float(rng.uniform(5.0, 80.0))
        bi = bb.Bubble("interior", a_i, li / geo.boundary_distance(a_i) * 20.0)
        bj = bb.Bubble("interior", a_j, lj / geo.boundary_distance(a_j) * 20.0)
        p = bb.epsilon_partials(bi, bj)
        assert p.value == bb.epsilon(bi, bj)

        def at(li_, lj_):
            inv = (li_ / lj_ + lj_ / li_
                   + li_ * lj_ * geo.one_minus_cos(bi.a, bj.a) / 2.0)
            return 1.0 / inv

        li0, lj0 = bi.lam, bj.lam
        fd_i = li0 * (at(li0 * (1 + hs), lj0) - at(li0 * (1 - hs), lj0)) / (2 * hs * li0)
        fd_j = lj0 * (at(li0, lj0 * (1 + hs)) - at(li0, lj0 * (1 - hs))) / (2 * hs * lj0)
        assert p.dlam_i == pytest.approx(fd_i, rel=1e-7)
        assert p.dlam_j == pytest.approx(fd_j, rel=1e-7)
        # center derivative along a geodesic
        t = geo.tangent_frame(bi.a)[1]
        h = 1e-6

        def at_a(s):
            inv = (li0 / lj0 + lj0 / li0
                   + li0 * lj0 * geo.one_minus_cos(geo.geodesic(bi.a, t, s), bj.a) / 2.0)
            return 1.0 / inv

        fd_a = (at_a(h) - at_a(-h)) / (2.0 * h)
        assert np.dot(p.da_i, t) == pytest.approx(fd_a, rel=1e-6, abs=1e-14)


def test_epsilon_scale_identity():
    # for lam_i >= lam_j:
    #   -2 lam_i de/dlam_i - lam_j de/dlam_j
    #     = 2 eps (1 - 2 (lam_j/lam_i) eps) + eps (1 - 2 (lam_i/lam_j) eps)
    rng = np.random.default_rng(23)
    for _ in range(10):
        a_i = geo.random_hemisphere_points(1, rng)[0]
        a_j = geo.random_hemisphere_points(1, rng)[0]
        li, lj = sorted((float(rng.uniform(15.0, 90.0)),
                         float(rng.uniform(15.0, 90.0))), reverse=True)
        bi = bb.Bubble("interior", a_i, li * 20.0 / geo.boundary_distance(a_i))
        bj = bb.Bubble("interior", a_j, lj * 20.0 / geo.boundary_distance(a_j))
        if bi.lam < bj.lam:
            bi, bj = bj, bi
        p = bb.epsilon_partials(bi, bj)
        e = p.value
        lhs = -2.0 * p.dlam_i - p.dlam_j
        rhs = (2.0 * e * (1.0 - 2.0 * (bj.lam / bi.lam) * e)
               + e * (1.0 - 2.0 * (bi.lam / bj.lam) * e))
        assert lhs == pytest.approx(rhs, abs=1e-10)


def test_interaction_data_structure():
    b1 = bb.Bubble("interior", POLE, 60.0)
    b2 = bb.Bubble("interior", LOCUS, 45.0)
    b3 = bb.Bubble("boundary", E1, 30.0)
    data = bb.interaction_data([b1, b2, b3], "spherical_image")
    assert data.eps.shape == (3, 3)
    assert np.array_equal(data.eps, data.eps.T)
    assert np.all(np.diag(data.eps) == 0.0)
    off = data.eps[~np.eye(3, dtype=bool)]
    assert np.all(off > 0.0)
    # regular-part coupling only between interior bubbles
    assert data.h_cross[0, 1] > 0.0
    assert data.h_cross[0, 2] == 0.0 and data.h_cross[1, 2] == 0.0
    assert data.h_cross[0, 1] == pytest.approx(
        greenfn.regular_part(POLE, LOCUS, "spherical_image") / (60.0 * 45.0), rel=1e-14)
    assert data.max_eps == off.max()
    assert not data.dominated
    near = bb.Bubble("boundary", np.array([np.cos(0.01), np.sin(0.01), 0, 0, 0]), 30.0)
    assert bb.interaction_data([b3, near]).dominated


# --- the functional --------------------------------------------------------


def test_functional_boundary_bubble_exact_parts():
    # equator-centered bubble, K = 1: both halves of J are lam-independent
    one = parse_k("1")
    r = bb.functional_J(one, [bb.Bubble("boundary", E1, 30.0)])
    assert r.converged
    assert r.N == pytest.approx(4.0 * S, rel=1e-9)
    assert r.D2 == pytest.approx(S / 2.0, rel=1e-9)
    assert r.J == pytest.approx(4.0 * np.sqrt(2.0 * S), rel=1e-9)
    assert r.truncation == 0.0


def test_functional_boundary_bubble_high_concentration():
    one = parse_k("1")
    r = bb.functional_J(one, [bb.Bubble("boundary", E1, 1000.0)])
    assert r.converged
    assert r.J == pytest.approx(4.0 * np.sqrt(2.0 * S), rel=1e-3)
    assert r.J == pytest.approx(4.0 * np.sqrt(2.0 * S), rel=1e-9)  # exact family


def test_functional_alpha_invariance():
    one = parse_k("1")
    r1 = bb.functional_J(one, [bb.Bubble("boundary", E1, 30.0)])
    r2 = bb.functional_J(one, [bb.Bubble("boundary", E1, 30.0, alpha=2.0)])
    assert r2.N == pytest.approx(4.0 * r1.N, rel=1e-13)
    assert r2.D2 == pytest.approx(16.0 * r1.D2, rel=1e-13)
    assert r2.J == pytest.approx(r1.J, rel=1e-13)


def test_functional_interior_self_interaction_term():
    # || phi ||^2 = 8S + 4 omega3 H(a,a)/lam^2 + o(lam^-2)
    one = parse_k("1")
    H = greenfn.self_interaction(LOCUS, "spherical_image")
    gaps = {}
    for lam in (50.0, 100.0):
        r = bb.functional_J(one, [bb.Bubble("interior", LOCUS, lam)],
                            convention="spherical_image")
        assert r.converged
        pred = 4.0 * OMEGA3 * H / lam**2
        assert r.N - 8.0 * S == pytest.approx(pred, rel=0.1)
        gaps[lam] = abs(r.N - 8.0 * S - pred)
    # the o(lam^-2) remainder dies faster than the lam^-2 law itself
    assert gaps[100.0] < gaps[50.0]


def test_functional_truncation_budget_reported():
    one = parse_k("1")
    r = bb.functional_J(one, [bb.Bubble("interior", POLE, 100.0)])
    assert r.per_bubble_truncation == [pytest.approx(2e-6, rel=1e-12)]
    assert r.truncation == r.per_bubble_truncation[0]


# --- expansions ------------------------------------------------------------


def _critical_k_at_locus():
    # K = 2 + exp(2(<x, a> - 1)) has a critical point at a with Lap K = -8
    src = f"2 + exp(2 * ({_A1!r} * x1 + {_A2!r} * x2 + {_A5!r} * x5 - 1))"
    return parse_k(src)


def test_expansion_matches_quadrature_single_interior():
    k = _critical_k_at_locus()
    assert float(k(LOCUS)) == pytest.approx(3.0, rel=1e-14)
    assert kfield.intrinsic_laplacian(k, LOCUS) == pytest.approx(-8.0, rel=1e-12)
    d = geo.boundary_distance(LOCUS)
    gaps = []
    for lam in (20.0, 40.0, 80.0):
        rq = bb.functional_J(k, [bb.Bubble("interior", LOCUS, lam)],
                             convention="spherical_image")
        re = bb.expansion_J(k, [bb.Bubble("interior", LOCUS, lam)],
                            convention="spherical_image")
        assert rq.converged
        gap = abs(rq.J - re.value)
        assert gap <= 5.0 / (lam * d) ** 2 * rq.J
        gaps.append(gap)
    assert gaps[2] < gaps[1] < gaps[0]


def test_expansion_two_bubbles_against_quadrature():
    # distinct critical points, alpha_i^2 proportional to 1/K: the leading
    # value collapses to 8 sqrt(S) (sum 1/K_i)^(1/2)
    p2_5 = float(np.sin(0.7))
    p2_1 = float(np.sqrt(1.0 - p2_5 * p2_5))
    p2 = np.array([p2_1, 0.0, 0.0, 0.0, p2_5])
    k = parse_k(f"2 + exp(4 * (x5 - 1)) + exp(4 * ({p2_1!r} * x1 + {p2_5!r} * x5 - 1))")
    K1, K2 = float(k(POLE)), float(k(p2))
    cfg = [bb.Bubble("interior", POLE, 100.0, alpha=K1**-0.5),
           bb.Bubble("interior", p2, 100.0, alpha=K2**-0.5)]
    re = bb.expansion_J(k, cfg, convention="spherical_image")
    assert re.leading == pytest.approx(
        8.0 * np.sqrt(S) * np.sqrt(1.0 / K1 + 1.0 / K2), rel=1e-12)
    rq = bb.functional_J(k, cfg, convention="spherical_image")
    assert rq.converged
    # the correction is both necessary and sufficient at this separation
    assert abs(rq.J - re.leading) > 1e-2
    assert abs(rq.J - re.value) < 1e-3


def test_expansion_single_interior_constant_k():
    # leading value 8 sqrt(S/K), cross-checked against the quadrature
    k2 = parse_k("2")
    b = bb.Bubble("interior", LOCUS, 1000.0)
    re = bb.expansion_J(k2, [b], convention="spherical_image")
    assert re.leading == pytest.approx(8.0 * np.sqrt(S / 2.0), rel=1e-14)
    assert re.leading == pytest.approx(7.2552, abs=1e-4)
    rq = bb.functional_J(k2, [b], convention="spherical_image")
    assert rq.J == pytest.approx(re.value, rel=1e-2)
    assert rq.J == pytest.approx(re.value, rel=1e-6)


def test_expansion_boundary_constant_k_is_exact():
    # every correction source vanishes; the value is the boundary level
    k2 = parse_k("2")
    r = bb.expansion_J(k2, [bb.Bubble("boundary", E1, 40.0)])
    assert r.bracket == 0.0
    assert r.correction == 0.0
    assert r.value == r.leading
    assert r.value == pytest.approx(4.0 * np.sqrt(S), rel=1e-14)
    quad_r = bb.functional_J(parse_k("2"), [bb.Bubble("boundary", E1, 40.0)])
    assert quad_r.J == pytest.approx(r.value, rel=1e-9)


def test_expansion_invariances():
    k = _critical_k_at_locus()
    cfg = [bb.Bubble("interior", LOCUS, 30.0, alpha=0.9),
           bb.Bubble("interior", POLE, 55.0, alpha=1.2),
           bb.Bubble("boundary", E1, 25.0, alpha=1.1)]
    base = bb.expansion_J(k, cfg)
    perm = bb.expansion_J(k, [cfg[2], cfg[0], cfg[1]])
    assert perm.value == pytest.approx(base.value, rel=1e-12)
    scaled = bb.expansion_J(k, [
        bb.Bubble(b.kind, b.a, b.lam, alpha=3.0 * b.alpha) for b in cfg])
    assert scaled.value == pytest.approx(base.value, rel=1e-12)
    assert scaled.leading == pytest.approx(base.leading, rel=1e-12)


def test_expansion_regime_guard():
    k2 = parse_k("2")
    with pytest.raises(RegimeError):
        bb.expansion_J(k2, [bb.Bubble("boundary", E1, 5.0)])
    with pytest.raises(RegimeError):
        bb.gradient_expansions(k2, [bb.Bubble("boundary", E1, 5.0)])


def test_expansion_requires_jets():
    with pytest.raises(TypeError):
        bb.expansion_J(lambda X: np.ones(len(X)),
                       [bb.Bubble("boundary", E1, 40.0)])


# --- gradient expansions ---------------------------------------------------


def test_gradient_constant_k_single_interior():
    # only the self-interaction survives and it pushes lam upward
    k = parse_k("1")
    rec = bb.gradient_expansions(k, [bb.Bubble("interior", LOCUS, 40.0)],
                                 convention="spherical_image")[0]
    H = greenfn.self_interaction(LOCUS, "spherical_image")
    assert rec.lambda_rate == pytest.approx(8.0 * OMEGA3 * H / 40.0**2, rel=1e-12)
    assert rec.lambda_rate > 0.0
    assert np.allclose(rec.a_drift, 0.0, atol=1e-13)


def test_gradient_interior_sign_tracks_diagonal_quantity():
    H = greenfn.self_interaction(LOCUS, "spherical_image")
    # strong peak: -LapK/(3K) = 100/6 > 4H, diagonal quantity positive
    strong = parse_k(
        f"1 + exp(25 * ({_A1!r} * x1 + {_A2!r} * x2 + {_A5!r} * x5 - 1))")
    assert -kfield.intrinsic_laplacian(strong, LOCUS) / (3.0 * 2.0) > 4.0 * H
    rec = bb.gradient_expansions(strong, [bb.Bubble("interior", LOCUS, 40.0)],
                                 convention="spherical_image")[0]
    assert rec.lambda_rate < 0.0
    # weak peak: -LapK/(3K) = 8/9 < 4H, diagonal quantity negative
    weak = _critical_k_at_locus()
    rec = bb.gradient_expansions(weak, [bb.Bubble("interior", LOCUS, 40.0)],
                                 convention="spherical_image")[0]
    assert rec.lambda_rate > 0.0


def test_gradient_boundary_normal_derivative_sign():
    # K growing toward the interior: dK/dnu < 0 outward, concentration penalized
    k = parse_k("2 + x5 / 2")
    rec = bb.gradient_expansions(k, [bb.Bubble("boundary", E1, 30.0)])[0]
    assert kfield.normal_derivative(k, E1) == pytest.approx(-0.5, rel=1e-12)
    assert rec.lambda_rate == pytest.approx(-0.5 / 30.0, rel=1e-12)
    assert rec.lambda_rate < 0.0
    assert np.allclose(rec.a_drift, 0.0, atol=1e-13)


def test_gradient_drift_points_downhill():
    # centered away from the maximum, the drift pushes toward it
    k = parse_k("2 + x1 / 2")
    rec = bb.gradient_expansions(k, [bb.Bubble("interior", LOCUS, 50.0)],
                                 convention="spherical_image")[0]
    grad = kfield.intrinsic_gradient(k, LOCUS)
    assert np.allclose(rec.a_drift, -grad / 50.0, atol=1e-14)
    assert np.dot(rec.a_drift, grad) < 0.0
    brec = bb.gradient_expansions(k, [bb.Bubble("boundary", E1, 50.0)])[0]
    assert np.allclose(brec.a_drift, -kfield.tangential_gradient(k, E1) / 50.0,
                       atol=1e-14)


def test_gradient_interaction_terms_enter():
    k = parse_k("1")
    d = 0.35
    far = np.array([np.cos(d), np.sin(d), 0.0, 0.0, 0.0])
    cfg = [bb.Bubble("boundary", E1, 30.0), bb.Bubble("boundary", far, 30.0)]
    recs = bb.gradient_expansions(k, cfg)
    p = bb.epsilon_partials(cfg[0], cfg[1])
    # boundary records keep the raw c1-weighted pairing (dnu_K part is zero
    # here, so the rate is the interaction alone)
    assert recs[0].lambda_rate == pytest.approx(p.dlam_i, rel=1e-12)
    assert recs[0].terms["eps_interaction"] != 0.0


def test_expansion_boundary_normal_term_matches_quadrature():
    # nonconstant K over a boundary bubble: the expansion carries
    # dnu_K/(2 lam K) relative to leading; quadrature agrees to O(lam^-2)
    k = parse_k("1 + x5")
    lead = 4.0 * np.sqrt(2.0 * S)
    gaps = []
    for lam in (30.0, 60.0):
        b = bb.Bubble("boundary", E1, lam)
        rq = bb.functional_J(k, [b], convention="flat_model")
        re = bb.expansion_J(k, [b], convention="flat_model")
        assert re.value == pytest.approx(lead * (1.0 - 0.5 / lam), rel=1e-12)
        assert rq.converged
        gaps.append(abs(rq.J - re.value))
    assert gaps[0] < 25.0 / 30.0**2
    # residual decays like lam^-2: the gap at doubled lam shrinks by ~4
    assert gaps[1] < 0.35 * gaps[0]
