"""Adaptive quadrature on the closed half sphere, organized around bubble
concentration points.

The domain is partitioned into the spherical Voronoi cells of the given
centers, intersected with the hemisphere.  Each cell is star shaped about its
center, so it has an exact description in geodesic polar coordinates: along
the tangent direction omega the cell reaches

    r*(omega) = min_j atan2(1 - <a_i, a_j>, <omega, a_j>)    (Voronoi walls)

capped by the equator crossing atan2(a5, -omega5) and by pi.  Both caps come
from the single sign change of c1 cos r - c2 sin r on (0, pi), so the cells
cover the hemisphere exactly: no overlap, no gap.

Within a cell the integral is a tensor product: hyperspherical boxes
(beta, theta, phi) over the direction 3-sphere (polar axis aligned with the
projection of e5, which makes the equator cap a function of beta alone), and
per ray a graded panel Gauss rule in the scaled radius u = r/r*(omega) whose
first panel resolves the 1/lambda concentration scale.  The error of a box is
the difference against one jointly reduced pass (all angular orders and the
radial order lowered).  Attribution is free: the top Legendre coefficient of
the weighted summand along each dimension, read off the main pass samples,
ranks which direction is under resolved, so the box splits where it helps and
escalates the radial order when the radial tail dominates.

Boundary centers get the polar axis e5 itself with beta in [0, pi/2]: the
half ball of directions pointing into the hemisphere covers their cell
exactly, with no equator cap at all.
"""

from __future__ import annotations

import heapq
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss, legval

from . import geometry as geo
from .constants import DEFAULTS
from .errors import CoincidentPoints, QuadratureBudgetExceeded

_E5 = np.array([0.0, 0.0, 0.0, 0.0, 1.0])

_GAUSS_CACHE: dict = {}


def _gauss(n: int):
    if n not in _GAUSS_CACHE:
        _GAUSS_CACHE[n] = leggauss(n)
    return _GAUSS_CACHE[n]


_PTAIL_CACHE: dict = {}


def _ptail(n: int):
    """P_{n-1} and P_{n-2} at the n Gauss nodes, shaped (2, n).

    Both parities are needed: an integrand even about the box midpoint has no
    P_{n-1} content at all, and would hide from a single-mode indicator.
    """
    if n not in _PTAIL_CACHE:
        xg, _ = _gauss(n)
        top = legval(xg, [0.0] * (n - 1) + [1.0])
        sub = legval(xg, [0.0] * (n - 2) + [1.0]) if n >= 3 else np.zeros(n)
        _PTAIL_CACHE[n] = np.stack([top, sub])
    return _PTAIL_CACHE[n]


_PMID_CACHE: dict = {}


def _pmid(n: int):
    """P_{n-3} and P_{n-4} at the n Gauss nodes: the mid-spectrum reference."""
    if n not in _PMID_CACHE:
        xg, _ = _gauss(n)
        if n >= 5:
            rows = [
                legval(xg, [0.0] * (n - 3) + [1.0]),
                legval(xg, [0.0] * (n - 4) + [1.0]),
            ]
        else:
            rows = [np.zeros(n), np.zeros(n)]
        _PMID_CACHE[n] = np.stack(rows)
    return _PMID_CACHE[n]


def _axis_frame(a: np.ndarray) -> np.ndarray:
    """Orthonormal tangent basis (U, V, W1, W2) at a with U the e5-aligned axis."""
    frame = geo.tangent_frame(a)
    p = _E5 - a[4] * a
    n = np.linalg.norm(p)
    if n < 1e-12:
        return frame  # center at the pole: every axis sees the same cap
    u = p / n
    rows = [u]
    for e in frame:
        w = e - sum(np.dot(e, r) * r for r in rows)
        nw = np.linalg.norm(w)
        if nw > 1e-8:
            rows.append(w / nw)
        if len(rows) == 4:
            break
    return np.array(rows)


def _radial_panels(r_scale: float, order: int, first: float, growth: float):
    """Gauss nodes/weights on graded panels of [0, 1], first panel ~ first/r_scale."""
    u0 = first / max(r_scale, 1e-12)
    u0 = min(max(u0, 1e-8), 0.5)
    edges = [0.0, u0]
    while edges[-1] < 1.0:
        edges.append(min(edges[-1] + (edges[-1] - edges[-2]) * growth, 1.0))
    xg, wg = _gauss(order)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
        nodes.append(mid + half * xg)
        weights.append(half * wg)
    return np.concatenate(nodes), np.concatenate(weights)


class _Cell:
    """Geometry of one center's Voronoi cell in polar coordinates."""

    def __init__(self, center: np.ndarray, scale: float, others: np.ndarray):
        self.a = center
        self.scale = scale
        self.others = others  # (k, 5) competing centers, possibly empty
        self.boundary = abs(center[4]) < 1e-12
        self.basis = _axis_frame(center)
        self.beta_max = 0.5 * np.pi if self.boundary else np.pi

    def directions(self, beta, theta, phi):
        """Tangent unit vectors (..., 5) from hyperspherical angles."""
        U, V, W1, W2 = self.basis
        sb, cb = np.sin(beta), np.cos(beta)
        st, ct = np.sin(theta), np.cos(theta)
        return (
            cb[..., None] * U
            + (sb * ct)[..., None] * V
            + (sb * st * np.cos(phi))[..., None] * W1
            + (sb * st * np.sin(phi))[..., None] * W2
        )

    def reach(self, omega: np.ndarray) -> np.ndarray:
        """r*(omega): distance to the cell boundary along each direction."""
        r = np.full(omega.shape[:-1], np.pi)
        if not self.boundary:
            a5 = self.a[4]
            if a5 < 1.0 - 1e-14:
                r = np.minimum(r, np.arctan2(a5, -omega @ _E5))
            else:
                r = np.minimum(r, 0.5 * np.pi)
        for b in self.others:
            r = np.minimum(r, np.arctan2(1.0 - np.dot(self.a, b), omega @ b))
        return r


def _integrate_box(cell, integrand, lo, hi, orders, radial_order, first, growth,
                   want_summand=False):
    """Tensor rule over one (beta, theta, phi) box.

    Returns (value, absmass, evals) or, with want_summand, additionally the
    weighted per-node summand shaped (nb, nt, np, panels, rad, m) for the
    tail-coefficient indicators.
    """
    nodes1d, weights1d = [], []
    for k in range(3):
        xg, wg = _gauss(orders[k])
        mid, half = 0.5 * (hi[k] + lo[k]), 0.5 * (hi[k] - lo[k])
        nodes1d.append(mid + half * xg)
        weights1d.append(half * wg)
    B, T, P = np.meshgrid(*nodes1d, indexing="ij")
    wB, wT, wP = np.meshgrid(*weights1d, indexing="ij")
    # direction measure sin^2(beta) sin(theta)
    wang = (wB * wT * wP * np.sin(B) ** 2 * np.sin(T)).ravel()
    omega = cell.directions(B, T, P).reshape(-1, 5)
    rstar = cell.reach(omega)

    u, wu = _radial_panels(cell.scale * float(np.max(rstar)), radial_order, first, growth)
    r = rstar[:, None] * u[None, :]
    X = np.cos(r)[..., None] * cell.a + np.sin(r)[..., None] * omega[:, None, :]
    flat = X.reshape(-1, 5)
    f = np.asarray(integrand(flat), dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    m = f.shape[1]
    f = f.reshape(len(omega), len(u), m)
    w = wang[:, None] * (rstar[:, None] * wu[None, :]) * np.sin(r) ** 3
    value = np.einsum("ru,rum->m", w, f)
    absmass = float(np.max(np.einsum("ru,rum->m", np.abs(w), np.abs(f))))
    if not want_summand:
        return value, absmass, flat.shape[0]
    summand = (w[..., None] * f).reshape(
        orders[0], orders[1], orders[2], len(u) // radial_order, radial_order, m
    )
    return value, absmass, flat.shape[0], summand


class _Box:
    __slots__ = (
        "cell", "lo", "hi", "orders", "rad", "value", "abs_mass", "err",
        "split_dim", "radial_bound", "smooth"
    )

    def __init__(self, cell, lo, hi, orders, rad):
        self.cell = cell
        self.lo = lo
        self.hi = hi
        self.orders = tuple(orders)
        self.rad = rad
        self.value = None
        self.abs_mass = 0.0
        self.err = 0.0
        self.split_dim = 0
        self.radial_bound = False
        self.smooth = False


def _assess_box(box, integrand, first, growth):
    """Main pass plus one jointly reduced pass; returns evaluations used.

    The error is the difference between the two passes.  Attribution reuses
    the main-pass samples: for each dimension the weighted summand is
    projected onto the top two Legendre modes of that dimension's rule, and
    the absolute projections are summed over the remaining nodes.  The box
    splits along the worst angular dimension, except when escalation is
    cheaper: a dominant radial tail raises the radial order, and a steeply
    decaying spectrum in the worst dimension (top modes far below the mid
    modes) raises that dimension's order instead of splitting.
    """
    cell = box.cell
    orders = box.orders
    main, amass, n, summand = _integrate_box(
        cell, integrand, box.lo, box.hi, orders, box.rad, first, growth,
        want_summand=True,
    )
    total_evals = n
    reduced = tuple(max(2, o - 2) for o in orders)
    v, _, n = _integrate_box(
        cell, integrand, box.lo, box.hi, reduced, max(4, box.rad - 4), first, growth
    )
    total_evals += n
    # summand axes: (beta, theta, phi, panel, radial node, component); each
    # Gauss weight is positive, so tail content survives the weighting
    dim_err = np.empty(3)
    dim_mid = np.empty(3)
    for d in range(3):
        tail = np.tensordot(_ptail(orders[d]), summand, axes=([1], [d]))
        dim_err[d] = float(np.sum(np.abs(tail)))
        mid = np.tensordot(_pmid(orders[d]), summand, axes=([1], [d]))
        dim_mid[d] = float(np.sum(np.abs(mid)))
    rad_tail = np.einsum("kq,btpnqm->kbtpnm", _ptail(box.rad), summand)
    rad_err = float(np.sum(np.abs(rad_tail)))
    box.value = main
    box.abs_mass = amass
    box.err = float(np.max(np.abs(main - v)))
    d = int(np.argmax(dim_err))
    box.split_dim = d
    box.radial_bound = rad_err > float(np.sum(dim_err))
    box.smooth = dim_err[d] < 0.1 * dim_mid[d]
    return total_evals


def integrate_hemisphere(
    integrand: Callable,
    centers: Optional[Sequence] = None,
    scales: Optional[Sequence[float]] = None,
    rel_tol: Optional[float] = None,
    max_evals: Optional[int] = None,
    config: Optional[dict] = None,
):
    """Integrate a vectorized integrand over the closed upper hemisphere.

    integrand: callable taking an (N, 5) array of sphere points, returning
        (N,) or (N, m) values.
    centers: concentration points (the Voronoi sites); defaults to the pole.
    scales: concentration parameter per center (the lambda of the bubble
        living there); the first radial panel resolves 1/scale.  Defaults to 1.

    Returns (value, info): value is a float for scalar integrands, an (m,)
    array otherwise; info records evaluations, the error estimate and the box
    count.  The tolerance is relative to the integrand's mass scale (the
    integral of |f|), so integrals that cancel to zero terminate.  Raises
    QuadratureBudgetExceeded when the estimate cannot be brought below
    tolerance within max_evals.
    """
    cfg = dict(DEFAULTS["quadrature"])
    if config:
        cfg.update(config)
    if rel_tol is None:
        rel_tol = cfg["rel_tol"]
    if max_evals is None:
        max_evals = cfg["max_evals"]
    orders = tuple(cfg["angular_orders"])
    radial_order = cfg["radial_order"]
    first = cfg["first_panel_scale"]
    growth = cfg["panel_growth"]

    if centers is None or len(centers) == 0:
        centers = [_E5]
    C = np.array([geo.as_coords(c) for c in centers], dtype=float)
    if scales is None:
        scales = np.ones(len(C))
    scales = np.asarray(scales, dtype=float)
    for i in range(len(C)):
        for j in range(i + 1, len(C)):
            if geo.geodesic_distance(C[i], C[j]) < 1e-9:
                raise CoincidentPoints("quadrature centers coincide")

    evals = 0
    heap = []  # (-err, counter, box)
    counter = 0
    splits = cfg["initial_splits"]
    for i in range(len(C)):
        cell = _Cell(C[i], scales[i], np.delete(C, i, axis=0))
        edges_b = np.linspace(0.0, cell.beta_max, splits[0] + 1)
        edges_t = np.linspace(0.0, np.pi, splits[1] + 1)
        edges_p = np.linspace(0.0, 2.0 * np.pi, splits[2] + 1)
        for b0, b1 in zip(edges_b[:-1], edges_b[1:]):
            for t0, t1 in zip(edges_t[:-1], edges_t[1:]):
                for p0, p1 in zip(edges_p[:-1], edges_p[1:]):
                    box = _Box(
                        cell, np.array([b0, t0, p0]), np.array([b1, t1, p1]),
                        orders, radial_order
                    )
                    evals += _assess_box(box, integrand, first, growth)
                    heapq.heappush(heap, (-box.err, counter, box))
                    counter += 1

    def totals():
        vals = np.array([item[2].value for item in heap])
        tot = vals.sum(axis=0)
        est = float(sum(-item[0] for item in heap))
        # scale for the relative test: cancellation-heavy integrands are
        # measured against the integral of |f|, not the tiny net value
        mass = float(sum(item[2].abs_mass for item in heap))
        return tot, est, mass

    total, est, mass = totals()
    while True:
        denom = max(float(np.max(np.abs(total))), mass, 1e-30)
        if est <= rel_tol * denom:
            converged = True
            break
        if evals >= max_evals:
            raise QuadratureBudgetExceeded(
                f"error estimate {est:.3e} above {rel_tol:.1e} * {denom:.3e} "
                f"after {evals} evaluations",
                estimate=est,
                budget=max_evals,
            )
        _, _, worst = heapq.heappop(heap)
        dim = worst.split_dim
        if worst.radial_bound and worst.rad < radial_order + 16:
            # splitting angles cannot reduce a radial deficit; raise the
            # panel order for this box instead
            worst.rad += 4
            evals += _assess_box(worst, integrand, first, growth)
            heapq.heappush(heap, (-worst.err, counter, worst))
            counter += 1
        elif worst.smooth and worst.orders[dim] < orders[dim] + 6:
            # decaying spectrum: two more degrees beat a bisection here
            up = list(worst.orders)
            up[dim] += 2
            worst.orders = tuple(up)
            evals += _assess_box(worst, integrand, first, growth)
            heapq.heappush(heap, (-worst.err, counter, worst))
            counter += 1
        else:
            mid = 0.5 * (worst.lo[dim] + worst.hi[dim])
            for side in range(2):
                clo, chi = worst.lo.copy(), worst.hi.copy()
                if side == 0:
                    chi[dim] = mid
                else:
                    clo[dim] = mid
                child = _Box(worst.cell, clo, chi, worst.orders, worst.rad)
                evals += _assess_box(child, integrand, first, growth)
                heapq.heappush(heap, (-child.err, counter, child))
                counter += 1
        total, est, mass = totals()

    info = {
        "evaluations": evals,
        "error_estimate": est,
        "boxes": len(heap),
        "converged": converged,
        "centers": len(C),
    }
    value = total if total.shape[0] > 1 else float(total[0])
    return value, info
