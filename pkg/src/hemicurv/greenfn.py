"""Neumann Green's function of the conformal operator -Delta + 2 on the
closed half sphere, in two interchangeable conventions.

spherical_image:  G(x, y) = 1/(1 - cos d(x, y)) + 1/(1 - cos d(x, ybar))
flat_model:       G(x, y) = 1/|xt - yt|^2 + 1/|xt - conj(yt)|^2

where ybar is the equatorial reflection, xt/yt the half-space chart images
and conj the chart-level reflection (y4 -> -y4).  The kernel 1/(1 - cos d)
solves (-Delta + 2) u = 0 away from the pole; 1/|y|^2 is harmonic on R^4.
The image term enforces the vanishing normal derivative on the equator in
both pictures.  The two regular parts do not agree pointwise (the chart is
not an isometry); every downstream quantity records which convention
produced it.

Field-point arguments accept a single point or an (..., 5) batch; source
points are always single.
"""

from __future__ import annotations

import numpy as np

from . import geometry as geo
from .errors import BoundaryPointError, CoincidentPoints, PoleSingularity

CONVENTIONS = ("flat_model", "spherical_image")

# one_minus_cos below this means geodesic distance < 1e-9
_COINCIDENT_OMC = 0.5e-18


def _check(convention: str):
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")


def _batch(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1] != 5:
        raise ValueError(f"expected sphere coordinates with last axis 5, got {arr.shape}")
    return arr


def _omc(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """1 - cos(distance), chordally, batched over X."""
    d = X - y
    return 0.5 * np.einsum("...i,...i->...", d, d)


def _flat_batch(X: np.ndarray) -> np.ndarray:
    denom = 1.0 + X[..., 0]
    if np.min(denom) <= geo.POLE_TOL:
        raise PoleSingularity("chart pole reached in batch: 1 + x1 ~ 0")
    return X[..., 1:] / denom[..., None]


def green(x, y, convention: str = "flat_model") -> float:
    """Green's function value; raises CoincidentPoints within 1e-9 of x = y."""
    _check(convention)
    cx = geo.as_coords(x)
    cy = geo.as_coords(y)
    if _omc(cx, cy) < _COINCIDENT_OMC:
        raise CoincidentPoints("Green's function evaluated at coincident points")
    if convention == "spherical_image":
        return float(1.0 / _omc(cx, cy) + 1.0 / _omc(cx, geo.reflect(cy)))
    xt = geo.flat_coords(cx)
    yt = geo.flat_coords(cy)
    yc = yt.copy()
    yc[-1] = -yc[-1]
    return float(1.0 / np.dot(xt - yt, xt - yt) + 1.0 / np.dot(xt - yc, xt - yc))


def regular_part(a, x, convention: str = "flat_model"):
    """Regular part H(a, x): the image term of G, smooth on the open half.

    a is the (interior) source; x may be a batch.  Returns a float for a
    single x, an array matching the batch shape otherwise.
    """
    _check(convention)
    ca = geo.as_coords(a)
    X = _batch(x)
    single = X.ndim == 1
    if convention == "spherical_image":
        out = 1.0 / _omc(X, geo.reflect(ca))
    else:
        at = geo.flat_coords(ca)
        ac = at.copy()
        ac[-1] = -ac[-1]
        Xt = _flat_batch(X)
        d = Xt - ac
        out = 1.0 / np.einsum("...i,...i->...", d, d)
    return float(out) if single else out


def _inverse_omc_gradient(X: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Tangential gradient of x -> 1/(1 - <x, c>) at sphere points X."""
    omc = _omc(X, c)[..., None]
    amb = c / omc**2
    return amb - np.einsum("...i,...i->...", amb, X)[..., None] * X


def _flat_inverse_sq_gradient(X: np.ndarray, c4: np.ndarray) -> np.ndarray:
    """Tangential gradient of x -> 1/|chart(x) - c4|^2, pulled back to the sphere."""
    denom = (1.0 + X[..., 0])[..., None]
    Y = X[..., 1:] / denom
    d = Y - c4
    r2 = np.einsum("...i,...i->...", d, d)[..., None]
    u = -2.0 * d / r2**2          # gradient in the chart
    g = np.empty_like(X)
    g[..., 0] = -np.einsum("...i,...i->...", u, Y)
    g[..., 1:] = u
    g /= denom
    return g - np.einsum("...i,...i->...", g, X)[..., None] * X


def regular_gradient(a, x, convention: str = "flat_model"):
    """Tangential gradient of H(a, .) with respect to the field point x."""
    _check(convention)
    ca = geo.as_coords(a)
    X = _batch(x)
    if convention == "spherical_image":
        out = _inverse_omc_gradient(X, geo.reflect(ca))
    else:
        at = geo.flat_coords(ca)
        ac = at.copy()
        ac[-1] = -ac[-1]
        out = _flat_inverse_sq_gradient(X, ac)
    return out


def green_gradient(x, y, convention: str = "flat_model"):
    """Tangential gradient of G(., y) at x (x may be a batch)."""
    _check(convention)
    cy = geo.as_coords(y)
    X = _batch(x)
    if convention == "spherical_image":
        out = _inverse_omc_gradient(X, cy) + _inverse_omc_gradient(X, geo.reflect(cy))
    else:
        yt = geo.flat_coords(cy)
        yc = yt.copy()
        yc[-1] = -yc[-1]
        out = _flat_inverse_sq_gradient(X, yt) + _flat_inverse_sq_gradient(X, yc)
    return out


def self_interaction(a, convention: str = "flat_model") -> float:
    """H(a, a): 1/(4 y4^2) in the chart picture, 1/(2 sin^2 d) in the spherical one.

    Diverges on the boundary; raises BoundaryPointError within 1e-9 of it.
    """
    _check(convention)
    ca = geo.as_coords(a)
    if geo.boundary_distance(ca) < 1e-9:
        raise BoundaryPointError("self-interaction diverges on the boundary")
    return regular_part(ca, ca, convention)


def _sphere_kernel_radial(d: np.ndarray):
    """Value and first two radial derivatives of 1/(1 - cos d), closed form."""
    c, s = np.cos(d), np.sin(d)
    f = 1.0 / (1.0 - c)
    f1 = -s / (1.0 - c) ** 2
    f2 = -c / (1.0 - c) ** 2 + 2.0 * s**2 / (1.0 - c) ** 3
    return f, f1, f2


def _stencil_second(fvals: np.ndarray, h: float) -> float:
    """Fourth order second derivative from 5 samples at -2h..2h."""
    w = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
    return float(w @ fvals) / h**2


def verify_kernel(convention: str = "flat_model") -> dict:
    """Consistency checks on the active kernel; returns the residuals.

    radial: the kernel's radial ODE, (-Delta + 2) u = 0 for the spherical
        kernel, Laplace for the flat one, at distances 0.5, 1.0, 1.5.
    neumann: normal derivative of the full G on 100 equator points for
        interior sources, via the analytic gradient.
    harmonic: full-operator residual of G at off-axis field points by
        fourth order finite differences (the image term is exercised too).
    """
    _check(convention)
    dists = np.array([0.5, 1.0, 1.5])
    if convention == "spherical_image":
        f, f1, f2 = _sphere_kernel_radial(dists)
        radial = f2 + 3.0 * (np.cos(dists) / np.sin(dists)) * f1 - 2.0 * f
    else:
        rho = dists
        f1 = -2.0 / rho**3
        f2 = 6.0 / rho**4
        radial = f2 + 3.0 * f1 / rho

    nu = np.zeros(5)
    nu[4] = -1.0
    sources = [
        np.array([np.cos(1.0), 0.0, 0.0, 0.0, np.sin(1.0)]),
        np.array([0.0, np.cos(0.5), 0.0, 0.0, np.sin(0.5)]),
    ]
    eq = geo.equator_grid(100)
    neumann = 0.0
    for y in sources:
        gr = green_gradient(eq, y, convention)
        neumann = max(neumann, float(np.max(np.abs(gr @ nu))))

    # full-kernel operator residual at a handful of generic field points
    y0 = sources[0]
    h = 5e-4
    offsets = np.arange(-2, 3) * h
    harmonic = 0.0
    field_pts = [
        np.array([0.2, 0.5, 0.3, 0.1, 0.0]),
        np.array([0.1, -0.4, 0.2, 0.6, 0.0]),
    ]
    for raw in field_pts:
        raw = raw / np.linalg.norm(raw)
        x = geo.geodesic(raw, np.array([0.0, 0.0, 0.0, 0.0, 1.0]), 0.7)
        if convention == "spherical_image":
            frame = geo.tangent_frame(x)
            lap = 0.0
            for e in frame:
                vals = np.array([green(geo.geodesic(x, e, t), y0, convention) for t in offsets])
                lap += _stencil_second(vals, h)
            res = -lap + 2.0 * green(x, y0, convention)
        else:
            xt = geo.flat_coords(x)
            lap = 0.0
            for k in range(4):
                pts = np.repeat(xt[None, :], 5, axis=0)
                pts[:, k] += offsets
                vals = np.array(
                    [green(geo.from_flat(p).coords, y0, convention) for p in pts]
                )
                lap += _stencil_second(vals, h)
            res = -lap
        harmonic = max(harmonic, abs(res))

    return {
        "convention": convention,
        "radial_distances": list(dists),
        "radial_residuals": [float(r) for r in radial],
        "radial_max": float(np.max(np.abs(radial))),
        "neumann_samples": len(eq) * len(sources),
        "neumann_max": neumann,
        "harmonic_max": harmonic,
    }
