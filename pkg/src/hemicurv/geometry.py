"""Exact geometry of the closed upper hemisphere of the unit 4-sphere.

Points live in R^5 with |x| = 1 and x[4] >= 0; the boundary is the equator
x[4] = 0.  A single stereographic chart, projecting from the equatorial point
q = (-1, 0, 0, 0, 0), identifies the hemisphere closure minus q with the flat
closed half-space {y in R^4 : y[3] >= 0}.  All distances are geodesic
(radians); near-zero distances are computed chordally to avoid arccos
cancellation.
"""

from __future__ import annotations

import numpy as np

from .errors import PoleSingularity

BOUNDARY_SNAP = 1e-12
POLE_TOL = 1e-12

_CHART_POLE = np.array([-1.0, 0.0, 0.0, 0.0, 0.0])


def as_coords(x) -> np.ndarray:
    """Coerce a point-like object (HemispherePoint, FlatPoint, array) to ndarray."""
    if isinstance(x, (HemispherePoint, FlatPoint)):
        return x.coords
    return np.asarray(x, dtype=float)


class HemispherePoint:
    """A point of the closed upper hemisphere: unit 5-vector, last coord >= 0.

    The constructor normalizes to unit length and snaps last coordinates in
    [-1e-12, 0] to exact 0.  Coordinates more negative than the snap tolerance
    raise ValueError: points below the equator are not representable.
    """

    __slots__ = ("coords",)

    def __init__(self, coords):
        c = np.asarray(coords, dtype=float).copy()
        if c.shape != (5,):
            raise ValueError(f"hemisphere point needs 5 coordinates, got shape {c.shape}")
        n = np.linalg.norm(c)
        if not np.isfinite(n) or n == 0.0:
            raise ValueError("cannot normalize zero or non-finite vector")
        c /= n
        if c[4] < -BOUNDARY_SNAP:
            raise ValueError(f"point below the equator: x5 = {c[4]:.3e}")
        if c[4] < 0.0:
            c[4] = 0.0
            c /= np.linalg.norm(c)
        self.coords = c

    @property
    def is_boundary(self) -> bool:
        return self.coords[4] == 0.0

    def to_json(self):
        return list(self.coords)

    def __repr__(self):
        tag = "boundary" if self.is_boundary else "interior"
        return f"HemispherePoint({np.array2string(self.coords, precision=6)}, {tag})"


class FlatPoint:
    """A point of the flat half-space model: 4 reals with coords[3] >= 0."""

    __slots__ = ("coords",)

    def __init__(self, coords):
        c = np.asarray(coords, dtype=float).copy()
        if c.shape != (4,):
            raise ValueError(f"flat point needs 4 coordinates, got shape {c.shape}")
        if c[3] < -BOUNDARY_SNAP:
            raise ValueError(f"flat point below the boundary plane: y4 = {c[3]:.3e}")
        if c[3] < 0.0:
            c[3] = 0.0
        self.coords = c

    @property
    def is_boundary(self) -> bool:
        return self.coords[3] == 0.0

    def to_json(self):
        return list(self.coords)

    def __repr__(self):
        return f"FlatPoint({np.array2string(self.coords, precision=6)})"


def one_minus_cos(x, y) -> float:
    """1 - cos(geodesic distance), computed chordally: half the squared chord.

    Exact at both ends of the range; this is the combination the interaction
    kernels consume, so it is the primitive and distances derive from it.
    """
    cx, cy = as_coords(x), as_coords(y)
    d = cx - cy
    return 0.5 * float(np.dot(d, d))


def geodesic_distance(x, y) -> float:
    """Geodesic distance on the unit sphere, in [0, pi].

    Uses 2*arcsin(chord/2) below the crossover and the antipodal chord above,
    which keeps full relative accuracy at both ends.
    """
    cx, cy = as_coords(x), as_coords(y)
    chord = np.linalg.norm(cx - cy)
    if chord <= np.sqrt(2.0):
        return 2.0 * float(np.arcsin(min(1.0, 0.5 * chord)))
    anti = np.linalg.norm(cx + cy)
    return np.pi - 2.0 * float(np.arcsin(min(1.0, 0.5 * anti)))


def boundary_distance(a) -> float:
    """Geodesic distance to the equator: arcsin of the last coordinate."""
    c = as_coords(a)
    return float(np.arcsin(np.clip(c[4], -1.0, 1.0)))


def reflect(a) -> np.ndarray:
    """Equatorial reflection.

    Sphere points (5 coords): negate the last coordinate.  Flat points
    (4 coords): negate y4.  Returns a raw array because the image generally
    leaves the closed domain; boundary points are fixed.
    """
    c = as_coords(a).copy()
    c[-1] = -c[-1]
    return c


def to_flat(x) -> FlatPoint:
    """Stereographic chart from q = (-1,0,0,0,0): y = (x2,...,x5)/(1+x1).

    Sends the equator to {y4 = 0} and the open hemisphere to y4 > 0.
    Raises PoleSingularity within tolerance of q.
    """
    c = as_coords(x)
    denom = 1.0 + c[0]
    if denom <= POLE_TOL:
        raise PoleSingularity(f"chart pole reached: 1 + x1 = {denom:.3e}")
    return FlatPoint(c[1:] / denom)


def from_flat(y) -> HemispherePoint:
    """Inverse chart: x1 = (1-|y|^2)/(1+|y|^2), rest = 2y/(1+|y|^2)."""
    c = as_coords(y)
    r2 = float(np.dot(c, c))
    w = 1.0 + r2
    out = np.empty(5)
    out[0] = (1.0 - r2) / w
    out[1:] = 2.0 * c / w
    return HemispherePoint(out)


def flat_coords(x) -> np.ndarray:
    """Chart image as a raw 4-array (no boundary snapping or validation)."""
    c = as_coords(x)
    denom = 1.0 + c[0]
    if denom <= POLE_TOL:
        raise PoleSingularity(f"chart pole reached: 1 + x1 = {denom:.3e}")
    return c[1:] / denom


def chart_jacobian(x) -> np.ndarray:
    """4x5 Jacobian dy/dx of the chart at a sphere point.

    y_k = x_{k+1}/(1+x1), so dy_k/dx1 = -y_k/(1+x1) and
    dy_k/dx_{j} = delta_{k+1,j}/(1+x1).
    """
    c = as_coords(x)
    denom = 1.0 + c[0]
    if denom <= POLE_TOL:
        raise PoleSingularity(f"chart pole reached: 1 + x1 = {denom:.3e}")
    y = c[1:] / denom
    J = np.zeros((4, 5))
    J[:, 0] = -y / denom
    J[:, 1:] = np.eye(4) / denom
    return J


def tangent_projection(a, v) -> np.ndarray:
    """Project an ambient vector onto the tangent space at a."""
    ca, cv = as_coords(a), as_coords(v)
    return cv - np.dot(cv, ca) * ca


def tangent_frame(a) -> np.ndarray:
    """Deterministic orthonormal tangent frame at a, shape (4, 5).

    Interior points: Gram-Schmidt of the ambient basis against a, keeping the
    first four independent directions.  Boundary points: the first three rows
    are tangent to the equator and the fourth is the inward normal (the unit
    tangent of increasing x5), so the outward normal is minus the last row.
    """
    ca = as_coords(a)
    if abs(ca[4]) <= BOUNDARY_SNAP:
        fixed = [np.array([0.0, 0.0, 0.0, 0.0, 1.0])]
        pool_cols = range(4)
        want = 3
    else:
        fixed = []
        pool_cols = range(5)
        want = 4
    rows = []
    basis = [ca] + fixed
    for j in pool_cols:
        v = np.zeros(5)
        v[j] = 1.0
        for b in basis + rows:
            v = v - np.dot(v, b) * b
        n = np.linalg.norm(v)
        if n > 1e-8:
            rows.append(v / n)
        if len(rows) == want:
            break
    frame = rows + fixed
    return np.array(frame)


def geodesic(a, v, t: float) -> np.ndarray:
    """Unit-speed geodesic gamma(t) = cos(t) a + sin(t) v as a raw unit vector.

    v must be a unit tangent at a.  The result can leave the closed hemisphere
    (derivative stencils step across the equator on purpose), so no domain
    validation is applied; wrap in HemispherePoint when needed.
    """
    ca, cv = as_coords(a), as_coords(v)
    out = np.cos(t) * ca + np.sin(t) * cv
    return out / np.linalg.norm(out)


def random_hemisphere_points(n: int, rng) -> np.ndarray:
    """n uniform points of the open upper hemisphere, shape (n, 5)."""
    x = rng.standard_normal((n, 5))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    x[:, 4] = np.abs(x[:, 4])
    return x


def _kronecker(n: int, dim: int) -> np.ndarray:
    # additive recurrence with the generalized golden ratio: x**(dim+1) = x + 1
    phi = 1.5
    for _ in range(64):
        phi = phi - (phi ** (dim + 1) - phi - 1.0) / ((dim + 1) * phi**dim - 1.0)
    alpha = np.array([phi ** -(j + 1) for j in range(dim)])
    k = np.arange(1, n + 1)[:, None]
    return np.mod(0.5 + k * alpha, 1.0)


def _invert_cdf(u: np.ndarray, cdf, lo: float, hi: float) -> np.ndarray:
    a = np.full_like(u, lo)
    b = np.full_like(u, hi)
    for _ in range(60):
        m = 0.5 * (a + b)
        below = cdf(m) < u
        a = np.where(below, m, a)
        b = np.where(below, b, m)
    return 0.5 * (a + b)


def _s3_directions(u3: np.ndarray) -> np.ndarray:
    """Map (n, 3) unit-cube samples to uniform S^3 directions, shape (n, 4)."""
    th1 = _invert_cdf(u3[:, 0], lambda t: (t - np.sin(t) * np.cos(t)) / np.pi, 0.0, np.pi)
    th2 = np.arccos(1.0 - 2.0 * u3[:, 1])
    ph = 2.0 * np.pi * u3[:, 2]
    s1, s2 = np.sin(th1), np.sin(th2)
    return np.stack(
        [np.cos(th1), s1 * np.cos(th2), s1 * s2 * np.cos(ph), s1 * s2 * np.sin(ph)],
        axis=1,
    )


def hemisphere_grid(n: int) -> np.ndarray:
    """Deterministic quasi-uniform grid of n points on the open hemisphere.

    Kronecker sequence mapped through the exact area CDF: colatitude t from
    the north pole via F(t) = (2 - 3 cos t + cos^3 t)/2 on [0, pi/2], the
    orthogonal S^3 direction via its own (sin^2, sin, uniform) marginals.
    """
    u = _kronecker(n, 4)
    t = _invert_cdf(u[:, 0], lambda s: 0.5 * (2.0 - 3.0 * np.cos(s) + np.cos(s) ** 3), 0.0, np.pi / 2)
    omega = _s3_directions(u[:, 1:])
    out = np.empty((n, 5))
    out[:, :4] = np.sin(t)[:, None] * omega
    out[:, 4] = np.cos(t)
    return out


def equator_grid(n: int) -> np.ndarray:
    """Deterministic quasi-uniform grid of n points on the equator 3-sphere."""
    u = _kronecker(n, 3)
    out = np.zeros((n, 5))
    out[:, :4] = _s3_directions(u)
    return out
