"""Calculus of the candidate curvature on the hemisphere and critical point
enumeration.

Intrinsic quantities come from the ambient jets of the expression: with g and
Hess the ambient gradient and Hessian at a unit vector a, the sphere gradient
is the tangential projection of g, the Hessian quadratic form along a unit
tangent v is v' Hess v - <g, a>, and the intrinsic Laplacian is

    Delta K(a) = trace(Hess) - a' Hess a - 4 <g, a>,

exact on the round sphere (no chart pullback, no conformal bookkeeping).
Boundary points of the domain are classified by the gradient of the equator
restriction only; the normal derivative is recorded separately, with the
outward normal nu at the equator being the direction of decreasing x5.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import geometry as geo
from .constants import DEFAULTS
from .errors import NonMorseWarning, SearchIncomplete
from .expr import KExpression


def intrinsic_gradient(k: KExpression, a) -> np.ndarray:
    """Sphere gradient at a as an ambient 5-vector tangent to the sphere."""
    ca = geo.as_coords(a)
    _, g, _, _ = k.jets(ca, order=1)
    return g - np.dot(g, ca) * ca


def tangential_gradient(k: KExpression, a) -> np.ndarray:
    """Gradient of the equator restriction at a boundary point (5-vector).

    Projects out both the radial direction and the inward normal e5, so the
    result lies in the tangent space of the equator 3-sphere.
    """
    ca = geo.as_coords(a)
    t = intrinsic_gradient(k, ca)
    t = t.copy()
    t[4] = 0.0
    return t - np.dot(t, ca) * ca


def normal_derivative(k: KExpression, a) -> float:
    """dK/dnu at a boundary point; nu is outward, i.e. minus the e5 direction."""
    ca = geo.as_coords(a)
    _, g, _, _ = k.jets(ca, order=1)
    return -float(g[4])


def intrinsic_hessian(k: KExpression, a, frame: Optional[np.ndarray] = None) -> np.ndarray:
    """Intrinsic Hessian in an orthonormal tangent frame (4x4)."""
    ca = geo.as_coords(a)
    if frame is None:
        frame = geo.tangent_frame(ca)
    _, g, H, _ = k.jets(ca, order=2)
    return frame @ H @ frame.T - np.dot(g, ca) * np.eye(len(frame))


def intrinsic_laplacian(k: KExpression, a) -> float:
    ca = geo.as_coords(a)
    _, g, H, _ = k.jets(ca, order=2)
    return float(np.trace(H) - ca @ H @ ca - 4.0 * np.dot(g, ca))


def laplacian_gradient(k: KExpression, a) -> np.ndarray:
    """Ambient derivative vector of a -> Delta K(a); project to use intrinsically.

    Differentiating the trace formula: L_j = sum_i T_iij - 6 (Hess a)_j
    - T[a,a,.]_j - 4 g_j, with T the third derivative tensor.
    """
    ca = geo.as_coords(a)
    _, g, H, T = k.jets(ca, order=3)
    return np.einsum("iij->j", T) - 6.0 * (H @ ca) - np.einsum("ija,i,j->a", T, ca, ca) - 4.0 * g


@dataclass
class SearchConfig:
    n_interior: int = DEFAULTS["search"]["n_interior"]
    n_boundary: int = DEFAULTS["search"]["n_boundary"]
    grad_tol: float = DEFAULTS["search"]["grad_tol"]
    hess_tol: float = DEFAULTS["search"]["hess_tol"]
    dedup_tol: float = DEFAULTS["search"]["dedup_tol"]
    max_iter: int = DEFAULTS["search"]["max_iter"]
    max_step: float = DEFAULTS["search"]["max_step"]
    divergence_fraction: float = DEFAULTS["search"]["divergence_fraction"]
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "SearchConfig":
        return cls(**d)


@dataclass
class CriticalPoint:
    """A refined critical point with its classification data.

    H_self, diag_quantity, conditionC_ok and flagged stay None until
    check_condition_c fills them (they need the Green's function).
    """

    location: geo.HemispherePoint
    kind: str  # "interior" | "boundary"
    K_value: float
    morse_index: int
    laplacian_K: float
    d_boundary: float
    grad_norm: float
    hess_eigenvalues: np.ndarray
    non_morse: bool
    dnu_K: Optional[float] = None
    H_self: Optional[float] = None
    diag_quantity: Optional[float] = None
    conditionC_ok: Optional[bool] = None
    flagged: Optional[bool] = None

    def to_json(self) -> dict:
        return {
            "location": self.location.to_json(),
            "kind": self.kind,
            "K_value": self.K_value,
            "morse_index": self.morse_index,
            "laplacian_K": self.laplacian_K,
            "d_boundary": self.d_boundary,
            "grad_norm": self.grad_norm,
            "hess_eigenvalues": list(self.hess_eigenvalues),
            "non_morse": self.non_morse,
            "dnu_K": self.dnu_K,
            "H_self": self.H_self,
            "diag_quantity": self.diag_quantity,
            "conditionC_ok": self.conditionC_ok,
            "flagged": self.flagged,
        }


def _newton_on_subsphere(k: KExpression, x0: np.ndarray, boundary: bool, cfg: SearchConfig):
    """Newton iteration for the (restricted) gradient; returns (x, ok).

    boundary=True confines the iteration to the equator 3-sphere; steps are
    exact geodesics of the subsphere so the constraint never drifts.
    """
    x = x0 / np.linalg.norm(x0)

    def grad_norm_at(y):
        if boundary:
            return float(np.linalg.norm(tangential_gradient(k, y)))
        return float(np.linalg.norm(intrinsic_gradient(k, y)))

    for _ in range(cfg.max_iter):
        frame = geo.tangent_frame(x)
        rows = frame[:3] if boundary else frame
        _, g, H, _ = k.jets(x, order=2)
        gf = rows @ g
        norm = float(np.linalg.norm(gf))
        if norm < cfg.grad_tol:
            return x, True
        Hf = rows @ H @ rows.T - np.dot(g, x) * np.eye(len(rows))
        try:
            step = np.linalg.solve(Hf, -gf)
        except np.linalg.LinAlgError:
            step = -np.linalg.pinv(Hf) @ gf
        size = float(np.linalg.norm(step))
        if not np.isfinite(size) or size == 0.0:
            return x, False
        if size > cfg.max_step:
            step *= cfg.max_step / size
            size = cfg.max_step
        direction = (rows.T @ step) / size
        t = size
        accepted = False
        for _ in range(25):
            cand = geo.geodesic(x, direction, t)
            if grad_norm_at(cand) < norm * (1.0 - 1e-4 * t / size) + 1e-300:
                x = cand
                accepted = True
                break
            t *= 0.5
        if not accepted:
            return x, False
    return x, grad_norm_at(x) < cfg.grad_tol


def _rotation_from_seed(seed: int) -> np.ndarray:
    """Deterministic SO(4) x {1} rotation: preserves the hemisphere and equator."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((4, 4))
    Q, R = np.linalg.qr(A)
    Q = Q @ np.diag(np.sign(np.diag(R)))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    out = np.eye(5)
    out[:4, :4] = Q
    return out


def _classify(k: KExpression, x: np.ndarray, boundary: bool, cfg: SearchConfig) -> CriticalPoint:
    if boundary:
        x = x.copy()
        x[4] = 0.0
        x /= np.linalg.norm(x)
    loc = geo.HemispherePoint(x)
    frame = geo.tangent_frame(x)
    rows = frame[:3] if boundary else frame
    _, g, H, _ = k.jets(x, order=2)
    Hf = rows @ H @ rows.T - np.dot(g, x) * np.eye(len(rows))
    eigs = np.linalg.eigvalsh(Hf)
    non_morse = bool(np.min(np.abs(eigs)) <= cfg.hess_tol)
    if non_morse:
        warnings.warn(
            f"degenerate Hessian at {np.array2string(x, precision=4)} "
            f"(|eig|_min = {np.min(np.abs(eigs)):.2e})",
            NonMorseWarning,
        )
    gn = float(
        np.linalg.norm(tangential_gradient(k, x) if boundary else intrinsic_gradient(k, x))
    )
    return CriticalPoint(
        location=loc,
        kind="boundary" if boundary else "interior",
        K_value=float(k.value(x)),
        morse_index=int(np.sum(eigs < 0.0)),
        laplacian_K=intrinsic_laplacian(k, x),
        d_boundary=geo.boundary_distance(x),
        grad_norm=gn,
        hess_eigenvalues=eigs,
        non_morse=non_morse,
        dnu_K=normal_derivative(k, x) if boundary else None,
    )


def find_critical_points(k: KExpression, search: Optional[SearchConfig] = None) -> list:
    """Multistart Newton enumeration of critical points, deduplicated.

    Interior starts live on a quasi-uniform hemisphere grid, boundary starts
    on an equator grid; a seed-keyed rotation decorrelates the grids between
    runs with different seeds while keeping each run deterministic.  Interior
    iterations that converge onto the equator are reclassified as boundary
    points (they are critical for the restriction too).
    """
    cfg = search or SearchConfig()
    rot = _rotation_from_seed(cfg.seed)
    starts_i = geo.hemisphere_grid(cfg.n_interior) @ rot.T
    starts_b = geo.equator_grid(cfg.n_boundary) @ rot.T

    found = []  # (coords, boundary_flag)
    diverged = 0

    def register(x, boundary):
        if boundary:
            x = x.copy()
            x[4] = 0.0
            x /= np.linalg.norm(x)
        for i, (y, yb) in enumerate(found):
            if geo.geodesic_distance(x, y) < cfg.dedup_tol:
                if boundary and not yb:
                    found[i] = (x, True)
                return
        found.append((x, boundary))

    for x0 in starts_i:
        x, ok = _newton_on_subsphere(k, x0, boundary=False, cfg=cfg)
        if not ok:
            diverged += 1
            continue
        if x[4] < -1e-9:
            continue  # converged outside the closed hemisphere
        register(x, boundary=bool(x[4] < 1e-9))
    for x0 in starts_b:
        x, ok = _newton_on_subsphere(k, x0, boundary=True, cfg=cfg)
        if not ok:
            diverged += 1
            continue
        register(x, boundary=True)

    total = len(starts_i) + len(starts_b)
    if diverged > cfg.divergence_fraction * total:
        raise SearchIncomplete(
            f"{diverged}/{total} Newton starts diverged; critical point list unreliable"
        )

    # stable output order: boundary after interior, then lexicographic coords
    points = [_classify(k, x, b, cfg) for x, b in found]
    points.sort(key=lambda p: (p.kind, tuple(np.round(p.location.coords, 9))))
    return points


@dataclass
class ConditionCReport:
    ok: bool
    cond_tol: float
    convention: str
    violations: list = field(default_factory=list)
    n_interior: int = 0
    n_boundary: int = 0
    n_flagged: int = 0

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "cond_tol": self.cond_tol,
            "convention": self.convention,
            "violations": self.violations,
            "n_interior": self.n_interior,
            "n_boundary": self.n_boundary,
            "n_flagged": self.n_flagged,
        }


def check_condition_c(points: list, convention: str = "flat_model", cond_tol: float = None) -> ConditionCReport:
    """Check the nondegeneracy condition at every critical point, in place.

    Interior points need |{-Delta K/(3K) - 4 H(a,a)}| above tolerance and get
    flagged when the quantity is positive; boundary points need dK/dnu
    strictly inward-decreasing (below -tolerance).  Fills H_self,
    diag_quantity, conditionC_ok and flagged on each point.
    """
    from . import greenfn

    if cond_tol is None:
        cond_tol = DEFAULTS["condition_c"]["cond_tol"]
    report = ConditionCReport(ok=True, cond_tol=cond_tol, convention=convention)
    for idx, p in enumerate(points):
        if p.kind == "interior":
            report.n_interior += 1
            H = greenfn.self_interaction(p.location, convention)
            p.H_self = H
            p.diag_quantity = -p.laplacian_K / (3.0 * p.K_value) - 4.0 * H
            p.conditionC_ok = bool(abs(p.diag_quantity) > cond_tol)
            p.flagged = bool(p.diag_quantity > cond_tol)
            if p.flagged:
                report.n_flagged += 1
            if not p.conditionC_ok:
                report.ok = False
                report.violations.append(
                    {
                        "index": idx,
                        "kind": "interior",
                        "reason": "diagonal quantity at zero",
                        "value": p.diag_quantity,
                    }
                )
        else:
            report.n_boundary += 1
            p.flagged = False
            p.conditionC_ok = bool(p.dnu_K < -cond_tol)
            if not p.conditionC_ok:
                report.ok = False
                report.violations.append(
                    {
                        "index": idx,
                        "kind": "boundary",
                        "reason": "normal derivative not negative",
                        "value": p.dnu_K,
                    }
                )
    return report
