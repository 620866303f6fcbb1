"""Interaction matrices over flagged points and the existence criterion.

A flagged point is an interior critical point y of K whose diagonal quantity
-dK(y)/(3K(y)) - 4H(y,y) is positive; these are the only places where mass
can concentrate.  For a subset tau = (y_1, ..., y_s) the symmetric matrix

    M_pp = -dK(y_p) / (3 K(y_p)^2) - 4 H(y_p, y_p) / K(y_p)
    M_pq = -4 G(y_p, y_q) / sqrt(K(y_p) K(y_q))        (p != q)

has strictly negative off-diagonal entries, and its least eigenvalue rho
decides whether the configuration concentrating simultaneously at tau loses
energy by growing all scales (rho > 0) or escapes along a mixed direction
(rho < 0).  The existence test sums (-1)^(s - 1 - sum of Morse indices) over
the rho-positive subsets and compares against 1.

Cauchy interlacing makes the rho-positive family downward closed: dropping a
point from a positive subset keeps it positive.  The pruned enumeration walks
subset sizes upward and only builds matrices whose every maximal proper
subset is already positive; it must agree with exhaustive enumeration to the
exact integer, which the tests check.
"""

from dataclasses import dataclass, field
from itertools import combinations
from math import factorial
from typing import Optional, Sequence
import warnings

import numpy as np

from . import geometry as geo
from . import greenfn, kfield
from .constants import DEFAULTS
from .errors import DegenerateHypothesisWarning, TooManyFlagged

__all__ = [
    "FlaggedData",
    "InteractionMatrix",
    "CriterionReport",
    "Thm12Report",
    "flagged_points",
    "build_matrix",
    "euler_hopf_sum",
    "thm12_check",
    "evaluate_criterion",
]


def flagged_points(critical_points: Sequence, convention: str = "flat_model",
                   cond_tol: Optional[float] = None):
    """Interior critical points with positive diagonal quantity.

    Preserves the discovery order of the input (kfield already returns a
    deterministically sorted list).  Points missing the condition (C) fields
    get them filled in place first.
    """
    pts = list(critical_points)
    if any(p.kind == "interior" and p.diag_quantity is None for p in pts):
        kfield.check_condition_c(pts, convention=convention, cond_tol=cond_tol)
    tol = DEFAULTS["condition_c"]["cond_tol"] if cond_tol is None else cond_tol
    return [p for p in pts
            if p.kind == "interior" and p.diag_quantity is not None
            and p.diag_quantity > tol]


@dataclass
class FlaggedData:
    """Numeric inputs of the criterion: one row per flagged point.

    green holds the full kernel values G(y_p, y_q) off the diagonal; the
    diagonal entries are ignored.  points keeps the originating critical
    point records when the data came from a K field, None for synthetic
    datasets fed in directly.
    """

    k_values: np.ndarray
    diag: np.ndarray
    green: np.ndarray
    morse: np.ndarray
    points: Optional[list] = None
    convention: Optional[str] = None

    def __post_init__(self):
        self.k_values = np.asarray(self.k_values, dtype=float)
        self.diag = np.asarray(self.diag, dtype=float)
        self.green = np.asarray(self.green, dtype=float)
        self.morse = np.asarray(self.morse, dtype=int)
        l = self.k_values.shape[0]
        if self.diag.shape != (l,) or self.morse.shape != (l,):
            raise ValueError("flagged data arrays must share one length")
        if self.green.shape != (l, l):
            raise ValueError("green must be an l x l matrix")
        if np.any(self.k_values <= 0.0):
            raise ValueError("K values must be positive")
        if l > 1:
            off = self.green[~np.eye(l, dtype=bool)]
            if np.any(off <= 0.0):
                raise ValueError("kernel values must be positive off the diagonal")
            if not np.allclose(self.green, self.green.T, rtol=0.0, atol=1e-12):
                raise ValueError("green must be symmetric")
        if np.any(self.morse < 0) or np.any(self.morse > 4):
            raise ValueError("interior Morse indices lie in 0..4")

    def __len__(self) -> int:
        return int(self.k_values.shape[0])

    @classmethod
    def from_critical_points(cls, points: Sequence,
                             convention: str = "flat_model") -> "FlaggedData":
        pts = list(points)
        l = len(pts)
        g = np.zeros((l, l))
        for i in range(l):
            for j in range(i + 1, l):
                g[i, j] = g[j, i] = greenfn.green(
                    pts[i].location, pts[j].location, convention)
        return cls(
            k_values=np.array([p.K_value for p in pts], dtype=float),
            diag=np.array([p.diag_quantity for p in pts], dtype=float),
            green=g,
            morse=np.array([p.morse_index for p in pts], dtype=int),
            points=pts,
            convention=convention,
        )

    @classmethod
    def synthetic(cls, k_values, diag, green, morse_indices) -> "FlaggedData":
        """Direct numeric inputs, bypassing any K field."""
        return cls(k_values=k_values, diag=diag, green=green,
                   morse=morse_indices)

    def to_json(self) -> dict:
        return {
            "l": len(self),
            "k_values": [float(v) for v in self.k_values],
            "diag_quantities": [float(v) for v in self.diag],
            "green": [[float(v) for v in row] for row in self.green],
            "morse_indices": [int(v) for v in self.morse],
            "convention": self.convention,
        }


@dataclass
class InteractionMatrix:
    """Symmetric matrix of one flagged subset with its least eigenvalue."""

    subset: tuple
    entries: np.ndarray
    eigenvalues: np.ndarray
    rho: float
    nondegenerate: bool

    def to_json(self) -> dict:
        return {
            "subset": list(self.subset),
            "entries": [[float(v) for v in row] for row in self.entries],
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "rho": self.rho,
            "nondegenerate": self.nondegenerate,
        }


def build_matrix(data: FlaggedData, subset: Sequence[int],
                 eig_tol: Optional[float] = None) -> InteractionMatrix:
    """Assemble M over the given flagged-point indices and diagonalize it.

    Degeneracy is judged by the eigenvalue of smallest magnitude against
    eig_tol relative to the spectral norm.
    """
    if eig_tol is None:
        eig_tol = DEFAULTS["criterion"]["eig_tol"]
    idx = tuple(sorted(int(i) for i in subset))
    if len(idx) == 0:
        raise ValueError("subset must be non-empty")
    if len(set(idx)) != len(idx):
        raise ValueError("subset indices must be distinct")
    if idx[0] < 0 or idx[-1] >= len(data):
        raise ValueError("subset index out of range")

    kv = data.k_values[list(idx)]
    m = np.diag(data.diag[list(idx)] / kv)
    for p in range(len(idx)):
        for q in range(p + 1, len(idx)):
            v = -4.0 * data.green[idx[p], idx[q]] / np.sqrt(kv[p] * kv[q])
            m[p, q] = m[q, p] = v
    eigs = np.linalg.eigvalsh(m)
    closest = float(eigs[np.argmin(np.abs(eigs))])
    scale = float(np.max(np.abs(eigs)))
    nondeg = abs(closest) > eig_tol * scale
    return InteractionMatrix(subset=idx, entries=m, eigenvalues=eigs,
                             rho=float(eigs[0]), nondegenerate=bool(nondeg))


@dataclass
class Thm12Report:
    """Per-point margins of the Laplacian bound at interior critical points."""

    passes: bool
    convention: str
    points: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"passes": self.passes, "convention": self.convention,
                "points": self.points}


def thm12_check(critical_points: Sequence,
                convention: str = "flat_model") -> Thm12Report:
    """Check -dK/(3K) <= 1/d^2 at every interior critical point.

    d is the distance to the boundary in the active convention: the chart
    height for the flat model, the geodesic distance on the sphere otherwise.
    Margins are bound minus left side, so nonnegative means the point passes.
    """
    rows = []
    ok = True
    for p in critical_points:
        if p.kind != "interior":
            continue
        lhs = -p.laplacian_K / (3.0 * p.K_value)
        if convention == "flat_model":
            d = float(geo.flat_coords(p.location)[3])
        else:
            d = float(p.d_boundary)
        bound = 1.0 / d**2
        margin = bound - lhs
        ok = ok and (lhs <= bound)
        rows.append({
            "location": [float(v) for v in geo.as_coords(p.location)],
            "K_value": float(p.K_value),
            "laplacian_K": float(p.laplacian_K),
            "lhs": float(lhs),
            "d": d,
            "bound": float(bound),
            "margin": float(margin),
        })
    return Thm12Report(passes=bool(ok), convention=convention, points=rows)


@dataclass
class CriterionReport:
    """Outcome of the subset sum together with everything used to form it."""

    l: int
    method: str
    subsets: list
    sum_A: int
    thm11_applies: bool
    thm11_concludes: bool
    indices_at_infinity: list
    positive_subsets: list
    degenerate_subsets: list
    caveats: list
    n_evaluated: int
    sum_A_ordered: Optional[int] = None
    thm12_concludes: Optional[bool] = None
    thm12: Optional[Thm12Report] = None
    condition_c: Optional[dict] = None

    @property
    def certified(self) -> bool:
        """Existence is certified when the hypotheses hold and the sum misses 1."""
        hypotheses = self.condition_c is None or bool(self.condition_c["ok"])
        return hypotheses and self.thm11_applies and self.thm11_concludes

    def to_json(self) -> dict:
        return {
            "l": self.l,
            "method": self.method,
            "subsets": self.subsets,
            "sum_A": self.sum_A,
            "sum_A_ordered": self.sum_A_ordered,
            "thm11_applies": self.thm11_applies,
            "thm11_concludes": self.thm11_concludes,
            "thm12_concludes": self.thm12_concludes,
            "thm12": None if self.thm12 is None else self.thm12.to_json(),
            "condition_c": self.condition_c,
            "indices_at_infinity": self.indices_at_infinity,
            "positive_subsets": [list(s) for s in self.positive_subsets],
            "degenerate_subsets": [list(s) for s in self.degenerate_subsets],
            "certified": self.certified,
            "caveats": self.caveats,
            "n_evaluated": self.n_evaluated,
        }


_VACUOUS_NOTE = ("no flagged points: the sum is 0 and differs from 1, but the "
                 "vacuous case is not treated explicitly by the underlying "
                 "argument; treat the certificate with that caveat")

# interlacing can only be violated by roundoff at this relative scale
_INTERLACE_SLACK = 1e-10


def _summand(s: int, morse_sum: int) -> int:
    return 1 if (s - 1 - morse_sum) % 2 == 0 else -1


def euler_hopf_sum(data: FlaggedData, method: Optional[str] = None,
                   config: Optional[dict] = None) -> CriterionReport:
    """Sum (-1)^(s-1-sum k) over rho-positive subsets of the flagged points.

    method None picks exhaustive enumeration up to exhaustive_max points and
    the interlacing-pruned walk beyond; "exhaustive" and "pruned" force one.
    Each positive subset also contributes its index at infinity 5s-1-sum(k).
    Degenerate matrices do not stop the sum but clear thm11_applies and emit
    DegenerateHypothesisWarning.
    """
    cfg = dict(DEFAULTS["criterion"])
    if config:
        unknown = set(config) - set(cfg)
        if unknown:
            raise ValueError(f"unknown criterion options: {sorted(unknown)}")
        cfg.update(config)

    l = len(data)
    if l > cfg["l_max"]:
        raise TooManyFlagged(
            f"{l} flagged points exceed l_max = {cfg['l_max']}")
    if method is None:
        method = "exhaustive" if l <= cfg["exhaustive_max"] else "pruned"
    if method not in ("exhaustive", "pruned"):
        raise ValueError("method must be 'exhaustive' or 'pruned'")

    records = []
    positive = []          # subsets with rho > 0, in enumeration order
    degenerate = []
    rho_of = {}

    def visit(subset: tuple) -> bool:
        im = build_matrix(data, subset, eig_tol=cfg["eig_tol"])
        rho_of[subset] = im.rho
        if len(subset) > 1:
            # interlacing guarantees every computed facet sits at or above rho
            scale = max(1.0, float(np.max(np.abs(im.eigenvalues))))
            for facet in combinations(subset, len(subset) - 1):
                if facet in rho_of:
                    assert rho_of[facet] >= im.rho - _INTERLACE_SLACK * scale, \
                        "interlacing violated: facet rho below subset rho"
        is_pos = im.rho > 0.0
        morse_sum = int(np.sum(data.morse[list(subset)]))
        rec = {
            "subset": list(subset),
            "rho": im.rho,
            "nondegenerate": im.nondegenerate,
            "morse_sum": morse_sum,
            "summand": _summand(len(subset), morse_sum) if is_pos else 0,
        }
        if is_pos:
            rec["index_at_infinity"] = 5 * len(subset) - 1 - morse_sum
            positive.append(subset)
        if not im.nondegenerate:
            degenerate.append(subset)
        records.append(rec)
        return is_pos

    if method == "exhaustive":
        for s in range(1, l + 1):
            for subset in combinations(range(l), s):
                visit(subset)
    else:
        prev = set()
        for i in range(l):
            if visit((i,)):
                prev.add((i,))
        s = 2
        while prev and s <= l:
            layer = set()
            seen = set()
            for p in prev:
                for x in range(l):
                    if x in p:
                        continue
                    cand = tuple(sorted(p + (x,)))
                    if cand in seen:
                        continue
                    seen.add(cand)
                    if all(tuple(f) in prev
                           for f in combinations(cand, s - 1)):
                        layer.add(cand)
            for cand in sorted(layer):
                visit(cand)
            prev = {c for c in layer if rho_of[c] > 0.0}
            s += 1
        records.sort(key=lambda r: (len(r["subset"]), r["subset"]))
        positive.sort(key=lambda t: (len(t), t))

    sum_a = sum(r["summand"] for r in records)
    indices = [5 * len(t) - 1 - int(np.sum(data.morse[list(t)]))
               for t in positive]

    caveats = []
    if l == 0:
        caveats.append(_VACUOUS_NOTE)
    applies = not degenerate
    if degenerate:
        warnings.warn(
            f"{len(degenerate)} interaction matrices are numerically "
            "degenerate; the count's hypotheses fail",
            DegenerateHypothesisWarning, stacklevel=2)
        caveats.append("degenerate interaction matrices: "
                       + ", ".join(str(list(t)) for t in degenerate))

    ordered = None
    if cfg["ordered_tuples"]:
        ordered = sum(factorial(len(r["subset"])) * r["summand"]
                      for r in records)

    return CriterionReport(
        l=l,
        method=method,
        subsets=records,
        sum_A=int(sum_a),
        thm11_applies=bool(applies),
        thm11_concludes=bool(sum_a != 1),
        indices_at_infinity=indices,
        positive_subsets=[tuple(t) for t in positive],
        degenerate_subsets=[tuple(t) for t in degenerate],
        caveats=caveats,
        n_evaluated=len(records),
        sum_A_ordered=None if ordered is None else int(ordered),
    )


def evaluate_criterion(k, convention: str = "flat_model",
                       config: Optional[dict] = None,
                       search=None) -> CriterionReport:
    """Full pipeline from a K field to the criterion verdict.

    Finds critical points, verifies condition (C), assembles the flagged
    data, runs the subset sum, and attaches the Laplacian-bound check.
    """
    cond_tol = None
    crit_cfg = None
    if config:
        cond_tol = config.get("cond_tol")
        crit_cfg = {k2: v for k2, v in config.items()
                    if k2 in DEFAULTS["criterion"]}
    pts = kfield.find_critical_points(k, search=search)
    cond = kfield.check_condition_c(pts, convention=convention,
                                    cond_tol=cond_tol)
    flagged = flagged_points(pts, convention=convention, cond_tol=cond_tol)
    data = FlaggedData.from_critical_points(flagged, convention=convention)
    report = euler_hopf_sum(data, config=crit_cfg)
    report.condition_c = cond.to_json()
    if not cond.ok:
        report.caveats.append(
            "condition (C) violations at critical points void the certificate")
    t12 = thm12_check(pts, convention=convention)
    report.thm12 = t12
    report.thm12_concludes = t12.passes
    return report
