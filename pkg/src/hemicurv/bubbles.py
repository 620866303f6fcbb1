"""Bubbles, their interactions, and the energy functional.

The standard bubble on the sphere is

    delta_{a,lam}(x) = lam / (lam^2 + 1 + (1 - lam^2) cos d(a, x))

written here with the numerically stable denominator 2 + (lam^2 - 1)(1 - cos d),
since 1 - cos d is exactly half the squared chord.  It solves
-Delta delta + 2 delta = 8 delta^3 on the whole sphere.  An interior bubble is
corrected by the regular part of the Neumann Green function, phi = delta +
H(a, .)/lam; a bubble centered on the equator already satisfies the Neumann
condition and needs no correction.  The remainder of that correction is never
solved for, only budgeted: |f| <= c/(lam^3 d^4) with d the distance of the
center to the equator.

The interaction of two bubbles is measured by

    eps_ij^{-1} = lam_i/lam_j + lam_j/lam_i + lam_i lam_j (1 - cos d(a_i,a_j))/2

whose partial derivatives have closed forms used by the flow.

functional_J integrates J(u) = (int |grad u|^2 + 2 u^2) / (int K u^4)^{1/2}
for u = sum alpha_i phi_i by adaptive quadrature concentrated at the centers;
expansion_J evaluates the second-order asymptotic expansion of the same
quantity, and gradient_expansions the leading terms of the scale and position
derivatives.  The quadrature is the referee for every coefficient in the
expansions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import geometry as geo
from . import greenfn
from . import kfield
from .constants import DEFAULTS, OMEGA3, S
from .errors import RegimeError
from .quadrature import integrate_hemisphere

_EQ_TOL = 1e-9


def delta(a, lam: float, x):
    """Standard bubble centered at a with concentration lam, at x (batchable)."""
    ca = geo.as_coords(a)
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    d = X - ca
    omc = 0.5 * np.einsum("...i,...i->...", d, d)
    out = lam / (2.0 + (lam * lam - 1.0) * omc)
    return float(out) if single else out


def delta_gradient(a, lam: float, x):
    """Tangential gradient of delta in x; same batching as delta."""
    ca = geo.as_coords(a)
    X = np.asarray(x, dtype=float)
    d = X - ca
    omc = 0.5 * np.einsum("...i,...i->...", d, d)
    denom = 2.0 + (lam * lam - 1.0) * omc
    coef = np.asarray(lam * (lam * lam - 1.0) / denom**2)
    proj = ca - np.einsum("...i,i->...", X, ca)[..., None] * X
    return coef[..., None] * proj


def delta_flat(a, lam: float, y):
    """The half-space model bubble lam / (1 + lam^2 |y - a|^2), chart coords."""
    ca = np.asarray(a, dtype=float)
    Y = np.asarray(y, dtype=float)
    single = Y.ndim == 1
    d = Y - ca
    r2 = np.einsum("...i,...i->...", d, d)
    out = lam / (1.0 + lam * lam * r2)
    return float(out) if single else out


def _flat_regular(a4: np.ndarray, y):
    """Image kernel 1/|y - conj(a)|^2 in the chart, conj flipping y4."""
    ac = np.asarray(a4, dtype=float).copy()
    ac[-1] = -ac[-1]
    Y = np.asarray(y, dtype=float)
    d = Y - ac
    return 1.0 / np.einsum("...i,...i->...", d, d)


def _regime_check(lam: float, d: float, threshold: float):
    # equality is admitted: the dichotomy boundary itself is measure zero and
    # the reference configurations sit exactly on lam*d = threshold
    if lam * d < threshold * (1.0 - 1e-9):
        raise RegimeError(
            f"interior bubble outside concentration regime: lam*d = {lam * d:.6g} "
            f"< {threshold:.6g}"
        )


def phi(a, lam: float, x, convention: str = "flat_model", kind: str = "interior"):
    """Corrected bubble delta + H(a, .)/lam (interior) or plain delta (boundary).

    Accepts sphere points (5 coordinates) or half-space chart points
    (4 coordinates); the chart form uses the flat bubble and flat image
    kernel and requires the flat_model convention.
    """
    ca = geo.as_coords(a)
    thr = DEFAULTS["bubbles"]["regime_threshold"]
    if ca.shape[-1] == 4:
        if convention != "flat_model":
            raise ValueError("chart-coordinate phi exists only in the flat model")
        d_a = float(ca[3])
        if kind == "boundary":
            if abs(d_a) > _EQ_TOL:
                raise ValueError("boundary bubble center must lie on the wall")
            return delta_flat(ca, lam, x)
        _regime_check(lam, d_a, thr)
        out = delta_flat(ca, lam, x) + _flat_regular(ca, x) / lam
        return float(out) if np.asarray(x, dtype=float).ndim == 1 else out
    if kind == "boundary":
        if geo.boundary_distance(ca) > _EQ_TOL:
            raise ValueError("boundary bubble center must lie on the equator")
        return delta(ca, lam, x)
    _regime_check(lam, geo.boundary_distance(ca), thr)
    out = delta(ca, lam, x) + greenfn.regular_part(ca, x, convention) / lam
    return out


def phi_gradient(a, lam: float, x, convention: str = "flat_model",
                 kind: str = "interior"):
    """Tangential gradient of phi at sphere points."""
    g = delta_gradient(a, lam, x)
    if kind == "interior":
        g = g + greenfn.regular_gradient(a, x, convention) / lam
    return g


@dataclass(eq=False)
class Bubble:
    """One bubble of a configuration: kind, center, concentration, weight.

    Interior bubbles must satisfy lam * d(a, equator) >= regime_threshold
    (the concentration dichotomy; in-between configurations are rejected).
    Boundary bubbles must be centered on the equator.
    """

    kind: str
    a: np.ndarray
    lam: float
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in ("interior", "boundary"):
            raise ValueError(f"unknown bubble kind {self.kind!r}")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        c = geo.as_coords(self.a).astype(float)
        if abs(np.dot(c, c) - 1.0) > 1e-9:
            raise ValueError("bubble center must be a unit vector")
        if c[4] < -1e-12:
            raise ValueError("bubble center must lie on the closed upper hemisphere")
        self.a = c
        d = geo.boundary_distance(c)
        if self.kind == "boundary":
            if d > _EQ_TOL:
                raise ValueError("boundary bubble center must lie on the equator")
        else:
            _regime_check(self.lam, d, DEFAULTS["bubbles"]["regime_threshold"])

    @property
    def d_boundary(self) -> float:
        return geo.boundary_distance(self.a)

    def delta(self, x):
        return delta(self.a, self.lam, x)

    def phi(self, x, convention: str = "flat_model"):
        return phi(self.a, self.lam, x, convention, self.kind)

    def phi_gradient(self, x, convention: str = "flat_model"):
        return phi_gradient(self.a, self.lam, x, convention, self.kind)


def correction_budget(bubbles: Sequence[Bubble], convention: str = "flat_model",
                      c: Optional[float] = None):
    """Per-bubble L-infinity budget c/(lam^3 d^4) for the dropped phi remainder.

    d is the distance of the center to the wall in the chosen model: the
    chart height for flat_model, the geodesic distance to the equator for
    spherical_image.  Boundary bubbles are exact and get budget zero.
    """
    if c is None:
        c = DEFAULTS["bubbles"]["f_budget_c"]
    out = []
    for b in bubbles:
        if b.kind == "boundary":
            out.append(0.0)
            continue
        if convention == "flat_model":
            d = float(geo.flat_coords(b.a)[3])
        else:
            d = geo.boundary_distance(b.a)
        out.append(c / (b.lam**3 * d**4))
    return out


# --- interaction kernel ----------------------------------------------------


def _eps_inverse(ai, li, aj, lj):
    omc = geo.one_minus_cos(ai, aj)
    return li / lj + lj / li + li * lj * omc / 2.0, omc


def epsilon(bi: Bubble, bj: Bubble) -> float:
    inv, _ = _eps_inverse(bi.a, bi.lam, bj.a, bj.lam)
    return 1.0 / inv


@dataclass
class EpsilonPartials:
    """Closed-form derivatives of eps_ij.

    dlam_* are the scale combinations lam_k * d eps / d lam_k; da_* are the
    raw tangential gradients with respect to the centers (divide by lam to
    get the paper's normalized a-derivative).
    """

    value: float
    dlam_i: float
    dlam_j: float
    da_i: np.ndarray
    da_j: np.ndarray


def epsilon_partials(bi: Bubble, bj: Bubble) -> EpsilonPartials:
    ai, li = bi.a, bi.lam
    aj, lj = bj.a, bj.lam
    inv, _ = _eps_inverse(ai, li, aj, lj)
    e = 1.0 / inv
    dlam_i = -e * (1.0 - 2.0 * (lj / li) * e)
    dlam_j = -e * (1.0 - 2.0 * (li / lj) * e)
    # d eps/d a_i = eps^2 (li lj / 2) P_{a_i}(a_j)
    coef = e * e * li * lj / 2.0
    da_i = coef * geo.tangent_projection(ai, aj)
    da_j = coef * geo.tangent_projection(aj, ai)
    return EpsilonPartials(e, dlam_i, dlam_j, da_i, da_j)


@dataclass
class InteractionData:
    """Pairwise interaction summary of a configuration.

    eps is symmetric with zero diagonal; h_cross holds H(a_i,a_j)/(lam_i lam_j)
    for interior-interior pairs and zero elsewhere.  dominated is set when the
    largest eps exceeds eps_cap, meaning the reduced single-peak model no
    longer applies.
    """

    eps: np.ndarray
    h_cross: np.ndarray
    max_eps: float
    dominated: bool


def interaction_data(bubbles: Sequence[Bubble], convention: str = "flat_model",
                     eps_cap: Optional[float] = None) -> InteractionData:
    if eps_cap is None:
        eps_cap = DEFAULTS["flow"]["eps_cap"]
    p = len(bubbles)
    eps = np.zeros((p, p))
    h_cross = np.zeros((p, p))
    for i in range(p):
        for j in range(i + 1, p):
            eps[i, j] = eps[j, i] = epsilon(bubbles[i], bubbles[j])
            if bubbles[i].kind == "interior" and bubbles[j].kind == "interior":
                h = greenfn.regular_part(bubbles[i].a, bubbles[j].a, convention)
                h_cross[i, j] = h_cross[j, i] = h / (bubbles[i].lam * bubbles[j].lam)
    max_eps = float(eps.max()) if p > 1 else 0.0
    return InteractionData(eps, h_cross, max_eps, max_eps > eps_cap)


# --- the functional --------------------------------------------------------


@dataclass
class JResult:
    """Quadrature value of J with its parts and error accounting."""

    J: float
    N: float
    D2: float
    error: float
    estimate: float
    evaluations: int
    converged: bool
    truncation: float
    per_bubble_truncation: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "J": self.J,
            "N": self.N,
            "D2": self.D2,
            "error": self.error,
            "estimate": self.estimate,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "truncation_budget": self.truncation,
            "per_bubble_truncation": list(self.per_bubble_truncation),
        }


def functional_J(k, bubbles: Sequence[Bubble], convention: str = "flat_model",
                 rel_tol: Optional[float] = None, max_evals: Optional[int] = None,
                 config: Optional[dict] = None) -> JResult:
    """Numerically integrate J(u) for u = sum alpha_i phi_i.

    k is the curvature weight (any callable on (n, 5) batches).  Both parts
    are integrated together: the numerator |grad u|^2 + 2 u^2 and the
    denominator integrand K u^4 share every sample.
    """
    bubbles = list(bubbles)
    if not bubbles:
        raise ValueError("empty bubble configuration")

    def integrand(X):
        u = np.zeros(len(X))
        g = np.zeros((len(X), 5))
        for b in bubbles:
            u += b.alpha * b.phi(X, convention)
            g += b.alpha * b.phi_gradient(X, convention)
        kw = np.asarray(k(X), dtype=float)
        num = np.einsum("ni,ni->n", g, g) + 2.0 * u * u
        return np.stack([num, kw * u**4], axis=1)

    centers = [b.a for b in bubbles]
    scales = [b.lam for b in bubbles]
    (N, D2), info = integrate_hemisphere(
        integrand, centers=centers, scales=scales,
        rel_tol=rel_tol, max_evals=max_evals, config=config,
    )
    J = N / np.sqrt(D2)
    est = info["error_estimate"]
    budgets = correction_budget(bubbles, convention)
    return JResult(
        J=float(J),
        N=float(N),
        D2=float(D2),
        error=float(J * est * (1.0 / N + 0.5 / D2)),
        estimate=float(est),
        evaluations=info["evaluations"],
        converged=info["converged"],
        truncation=float(sum(budgets)),
        per_bubble_truncation=budgets,
    )


# --- expansions ------------------------------------------------------------


def _require_jets(k):
    if not hasattr(k, "jets"):
        raise TypeError("expansion evaluators need a parsed expression with jets")


def _check_expansion_regime(bubbles):
    lam_min = DEFAULTS["bubbles"]["lambda_min"]
    for b in bubbles:
        if b.lam < lam_min:
            raise RegimeError(
                f"lam = {b.lam:.6g} below lambda_min = {lam_min:.6g}; "
                "the expansion is asymptotic"
            )


@dataclass
class ExpansionResult:
    """Second-order expansion of J with its pieces kept apart."""

    value: float
    leading: float
    correction: float
    bracket: float
    prefactor: float
    self_terms: list
    pair_terms: list
    truncation: float

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "leading": self.leading,
            "correction": self.correction,
            "bracket": self.bracket,
            "prefactor": self.prefactor,
            "self_terms": self.self_terms,
            "pair_terms": self.pair_terms,
            "truncation_budget": self.truncation,
        }


def expansion_J(k, bubbles: Sequence[Bubble],
                convention: str = "flat_model") -> ExpansionResult:
    """Asymptotic J of a configuration, to second order in the scales.

    Leading term: 8 sqrt(S) sum(alpha_i^2 s_i) / sqrt(sum(alpha_i^4 s_i K_i))
    where s_i = 1 for interior bubbles and 1/2 for boundary bubbles (half the
    bubble mass lies in the domain).  The correction bracket collects the
    curvature Laplacian and self-interaction of each interior bubble, the
    normal derivative of K for each boundary bubble, and the pair terms
    -2 (K_i K_j)^{-1/2} (eps_ij + 2 H(a_i,a_j)/(lam_i lam_j)), the H part for
    interior pairs only.
    """
    _require_jets(k)
    bubbles = list(bubbles)
    _check_expansion_regime(bubbles)

    Kv = np.array([k(b.a) for b in bubbles])
    if np.any(Kv <= 0):
        raise ValueError("curvature must be positive at bubble centers")
    s = np.array([1.0 if b.kind == "interior" else 0.5 for b in bubbles])
    al = np.array([b.alpha for b in bubbles])

    leading = 8.0 * np.sqrt(S) * np.sum(al**2 * s) / np.sqrt(np.sum(al**4 * s * Kv))
    prefactor = (OMEGA3 / (8.0 * S)) / np.sum(s / Kv)

    self_terms = []
    bracket = 0.0
    for i, b in enumerate(bubbles):
        if b.kind == "interior":
            lap = kfield.intrinsic_laplacian(k, b.a)
            h = greenfn.self_interaction(b.a, convention)
            t = -lap / (3.0 * b.lam**2 * Kv[i] ** 2) - 4.0 * h / (b.lam**2 * Kv[i])
            self_terms.append(
                {"index": i, "kind": "interior", "laplacian_K": float(lap),
                 "H_self": float(h), "term": float(t)}
            )
        else:
            dnu = kfield.normal_derivative(k, b.a)
            # coefficient 1/6: with the prefactor this yields the verified
            # single-bubble law J = leading (1 + dnu_K / (2 lam K))
            t = dnu / (6.0 * b.lam * Kv[i] ** 2)
            self_terms.append(
                {"index": i, "kind": "boundary", "dnu_K": float(dnu),
                 "term": float(t)}
            )
        bracket += t

    pair_terms = []
    for i in range(len(bubbles)):
        for j in range(i + 1, len(bubbles)):
            e = epsilon(bubbles[i], bubbles[j])
            both_int = bubbles[i].kind == "interior" and bubbles[j].kind == "interior"
            h = (greenfn.regular_part(bubbles[i].a, bubbles[j].a, convention)
                 if both_int else 0.0)
            # ordered sum i != j doubles each unordered pair
            t = -4.0 * (Kv[i] * Kv[j]) ** -0.5 * (
                e + 2.0 * h / (bubbles[i].lam * bubbles[j].lam)
            )
            pair_terms.append(
                {"i": i, "j": j, "eps": float(e), "H_regular": float(h),
                 "term": float(t)}
            )
            bracket += t

    correction = prefactor * bracket
    return ExpansionResult(
        value=float(leading * (1.0 + correction)),
        leading=float(leading),
        correction=float(correction),
        bracket=float(bracket),
        prefactor=float(prefactor),
        self_terms=self_terms,
        pair_terms=pair_terms,
        truncation=float(sum(correction_budget(bubbles, convention))),
    )


@dataclass
class GradientRecord:
    """Leading derivative data of the reduced energy at one bubble."""

    index: int
    kind: str
    lambda_rate: float
    a_drift: np.ndarray
    terms: dict

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "kind": self.kind,
            "lambda_rate": self.lambda_rate,
            "a_drift": [float(v) for v in self.a_drift],
            "terms": self.terms,
        }


def gradient_expansions(k, bubbles: Sequence[Bubble],
                        convention: str = "flat_model",
                        constants: Optional[dict] = None):
    """Leading terms of <grad J, lam d/d lam> and the center drift, per bubble.

    Interior bubbles follow

        2 omega3 (alpha dK/(3 lam^2 K) + 4 alpha H(a,a)/lam^2
                  - 2 sum_k alpha_k lam d eps/d lam
                  + 4 sum_k alpha_k H(a,a_k)/(lam lam_k))

    with the drift proportional to -grad K.  Interior rates carry the sign of
    dJ/d(log lam): negative at a flagged point, where growing lam lowers the
    energy.  Boundary bubbles get c1 sum_k alpha_k lam d eps/d lam
    + c2 alpha^3 dK/dnu / lam, drift along the negative tangential gradient of
    K on the equator.  The boundary rate is stated in the opposite sign
    convention: a negative value means the energy decreases by shrinking lam,
    so no blow-up sits at that boundary point.  The unspecified positive
    prefactors are the c-parameters (all default 1).
    """
    _require_jets(k)
    bubbles = list(bubbles)
    _check_expansion_regime(bubbles)
    cs = dict(DEFAULTS["expansion"])
    if constants:
        cs.update(constants)

    records = []
    for i, b in enumerate(bubbles):
        Ki = float(k(b.a))
        eps_term = 0.0
        raw_eps = 0.0
        h_term = 0.0
        for j, other in enumerate(bubbles):
            if j == i:
                continue
            parts = epsilon_partials(b, other)
            eps_term += -2.0 * other.alpha * parts.dlam_i
            raw_eps += other.alpha * parts.dlam_i
            if b.kind == "interior" and other.kind == "interior":
                h = greenfn.regular_part(b.a, other.a, convention)
                h_term += 4.0 * other.alpha * h / (b.lam * other.lam)
        if b.kind == "interior":
            lap = kfield.intrinsic_laplacian(k, b.a)
            h_self = greenfn.self_interaction(b.a, convention)
            lam_rate = 2.0 * OMEGA3 * (
                b.alpha * lap / (3.0 * b.lam**2 * Ki)
                + 4.0 * b.alpha * h_self / b.lam**2
                + eps_term + h_term
            )
            drift = -cs["c3"] * kfield.intrinsic_gradient(k, b.a) / b.lam
            terms = {
                "laplacian": float(2.0 * OMEGA3 * b.alpha * lap / (3.0 * b.lam**2 * Ki)),
                "h_self": float(8.0 * OMEGA3 * b.alpha * h_self / b.lam**2),
                "eps_interaction": float(2.0 * OMEGA3 * eps_term),
                "h_cross": float(2.0 * OMEGA3 * h_term),
            }
        else:
            dnu = kfield.normal_derivative(k, b.a)
            lam_rate = cs["c1"] * raw_eps + cs["c2"] * b.alpha**3 * dnu / b.lam
            drift = -cs["c6"] * kfield.tangential_gradient(k, b.a) / b.lam
            terms = {
                "normal_derivative": float(cs["c2"] * b.alpha**3 * dnu / b.lam),
                "eps_interaction": float(cs["c1"] * raw_eps),
            }
        records.append(
            GradientRecord(index=i, kind=b.kind, lambda_rate=float(lam_rate),
                           a_drift=drift, terms=terms)
        )
    return records
