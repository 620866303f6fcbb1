"""Normalization constants and configuration defaults.

The two analytic constants below pin every expansion in the package:

* ``S``: the fourth-power integral of the standard flat bubble,
  S = int_{R^4} (1 + |y|^2)^{-4} dy = pi^2 / 6.  By conformal invariance the
  same number is the full-sphere integral of delta^4 for every center and
  scale, which is what the quadrature tests check.
* ``OMEGA3``: the volume of the unit 3-sphere, 2 pi^2.  It enters the
  second-order coefficients of the energy expansion.
"""

import math

S = math.pi ** 2 / 6
OMEGA3 = 2 * math.pi ** 2

# Energy of a single standard bubble at unit curvature, the leading level of
# the expansion: 8 sqrt(S).
SINGLE_BUBBLE_LEVEL = 8.0 * math.sqrt(S)

# Fully resolved defaults. The CLI rejects config keys that do not appear in
# this tree; modules read their own sub-dict.
DEFAULTS = {
    "convention": "flat_model",
    "seed": 0,
    "threads": 1,
    "search": {
        "n_interior": 2000,
        "n_boundary": 500,
        "grad_tol": 1e-10,
        "hess_tol": 1e-8,
        "dedup_tol": 1e-6,
        "max_iter": 60,
        "max_step": 0.5,
        "divergence_fraction": 0.2,
    },
    "condition_c": {
        "cond_tol": 1e-8,
    },
    "bubbles": {
        "lambda_min": 10.0,
        "regime_threshold": 10.0,
        "f_budget_c": 2.0,
    },
    "expansion": {
        # unspecified positive prefactors of the gradient expansions; kept
        # as parameters, all order checks are sign/structure checks
        "c1": 1.0,
        "c2": 1.0,
        "c3": 1.0,
        "c4": 1.0,
        "c5": 1.0,
        "c6": 1.0,
        "c7": 1.0,
    },
    "quadrature": {
        "rel_tol": 1e-7,
        "max_evals": 2_000_000,
        "radial_order": 14,
        "angular_orders": [6, 5, 6],
        "initial_splits": [1, 1, 1],
        "first_panel_scale": 1.0,
        "panel_growth": 2.0,
    },
    "criterion": {
        "l_max": 20,
        "eig_tol": 1e-9,
        "ordered_tuples": False,
        "exhaustive_max": 12,
    },
    "flow": {
        "lambda_blowup": 1e4,
        "a_capture": 1e-3,
        "stall_tol": 1e-8,
        "eps_cap": 0.1,
        "monotonicity_slack": 1e-8,
        "dt_out": 0.1,
        "t_max": 200.0,
        "rtol": 1e-8,
        "atol": 1e-11,
        "min_step": 1e-13,
        "max_step_growth": 5.0,
        "initial_step": 1e-3,
    },
}


def merged_defaults(overrides: dict | None = None) -> dict:
    """Deep-copy DEFAULTS and overlay ``overrides`` (nested dicts merge)."""

    def merge(base, over):
        out = {}
        for k, v in base.items():
            if isinstance(v, dict):
                out[k] = merge(v, over.get(k, {}) if over else {})
            else:
                picked = over[k] if over and k in over else v
                out[k] = list(picked) if isinstance(picked, list) else picked
        if over:
            unknown = set(over) - set(base)
            if unknown:
                raise KeyError(f"unknown config keys: {sorted(unknown)}")
        return out

    return merge(DEFAULTS, overrides or {})
