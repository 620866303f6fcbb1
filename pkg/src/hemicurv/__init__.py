"""hemicurv: numerical toolkit for curvature prescription on the closed
upper 4-hemisphere under the zero-mean-curvature (Neumann) boundary condition.

Layout:

* ``geometry``   hemisphere points, chart, frames, distances
* ``expr``       expression parsing with exact derivative jets
* ``kfield``     candidate curvature calculus and critical point search
* ``greenfn``    Neumann Green's function, image charge and flat conventions
* ``quadrature`` adaptive integration over the hemisphere
* ``bubbles``    concentration profiles, interaction kernel, energy evaluators
* ``criterion``  interaction matrices, index counting, existence checks
* ``flow``       reduced gradient dynamics of the expanded energy
* ``cli``        command line front end with JSON/CSV/PNG reports
"""

__version__ = "0.1.0"

from .constants import S, OMEGA3, SINGLE_BUBBLE_LEVEL, DEFAULTS, merged_defaults
from .geometry import (
    HemispherePoint,
    FlatPoint,
    geodesic_distance,
    one_minus_cos,
    boundary_distance,
    reflect,
    to_flat,
    from_flat,
    tangent_frame,
    geodesic,
)

__all__ = [
    "__version__",
    "S",
    "OMEGA3",
    "SINGLE_BUBBLE_LEVEL",
    "DEFAULTS",
    "merged_defaults",
    "HemispherePoint",
    "FlatPoint",
    "geodesic_distance",
    "one_minus_cos",
    "boundary_distance",
    "reflect",
    "to_flat",
    "from_flat",
    "tangent_frame",
    "geodesic",
]
