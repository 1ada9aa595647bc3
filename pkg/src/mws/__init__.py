"""mws: involution-invariant conformal minimal immersions via Weierstrass data.

Library layout (one module per concern):

  domain     symmetric domains, the involution I(z) = -1/conj(z), I-bases
  analytic   expression trees, invariance projectors, null maps, the lift
  periods    contour quadrature, period map, flux, exactness, primitives
  sprays     flows on the null quadric, period domination, Newton closing
  immersion  integration to X, geometric residuals, curvature, completeness
  mesh       quotient-surface triangulation with seam welding, OBJ/PLY
  gallery    the built-in meeks-r3 and mobius-r4 scenarios
  cli        the ``mws`` command-line front end
"""

__version__ = "0.1.0"

from .analytic import (
    NullMap,
    OneForm,
    ZETA,
    bar_pullback,
    gauss_from_nullmap,
    null_residual,
    invariance_residual,
    map_invariance_residual,
    form_invariance_residual,
    gauss_symmetry_residual,
    parse_expr,
    symmetrize,
    verification_grid,
    weierstrass_lift,
)
from .domain import (
    IBasis,
    build_ibasis,
    circle,
    involution_apply,
    punctured_plane,
    punctured_plane_with_pairs,
    annulus,
    pushforward_curve,
)
from .gallery import GALLERY_NAMES, gallery
from .immersion import (
    ImmersionField,
    completeness_probe,
    conformal_factor,
    double_point_scan,
    geometric_residuals,
    integrate_immersion,
    properness_certificate,
    total_curvature,
)
from .mesh import export_obj, export_ply, fundamental_domain, triangulate_and_weld
from .periods import (
    PeriodVector,
    exactness_test,
    flux,
    integrate_form,
    invariant_primitive,
    period_map,
    symmetry_defect,
)
from .sprays import (
    Spray,
    SprayFactor,
    close_periods,
    default_spray,
    domination_check,
    flow,
    nonflat_check,
    period_jacobian,
    pushed_map,
    spray_eval,
    winding_number,
)
