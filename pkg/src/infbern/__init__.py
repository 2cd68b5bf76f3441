"""infbern: a numerical laboratory for the interior Bernoulli free-boundary
problem of the infinity Laplacian on 2D grid domains."""

from .geometry import (CompactMask, Disk, Domain, GeometryError, Grid, Rect,
                       ScalarField, build_domain, check_closure_regularity,
                       check_connected, closed_component_masks,
                       connected_components, cutlocus_mask, distance_field,
                       inradius, minimal_ray_mask, parallel_distance_field,
                       parallel_mask, projections)
from .solver import (Potential, SolveOptions, SolverError, StencilConfig,
                     residual, solve_dirichlet, solve_potential,
                     verify_affine_on_rays, verify_cone_comparison,
                     verify_harnack, verify_slope_estimates)
from .bernoulli import (BernoulliSolution, MembershipError, NonexistenceError,
                        admissible_family_check, characterize,
                        check_nonexistence, make_trivial_solution, scenario,
                        solve_interior_bernoulli, verify_fb_location,
                        verify_gradient_bound, verify_sandwich)
from .radial import (RadialBernoulli, bernoulli_constant_limit,
                     critical_lambda, gradient_check, j_inf, j_p,
                     radial_profile, radial_solve, sweep_p,
                     verify_monotone_in_p)
from .reports import VerificationReport, all_pass, report_json
from .fieldio import emit_csv, emit_field, read_field, read_mask

__version__ = "0.1.0"
