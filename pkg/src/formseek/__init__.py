"""formseek: a numerical laboratory for distance-only formation control.

Rigidity analysis, formation potentials, sinusoidally dithered feedback,
averaging diagnostics, and output-only extremum seeking, with reproducible
scenario files for the bundled examples.
"""

from .rigidity import (Framework, Graph, RankReport, affine_span_dim,
                       edge_map, is_infinitesimally_rigid, numerical_rank,
                       rigidity_matrix)
from .potential import (BodyFrames, FormationSpec, grad_psi, grad_psi_blocks,
                        lie_derivative_B, psi_all_local, psi_global,
                        psi_local, verify_gradient_bounds)
from .dither import (DitherShape, SinusoidSchedule, all_m_indices,
                     custom_shape, eta_terms, log_sinusoid_shape, u_eval,
                     uv_tilde, uv_tilde2, v_coeff, verify_properties)
from .dynamics import (IntegrationError, SystemDef, Trajectory, bound_fit,
                       closed_loop_rhs, default_dither_dt, gradient_rhs,
                       integrate, integrate_closed_loop, lie_bracket_rhs,
                       load_trajectory, save_trajectory)
from .averaging import averaging_residual, d1_psi, d2_psi, y_psi
from .esc import (ControlAffineSystem, esc_bound_check, quadratic_demo,
                  quartic_demo, simulate_esc, span_violation_demo)
from .scenarios import (Scenario, ScenarioError, check_hypotheses,
                        load_scenario, preset_names, run, scenario_from_dict,
                        sweep)

__version__ = "0.1.0"
