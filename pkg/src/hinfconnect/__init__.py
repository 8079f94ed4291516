"""Topology-aware tools for H-infinity dynamic output-feedback controllers.

Membership tests, LMI certificates, the lift to convex synthesis variables
and its inverse, component classification, verified controller paths,
LMI-based synthesis and grid scans.
"""

from .analysis import (NormResult, h2_norm_squared, hinf_norm, in_cstab,
                       in_kgamma, in_lgamma)
from .certify import (H2Certificate, HinfCertificate, bounded_real_certificate,
                      h2_certificate)
from .errors import (AssumptionViolationError, BridgeInfeasibleError,
                     CertificateError, HinfConnectError, InfiniteH2NormError,
                     InvalidInputError, InvariantViolation, LiftError,
                     NoStabilizingSolutionError, NotABridgeError,
                     NumericalFailure, PreconditionError, SingularInputError,
                     SynthesisError)
from .homotopy import (PathResult, PathSample, connect, connect_via_bridge,
                       dual_lift_fixed_point, gl_path, transform_path)
from .liftmap import (FPoint, LiftedPoint, component_sign, eval_M_gamma,
                      eval_M_lqg, in_F_gamma, in_F_lqg, lift, lift_h2,
                      reconstruct, transform_lifted)
from .lmi import (AffineLmi, FeasibilityResult, GammaStarResult, VarSpec,
                  assemble_h2_synthesis_lmi, assemble_synthesis_lmi,
                  gamma_star, solve_feasibility, synthesize, synthesize_h2,
                  synthesize_lifted)
from .model import (EXAMPLE1_K1, EXAMPLE1_K2, ClosedLoop, Controller,
                    LqgWeights, Plant, augment_reduced,
                    check_stabilizable_detectable, close_loop, example1_plant,
                    lqg_plant, scalar_controller, similarity_transform)
from .numerics import DEFAULT_TOL, Tolerances
from .scan import AxisSpec, ScanGrid, count_components, scan_grid

__version__ = "0.1.0"
