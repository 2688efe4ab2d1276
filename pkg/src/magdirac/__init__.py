"""magdirac: lattice solver and verification suite for spinor-coupled
prescribed-curvature (magnetically forced) harmonic maps on flat 2D domains."""

from .errors import (ConfigError, EigenSolveError, FlowStepError, LatticeError,
                     MagdiracError, MagneticPrimitiveError, OffManifoldError,
                     UnsupportedOperationError)
from .fields import (MapField, SpinorField, enforce_tangency, init_map, init_spinor,
                     load_snapshot, project_map, save_snapshot, zero_spinor)
from .operators import (EnergyBreakdown, RiviereForm, ambient_pde_residual,
                        curvature_term, el_residual_map, el_residual_spinor, energy,
                        energy_gradient_map, magnetic_force, riviere_connection,
                        tension, twisted_dirac)
from .solver import (SolveConfig, SolveReport, flow_map, solve_coupled, solve_spinor)
from .surface import (CliffordRep, ConformalFactor, Lattice, SpinStructure,
                      conformal_rescale, default_clifford, dirac_untwisted,
                      laplacian, make_lattice, partial_derivative, spinor_partial)
from .target import (MagneticData, TargetManifold, check_magnetic_skew, flat_target,
                     h_surface_magnetic, magnetic_Z, magnetic_none,
                     second_fundamental_form, shape_operator, sphere_target,
                     volume_form_magnetic)

__version__ = "0.1.0"
