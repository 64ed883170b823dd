"""P1 finite elements for the rotating Gross-Pitaevskii equation.

Library layout:

* ``mesh``         structured triangulations, refinement, mesh quality
* ``model``        coefficient sets, presets, assumption checks
* ``quadrature``   triangle rules used by all assembly
* ``assembly``     sesquilinear forms, cubic term, interpolation, projections
* ``regularizer``  globally Lipschitz truncation of the cubic
* ``steppers``     implicit midpoint / backward Euler time integration
* ``groundstate``  normalized gradient flow in imaginary time
* ``diagnostics``  mass, energy, VTK and CSV output
* ``verification`` benchmark cases and convergence-order tables
* ``cli``          command-line front end
"""

__version__ = "0.1.0"

from .assembly import (  # noqa: F401
    AssembledSystem,
    ComplexField,
    DofMap,
    assemble_energy_product,
    assemble_kappa,
    assemble_mass,
    assemble_operator,
    assemble_system,
    cubic_jacobian,
    cubic_residual,
    interpolate,
    l2_project,
    ritz_project,
)
from .groundstate import GradientFlowConfig, normalized_gradient_flow  # noqa: F401
from .mesh import (  # noqa: F401
    Mesh,
    build_rect_mesh,
    log_factor,
    refine_uniform,
    shape_regularity,
)
from .model import (  # noqa: F401
    Coefficients,
    check_divergence_free,
    gpe_rotating,
    harmonic_potential,
    validate_assumptions,
)
from .quadrature import QuadratureRule, triangle_rule  # noqa: F401
from .regularizer import (  # noqa: F401
    TruncatedCubic,
    estimate_cutoff,
    verify_truncated_cubic,
)
from .steppers import (  # noqa: F401
    StepperConfig,
    StepResult,
    backward_euler_step,
    irk_regularized_step,
    irk_step,
    newton_solve,
    run,
    uniqueness_bound,
)
from .verification import (  # noqa: F401
    BenchmarkCase,
    EOCTable,
    dissipation_experiment,
    eigenmode_case,
    manufactured_cubic_case,
    run_projection_eoc,
    run_space_eoc,
    run_time_eoc,
)
