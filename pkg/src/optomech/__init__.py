"""Driven-cavity optomechanics at desk scale.

A single damped cavity mode, pumped at rate ``eta`` and detuned by
``delta_c``, couples to N mechanical oscillators either linearly or
quadratically in their displacement. The package covers both sides of the
classical-quantum divide for this system:

* mean-field equations of motion, the adiabatic effective potential with
  its closed-form steady states and bifurcations (:mod:`.meanfield`);
* ground states of the effective potential on position grids, with
  Fock-space projections (:mod:`.groundstate`);
* full Lindblad master-equation dynamics and steady states on truncated
  Fock spaces (:mod:`.model`, :mod:`.qdyn`);
* entanglement and distribution diagnostics (:mod:`.analysis`).

Units: ``hbar = 1`` and the cavity linewidth ``kappa`` is the unit of rate,
so times are ``kappa t`` and energies ``hbar kappa``. Mechanical
displacements are in oscillator units (``x = (b + b^dag)/sqrt(2)``).
"""

from .analysis import (
    SchmidtDecomposition,
    angular_momentum_operator,
    angular_momentum_series,
    entropy_from_schmidt,
    grid_schmidt_coefficients,
    joint_position_distribution,
    mutual_information,
    partial_trace,
    position_distribution,
    schmidt_decompose,
    von_neumann_entropy,
)
from .errors import (
    BoundaryLeakError,
    ContractViolationError,
    ConvergenceFailure,
    DimensionError,
    IntegrationFailure,
    NoSombreroError,
    NumericalError,
    OptomechError,
    ShapeError,
    TruncationError,
    TruncationWarning,
    ValidationError,
)
from .groundstate import (
    GridAxis,
    GroundStateResult,
    PositionGrid,
    fock_project,
    fock_reconstruct,
    hermite_functions,
    solve_ground_state,
)
from .hilbert import (
    HilbertSpaceSpec,
    QuantumState,
    annihilation,
    coherent_state,
    creation,
    embed,
    expectation,
    fock_state,
    identity,
    momentum,
    number,
    position,
    product_state,
    tensor,
    vacuum_state,
)
from .meanfield import (
    MeanFieldState,
    MeanFieldTrajectory,
    SteadyStatePoint,
    adiabatic_cavity_field,
    effective_potential,
    find_steady_states,
    integrate_meanfield,
    linear_cubic_coefficients,
    linear_steady_states,
    mechanical_energy,
    multistability_condition,
    potential_gradient,
    potential_hessian,
    quadratic_critical_pump_rates,
    quadratic_steady_states,
    sombrero_radius,
    well_oscillation_frequency,
)
from .model import (
    Coupling,
    LindbladGenerator,
    SystemParams,
    build_generator,
    build_hamiltonian,
    liouvillian_apply,
    spectral_abscissa,
    superoperator_matrix,
)
from .qdyn import (
    ObservableSeries,
    Trajectory,
    default_observables,
    evolve,
    liouvillian_residual,
    prepare_cat_state,
    steady_state,
)

__version__ = "0.1.0"
