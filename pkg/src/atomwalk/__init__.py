"""Two-level atom walking in a quantized standing wave: quantum-classical
dynamics, entanglement diagnostics and chaos quantifiers."""

from .model import (
    AtomInit,
    BlochState,
    Coherent,
    Fock,
    InitialCondition,
    QCState,
    SystemParams,
    TruncationError,
    amplitude_moduli_from_bloch,
    bloch_from_amplitudes,
    coherent_initial,
    fock_initial,
    initial_state,
)
from .dynamics import (
    IntegrationError,
    InvariantDriftError,
    LeakageError,
    StepController,
    StepUnderflowError,
    Trajectory,
    b0_exact,
    integral_R,
    integrate,
    rhs_amplitude,
    rhs_bloch,
    rhs_fock,
    total_energy,
)
from .observables import (
    TimeSeries,
    fidelity,
    inversion,
    linear_entropy,
    power_spectrum,
    purity,
    purity_variance,
    von_neumann_entropy,
)
from .analysis import (
    detuning_sweep,
    fidelity_decay,
    fractal_refinement,
    inversion_map,
    lyapunov_max,
    position_map,
    predictability_horizon,
    scattering_scan,
)

__version__ = "0.1.0"
