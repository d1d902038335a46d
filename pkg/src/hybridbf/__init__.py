"""Hybrid digital/analog beamforming for metasurface-based joint sensing and
communication.

The digital precoder is found by semidefinite relaxation with rank-one
recovery; the surface susceptances by trust-region steps on a first-order
Neumann model of the surface inverse.  ``run_alternating`` alternates the
two, accepting only steps that improve the exact objective while keeping
every constraint.
"""
from .analog import (
    AnalogState,
    QcqpData,
    StepResult,
    accept_or_shrink,
    analog_step,
    assemble_qcqp_data,
    neumann_inverse,
    solve_analog_step,
    trust_region_bound,
)
from .digital import (
    DigitalSolution,
    SdpData,
    assemble_sdp_data,
    extract_rank_one,
    hermitian_embedding,
    recover,
    solve_digital_sdp,
)
from .em_model import (
    AdmittanceSet,
    ArrayGeometry,
    Scenario,
    build_synthetic_admittances,
    load_admittances,
    save_admittances,
    steering_vector,
    validate_admittances,
)
from .errors import (
    ConditioningError,
    ContractError,
    HybridBFError,
    InfeasibleStartError,
    ParseError,
    ScenarioError,
    SchemaError,
    TrustRegionError,
)
from .metrics import (
    beampattern_gain,
    boundedness_certificate,
    constraint_report,
    effective_channels,
    objective_upper_bound,
    radiated_power,
    sinr,
    total_beampattern,
)
from .orchestrator import AlgorithmConfig, RunResult, convergence_check, run_alternating
from .scenarios import synthetic_scenario

__version__ = "0.1.0"
