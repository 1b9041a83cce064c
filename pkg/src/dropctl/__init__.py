"""Control of linear plants over lossy links: jump models, certified
disturbance-attenuation levels, gain synthesis, and a multi-hop network
layer that maps retransmission budgets to delivery probabilities.

The modules stay importable on their own; this namespace just re-exports
the pieces most workflows touch.
"""

from dropctl.hinf import (
    BrlCertificate,
    CertificationInfeasible,
    NotStabilizable,
    SolverFailure,
    SynthesisResult,
    brl_analysis,
    lyapunov_mss_feasible,
    mc_lower_bound,
    optimal_design,
    robust_design,
)
from dropctl.lmi import SdpProblem, SolverTolerances, SolveStatus, solve_sdp
from dropctl.mjls import (
    ControllerGain,
    MjlsModel,
    TransitionMatrix,
    TransitionPolytope,
    close_loop,
    dropout_chain,
    mss_spectral_radius,
    simulate,
)
from dropctl.netproto import ProbabilityRange, census, end_to_end_success
from dropctl.plant import LinearPlant, TankParams, build_plant, to_mjls
from dropctl.rng import make_rng
from dropctl.scenario import Scenario, ScenarioError, build_mjls, parse_scenario

__version__ = "0.1.0"

__all__ = [
    "BrlCertificate",
    "CertificationInfeasible",
    "ControllerGain",
    "LinearPlant",
    "MjlsModel",
    "NotStabilizable",
    "ProbabilityRange",
    "Scenario",
    "ScenarioError",
    "SdpProblem",
    "SolveStatus",
    "SolverFailure",
    "SolverTolerances",
    "SynthesisResult",
    "TankParams",
    "TransitionMatrix",
    "TransitionPolytope",
    "brl_analysis",
    "build_mjls",
    "build_plant",
    "census",
    "close_loop",
    "dropout_chain",
    "end_to_end_success",
    "lyapunov_mss_feasible",
    "make_rng",
    "mc_lower_bound",
    "mss_spectral_radius",
    "optimal_design",
    "parse_scenario",
    "robust_design",
    "simulate",
    "solve_sdp",
    "to_mjls",
]
