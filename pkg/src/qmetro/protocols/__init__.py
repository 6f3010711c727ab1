"""Protocol descriptions and exact outcome-distribution enumeration."""
from .ancilla import build_ancilla_protocol, effective_hamiltonian_check, measurement_hamiltonian
from .feedback import (
    HISTORY_CAP,
    interaction_average,
    run_feedback_distribution,
    step_efficiencies,
    strip_feedback,
    to_interaction_picture,
)
from .multiround import run_multiround_distribution
from .reduction import ReducedProblem, reduce_to_subspace
from .spec import (
    FeedbackStep,
    MultiRoundSpec,
    OutcomeDistribution,
    PolicyEntry,
    ProtocolSpec,
    spec_from_dict,
)

__all__ = [
    "FeedbackStep",
    "HISTORY_CAP",
    "MultiRoundSpec",
    "OutcomeDistribution",
    "PolicyEntry",
    "ProtocolSpec",
    "ReducedProblem",
    "build_ancilla_protocol",
    "effective_hamiltonian_check",
    "interaction_average",
    "measurement_hamiltonian",
    "reduce_to_subspace",
    "run_feedback_distribution",
    "run_multiround_distribution",
    "spec_from_dict",
    "step_efficiencies",
    "strip_feedback",
    "to_interaction_picture",
]
