"""Distributed neuro-adaptive formation control.

Two-stage pipeline for driving networked second-order agents with unknown
nonlinear dynamics into a leader-anchored formation: per-agent neural
policies are imitation-trained on expert demonstrations, then deployed
inside an online adaptive feedback law whose gains grow until the
formation errors are rejected.  Both stages use only neighbor-local
information, which a read auditor verifies at simulation time.
"""

from .control import AdaptationState, LocalView, adaptation_rates, agent_step_inputs, control_law
from .datagen import (
    GenConfig,
    TrajectoryDataset,
    expert_control,
    generate_dataset,
    read_dataset,
    write_dataset,
)
from .dynamics import (
    AgentState,
    LeaderProfile,
    SystemRealization,
    eval_dynamics,
    helix_profile,
    leader_at,
    sample_system,
)
from .formation import (
    ControllerGains,
    FormationSpec,
    augmented_error,
    formation_error,
    formation_error_rate,
    inverse_error,
    random_offsets,
    solve_equilibrium,
)
from .graph import CommGraph, build_graph, laplacian_plus_b, neighbors
from .neuralnet import (
    InputLayout,
    NeuralPolicy,
    TrainHyper,
    encode_input,
    forward,
    gradient_check,
    init_policy,
    load_policy,
    save_policy,
    train,
)
from .simcore import SimConfig, SimLog, metrics, rk4_step, run_closed_loop, write_csv

__version__ = "0.1.0"
