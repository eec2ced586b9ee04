"""Randomized hidden agent dynamics and closed-form leader trajectories.

Each follower obeys second-order dynamics with an unknown drift f_i and an
unknown positive-definite input gain g_i.  The sampled functional forms are

    f_i(x, t) = A_i tanh(B_i x1) + c_i sin(omega_i t + phi_i)
    g_i(x, t) = a_i I + S_i S_i^T / (1 + ||x1||^2)

which are smooth, globally bounded in x, bounded in t, and keep g_i's
smallest eigenvalue at or above a_i > 0.  Controllers never see the
parameters; they only interact through ``eval_dynamics``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import IndexOutOfRange, InvalidDimension, NonFiniteState

# nominal parameter centers; `variation` scales the uniform spread around them
NOMINAL_GAIN_FLOOR = 1.0
NOMINAL_FREQUENCY = 0.55
GAIN_FLOOR_MIN = 0.05  # keeps g_i positive definite for any variation


@dataclass(frozen=True)
class AgentState:
    """Position-like and velocity-like halves of one agent's state."""

    x1: np.ndarray
    x2: np.ndarray


@dataclass(frozen=True)
class SystemRealization:
    """Sampled dynamics parameters for all N agents, hidden from controllers."""

    n: int
    num_agents: int
    seed: int
    variation: float
    A: np.ndarray  # (N, n, n) drift mixing
    B: np.ndarray  # (N, n, n) drift saturation map
    c: np.ndarray  # (N, n) oscillation amplitudes
    omega: np.ndarray  # (N,) oscillation frequencies
    phi: np.ndarray  # (N,) oscillation phases
    a: np.ndarray  # (N,) gain floor, strictly positive
    S: np.ndarray  # (N, n, n) gain shaping


def sample_system(seed: int, n: int, num_agents: int, variation: float = 1.0) -> SystemRealization:
    """Draw one realization of the unknown dynamics, deterministic in seed.

    With variation=0 every agent receives the identical nominal parameters
    (f = 0, g = I); variation=1 spans the full nominal ranges.
    """
    if n < 1 or num_agents < 1:
        raise InvalidDimension(f"need n >= 1 and num_agents >= 1, got n={n}, N={num_agents}")
    if variation < 0:
        raise InvalidDimension(f"variation must be >= 0, got {variation}")
    rng = np.random.default_rng(seed)
    shape_m = (num_agents, n, n)
    A = variation * rng.uniform(-1.0, 1.0, shape_m)
    B = variation * rng.uniform(-1.0, 1.0, shape_m)
    S = variation * rng.uniform(-1.0, 1.0, shape_m)
    c = variation * rng.uniform(-0.5, 0.5, (num_agents, n))
    omega = NOMINAL_FREQUENCY + variation * rng.uniform(-0.45, 0.45, num_agents)
    phi = variation * rng.uniform(-math.pi, math.pi, num_agents)
    a = NOMINAL_GAIN_FLOOR + variation * rng.uniform(-0.5, 0.5, num_agents)
    a = np.maximum(a, GAIN_FLOOR_MIN)
    return SystemRealization(
        n=n, num_agents=num_agents, seed=seed, variation=variation,
        A=A, B=B, c=c, omega=omega, phi=phi, a=a, S=S,
    )


def drift_gain_arrays(
    A: np.ndarray,
    B: np.ndarray,
    c: np.ndarray,
    omega: np.ndarray,
    phi: np.ndarray,
    a: np.ndarray,
    S: np.ndarray,
    x1: np.ndarray,
    t: float,
    sst: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate (f, g) for any stack of agents; leading axes broadcast.

    Shapes: parameter arrays as in SystemRealization with arbitrary leading
    axes, x1 (..., n).  Returns f (..., n) and g (..., n, n).  Hot loops may
    pass the constant S S^T as ``sst`` to skip recomputing it per call.
    """
    n = x1.shape[-1]
    f = (A @ np.tanh(B @ x1[..., None]))[..., 0] + c * np.sin(omega * t + phi)[..., None]
    if sst is None:
        sst = np.einsum("...ik,...jk->...ij", S, S)
    g = sst / (1.0 + np.einsum("...i,...i->...", x1, x1))[..., None, None]
    g = g + a[..., None, None] * np.eye(n)
    return f, g


def eval_dynamics(sys: SystemRealization, i: int, x: AgentState, t: float) -> tuple[np.ndarray, np.ndarray]:
    """(f_i, g_i) at one agent's state; pure function of its inputs."""
    if not 1 <= i <= sys.num_agents:
        raise IndexOutOfRange(f"agent index {i} outside 1..{sys.num_agents}")
    x1 = np.asarray(x.x1, dtype=float)
    x2 = np.asarray(x.x2, dtype=float)
    if x1.shape != (sys.n,) or x2.shape != (sys.n,):
        raise InvalidDimension(f"state must be two length-{sys.n} vectors")
    if not (np.isfinite(x1).all() and np.isfinite(x2).all()):
        raise NonFiniteState(f"non-finite state passed for agent {i}")
    k = i - 1
    return drift_gain_arrays(
        sys.A[k], sys.B[k], sys.c[k], sys.omega[k], sys.phi[k], sys.a[k], sys.S[k], x1, t
    )


def eval_dynamics_all(sys: SystemRealization, x1_all: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (f, g) across all agents; x1_all is (N, n).  No validation."""
    return drift_gain_arrays(sys.A, sys.B, sys.c, sys.omega, sys.phi, sys.a, sys.S, x1_all, t)


def make_drift_gain_evaluator(
    A: np.ndarray,
    B: np.ndarray,
    c: np.ndarray,
    omega: np.ndarray,
    phi: np.ndarray,
    a: np.ndarray,
    S: np.ndarray,
):
    """Closure over the state-independent parts of (f, g) for hot loops.

    Matches drift_gain_arrays exactly (same operations on precomputed
    constants); integration loops call this thousands of times per second.
    """
    n = S.shape[-1]
    sst = np.einsum("...ik,...jk->...ij", S, S)
    gain_floor = a[..., None, None] * np.eye(n)
    c_col = np.ascontiguousarray(c)

    def evaluate(x1: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
        f = (A @ np.tanh(B @ x1[..., None]))[..., 0] + c_col * np.sin(omega * t + phi)[..., None]
        g = gain_floor + sst / (1.0 + np.einsum("...i,...i->...", x1, x1))[..., None, None]
        return f, g

    return evaluate


def system_evaluator(sys: SystemRealization):
    """Drift/gain evaluator bound to one realization's parameters."""
    return make_drift_gain_evaluator(sys.A, sys.B, sys.c, sys.omega, sys.phi, sys.a, sys.S)


@dataclass(frozen=True)
class LeaderProfile:
    """Closed-form leader trajectory: position, velocity, acceleration command."""

    n: int
    name: str
    position: Callable[[float], np.ndarray]
    velocity: Callable[[float], np.ndarray]
    command: Callable[[float], np.ndarray]


def leader_at(p: LeaderProfile, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate the leader's (position, velocity, command) at time t."""
    return p.position(t), p.velocity(t), p.command(t)


def helix_profile(omega: float = 0.2, climb: float = 0.05) -> LeaderProfile:
    """Unit-radius helix in R^3: planar circle plus a slow vertical climb."""
    return LeaderProfile(
        n=3,
        name="helix",
        position=lambda t: np.array([math.cos(omega * t), math.sin(omega * t), climb * t]),
        velocity=lambda t: np.array(
            [-omega * math.sin(omega * t), omega * math.cos(omega * t), climb]
        ),
        command=lambda t: np.array(
            [-omega * omega * math.cos(omega * t), -omega * omega * math.sin(omega * t), 0.0]
        ),
    )


def rest_profile(n: int) -> LeaderProfile:
    """Leader parked at the origin."""
    zero = np.zeros(n)
    return LeaderProfile(
        n=n,
        name="rest",
        position=lambda t: zero.copy(),
        velocity=lambda t: zero.copy(),
        command=lambda t: zero.copy(),
    )


def sinusoid_profile(n: int, omega: float = 0.3, amplitude: float = 1.0) -> LeaderProfile:
    """Per-axis phase-shifted sines; works in any dimension."""
    phases = np.arange(n) * (2.0 * math.pi / max(n, 1))
    return LeaderProfile(
        n=n,
        name="sinusoid",
        position=lambda t: amplitude * np.sin(omega * t + phases),
        velocity=lambda t: amplitude * omega * np.cos(omega * t + phases),
        command=lambda t: -amplitude * omega * omega * np.sin(omega * t + phases),
    )


LEADER_PROFILES = {
    "helix": lambda n, **kw: helix_profile(**kw),
    "rest": lambda n, **kw: rest_profile(n),
    "sinusoid": lambda n, **kw: sinusoid_profile(n, **kw),
}


def check_profile_consistency(
    p: LeaderProfile, times: np.ndarray, step: float = 1e-4
) -> float:
    """Max deviation between finite-differenced and declared derivatives.

    Central differences of position against velocity and of velocity against
    the command, over the given probe times.
    """
    worst = 0.0
    for t in np.atleast_1d(times):
        t = float(t)
        v_fd = (p.position(t + step) - p.position(t - step)) / (2 * step)
        u_fd = (p.velocity(t + step) - p.velocity(t - step)) / (2 * step)
        worst = max(
            worst,
            float(np.max(np.abs(v_fd - p.velocity(t)))),
            float(np.max(np.abs(u_fd - p.command(t)))),
        )
    return worst
