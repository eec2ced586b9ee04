"""Online distributed control: NN feedforward plus adaptive error feedback.

The per-agent policy is

    u_i = u_nn - (k2 + d1) e2 - d2 e2_hat

with e2 the augmented error, e2_hat its dead-zoned inverse, and (d1, d2)
nonnegative adaptation variables integrated as d1' = mu1 ||e2||^2,
d2' = mu2 ||e2||, so both act as learned upper bounds that never decrease.

Every state an agent's computation touches flows through a LocalView,
which audits that only the agent itself, its neighbors, and (when granted)
the leader are ever read.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LocalityViolation, NonPositiveGain
from .formation import (
    ControllerGains,
    FormationSpec,
    augmented_error,
    inverse_error,
    local_error_rate,
    local_formation_error,
)
from .graph import CommGraph, neighbors
from .neuralnet import NeuralPolicy, encode_input, forward

ONLINE_MODES = ("neuro-adaptive", "adaptive-only", "nn-only")


@dataclass
class AdaptationState:
    """Nonnegative adaptive gains per agent; nondecreasing along trajectories."""

    d1: np.ndarray  # (N,)
    d2: np.ndarray  # (N,)

    @classmethod
    def zeros(cls, num_followers: int) -> "AdaptationState":
        return cls(d1=np.zeros(num_followers), d2=np.zeros(num_followers))

    def entry(self, i: int) -> tuple[float, float]:
        return float(self.d1[i - 1]), float(self.d2[i - 1])


def control_law(
    u_nn: np.ndarray,
    e2: np.ndarray,
    e2_hat: np.ndarray,
    d1: float,
    d2: float,
    k2: float,
) -> np.ndarray:
    """u = u_nn - (k2 + d1) e2 - d2 e2_hat; pure function of its inputs."""
    if k2 <= 0:
        raise NonPositiveGain(f"k2 must be positive, got {k2}")
    return np.asarray(u_nn, float) - (k2 + d1) * np.asarray(e2, float) - d2 * np.asarray(
        e2_hat, float
    )


def adaptation_rates(e2: np.ndarray, mu1: float, mu2: float) -> tuple[float, float]:
    """(mu1 ||e2||^2, mu2 ||e2||); both nonnegative for any e2."""
    if mu1 <= 0 or mu2 <= 0:
        raise NonPositiveGain(f"mu1, mu2 must be positive, got {mu1}, {mu2}")
    sq = float(np.dot(e2, e2))
    return mu1 * sq, mu2 * float(np.sqrt(sq))


class LocalView:
    """Read-audited snapshot of the states one agent may access.

    The view holds the full snapshot but only a permitted subset is
    legitimate: the owner, its neighbors, and the leader when granted.
    Reads outside that set are counted (and raised when strict), which is
    how the locality of a controller is proven rather than assumed.
    """

    def __init__(
        self,
        agent: int,
        follower_states: np.ndarray,  # (N, 2n) snapshot at step start
        leader_pos: np.ndarray,
        leader_vel: np.ndarray,
        permitted: frozenset[int],
        leader_ok: bool,
        strict: bool = False,
    ):
        self.agent = agent
        self._states = follower_states
        self._leader_pos = leader_pos
        self._leader_vel = leader_vel
        self.permitted = permitted
        self.leader_ok = leader_ok
        self.strict = strict
        self.violations = 0

    def _flag(self, what: str) -> None:
        self.violations += 1
        if self.strict:
            raise LocalityViolation(f"agent {self.agent} read {what} outside its permitted set")

    def own(self) -> np.ndarray:
        return self._states[self.agent - 1]

    def follower(self, j: int) -> np.ndarray:
        if j != self.agent and j not in self.permitted:
            self._flag(f"follower {j}")
        return self._states[j - 1]

    def leader(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.leader_ok:
            self._flag("the leader state")
        return self._leader_pos, self._leader_vel


def make_view(
    g: CommGraph,
    i: int,
    follower_states: np.ndarray,
    leader_pos: np.ndarray,
    leader_vel: np.ndarray,
    strict: bool = False,
) -> LocalView:
    """View for agent i permitting exactly {i} + neighbors (+ leader iff linked)."""
    return LocalView(
        agent=i,
        follower_states=follower_states,
        leader_pos=leader_pos,
        leader_vel=leader_vel,
        permitted=neighbors(g, i),
        leader_ok=g.has_leader_link(i),
        strict=strict,
    )


def agent_step_inputs(
    i: int,
    g: CommGraph,
    spec: FormationSpec,
    view: LocalView,
    gains: ControllerGains,
    d: AdaptationState,
    policy: NeuralPolicy | None,
    mode: str = "neuro-adaptive",
) -> np.ndarray:
    """One agent's control from its local view only.

    Composes formation error -> rate -> augmented error -> inverse error ->
    NN forward -> control law.  All reads go through the view, so the
    locality audit covers the whole chain.
    """
    n = spec.n
    own = view.own()
    nbr, nbr_pos, nbr_vel = {}, {}, {}
    for j in g.neighbor_lists[i - 1]:
        st = view.follower(j)
        nbr[j] = st
        nbr_pos[j] = st[:n]
        nbr_vel[j] = st[n:]
    leader_pos = leader_vel = None
    if g.has_leader_link(i):
        leader_pos, leader_vel = view.leader()

    e1 = local_formation_error(g, spec, i, own[:n], nbr_pos, leader_pos)
    e1_rate = local_error_rate(g, i, own[n:], nbr_vel, leader_vel)
    e2 = augmented_error(e1, e1_rate, float(gains.k1[i - 1]))

    u_nn = np.zeros(n)
    if mode in ("neuro-adaptive", "nn-only"):
        states = dict(nbr)
        active = list(g.neighbor_lists[i - 1])
        if g.has_leader_link(i):
            states[0] = np.concatenate([leader_pos, leader_vel])
            active.append(0)
        x = encode_input(policy.layout, own, states, active)
        u_nn = forward(policy, x)
    if mode == "nn-only":
        return u_nn

    e2_hat = inverse_error(e2, gains.eps)
    d1, d2 = d.entry(i)
    return control_law(u_nn, e2, e2_hat, d1, d2, float(gains.k2[i - 1]))
