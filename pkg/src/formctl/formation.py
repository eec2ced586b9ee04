"""Formation task specification and the error signals built from it.

The formation error of follower i sums offset-corrected displacements to
its neighbors, plus one to the leader when the follower has leader access:

    e_i = sum_{j in N_i} (x_i - x_j + c_ij) + b_i (x_i - x_0 + c_i0)

All signals here are computable from agent-local information only; the
stacked helpers simply loop the per-agent computation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    NonPositiveGain,
    SingularSystem,
    SpecGraphMismatch,
)
from .graph import CommGraph, laplacian_plus_b, neighbors


@dataclass
class FormationSpec:
    """Desired offsets c_ij, keyed by ordered incidence (i, j); j=0 is the leader."""

    n: int
    offsets: dict[tuple[int, int], np.ndarray]


@dataclass(frozen=True)
class ControllerGains:
    """Per-agent positive gains plus the global dead-zone radius."""

    k1: np.ndarray  # (N,)
    k2: np.ndarray  # (N,)
    mu1: np.ndarray  # (N,)
    mu2: np.ndarray  # (N,)
    eps: float  # dead-zone radius for the inverse error

    def __post_init__(self):
        for name in ("k1", "k2", "mu1", "mu2"):
            v = getattr(self, name)
            if np.any(np.asarray(v) <= 0):
                raise NonPositiveGain(f"gain {name} must be strictly positive")
        if self.eps <= 0:
            raise NonPositiveGain(f"dead-zone radius must be positive, got {self.eps}")

    @classmethod
    def uniform(
        cls,
        num_followers: int,
        k1: float = 1.0,
        k2: float = 2.0,
        mu1: float = 0.5,
        mu2: float = 0.5,
        eps: float = 1e-3,
    ) -> "ControllerGains":
        full = lambda v: np.full(num_followers, float(v))
        return cls(k1=full(k1), k2=full(k2), mu1=full(mu1), mu2=full(mu2), eps=float(eps))


def validate_spec(g: CommGraph, spec: FormationSpec) -> None:
    """Offsets must exist for exactly the incidences of the augmented graph."""
    expected = set()
    for i in range(1, g.num_followers + 1):
        for j in neighbors(g, i):
            expected.add((i, j))
        if g.has_leader_link(i):
            expected.add((i, 0))
    got = set(spec.offsets.keys())
    if got != expected:
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        raise SpecGraphMismatch(f"offset keys mismatch; missing={missing} extra={extra}")
    for key, off in spec.offsets.items():
        arr = np.asarray(off)
        if arr.shape != (spec.n,):
            raise DimensionMismatch(f"offset {key} has shape {arr.shape}, expected ({spec.n},)")


def local_formation_error(
    g: CommGraph,
    spec: FormationSpec,
    i: int,
    own_pos: np.ndarray,
    neighbor_pos: Mapping[int, np.ndarray],
    leader_pos: np.ndarray | None = None,
) -> np.ndarray:
    """Formation error of follower i from its own neighborhood only."""
    e = np.zeros(spec.n)
    for j in g.neighbor_lists[i - 1]:
        e += own_pos - neighbor_pos[j] + spec.offsets[(i, j)]
    if g.has_leader_link(i):
        if leader_pos is None:
            raise DimensionMismatch(f"follower {i} has leader access but no leader position given")
        e += own_pos - leader_pos + spec.offsets[(i, 0)]
    return e


def local_error_rate(
    g: CommGraph,
    i: int,
    own_vel: np.ndarray,
    neighbor_vel: Mapping[int, np.ndarray],
    leader_vel: np.ndarray | None = None,
) -> np.ndarray:
    """Rate of follower i's formation error; offsets are constant and drop out."""
    n = np.asarray(own_vel).shape[-1]
    r = np.zeros(n)
    for j in g.neighbor_lists[i - 1]:
        r += own_vel - neighbor_vel[j]
    if g.has_leader_link(i):
        if leader_vel is None:
            raise DimensionMismatch(f"follower {i} has leader access but no leader velocity given")
        r += own_vel - leader_vel
    return r


def _check_lengths(g: CommGraph, vectors: Sequence[np.ndarray], n: int, what: str) -> list[np.ndarray]:
    if len(vectors) != g.num_followers:
        raise DimensionMismatch(
            f"expected {g.num_followers} {what} vectors, got {len(vectors)}"
        )
    out = [np.asarray(v, dtype=float) for v in vectors]
    for v in out:
        if v.shape != (n,):
            raise DimensionMismatch(f"{what} vector has shape {v.shape}, expected ({n},)")
    return out


def formation_error(
    g: CommGraph,
    spec: FormationSpec,
    positions: Sequence[np.ndarray],
    leader_pos: np.ndarray,
) -> list[np.ndarray]:
    """All followers' formation errors e_i from stacked positions."""
    validate_spec(g, spec)
    pos = _check_lengths(g, positions, spec.n, "position")
    x0 = np.asarray(leader_pos, dtype=float)
    return [
        local_formation_error(
            g, spec, i, pos[i - 1], {j: pos[j - 1] for j in neighbors(g, i)}, x0
        )
        for i in range(1, g.num_followers + 1)
    ]


def formation_error_rate(
    g: CommGraph,
    spec: FormationSpec,
    velocities: Sequence[np.ndarray],
    leader_vel: np.ndarray,
) -> list[np.ndarray]:
    """All followers' error rates from stacked velocities."""
    vel = _check_lengths(g, velocities, spec.n, "velocity")
    v0 = np.asarray(leader_vel, dtype=float)
    return [
        local_error_rate(g, i, vel[i - 1], {j: vel[j - 1] for j in neighbors(g, i)}, v0)
        for i in range(1, g.num_followers + 1)
    ]


def augmented_error(e1: np.ndarray, e1_rate: np.ndarray, k1: float) -> np.ndarray:
    """Sliding-style combination rate + k1 * error."""
    if k1 <= 0:
        raise NonPositiveGain(f"k1 must be positive, got {k1}")
    return np.asarray(e1_rate, dtype=float) + k1 * np.asarray(e1, dtype=float)


def inverse_error(e2: np.ndarray, eps: float) -> np.ndarray:
    """e2 / ||e2||^2 outside the dead zone, zero inside.

    The inner product <e2, inverse_error(e2)> is exactly 1 outside the dead
    zone, which lets an adaptive coefficient cancel a bounded disturbance.
    The dead zone keeps the magnitude bounded by 1/eps near the origin.
    """
    e2 = np.asarray(e2, dtype=float)
    sq = float(np.dot(e2, e2))
    if sq >= eps * eps:
        return e2 / sq
    return np.zeros_like(e2)


def error_operator(g: CommGraph, spec: FormationSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Matrix form of the error map: e = H x + s - b x0 (rowwise over agents).

    Returns (H, s, b) with H = laplacian_plus_b, s the per-agent offset sums,
    and b the leader-link flags.  This is the fast path used by the
    simulation engine; its agreement with formation_error is a tested
    invariant.
    """
    validate_spec(g, spec)
    H = laplacian_plus_b(g)
    N = g.num_followers
    s = np.zeros((N, spec.n))
    for i in range(1, N + 1):
        for j in neighbors(g, i):
            s[i - 1] += spec.offsets[(i, j)]
        if g.has_leader_link(i):
            s[i - 1] += spec.offsets[(i, 0)]
    b = np.asarray(g.leader_links, dtype=float)
    return H, s, b


def solve_equilibrium(
    g: CommGraph, spec: FormationSpec, leader_pos: np.ndarray
) -> list[np.ndarray]:
    """The unique follower configuration with zero formation error.

    Solves (L + B) X = b x0^T - s dimension by dimension; uniqueness follows
    from positive definiteness of L + B for valid graphs.
    """
    H, s, b = error_operator(g, spec)
    x0 = np.asarray(leader_pos, dtype=float)
    rhs = b[:, None] * x0[None, :] - s
    try:
        X = np.linalg.solve(H, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"equilibrium system is singular: {exc}") from exc
    residual = float(np.max(np.abs(H @ X - rhs)))
    if not np.isfinite(residual) or residual > 1e-10 * max(1.0, float(np.max(np.abs(rhs)))):
        raise SingularSystem(f"equilibrium solve residual too large: {residual}")
    return [X[k] for k in range(g.num_followers)]


def random_offsets(
    g: CommGraph,
    n: int,
    seed: int,
    low: float = -1.0,
    high: float = 1.0,
    antisymmetric: bool = False,
) -> FormationSpec:
    """Draw offsets uniformly per incidence, deterministically in seed.

    By default each ordered incidence (i,j) is drawn independently, so
    c_ij != -c_ji in general; the equilibrium still exists and is unique.
    With antisymmetric=True the reverse offset mirrors the forward one.
    """
    rng = np.random.default_rng(seed)
    offsets: dict[tuple[int, int], np.ndarray] = {}
    for i in range(1, g.num_followers + 1):
        if g.has_leader_link(i):
            offsets[(i, 0)] = rng.uniform(low, high, n)
        for j in sorted(neighbors(g, i)):
            if antisymmetric and (j, i) in offsets:
                offsets[(i, j)] = -offsets[(j, i)]
            else:
                offsets[(i, j)] = rng.uniform(low, high, n)
    return FormationSpec(n=n, offsets=offsets)


def offsets_from_targets(
    g: CommGraph, targets: Sequence[np.ndarray], leader_target: np.ndarray
) -> FormationSpec:
    """Consistent offsets that place followers at absolute targets.

    With c_ij = target_j - target_i every summand of the error vanishes at
    the target configuration (leader sitting at leader_target).
    """
    t = [np.asarray(v, dtype=float) for v in targets]
    t0 = np.asarray(leader_target, dtype=float)
    n = t0.shape[0]
    offsets: dict[tuple[int, int], np.ndarray] = {}
    for i in range(1, g.num_followers + 1):
        for j in neighbors(g, i):
            offsets[(i, j)] = t[j - 1] - t[i - 1]
        if g.has_leader_link(i):
            offsets[(i, 0)] = t0 - t[i - 1]
    return FormationSpec(n=n, offsets=offsets)
