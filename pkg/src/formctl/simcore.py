"""Deterministic fixed-step closed-loop simulation with RK4 integration.

Each step takes an immutable snapshot of all states, evaluates every
agent's control from a read-audited local view (zero-order hold within the
step), then integrates the physical states together with the adaptation
variables as one coupled ODE.  Identical configurations produce
bit-identical logs.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .control import AdaptationState, agent_step_inputs, make_view
from .dynamics import (
    LeaderProfile,
    SystemRealization,
    leader_at,
    sample_system,
    system_evaluator,
)
from .errors import EmptyLog, InvalidDimension, NonFiniteDerivative, NonFiniteState
from .formation import ControllerGains, FormationSpec, error_operator, solve_equilibrium
from .graph import CommGraph
from .neuralnet import NeuralPolicy

MODES = ("expert", "neuro-adaptive", "adaptive-only", "nn-only")
BLOWUP_LIMIT = 1e6


@dataclass
class SimConfig:
    graph: CommGraph
    spec: FormationSpec
    gains: ControllerGains
    leader: LeaderProfile
    mode: str = "neuro-adaptive"
    dt: float = 1e-3
    t_end: float = 55.0
    log_stride: int = 100
    system: SystemRealization | None = None
    system_seed: int = 0
    variation: float = 1.0
    initial_states: np.ndarray | None = None  # (N, 2n), else sampled from init_seed
    init_seed: int = 0
    init_halfwidth: float = 2.0
    policies: Sequence[NeuralPolicy] | None = None
    expert_kp: float = 4.0
    expert_kd: float = 4.0


@dataclass
class SimLog:
    t: np.ndarray  # (T,)
    x1: np.ndarray  # (T, N, n)
    x2: np.ndarray
    u: np.ndarray
    e1: np.ndarray
    e1dot: np.ndarray
    e2: np.ndarray
    d1: np.ndarray  # (T, N)
    d2: np.ndarray
    audit_violations: np.ndarray  # (T,) reads outside permitted sets per logged step
    mode: str
    offline_model_access: bool  # True only for the expert teacher
    config_digest: str


def rk4_step(
    deriv: Callable[[np.ndarray, float], np.ndarray],
    state: np.ndarray,
    t: float,
    dt: float,
) -> np.ndarray:
    """One classical Runge-Kutta 4 step of the given derivative map."""
    k1 = deriv(state, t)
    k2 = deriv(state + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = deriv(state + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = deriv(state + dt * k3, t + dt)
    incr = k1 + 2.0 * k2 + 2.0 * k3 + k4
    if not np.isfinite(incr).all():
        raise NonFiniteDerivative(f"derivative became non-finite near t={t}")
    return state + (dt / 6.0) * incr


def sample_initial_states(
    g: CommGraph,
    spec: FormationSpec,
    leader: LeaderProfile,
    seed: int,
    halfwidth: float,
) -> np.ndarray:
    """Uniform box around (equilibrium positions, leader velocity), (N, 2n)."""
    x0, v0, _ = leader_at(leader, 0.0)
    eq = np.array(solve_equilibrium(g, spec, x0))
    rng = np.random.default_rng(seed)
    N, n = eq.shape
    x1 = eq + rng.uniform(-halfwidth, halfwidth, (N, n))
    x2 = v0 + rng.uniform(-halfwidth, halfwidth, (N, n))
    return np.hstack([x1, x2])


def _config_digest(cfg: SimConfig, system: SystemRealization, y0: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(
        repr(
            (
                cfg.mode,
                cfg.dt,
                cfg.t_end,
                cfg.log_stride,
                cfg.graph.num_followers,
                sorted(cfg.graph.edges),
                cfg.graph.leader_links,
                sorted((k, v.tolist()) for k, v in cfg.spec.offsets.items()),
                cfg.leader.name,
                cfg.expert_kp,
                cfg.expert_kd,
            )
        ).encode()
    )
    for arr in (cfg.gains.k1, cfg.gains.k2, cfg.gains.mu1, cfg.gains.mu2):
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update(repr(cfg.gains.eps).encode())
    for arr in (system.A, system.B, system.c, system.omega, system.phi, system.a, system.S):
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update(np.ascontiguousarray(y0).tobytes())
    if cfg.policies:
        for p in cfg.policies:
            for w in p.weights:
                h.update(np.ascontiguousarray(w).tobytes())
            for b in p.biases:
                h.update(np.ascontiguousarray(b).tobytes())
            h.update(p.input_mean.tobytes())
            h.update(p.input_scale.tobytes())
    return h.hexdigest()


def run_closed_loop(cfg: SimConfig) -> SimLog:
    """Simulate the configured controller on the configured system.

    Controls are computed once per step from a snapshot (zero-order hold);
    physical states and adaptation variables integrate jointly under RK4,
    so the adaptation rates track the within-step error evolution.
    """
    if cfg.dt <= 0 or cfg.t_end <= cfg.dt:
        raise InvalidDimension(f"need 0 < dt < t_end, got dt={cfg.dt}, t_end={cfg.t_end}")
    if cfg.mode not in MODES:
        raise InvalidDimension(f"unknown mode {cfg.mode!r}; expected one of {MODES}")
    g = cfg.graph
    N, n = g.num_followers, cfg.spec.n
    if cfg.leader.n != n:
        raise InvalidDimension(f"leader dimension {cfg.leader.n} != formation dimension {n}")

    system = cfg.system or sample_system(cfg.system_seed, n, N, cfg.variation)
    if system.n != n or system.num_agents != N:
        raise InvalidDimension("system realization does not match graph/spec dimensions")

    if cfg.initial_states is not None:
        y0_states = np.array(cfg.initial_states, dtype=float)
        if y0_states.shape != (N, 2 * n):
            raise InvalidDimension(f"initial states must be ({N}, {2*n})")
    else:
        y0_states = sample_initial_states(g, cfg.spec, cfg.leader, cfg.init_seed, cfg.init_halfwidth)

    needs_nn = cfg.mode in ("neuro-adaptive", "nn-only")
    policies = list(cfg.policies) if cfg.policies else []
    if needs_nn:
        if len(policies) != N:
            raise InvalidDimension(f"mode {cfg.mode!r} needs {N} policies, got {len(policies)}")
        for i, p in enumerate(policies, start=1):
            if p.layout.owner != i or p.layout.n != n or p.layout.num_followers != N:
                raise InvalidDimension(f"policy {i} layout does not match the experiment")

    H, s, b = error_operator(g, cfg.spec)
    k1 = cfg.gains.k1
    mu1, mu2 = cfg.gains.mu1, cfg.gains.mu2
    adapt = cfg.mode in ("neuro-adaptive", "adaptive-only")

    nsteps = int(round(cfg.t_end / cfg.dt))
    nlog = nsteps // cfg.log_stride + 1
    last_partial = nsteps % cfg.log_stride != 0
    T = nlog + (1 if last_partial else 0)

    t_log = np.zeros(T)
    x1_log = np.zeros((T, N, n))
    x2_log = np.zeros((T, N, n))
    u_log = np.zeros((T, N, n))
    e1_log = np.zeros((T, N, n))
    e1dot_log = np.zeros((T, N, n))
    e2_log = np.zeros((T, N, n))
    d1_log = np.zeros((T, N))
    d2_log = np.zeros((T, N))
    audit_log = np.zeros(T, dtype=np.int64)

    x1 = y0_states[:, :n].copy()
    x2 = y0_states[:, n:].copy()
    d = AdaptationState.zeros(N)

    def pack() -> np.ndarray:
        return np.concatenate([x1.ravel(), x2.ravel(), d.d1, d.d2])

    def unpack(y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        m = N * n
        return (
            y[:m].reshape(N, n),
            y[m : 2 * m].reshape(N, n),
            y[2 * m : 2 * m + N],
            y[2 * m + N :],
        )

    def stacked_errors(p1: np.ndarray, p2: np.ndarray, t: float):
        x0p, x0v, _ = leader_at(cfg.leader, t)
        e1 = H @ p1 + s - b[:, None] * x0p
        e1dot = H @ p2 - b[:, None] * x0v
        e2 = e1dot + k1[:, None] * e1
        return e1, e1dot, e2

    evaluate = system_evaluator(system)

    def derivative(y: np.ndarray, t: float, U: np.ndarray) -> np.ndarray:
        p1, p2, _, _ = unpack(y)
        f, gm = evaluate(p1, t)
        acc = f + (gm @ U[..., None])[..., 0]
        if adapt:
            _, _, e2 = stacked_errors(p1, p2, t)
            sq = np.einsum("ij,ij->i", e2, e2)
            rates1 = mu1 * sq
            rates2 = mu2 * np.sqrt(sq)
        else:
            rates1 = rates2 = np.zeros(N)
        return np.concatenate([p2.ravel(), acc.ravel(), rates1, rates2])

    def step_controls(t: float) -> tuple[np.ndarray, int]:
        if cfg.mode == "expert":
            from .datagen import expert_control  # offline teacher; model access allowed

            states = np.hstack([x1, x2])
            U = expert_control(
                system, g, cfg.spec, states, leader_at(cfg.leader, t), t,
                kp=cfg.expert_kp, kd=cfg.expert_kd,
            )
            return np.asarray(U), 0
        snapshot = np.hstack([x1, x2])
        x0p, x0v, _ = leader_at(cfg.leader, t)
        U = np.zeros((N, n))
        bad = 0
        for i in range(1, N + 1):
            view = make_view(g, i, snapshot, x0p, x0v)
            U[i - 1] = agent_step_inputs(
                i, g, cfg.spec, view, cfg.gains, d,
                policies[i - 1] if needs_nn else None, mode=cfg.mode,
            )
            bad += view.violations
        return U, bad

    digest = _config_digest(cfg, system, y0_states)
    row = 0
    audit_bucket = 0
    y = pack()
    for k in range(nsteps + 1):
        t = k * cfg.dt
        x1, x2, d1v, d2v = unpack(y)
        d = AdaptationState(d1=d1v, d2=d2v)
        U, bad = step_controls(t)
        audit_bucket += bad
        if (k % cfg.log_stride == 0) or (k == nsteps):
            e1, e1dot, e2 = stacked_errors(x1, x2, t)
            t_log[row] = t
            x1_log[row] = x1
            x2_log[row] = x2
            u_log[row] = U
            e1_log[row] = e1
            e1dot_log[row] = e1dot
            e2_log[row] = e2
            d1_log[row] = d1v
            d2_log[row] = d2v
            audit_log[row] = audit_bucket
            audit_bucket = 0
            row += 1
        if k == nsteps:
            break
        y = rk4_step(lambda yy, tt: derivative(yy, tt, U), y, t, cfg.dt)
        if not np.isfinite(y).all() or np.max(np.abs(y)) > BLOWUP_LIMIT:
            raise NonFiniteState(f"state blew up at t={t + cfg.dt:.6g} in mode {cfg.mode!r}")

    return SimLog(
        t=t_log[:row],
        x1=x1_log[:row],
        x2=x2_log[:row],
        u=u_log[:row],
        e1=e1_log[:row],
        e1dot=e1dot_log[:row],
        e2=e2_log[:row],
        d1=d1_log[:row],
        d2=d2_log[:row],
        audit_violations=audit_log[:row],
        mode=cfg.mode,
        offline_model_access=cfg.mode == "expert",
        config_digest=digest,
    )


@dataclass
class ErrorMetrics:
    """Per-agent ||e1|| + ||e1dot|| series and summary statistics."""

    t: np.ndarray  # (T,)
    series: np.ndarray  # (T, N)
    initial: np.ndarray  # (N,)
    final: np.ndarray
    peak: np.ndarray
    settling_time: np.ndarray  # first t after which the signal stays <= 5% of initial


def metrics(log: SimLog) -> ErrorMetrics:
    """Error-norm summaries on the logged grid."""
    if log.t.size == 0:
        raise EmptyLog("log has no rows")
    series = np.linalg.norm(log.e1, axis=2) + np.linalg.norm(log.e1dot, axis=2)
    initial = series[0]
    N = series.shape[1]
    settle = np.zeros(N)
    for i in range(N):
        above = np.nonzero(series[:, i] > 0.05 * initial[i])[0]
        if above.size == 0:
            settle[i] = 0.0
        elif above[-1] == len(log.t) - 1:
            settle[i] = np.inf
        else:
            settle[i] = log.t[above[-1] + 1]
    return ErrorMetrics(
        t=log.t,
        series=series,
        initial=initial,
        final=series[-1],
        peak=series.max(axis=0),
        settling_time=settle,
    )


def write_csv(log: SimLog, path) -> None:
    """One row per (t, agent): states, control, error norms, adaptive gains."""
    T, N, n = log.x1.shape
    cols = (
        ["t", "agent"]
        + [f"x1_{k}" for k in range(1, n + 1)]
        + [f"x2_{k}" for k in range(1, n + 1)]
        + [f"u_{k}" for k in range(1, n + 1)]
        + ["e1_norm", "e1dot_norm", "d1hat", "d2hat"]
    )
    e1n = np.linalg.norm(log.e1, axis=2)
    e1dn = np.linalg.norm(log.e1dot, axis=2)
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in range(T):
            for i in range(N):
                vals = (
                    [log.t[r], i + 1]
                    + list(log.x1[r, i])
                    + list(log.x2[r, i])
                    + list(log.u[r, i])
                    + [e1n[r, i], e1dn[r, i], log.d1[r, i], log.d2[r, i]]
                )
                fh.write(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in vals) + "\n")
