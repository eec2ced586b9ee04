"""A-priori trajectory dataset: expert rollouts recorded for imitation.

The teacher is exact feedback linearization with leader-acceleration
feedforward,

    u_i = g_i(x_i, t)^{-1} (-f_i(x_i, t) + u_0(t) - kp e_i - kd e_i')

which is legitimate offline (the generator owns the sampled dynamics) and
drives every run to the formation, so the recorded pairs are successful
demonstrations.  Each trajectory draws a fresh system realization and
fresh initial conditions; all trajectories integrate in one vectorized
batch and the records are assembled in a fixed (trajectory, time, agent)
order, so generation is a pure function of its config.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    LeaderProfile,
    SystemRealization,
    drift_gain_arrays,
    leader_at,
    make_drift_gain_evaluator,
    sample_system,
)
from .errors import (
    CorruptRecord,
    FormatVersionMismatch,
    InvalidDimension,
    IoFailure,
    SingularGain,
)
from .formation import FormationSpec, error_operator, random_offsets, solve_equilibrium
from .graph import CommGraph, neighbors
from .neuralnet import InputLayout, encode_input
from .simcore import rk4_step

DATASET_FORMAT = "formctl-ds-v1"


@dataclass(frozen=True)
class DatasetMeta:
    format_version: str
    n: int
    num_followers: int
    num_trajectories: int
    sample_period: float
    seed: int


@dataclass
class DatasetRecord:
    traj: int
    t: float
    agent: int
    state: np.ndarray  # (2n,) own state
    neighbor_ids: tuple[int, ...]  # ascending; 0 first when the leader is visible
    neighbor_states: np.ndarray  # (len(neighbor_ids), 2n)
    control: np.ndarray  # (n,)


@dataclass
class TrajectoryDataset:
    meta: DatasetMeta
    records: list[DatasetRecord]

    def records_for(self, agent: int) -> list[DatasetRecord]:
        return [r for r in self.records if r.agent == agent]


@dataclass
class GenConfig:
    graph: CommGraph
    spec: FormationSpec
    leader: LeaderProfile
    trajectories: int = 100
    horizon: float = 30.0
    sample_period: float = 0.1
    dt: float = 1e-3
    seed: int = 0
    variation: float = 1.0
    init_halfwidth: float = 2.0
    drop_edge_prob: float = 0.0  # per-trajectory random edge removal
    vary_offsets: bool = False  # fresh random offsets per trajectory
    offset_range: tuple[float, float] = (-1.0, 1.0)
    expert_kp: float = 4.0
    expert_kd: float = 4.0


def expert_control(
    sys: SystemRealization,
    g: CommGraph,
    spec: FormationSpec,
    states: np.ndarray,
    leader: tuple[np.ndarray, np.ndarray, np.ndarray],
    t: float = 0.0,
    kp: float = 4.0,
    kd: float = 4.0,
) -> np.ndarray:
    """Model-aware teacher controls for all agents; offline use only.

    states is (N, 2n); leader is the (position, velocity, command) triple at
    time t.  The time argument is needed because the hidden drift carries an
    explicit oscillatory term.
    """
    states = np.asarray(states, dtype=float)
    n = sys.n
    if states.shape != (g.num_followers, 2 * n):
        raise InvalidDimension(f"states must be ({g.num_followers}, {2*n}), got {states.shape}")
    x1, x2 = states[:, :n], states[:, n:]
    x0, v0, u0 = (np.asarray(v, dtype=float) for v in leader)
    H, s, b = error_operator(g, spec)
    e1 = H @ x1 + s - b[:, None] * x0
    e1dot = H @ x2 - b[:, None] * v0
    f, gm = drift_gain_arrays(sys.A, sys.B, sys.c, sys.omega, sys.phi, sys.a, sys.S, x1, t)
    rhs = -f + u0 - kp * e1 - kd * e1dot
    try:
        return np.linalg.solve(gm, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:  # unreachable: g is positive definite
        raise SingularGain(f"input gain not invertible: {exc}") from exc


def trajectory_seeds(seed: int, trajectories: int) -> np.ndarray:
    """Per-trajectory (system, init, topology, offsets) seeds, (T, 4)."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2**63 - 1, size=(trajectories, 4), dtype=np.int64)


def _traj_graph(base: CommGraph, drop_prob: float, seed: int) -> CommGraph:
    """Randomly drop follower edges; leader links are kept."""
    if drop_prob <= 0:
        return base
    rng = np.random.default_rng(seed)
    kept = [e for e in sorted(base.edges) if rng.random() >= drop_prob]
    nbr_sets = _neighbor_sets(base.num_followers, kept)
    return CommGraph(
        num_followers=base.num_followers,
        edges=frozenset(kept),
        leader_links=base.leader_links,
        neighbor_sets=nbr_sets,
        neighbor_lists=tuple(tuple(sorted(s)) for s in nbr_sets),
    )


def _neighbor_sets(num_followers: int, edges) -> tuple[frozenset[int], ...]:
    nbrs: list[set[int]] = [set() for _ in range(num_followers)]
    for i, j in edges:
        nbrs[i - 1].add(j)
        nbrs[j - 1].add(i)
    return tuple(frozenset(s) for s in nbrs)


def _restrict_spec(spec: FormationSpec, g: CommGraph) -> FormationSpec:
    """Keep only the offsets for incidences present in (a thinned) graph."""
    keys = set()
    for i in range(1, g.num_followers + 1):
        for j in neighbors(g, i):
            keys.add((i, j))
        if g.has_leader_link(i):
            keys.add((i, 0))
    return FormationSpec(n=spec.n, offsets={k: spec.offsets[k] for k in keys})


def generate_dataset(cfg: GenConfig) -> TrajectoryDataset:
    """Run the expert on freshly sampled systems and record (state, control) pairs.

    All trajectories integrate simultaneously in a stacked RK4 loop with the
    control held over each dt step; every sample_period the full snapshot and
    the applied control are recorded for every agent.
    """
    if cfg.trajectories < 1:
        raise InvalidDimension(f"need at least one trajectory, got {cfg.trajectories}")
    sample_every = cfg.sample_period / cfg.dt
    if abs(sample_every - round(sample_every)) > 1e-9:
        raise InvalidDimension(
            f"sample_period {cfg.sample_period} must be a multiple of dt {cfg.dt}"
        )
    sample_every = int(round(sample_every))
    nsteps = int(round(cfg.horizon / cfg.dt))
    g, spec, leader = cfg.graph, cfg.spec, cfg.leader
    N, n = g.num_followers, spec.n
    K = cfg.trajectories
    seeds = trajectory_seeds(cfg.seed, K)

    systems = [
        sample_system(int(seeds[k, 0]), n, N, cfg.variation) for k in range(K)
    ]
    graphs = [_traj_graph(g, cfg.drop_edge_prob, int(seeds[k, 2])) for k in range(K)]
    if cfg.vary_offsets:
        lo, hi = cfg.offset_range
        specs = [random_offsets(g, n, int(seeds[k, 3]), lo, hi) for k in range(K)]
    else:
        specs = [spec] * K

    # stacked expert pieces; the error operator always follows the nominal
    # offsets but the trajectory's (possibly thinned) edge set
    Hk = np.zeros((K, N, N))
    sk = np.zeros((K, N, n))
    bk = np.zeros((K, N))
    for k in range(K):
        H, s, b = error_operator(graphs[k], _restrict_spec(specs[k], graphs[k]))
        Hk[k], sk[k], bk[k] = H, s, b

    A = np.stack([s_.A for s_ in systems])
    B = np.stack([s_.B for s_ in systems])
    c = np.stack([s_.c for s_ in systems])
    omega = np.stack([s_.omega for s_ in systems])
    phi = np.stack([s_.phi for s_ in systems])
    a = np.stack([s_.a for s_ in systems])
    S = np.stack([s_.S for s_ in systems])
    evaluate = make_drift_gain_evaluator(A, B, c, omega, phi, a, S)

    x0_init, v0_init, _ = leader_at(leader, 0.0)
    x1 = np.zeros((K, N, n))
    x2 = np.zeros((K, N, n))
    for k in range(K):
        eq = np.array(solve_equilibrium(g, specs[k], x0_init))
        rng = np.random.default_rng(int(seeds[k, 1]))
        x1[k] = eq + rng.uniform(-cfg.init_halfwidth, cfg.init_halfwidth, (N, n))
        x2[k] = v0_init + rng.uniform(-cfg.init_halfwidth, cfg.init_halfwidth, (N, n))

    def expert_batch(p1: np.ndarray, p2: np.ndarray, t: float) -> np.ndarray:
        x0, v0, u0 = leader_at(leader, t)
        e1 = np.einsum("kij,kjd->kid", Hk, p1) + sk - bk[..., None] * x0
        e1dot = np.einsum("kij,kjd->kid", Hk, p2) - bk[..., None] * v0
        f, gm = evaluate(p1, t)
        rhs = -f + u0 - cfg.expert_kp * e1 - cfg.expert_kd * e1dot
        return np.linalg.solve(gm, rhs[..., None])[..., 0]

    def derivative(z: np.ndarray, t: float, U: np.ndarray) -> np.ndarray:
        m = K * N * n
        p1 = z[:m].reshape(K, N, n)
        p2 = z[m:].reshape(K, N, n)
        f, gm = evaluate(p1, t)
        acc = f + (gm @ U[..., None])[..., 0]
        return np.concatenate([p2.ravel(), acc.ravel()])

    snap_states = []  # (K, N, 2n) per sample
    snap_controls = []  # (K, N, n)
    snap_times = []
    z = np.concatenate([x1.ravel(), x2.ravel()])
    for step in range(nsteps + 1):
        t = step * cfg.dt
        m = K * N * n
        p1 = z[:m].reshape(K, N, n)
        p2 = z[m:].reshape(K, N, n)
        U = expert_batch(p1, p2, t)
        if step % sample_every == 0 or step == nsteps:
            snap_states.append(np.concatenate([p1, p2], axis=2).copy())
            snap_controls.append(U.copy())
            snap_times.append(t)
        if step == nsteps:
            break
        z = rk4_step(lambda zz, tt: derivative(zz, tt, U), z, t, cfg.dt)

    leader_snaps = [np.concatenate(leader_at(leader, t)[:2]) for t in snap_times]
    records: list[DatasetRecord] = []
    for k in range(K):
        gk = graphs[k]
        nbr_ids = []
        for i in range(1, N + 1):
            ids = ([0] if gk.has_leader_link(i) else []) + sorted(neighbors(gk, i))
            nbr_ids.append(tuple(ids))
        for si, t in enumerate(snap_times):
            states_k = snap_states[si][k]  # (N, 2n)
            for i in range(1, N + 1):
                ids = nbr_ids[i - 1]
                nstates = np.array(
                    [leader_snaps[si] if j == 0 else states_k[j - 1] for j in ids]
                ).reshape(len(ids), 2 * n)
                records.append(
                    DatasetRecord(
                        traj=k,
                        t=t,
                        agent=i,
                        state=states_k[i - 1].copy(),
                        neighbor_ids=ids,
                        neighbor_states=nstates,
                        control=snap_controls[si][k, i - 1].copy(),
                    )
                )
    meta = DatasetMeta(
        format_version=DATASET_FORMAT,
        n=n,
        num_followers=N,
        num_trajectories=K,
        sample_period=cfg.sample_period,
        seed=cfg.seed,
    )
    return TrajectoryDataset(meta=meta, records=records)


def write_dataset(dataset: TrajectoryDataset, path) -> None:
    """Line-delimited records behind a single metadata header line."""
    meta = dataset.meta
    header = {
        "format_version": meta.format_version,
        "n": meta.n,
        "num_followers": meta.num_followers,
        "num_trajectories": meta.num_trajectories,
        "sample_period": meta.sample_period,
        "seed": meta.seed,
    }
    try:
        with open(path, "w") as fh:
            fh.write(json.dumps(header) + "\n")
            for r in dataset.records:
                fh.write(
                    json.dumps(
                        {
                            "traj": r.traj,
                            "t": r.t,
                            "agent": r.agent,
                            "x": r.state.tolist(),
                            "nbr": list(r.neighbor_ids),
                            "nbr_x": r.neighbor_states.tolist(),
                            "u": r.control.tolist(),
                        }
                    )
                    + "\n"
                )
    except OSError as exc:
        raise IoFailure(f"cannot write dataset {path}: {exc}") from exc


def read_dataset(path) -> TrajectoryDataset:
    """Inverse of write_dataset; numeric values round-trip exactly."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read dataset {path}: {exc}") from exc
    if not lines:
        raise CorruptRecord(f"dataset {path} is empty (missing header)")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CorruptRecord(f"dataset {path}: malformed header: {exc}") from exc
    version = header.get("format_version")
    if version != DATASET_FORMAT:
        raise FormatVersionMismatch(
            f"dataset {path} has format {version!r}, expected {DATASET_FORMAT!r}"
        )
    try:
        meta = DatasetMeta(
            format_version=version,
            n=int(header["n"]),
            num_followers=int(header["num_followers"]),
            num_trajectories=int(header["num_trajectories"]),
            sample_period=float(header["sample_period"]),
            seed=int(header["seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptRecord(f"dataset {path}: bad header fields: {exc}") from exc
    records = []
    width = 2 * meta.n
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            state = np.asarray(doc["x"], dtype=float)
            ids = tuple(int(j) for j in doc["nbr"])
            nstates = np.asarray(doc["nbr_x"], dtype=float).reshape(len(ids), width)
            control = np.asarray(doc["u"], dtype=float)
            if state.shape != (width,) or control.shape != (meta.n,):
                raise ValueError("field width mismatch")
            records.append(
                DatasetRecord(
                    traj=int(doc["traj"]),
                    t=float(doc["t"]),
                    agent=int(doc["agent"]),
                    state=state,
                    neighbor_ids=ids,
                    neighbor_states=nstates,
                    control=control,
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CorruptRecord(f"dataset {path}: bad record at line {ln}: {exc}") from exc
    return TrajectoryDataset(meta=meta, records=records)


def dataset_equal(a: TrajectoryDataset, b: TrajectoryDataset) -> bool:
    """Exact equality, bit-level on every numeric entry."""
    if a.meta != b.meta or len(a.records) != len(b.records):
        return False
    for ra, rb in zip(a.records, b.records):
        if (
            ra.traj != rb.traj
            or ra.t != rb.t
            or ra.agent != rb.agent
            or ra.neighbor_ids != rb.neighbor_ids
            or not np.array_equal(ra.state, rb.state)
            or not np.array_equal(ra.neighbor_states, rb.neighbor_states)
            or not np.array_equal(ra.control, rb.control)
        ):
            return False
    return True


def agent_training_arrays(
    dataset: TrajectoryDataset, agent: int, layout: InputLayout
) -> tuple[np.ndarray, np.ndarray]:
    """Encoded (inputs, targets) for one agent's slice of the dataset."""
    rows = dataset.records_for(agent)
    X = np.zeros((len(rows), layout.width))
    Y = np.zeros((len(rows), layout.n))
    for r_i, rec in enumerate(rows):
        states = {j: rec.neighbor_states[s_i] for s_i, j in enumerate(rec.neighbor_ids)}
        X[r_i] = encode_input(layout, rec.state, states, rec.neighbor_ids)
        Y[r_i] = rec.control
    return X, Y


def expert_error_summary(
    dataset: TrajectoryDataset, g: CommGraph, spec: FormationSpec, leader: LeaderProfile
) -> np.ndarray:
    """Final-sample max_i (||e1|| + ||e1dot||) per trajectory, (T,).

    Only meaningful for datasets generated with the nominal graph and a
    fixed formation spec.
    """
    H, s, b = error_operator(g, spec)
    N, n = g.num_followers, spec.n
    last: dict[int, dict[int, DatasetRecord]] = {}
    for r in dataset.records:
        per = last.setdefault(r.traj, {})
        cur = per.get(r.agent)
        if cur is None or r.t > cur.t:
            per[r.agent] = r
    out = np.zeros(dataset.meta.num_trajectories)
    for k, per in last.items():
        t = per[1].t
        x0, v0, _ = leader_at(leader, t)
        x1 = np.array([per[i].state[:n] for i in range(1, N + 1)])
        x2 = np.array([per[i].state[n:] for i in range(1, N + 1)])
        e1 = H @ x1 + s - b[:, None] * x0
        e1dot = H @ x2 - b[:, None] * v0
        out[k] = np.max(np.linalg.norm(e1, axis=1) + np.linalg.norm(e1dot, axis=1))
    return out
