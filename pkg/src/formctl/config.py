"""Experiment configuration: schema-validated TOML with CLI overrides.

One file drives the whole pipeline (generation, training, simulation).
Unknown keys are rejected outright; omitted keys fall back to the built-in
five-agent preset below.
"""
from __future__ import annotations

import copy
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .datagen import GenConfig
from .dynamics import LEADER_PROFILES, LeaderProfile
from .errors import ConfigError, FormctlError
from .formation import ControllerGains, FormationSpec, random_offsets
from .graph import CommGraph, build_graph
from .neuralnet import TrainHyper

# Five followers on a path, alternating leader access, helix reference.
# Gain choices for this preset are tuned for a tight formation hold; the
# library-wide defaults in ControllerGains.uniform are gentler.
DEFAULTS: dict[str, dict[str, Any]] = {
    "graph": {
        "num_followers": 5,
        "edges": [[1, 2], [2, 3], [3, 4], [4, 5]],
        "leader_links": [1, 0, 1, 0, 1],
    },
    "dynamics": {
        "dimension": 3,
        "variation": 0.35,
        "leader_profile": "helix",
        "leader_omega": 0.2,
        "leader_climb": 0.05,
    },
    "formation": {
        "offsets": "random",
        "seed": 7,
        "range": [-1.0, 1.0],
        "antisymmetric": False,
    },
    "gains": {
        "k1": 2.0,
        "k2": 8.0,
        "mu1": 2.0,
        "mu2": 0.05,
        "dead_zone": 0.02,
    },
    "datagen": {
        "trajectories": 100,
        "horizon": 30.0,
        "sample_period": 0.05,
        "dt": 0.002,
        "seed": 11,
        "init_halfwidth": 2.0,
        "drop_edge_prob": 0.0,
        "expert_kp": 4.0,
        "expert_kd": 4.0,
    },
    "training": {
        "hidden": [64, 64],
        "epochs": 120,
        "batch_size": 128,
        "learning_rate": 0.001,
        "momentum": 0.9,
        "validation_fraction": 0.1,
        "seed": 13,
    },
    "simulate": {
        "dt": 0.001,
        "t_end": 55.0,
        "log_stride": 100,
        "mode": "neuro-adaptive",
        "system_seed": 17,
        "init_seed": 19,
        "init_halfwidth": 2.0,
    },
    "paths": {
        "out_dir": "runs/experiment",
    },
}


@dataclass
class ExperimentConfig:
    graph: CommGraph
    spec: FormationSpec
    gains: ControllerGains
    leader: LeaderProfile
    dimension: int
    variation: float
    gen: GenConfig
    hyper: TrainHyper
    hidden: tuple[int, ...]
    sim_dt: float
    sim_t_end: float
    log_stride: int
    mode: str
    system_seed: int
    init_seed: int
    sim_init_halfwidth: float
    out_dir: Path

    @property
    def dataset_path(self) -> Path:
        return self.out_dir / "dataset.jsonl"

    def policy_path(self, agent: int) -> Path:
        return self.out_dir / f"policy_agent{agent}.json"


def _merge_checked(user: dict, defaults: dict, where: str = "") -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in user.items():
        path = f"{where}.{key}" if where else key
        if key not in defaults:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path!r} must be a table")
            merged[key] = _merge_checked(value, defaults[key], path)
        else:
            merged[key] = value
    return merged


def _per_agent(value, num_followers: int, name: str) -> np.ndarray:
    if isinstance(value, (int, float)):
        return np.full(num_followers, float(value))
    arr = np.asarray(value, dtype=float)
    if arr.shape != (num_followers,):
        raise ConfigError(f"gains.{name} must be a scalar or a length-{num_followers} list")
    return arr


def _build(data: dict[str, Any]) -> ExperimentConfig:
    gtab = data["graph"]
    try:
        graph = build_graph(
            int(gtab["num_followers"]),
            [tuple(e) for e in gtab["edges"]],
            list(gtab["leader_links"]),
        )
    except FormctlError as exc:
        raise ConfigError(f"invalid graph: {exc}") from exc

    dyn = data["dynamics"]
    n = int(dyn["dimension"])
    name = dyn["leader_profile"]
    if name not in LEADER_PROFILES:
        raise ConfigError(f"unknown leader profile {name!r}; options: {sorted(LEADER_PROFILES)}")
    kwargs = {}
    if name == "helix":
        kwargs = {"omega": float(dyn["leader_omega"]), "climb": float(dyn["leader_climb"])}
    elif name == "sinusoid":
        kwargs = {"omega": float(dyn["leader_omega"])}
    leader = LEADER_PROFILES[name](n, **kwargs)
    if leader.n != n:
        raise ConfigError(f"leader profile {name!r} is {leader.n}-dimensional, config says {n}")

    form = data["formation"]
    if form["offsets"] == "random":
        lo, hi = (float(v) for v in form["range"])
        spec = random_offsets(graph, n, int(form["seed"]), lo, hi, bool(form["antisymmetric"]))
    elif isinstance(form["offsets"], list):
        offsets = {}
        for entry in form["offsets"]:
            try:
                i, j, vec = int(entry[0]), int(entry[1]), np.asarray(entry[2], dtype=float)
            except (TypeError, ValueError, IndexError) as exc:
                raise ConfigError(f"bad explicit offset entry {entry!r}: {exc}") from exc
            offsets[(i, j)] = vec
        spec = FormationSpec(n=n, offsets=offsets)
    else:
        raise ConfigError('formation.offsets must be "random" or a list of [i, j, vector]')

    gt = data["gains"]
    N = graph.num_followers
    try:
        gains = ControllerGains(
            k1=_per_agent(gt["k1"], N, "k1"),
            k2=_per_agent(gt["k2"], N, "k2"),
            mu1=_per_agent(gt["mu1"], N, "mu1"),
            mu2=_per_agent(gt["mu2"], N, "mu2"),
            eps=float(gt["dead_zone"]),
        )
    except FormctlError as exc:
        raise ConfigError(f"invalid gains: {exc}") from exc

    dg = data["datagen"]
    gen = GenConfig(
        graph=graph,
        spec=spec,
        leader=leader,
        trajectories=int(dg["trajectories"]),
        horizon=float(dg["horizon"]),
        sample_period=float(dg["sample_period"]),
        dt=float(dg["dt"]),
        seed=int(dg["seed"]),
        variation=float(dyn["variation"]),
        init_halfwidth=float(dg["init_halfwidth"]),
        drop_edge_prob=float(dg["drop_edge_prob"]),
        expert_kp=float(dg["expert_kp"]),
        expert_kd=float(dg["expert_kd"]),
    )

    tr = data["training"]
    hyper = TrainHyper(
        epochs=int(tr["epochs"]),
        batch_size=int(tr["batch_size"]),
        learning_rate=float(tr["learning_rate"]),
        momentum=float(tr["momentum"]),
        validation_fraction=float(tr["validation_fraction"]),
        seed=int(tr["seed"]),
    )

    sim = data["simulate"]
    mode = sim["mode"]
    if mode not in ("expert", "neuro-adaptive", "adaptive-only", "nn-only"):
        raise ConfigError(f"unknown simulate.mode {mode!r}")
    return ExperimentConfig(
        graph=graph,
        spec=spec,
        gains=gains,
        leader=leader,
        dimension=n,
        variation=float(dyn["variation"]),
        gen=gen,
        hyper=hyper,
        hidden=tuple(int(h) for h in tr["hidden"]),
        sim_dt=float(sim["dt"]),
        sim_t_end=float(sim["t_end"]),
        log_stride=int(sim["log_stride"]),
        mode=mode,
        system_seed=int(sim["system_seed"]),
        init_seed=int(sim["init_seed"]),
        sim_init_halfwidth=float(sim["init_halfwidth"]),
        out_dir=Path(data["paths"]["out_dir"]),
    )


def load_config(
    path: str | Path | None = None, overrides: dict[str, Any] | None = None
) -> ExperimentConfig:
    """Parse and validate a config file, layering CLI overrides on top.

    Recognized overrides: seed (master seed; re-derives the generation,
    training, and simulation seeds), trajectories, mode, out_dir, fast
    (drops to 20 trajectories).
    """
    data = copy.deepcopy(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            with open(p, "rb") as fh:
                user = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file {p} is not valid TOML: {exc}") from exc
        data = _merge_checked(user, DEFAULTS)

    overrides = overrides or {}
    if overrides.get("seed") is not None:
        master = int(overrides["seed"])
        data["datagen"]["seed"] = master
        data["training"]["seed"] = master + 1
        data["simulate"]["system_seed"] = master + 2
        data["simulate"]["init_seed"] = master + 3
    if overrides.get("fast"):
        data["datagen"]["trajectories"] = 20
        data["simulate"]["dt"] = 0.002  # t_end stays; coarser stepping only
    if overrides.get("trajectories") is not None:
        data["datagen"]["trajectories"] = int(overrides["trajectories"])
    if overrides.get("mode") is not None:
        data["simulate"]["mode"] = overrides["mode"]
    if overrides.get("out_dir") is not None:
        data["paths"]["out_dir"] = str(overrides["out_dir"])
    return _build(data)
