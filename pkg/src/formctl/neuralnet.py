"""From-scratch MLP policies with masked neighbor slots.

The input is a fixed-width vector: the owner's own state followed by one
slot per other agent id (leader id 0 first, then followers in ascending
order, skipping the owner).  Each slot holds that agent's state plus a
mask scalar.  Slots whose mask is zero contribute exactly zero to the
first-layer pre-activation, so one weight set serves any neighbor subset
and the output is invariant to whatever values a masked slot stores.

Training is plain mini-batch gradient descent with momentum on the mean
squared imitation error; inputs are standardized with statistics stored in
the policy file so deployment needs no side channel.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DivergedLoss,
    EmptyDataset,
    FormatVersionMismatch,
    IoFailure,
    UnknownNeighborId,
)

POLICY_FORMAT = "formctl-nn-v1"


@dataclass(frozen=True)
class InputLayout:
    """Slot arithmetic for one agent's fixed-width input encoding."""

    owner: int
    n: int
    num_followers: int

    @property
    def slot_ids(self) -> tuple[int, ...]:
        return tuple(j for j in range(self.num_followers + 1) if j != self.owner)

    @property
    def state_width(self) -> int:
        return 2 * self.n

    @property
    def slot_width(self) -> int:
        return 2 * self.n + 1

    @property
    def width(self) -> int:
        return self.state_width + self.num_followers * self.slot_width

    def slot_index(self, agent_id: int) -> int:
        try:
            return self.slot_ids.index(agent_id)
        except ValueError:
            raise UnknownNeighborId(
                f"agent id {agent_id} has no slot in agent {self.owner}'s layout"
            ) from None

    def slot_state_slice(self, k: int) -> slice:
        start = self.state_width + k * self.slot_width
        return slice(start, start + self.state_width)

    def mask_index(self, k: int) -> int:
        return self.state_width + k * self.slot_width + self.state_width


def encode_input(
    layout: InputLayout,
    own: np.ndarray,
    neighbor_states: Mapping[int, np.ndarray],
    active_ids: Sequence[int],
) -> np.ndarray:
    """Build the input vector: active slots get state + mask 1, others zeros.

    Extra entries in neighbor_states for inactive ids are ignored, so the
    encoding depends only on (own, active states), never insertion order.
    """
    own = np.asarray(own, dtype=float)
    if own.shape != (layout.state_width,):
        raise DimensionMismatch(
            f"own state has shape {own.shape}, expected ({layout.state_width},)"
        )
    x = np.zeros(layout.width)
    x[: layout.state_width] = own
    for j in set(active_ids):
        k = layout.slot_index(int(j))
        try:
            st = np.asarray(neighbor_states[j], dtype=float)
        except KeyError:
            raise UnknownNeighborId(f"active id {j} has no state provided") from None
        if st.shape != (layout.state_width,):
            raise DimensionMismatch(
                f"state for agent {j} has shape {st.shape}, expected ({layout.state_width},)"
            )
        x[layout.slot_state_slice(k)] = st
        x[layout.mask_index(k)] = 1.0
    return x


@dataclass
class NeuralPolicy:
    """MLP with tanh hidden layers, identity output, and input standardization."""

    layout: InputLayout
    weights: list[np.ndarray]  # per layer, (fan_out, fan_in)
    biases: list[np.ndarray]  # per layer, (fan_out,)
    input_mean: np.ndarray  # (width,)
    input_scale: np.ndarray  # (width,) divisor, 1 for mask features
    activation: str = "tanh"

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self) -> "NeuralPolicy":
        return NeuralPolicy(
            layout=self.layout,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            input_mean=self.input_mean.copy(),
            input_scale=self.input_scale.copy(),
            activation=self.activation,
        )


def init_policy(
    layout: InputLayout, hidden: Sequence[int] = (64, 64), seed: int = 0
) -> NeuralPolicy:
    """Glorot-uniform initialized policy mapping the layout width to R^n."""
    sizes = [layout.width, *hidden, layout.n]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return NeuralPolicy(
        layout=layout,
        weights=weights,
        biases=biases,
        input_mean=np.zeros(layout.width),
        input_scale=np.ones(layout.width),
    )


def _first_layer_input(policy: NeuralPolicy, X: np.ndarray) -> np.ndarray:
    """Standardize, then force masked slot states to exactly zero."""
    Z = (X - policy.input_mean) / policy.input_scale
    lay = policy.layout
    for k in range(lay.num_followers):
        masked = X[..., lay.mask_index(k)] == 0.0
        sl = lay.slot_state_slice(k)
        Z[..., sl] = np.where(masked[..., None], 0.0, Z[..., sl])
    return Z


def _forward_batch(policy: NeuralPolicy, X: np.ndarray) -> list[np.ndarray]:
    """Forward pass keeping activations; X is (B, width)."""
    acts = [_first_layer_input(policy, X)]
    last = len(policy.weights) - 1
    for li, (W, b) in enumerate(zip(policy.weights, policy.biases)):
        z = acts[-1] @ W.T + b
        acts.append(np.tanh(z) if li < last else z)
    return acts


def forward(policy: NeuralPolicy, x: np.ndarray) -> np.ndarray:
    """Policy output for one encoded input vector; pure function."""
    x = np.asarray(x, dtype=float)
    if x.shape != (policy.layout.width,):
        raise DimensionMismatch(
            f"input has shape {x.shape}, expected ({policy.layout.width},)"
        )
    lay = policy.layout
    a = (x - policy.input_mean) / policy.input_scale
    for k in range(lay.num_followers):
        if x[lay.mask_index(k)] == 0.0:
            a[lay.slot_state_slice(k)] = 0.0
    last = len(policy.weights) - 1
    for li, (W, b) in enumerate(zip(policy.weights, policy.biases)):
        a = W @ a + b
        if li < last:
            a = np.tanh(a)
    return a


def _loss_and_gradients(
    policy: NeuralPolicy, X: np.ndarray, Y: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """MSE loss and its gradients w.r.t. every weight and bias."""
    acts = _forward_batch(policy, X)
    pred = acts[-1]
    diff = pred - Y
    loss = float(np.mean(diff * diff))
    dW = [np.empty(0)] * len(policy.weights)
    db = [np.empty(0)] * len(policy.biases)
    delta = 2.0 * diff / diff.size
    for li in range(len(policy.weights) - 1, -1, -1):
        dW[li] = delta.T @ acts[li]
        db[li] = delta.sum(axis=0)
        if li > 0:
            delta = (delta @ policy.weights[li]) * (1.0 - acts[li] * acts[li])
    return loss, dW, db


@dataclass(frozen=True)
class TrainHyper:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    momentum: float = 0.9
    validation_fraction: float = 0.1
    seed: int = 0


@dataclass
class TrainingReport:
    """Loss trajectory and the hyperparameters that produced it."""

    train_losses: list[float]  # entry 0 is the pre-update loss
    final_val_mse: float
    target_variance: float
    epochs_run: int
    hyper: TrainHyper


def train(
    policy: NeuralPolicy,
    inputs: np.ndarray,
    targets: np.ndarray,
    hyper: TrainHyper = TrainHyper(),
) -> tuple[NeuralPolicy, TrainingReport]:
    """Fit the policy to (inputs, targets) by mini-batch SGD with momentum.

    Deterministic in hyper.seed: the validation split, the standardization
    statistics, and every shuffle derive from one seeded generator.
    """
    X = np.asarray(inputs, dtype=float)
    Y = np.asarray(targets, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyDataset("no training samples")
    if X.shape[1] != policy.layout.width or Y.shape != (X.shape[0], policy.layout.n):
        raise DimensionMismatch(
            f"data shapes {X.shape}/{Y.shape} do not match layout "
            f"({policy.layout.width} in, {policy.layout.n} out)"
        )
    rng = np.random.default_rng(hyper.seed)
    m = X.shape[0]
    perm = rng.permutation(m)
    n_val = int(round(m * hyper.validation_fraction))
    n_val = min(n_val, m - 1)  # keep at least one training sample
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    Xt, Yt = X[train_idx], Y[train_idx]
    Xv, Yv = X[val_idx], Y[val_idx]

    p = policy.copy()
    mean = Xt.mean(axis=0)
    scale = Xt.std(axis=0)
    scale[scale < 1e-12] = 1.0
    for k in range(p.layout.num_followers):  # mask features stay raw 0/1
        mi = p.layout.mask_index(k)
        mean[mi] = 0.0
        scale[mi] = 1.0
    p.input_mean, p.input_scale = mean, scale

    vel_W = [np.zeros_like(w) for w in p.weights]
    vel_b = [np.zeros_like(b) for b in p.biases]
    losses = [_loss_and_gradients(p, Xt, Yt)[0]]
    n_train = Xt.shape[0]
    for _ in range(hyper.epochs):
        order = rng.permutation(n_train)
        total = 0.0
        for start in range(0, n_train, hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            loss, dW, db = _loss_and_gradients(p, Xt[idx], Yt[idx])
            if not np.isfinite(loss):
                raise DivergedLoss(f"training loss became non-finite: {loss}")
            total += loss * len(idx)
            for li in range(len(p.weights)):
                vel_W[li] = hyper.momentum * vel_W[li] - hyper.learning_rate * dW[li]
                vel_b[li] = hyper.momentum * vel_b[li] - hyper.learning_rate * db[li]
                p.weights[li] += vel_W[li]
                p.biases[li] += vel_b[li]
        losses.append(total / n_train)

    if len(Xv):
        pred = _forward_batch(p, Xv)[-1]
        val_mse = float(np.mean((pred - Yv) ** 2))
        target_var = float(np.mean(Yv.var(axis=0)))
    else:
        pred = _forward_batch(p, Xt)[-1]
        val_mse = float(np.mean((pred - Yt) ** 2))
        target_var = float(np.mean(Yt.var(axis=0)))
    return p, TrainingReport(
        train_losses=losses,
        final_val_mse=val_mse,
        target_variance=target_var,
        epochs_run=hyper.epochs,
        hyper=hyper,
    )


def _numeric_gradients(
    policy: NeuralPolicy, x: np.ndarray, y: np.ndarray, step: float = 1e-5
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Central-difference gradients of the single-sample MSE."""
    X, Y = np.asarray(x, float)[None, :], np.asarray(y, float)[None, :]

    def loss() -> float:
        pred = _forward_batch(policy, X)[-1]
        return float(np.mean((pred - Y) ** 2))

    dWs, dbs = [], []
    for arr_list, grads in ((policy.weights, dWs), (policy.biases, dbs)):
        for arr in arr_list:
            gn = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                ix = it.multi_index
                orig = arr[ix]
                arr[ix] = orig + step
                hi = loss()
                arr[ix] = orig - step
                lo = loss()
                arr[ix] = orig
                gn[ix] = (hi - lo) / (2 * step)
            grads.append(gn)
    return dWs, dbs


def max_relative_error(
    analytic: Sequence[np.ndarray], numeric: Sequence[np.ndarray]
) -> float:
    """Worst elementwise relative disagreement between two gradient sets."""
    worst = 0.0
    for ga, gn in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(ga), np.abs(gn)), 1e-6)
        worst = max(worst, float(np.max(np.abs(ga - gn) / denom)))
    return worst


def gradient_check(
    policy: NeuralPolicy, sample: tuple[np.ndarray, np.ndarray], step: float = 1e-5
) -> float:
    """Compare backprop gradients against central differences on one sample."""
    x, y = sample
    _, dW, db = _loss_and_gradients(
        policy, np.asarray(x, float)[None, :], np.asarray(y, float)[None, :]
    )
    nW, nb = _numeric_gradients(policy, x, y, step)
    return max(max_relative_error(dW, nW), max_relative_error(db, nb))


def save_policy(policy: NeuralPolicy, path) -> None:
    """Write the policy as self-describing JSON; floats round-trip exactly."""
    doc = {
        "format_version": POLICY_FORMAT,
        "owner": policy.layout.owner,
        "n": policy.layout.n,
        "num_followers": policy.layout.num_followers,
        "activation": policy.activation,
        "layer_sizes": policy.layer_sizes,
        "input_mean": policy.input_mean.tolist(),
        "input_scale": policy.input_scale.tolist(),
        "weights": [w.tolist() for w in policy.weights],
        "biases": [b.tolist() for b in policy.biases],
    }
    try:
        with open(path, "w") as fh:
            json.dump(doc, fh)
    except OSError as exc:
        raise IoFailure(f"cannot write policy file {path}: {exc}") from exc


def load_policy(path) -> NeuralPolicy:
    """Read a policy file written by save_policy, checking its format tag."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read policy file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IoFailure(f"policy file {path} is not valid JSON: {exc}") from exc
    version = doc.get("format_version")
    if version != POLICY_FORMAT:
        raise FormatVersionMismatch(
            f"policy file {path} has format {version!r}, expected {POLICY_FORMAT!r}"
        )
    layout = InputLayout(
        owner=int(doc["owner"]), n=int(doc["n"]), num_followers=int(doc["num_followers"])
    )
    policy = NeuralPolicy(
        layout=layout,
        weights=[np.asarray(w, dtype=float) for w in doc["weights"]],
        biases=[np.asarray(b, dtype=float) for b in doc["biases"]],
        input_mean=np.asarray(doc["input_mean"], dtype=float),
        input_scale=np.asarray(doc["input_scale"], dtype=float),
        activation=doc["activation"],
    )
    if policy.weights[0].shape[1] != layout.width:
        raise DimensionMismatch(
            f"policy file {path}: first layer expects {policy.weights[0].shape[1]} "
            f"inputs but the layout width is {layout.width}"
        )
    return policy
