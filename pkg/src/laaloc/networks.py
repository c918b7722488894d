"""Tiny 1D-convolutional policy and value networks, built on bare numpy.

Architecture (both heads share the shape, not the weights): three conv
units, each two kernel-3 same-padded conv layers with ReLU followed by
max-pool (size 2, stride 2, floor), then three fully connected layers with
ReLU on the hidden ones.  The policy head ends in 2 logits + softmax, the
value head in a single linear output.  With the default state length 51 the
pooled lengths run 51 -> 25 -> 12 -> 6.

Everything needed for training is explicit here: forward passes, exact
backpropagation for the clipped-ratio policy objective and the squared
value error, an adaptive-moment (Adam) update, and lossless checkpoints.
No autodiff framework is involved, which keeps gradients finite-difference
checkable.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .errors import BadInputError, ConfigMismatchError, NonFiniteGradientError
from .world import WorldState

__all__ = [
    "NetConfig",
    "NetworkParams",
    "init_network_params",
    "policy_forward",
    "value_forward",
    "policy_gradients",
    "value_gradients",
    "backprop",
    "adam_step",
    "flatten_params",
    "set_flat_params",
    "save_checkpoint",
    "load_checkpoint",
]

_MAGIC = b"LLC1"


@dataclass(frozen=True)
class NetConfig:
    state_len: int = 51
    conv_channels: tuple[int, int, int] = (16, 32, 32)
    fc_widths: tuple[int, int] = (128, 64)
    learning_rate: float = 1e-5
    init_seed: int = 7

    def __post_init__(self) -> None:
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        object.__setattr__(self, "fc_widths", tuple(int(w) for w in self.fc_widths))
        if self.state_len < 8:
            raise BadInputError(f"state_len too small to survive 3 poolings: {self.state_len}")
        if len(self.conv_channels) != 3 or any(c < 1 for c in self.conv_channels):
            raise BadInputError(f"need 3 positive conv channel counts, got {self.conv_channels}")
        if len(self.fc_widths) != 2 or any(w < 1 for w in self.fc_widths):
            raise BadInputError(f"need 2 positive hidden FC widths, got {self.fc_widths}")
        if self.learning_rate <= 0:
            raise BadInputError(f"learning_rate must be positive, got {self.learning_rate}")


def _pooled_lengths(state_len: int) -> list[int]:
    lengths = [state_len]
    n = state_len
    for _ in range(3):
        n = n // 2
        lengths.append(n)
    return lengths


def _layer_shapes(cfg: NetConfig, n_outputs: int) -> dict[str, tuple]:
    """Parameter name -> shape, in a fixed order shared by all routines."""
    chans = [1, cfg.conv_channels[0], cfg.conv_channels[0],
             cfg.conv_channels[1], cfg.conv_channels[1],
             cfg.conv_channels[2], cfg.conv_channels[2]]
    shapes: dict[str, tuple] = {}
    for layer in range(6):
        shapes[f"conv{layer}_w"] = (chans[layer + 1], chans[layer], 3)
        shapes[f"conv{layer}_b"] = (chans[layer + 1],)
    final_len = _pooled_lengths(cfg.state_len)[-1]
    if final_len < 1:
        raise BadInputError(f"state_len {cfg.state_len} pools away to nothing")
    dims = [cfg.conv_channels[2] * final_len, cfg.fc_widths[0], cfg.fc_widths[1], n_outputs]
    for layer in range(3):
        shapes[f"fc{layer}_w"] = (dims[layer], dims[layer + 1])
        shapes[f"fc{layer}_b"] = (dims[layer + 1],)
    return shapes


class NetworkParams:
    """Weights, biases and optimizer moments for one network head."""

    def __init__(self, config: NetConfig, n_outputs: int, arrays: dict[str, np.ndarray],
                 m: dict[str, np.ndarray] | None = None,
                 v: dict[str, np.ndarray] | None = None, step: int = 0):
        shapes = _layer_shapes(config, n_outputs)
        if set(arrays) != set(shapes):
            raise BadInputError("parameter set does not match the architecture")
        for name, shape in shapes.items():
            if tuple(arrays[name].shape) != shape:
                raise BadInputError(
                    f"parameter {name} has shape {arrays[name].shape}, expected {shape}"
                )
        self.config = config
        self.n_outputs = int(n_outputs)
        self.arrays = {k: np.asarray(a, dtype=np.float64) for k, a in arrays.items()}
        self.m = m or {k: np.zeros_like(a) for k, a in self.arrays.items()}
        self.v = v or {k: np.zeros_like(a) for k, a in self.arrays.items()}
        self.step = int(step)

    @property
    def names(self) -> list[str]:
        return list(_layer_shapes(self.config, self.n_outputs))

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.config, self.n_outputs,
            {k: a.copy() for k, a in self.arrays.items()},
            {k: a.copy() for k, a in self.m.items()},
            {k: a.copy() for k, a in self.v.items()},
            self.step,
        )

    def num_parameters(self) -> int:
        return sum(a.size for a in self.arrays.values())


def init_network_params(cfg: NetConfig, n_outputs: int,
                        rng: np.random.Generator | None = None) -> NetworkParams:
    """Rectifier-scaled normal weights, zero biases, reproducible by seed."""
    if rng is None:
        rng = np.random.default_rng(cfg.init_seed)
    arrays = {}
    for name, shape in _layer_shapes(cfg, n_outputs).items():
        if name.endswith("_b"):
            arrays[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:])) if name.startswith("conv") else shape[0]
            arrays[name] = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
    return NetworkParams(cfg, n_outputs, arrays)


# ---------------------------------------------------------------------------
# forward / backward primitives

def _tap_major(w: np.ndarray) -> np.ndarray:
    """Kernel (C_out, C_in, 3) flattened to (3*C_in, C_out), tap-major,
    contiguous so matmul stays on the BLAS path."""
    return np.ascontiguousarray(w.transpose(2, 1, 0)).reshape(-1, w.shape[0])


def _conv1d(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Same-padded kernel-3 convolution in channels-last layout.

    ``x`` is (B, L, C_in); the three shifted copies of the padded signal
    form a (B*L, 3*C_in) matrix so the whole layer is one GEMM.
    """
    batch, length, c_in = x.shape
    xp = np.zeros((batch, length + 2, c_in))
    xp[:, 1:-1, :] = x
    cols = np.empty((batch, length, 3, c_in))
    for t in range(3):
        cols[:, :, t, :] = xp[:, t : t + length, :]
    cols2 = cols.reshape(batch * length, 3 * c_in)
    out = (cols2 @ _tap_major(w)).reshape(batch, length, w.shape[0])
    out += b[None, None, :]
    return out, cols2


def _conv1d_backward(dout: np.ndarray, cols2: np.ndarray, w: np.ndarray):
    """dout is (B, L, C_out); cols2 the im2col matrix saved by the forward."""
    batch, length, c_out = dout.shape
    c_in = w.shape[1]
    dz2 = dout.reshape(batch * length, c_out)
    dw = np.ascontiguousarray((cols2.T @ dz2).reshape(3, c_in, c_out).transpose(2, 1, 0))
    db = dz2.sum(axis=0)
    dcols = (dz2 @ _tap_major(w).T).reshape(batch, length, 3, c_in)
    dxp = np.zeros((batch, length + 2, c_in))
    for t in range(3):
        dxp[:, t : t + length, :] += dcols[:, :, t, :]
    return dxp[:, 1:-1, :], dw, db


def _pool(x: np.ndarray):
    """Max over non-overlapping length-2 windows, channels-last; ties keep
    the first element (matched by the strict comparison in the mask)."""
    batch, length, chans = x.shape
    half = length // 2
    pairs = x[:, : 2 * half, :].reshape(batch, half, 2, chans)
    first = pairs[:, :, 0, :]
    second = pairs[:, :, 1, :]
    second_wins = second > first
    out = np.where(second_wins, second, first)
    return out, (second_wins, length)


def _pool_backward(dout: np.ndarray, cache):
    second_wins, length = cache
    batch, half, chans = dout.shape
    dpairs = np.zeros((batch, half, 2, chans))
    dpairs[:, :, 0, :] = np.where(second_wins, 0.0, dout)
    dpairs[:, :, 1, :] = np.where(second_wins, dout, 0.0)
    dx = np.zeros((batch, length, chans))
    dx[:, : 2 * half, :] = dpairs.reshape(batch, 2 * half, chans)
    return dx


def _trunk_forward(params: NetworkParams, states: np.ndarray, need_cache: bool = True):
    """Logits (B, n_outputs), plus the cache needed for backprop when asked."""
    cfg = params.config
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != cfg.state_len:
        raise BadInputError(
            f"states must be (batch, {cfg.state_len}), got {states.shape}"
        )
    arr = params.arrays
    x = states[:, :, None]  # channels-last: (B, L, C)
    conv_caches = []
    layer = 0
    for _unit in range(3):
        for _ in range(2):
            w, b = arr[f"conv{layer}_w"], arr[f"conv{layer}_b"]
            z, cols2 = _conv1d(x, w, b)
            a = np.maximum(z, 0.0)
            if need_cache:
                conv_caches.append(("conv", cols2, z, layer))
            x = a
            layer += 1
        x, pcache = _pool(x)
        if need_cache:
            conv_caches.append(("pool", pcache))
    flat_shape = x.shape
    h = x.reshape(x.shape[0], -1)
    fc_caches = []
    for layer in range(3):
        w, b = arr[f"fc{layer}_w"], arr[f"fc{layer}_b"]
        z = h @ w + b
        if need_cache:
            fc_caches.append((h, z, layer))
        h = np.maximum(z, 0.0) if layer < 2 else z
    return h, (conv_caches, fc_caches, flat_shape)


_INFER_CHUNK = 4096


def _infer_logits(params: NetworkParams, states: np.ndarray) -> np.ndarray:
    """Forward without caches, chunked so huge batches stay memory-friendly."""
    states = np.asarray(states, dtype=np.float64)
    if len(states) <= _INFER_CHUNK:
        return _trunk_forward(params, states, need_cache=False)[0]
    parts = [
        _trunk_forward(params, states[lo : lo + _INFER_CHUNK], need_cache=False)[0]
        for lo in range(0, len(states), _INFER_CHUNK)
    ]
    return np.concatenate(parts, axis=0)


def _trunk_backward(params: NetworkParams, cache, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    conv_caches, fc_caches, flat_shape = cache
    arr = params.arrays
    grads = {k: np.zeros_like(a) for k, a in arr.items()}
    d = dlogits
    for idx in (2, 1, 0):
        h, z, layer = fc_caches[idx]
        dz = d if layer == 2 else d * (z > 0.0)
        grads[f"fc{layer}_w"] += h.T @ dz
        grads[f"fc{layer}_b"] += dz.sum(axis=0)
        d = dz @ arr[f"fc{layer}_w"].T
    d = d.reshape(flat_shape)
    for entry in reversed(conv_caches):
        if entry[0] == "pool":
            d = _pool_backward(d, entry[1])
        else:
            _, cols2, z, layer = entry
            dz = d * (z > 0.0)
            dx, dw, db = _conv1d_backward(dz, cols2, arr[f"conv{layer}_w"])
            grads[f"conv{layer}_w"] += dw
            grads[f"conv{layer}_b"] += db
            d = dx
    return grads


def _as_batch(params: NetworkParams, state) -> tuple[np.ndarray, bool]:
    if isinstance(state, WorldState):
        state = state.window
    state = np.asarray(state, dtype=np.float64)
    if state.ndim == 1:
        return state[None, :], True
    return state, False


def policy_forward(params: NetworkParams, state):
    """Action probabilities (forward, backward); batched input gives (B, 2)."""
    if params.n_outputs != 2:
        raise BadInputError("policy_forward needs a 2-output parameter set")
    batch, single = _as_batch(params, state)
    logits = _infer_logits(params, batch)
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    probs = e / e.sum(axis=1, keepdims=True)
    return probs[0] if single else probs


def value_forward(params: NetworkParams, state):
    """State value estimate; scalar for a single state, (B,) for a batch."""
    if params.n_outputs != 1:
        raise BadInputError("value_forward needs a 1-output parameter set")
    batch, single = _as_batch(params, state)
    logits = _infer_logits(params, batch)
    return float(logits[0, 0]) if single else logits[:, 0]


def policy_gradients(
    params: NetworkParams,
    states: np.ndarray,
    actions: np.ndarray,
    old_probs: np.ndarray,
    advantages: np.ndarray,
    delta: float,
    reduce: str = "mean",
) -> tuple[dict[str, np.ndarray], float]:
    """Gradients of the clipped-ratio surrogate objective (to be maximized).

    Per sample: min(rho * A, clip(rho, 1-delta, 1+delta) * A) with
    rho = pi(s, a) / pi_old(s, a).  Returns (gradients, objective value).
    """
    states = np.asarray(states, dtype=np.float64)
    actions = np.asarray(actions, dtype=int)
    old_probs = np.asarray(old_probs, dtype=np.float64)
    advantages = np.asarray(advantages, dtype=np.float64)
    if np.any(old_probs <= 0.0) or np.any(old_probs >= 1.0):
        raise BadInputError("old_policy_prob values must lie strictly in (0, 1)")
    logits, cache = _trunk_forward(params, states)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    n = len(states)
    pa = probs[np.arange(n), actions]
    rho = pa / old_probs
    unclipped = rho * advantages
    clipped = np.clip(rho, 1.0 - delta, 1.0 + delta) * advantages
    surrogate = np.minimum(unclipped, clipped)
    scale = 1.0 / n if reduce == "mean" else 1.0
    objective = float(surrogate.sum() * scale)
    # d surrogate / d pa: active on the unclipped branch (ties included,
    # where both branches coincide); zero where the clip is binding
    coeff = np.where(unclipped <= clipped, advantages / old_probs, 0.0) * scale
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), actions] = 1.0
    dlogits = coeff[:, None] * pa[:, None] * (onehot - probs)
    grads = _trunk_backward(params, cache, dlogits)
    return grads, objective


def value_gradients(
    params: NetworkParams, states: np.ndarray, targets: np.ndarray, reduce: str = "mean"
) -> tuple[dict[str, np.ndarray], float]:
    """Gradients of the squared return error (to be minimized)."""
    states = np.asarray(states, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    logits, cache = _trunk_forward(params, states)
    resid = logits[:, 0] - targets
    scale = 1.0 / len(states) if reduce == "mean" else 1.0
    loss = float((resid**2).sum() * scale)
    dlogits = (2.0 * resid * scale)[:, None]
    grads = _trunk_backward(params, cache, dlogits)
    return grads, loss


def backprop(params: NetworkParams, minibatch: dict, loss_spec: str) -> dict[str, np.ndarray]:
    """Dispatch to the loss-specific gradient routine.

    loss_spec "ppo" expects states/actions/old_probs/advantages (+ optional
    delta); "value" expects states/targets.
    """
    if loss_spec == "ppo":
        grads, _ = policy_gradients(
            params,
            minibatch["states"],
            minibatch["actions"],
            minibatch["old_probs"],
            minibatch["advantages"],
            float(minibatch.get("delta", 0.2)),
        )
        return grads
    if loss_spec == "value":
        grads, _ = value_gradients(params, minibatch["states"], minibatch["targets"])
        return grads
    raise BadInputError(f"unknown loss_spec {loss_spec!r}")


def adam_step(
    params: NetworkParams,
    grads: dict[str, np.ndarray],
    lr: float | None = None,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    maximize: bool = False,
) -> NetworkParams:
    """Bias-corrected adaptive-moment update, in place.

    Descends on the given gradients by default; pass maximize=True for
    gradient ascent (the policy objective).  Non-finite gradients reject the
    whole step.
    """
    if lr is None:
        lr = params.config.learning_rate
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient in {name}; step rejected")
    params.step += 1
    t = params.step
    for name in params.arrays:
        g = grads[name]
        if maximize:
            g = -g
        m = params.m[name]
        v = params.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        mhat = m / (1.0 - beta1**t)
        vhat = v / (1.0 - beta2**t)
        params.arrays[name] -= lr * mhat / (np.sqrt(vhat) + eps)
    return params


def flatten_params(params: NetworkParams) -> np.ndarray:
    return np.concatenate([params.arrays[n].ravel() for n in params.names])


def set_flat_params(params: NetworkParams, flat: np.ndarray) -> None:
    pos = 0
    for name in params.names:
        a = params.arrays[name]
        a[...] = flat[pos : pos + a.size].reshape(a.shape)
        pos += a.size
    if pos != flat.size:
        raise BadInputError(f"flat vector length {flat.size} != parameter count {pos}")


def flatten_grads(params: NetworkParams, grads: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([grads[n].ravel() for n in params.names])


# ---------------------------------------------------------------------------
# checkpointing

def _net_manifest(params: NetworkParams) -> dict:
    return {
        "config": asdict(params.config),
        "n_outputs": params.n_outputs,
        "step": params.step,
        "arrays": [[n, list(params.arrays[n].shape)] for n in params.names],
    }


def save_checkpoint(path: str, nets, metadata: dict | None = None) -> None:
    """Write one or more parameter sets plus metadata as a single file.

    ``nets`` is a NetworkParams or a {name: NetworkParams} dict.  Parameters
    and optimizer moments are stored as little-endian float64 so the
    round-trip is lossless (bit-exact resume matters more here than the few
    hundred kilobytes a half-precision blob would save).
    """
    if isinstance(nets, NetworkParams):
        nets = {"net": nets}
    header = {
        "format": "laaloc-checkpoint",
        "version": 1,
        "dtype": "f64",
        "metadata": metadata or {},
        "nets": {name: _net_manifest(p) for name, p in nets.items()},
    }
    blobs = []
    for name, p in nets.items():
        for arr_name in p.names:
            blobs.append(p.arrays[arr_name].astype("<f8").tobytes())
        for arr_name in p.names:
            blobs.append(p.m[arr_name].astype("<f8").tobytes())
        for arr_name in p.names:
            blobs.append(p.v[arr_name].astype("<f8").tobytes())
    payload = json.dumps(header).encode()
    try:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", len(payload)))
            fh.write(payload)
            for blob in blobs:
                fh.write(blob)
    except OSError as exc:
        raise BadInputError(f"cannot write checkpoint to {path!r}: {exc}") from exc


def load_checkpoint(
    path: str, expected_config: NetConfig | None = None
) -> tuple[dict[str, NetworkParams], dict]:
    """Read a checkpoint; optionally enforce an expected network config."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise BadInputError(f"cannot read checkpoint from {path!r}: {exc}") from exc
    if len(raw) < 8 or raw[:4] != _MAGIC:
        raise BadInputError(f"{path!r} is not a checkpoint file")
    (hlen,) = struct.unpack("<I", raw[4:8])
    try:
        header = json.loads(raw[8 : 8 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BadInputError(f"corrupt checkpoint header in {path!r}: {exc}") from exc
    pos = 8 + hlen
    nets: dict[str, NetworkParams] = {}
    for name, manifest in header.get("nets", {}).items():
        try:
            cfg = NetConfig(
                state_len=manifest["config"]["state_len"],
                conv_channels=tuple(manifest["config"]["conv_channels"]),
                fc_widths=tuple(manifest["config"]["fc_widths"]),
                learning_rate=manifest["config"]["learning_rate"],
                init_seed=manifest["config"]["init_seed"],
            )
        except (KeyError, TypeError) as exc:
            raise BadInputError(f"corrupt checkpoint manifest in {path!r}: {exc}") from exc
        if expected_config is not None and cfg != expected_config:
            raise ConfigMismatchError(
                f"checkpoint net {name!r} was built for {cfg}, expected {expected_config}"
            )
        groups = []
        for _group in range(3):  # arrays, m, v
            group = {}
            for arr_name, shape in manifest["arrays"]:
                count = int(np.prod(shape))
                end = pos + 8 * count
                if end > len(raw):
                    raise BadInputError(f"checkpoint {path!r} truncated")
                group[arr_name] = np.frombuffer(raw[pos:end], dtype="<f8").reshape(shape).copy()
                pos = end
            groups.append(group)
        nets[name] = NetworkParams(
            cfg, manifest["n_outputs"], groups[0], groups[1], groups[2], manifest["step"]
        )
        for arr in nets[name].arrays.values():
            if not np.all(np.isfinite(arr)):
                raise BadInputError(f"checkpoint {path!r} holds non-finite parameters")
    return nets, header.get("metadata", {})
