"""Compact encoder-decoder flow network with exact analytic gradients.

A miniature multi-scale flow estimator: a stride-2 conv encoder, 3x3
flow-prediction heads at every pyramid level, and an upsampling decoder
with skip concatenation and residual flow refinement.  The finest output
is the half-resolution prediction upsampled bilinearly to the input size.

All flow tensors carry displacements in finest-scale pixel units; the
multi-scale L1 loss converts each level to its local units by dividing
by the downsampling factor (matching metrics.multiscale_l1_loss exactly).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..flowcore import FlowField, FramePair
from ..metrics import MultiScaleFlow, downsample_area
from .layers import (
    conv2d_backward,
    conv2d_forward,
    leaky_relu,
    leaky_relu_grad,
    upsample2_bilinear,
    upsample2_bilinear_adjoint,
)


@dataclass(frozen=True)
class NetConfig:
    input_channels: int = 2  # two stacked grayscale frames; 6 for RGB pairs
    base_width: int = 16
    levels: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.input_channels not in (2, 6):
            raise ValueError(f"input_channels must be 2 or 6, got {self.input_channels}")
        if self.levels < 2:
            raise ValueError(f"levels must be >= 2, got {self.levels}")
        if self.base_width < 4:
            raise ValueError(f"base_width must be >= 4, got {self.base_width}")

    @property
    def divisor(self) -> int:
        return 2 ** self.levels


def channel_plan(config: NetConfig) -> list[int]:
    """Channel count per encoder level, index 0 = network input."""
    return [config.input_channels] + [
        config.base_width * 2 ** l for l in range(config.levels)
    ]


def param_shapes(config: NetConfig) -> dict[str, tuple[int, ...]]:
    """Named parameter table, in deterministic draw/serialization order."""
    c = channel_plan(config)
    L = config.levels
    shapes: dict[str, tuple[int, ...]] = {}
    for l in range(1, L + 1):
        shapes[f"enc{l}.w"] = (c[l], c[l - 1], 3, 3)
        shapes[f"enc{l}.b"] = (c[l],)
    for l in range(1, L):
        # decoder input: upsampled deeper features + encoder skip + upsampled flow
        shapes[f"dec{l}.w"] = (c[l], c[l + 1] + c[l] + 2, 3, 3)
        shapes[f"dec{l}.b"] = (c[l],)
    for l in range(1, L + 1):
        shapes[f"head{l}.w"] = (2, c[l], 3, 3)
        shapes[f"head{l}.b"] = (2,)
    return shapes


@dataclass(eq=False)
class StudentNet:
    config: NetConfig
    params: dict[str, np.ndarray]

    @property
    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def num_scales(self) -> int:
        return self.config.levels + 1

    def copy(self) -> "StudentNet":
        return StudentNet(self.config, {k: v.copy() for k, v in self.params.items()})


HEAD_INIT_GAIN = 0.1  # flow heads start near zero so initial predictions are small


def init(config: NetConfig) -> StudentNet:
    """Deterministic fan-in-scaled uniform init; biases zero."""
    rng = np.random.default_rng(config.seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            if name.startswith("head"):
                bound *= HEAD_INIT_GAIN
            params[name] = rng.uniform(-bound, bound, size=shape)
    return StudentNet(config, params)


def default_loss_weights(config: NetConfig) -> list[float]:
    """Equal weights across all scales (coarsest..finest)."""
    return [1.0] * (config.levels + 1)


# ---------------------------------------------------------------------------
# array-level forward/backward (batched); the dataclass API wraps these


def pair_to_input(pair: FramePair, config: NetConfig) -> np.ndarray:
    need_channels = config.input_channels // 2
    if pair.channels != need_channels:
        raise ValueError(
            f"network expects {need_channels}-channel frames, got {pair.channels}"
        )
    if pair.height % config.divisor or pair.width % config.divisor:
        raise ValueError(
            f"input {pair.width}x{pair.height} not divisible by {config.divisor}"
        )
    stack = np.concatenate(
        [pair.first.data.transpose(2, 0, 1), pair.second.data.transpose(2, 0, 1)]
    )
    # center samples around zero for training stability
    return (stack * 2.0 - 1.0)[None]


def forward_arrays(params, config: NetConfig, x: np.ndarray):
    """Returns (flows, cache).  flows[k] is the (N, 2, H/2^k, W/2^k)
    prediction for k = levels..1 plus the full-resolution k = 0 upsample,
    ordered coarsest to finest."""
    L = config.levels
    cache = {"x": x, "enc": {}, "dec": {}, "head": {}, "a": {0: x}, "d": {}, "flow": {}}
    cur = x
    for l in range(1, L + 1):
        pre, cols = conv2d_forward(cur, params[f"enc{l}.w"], params[f"enc{l}.b"], stride=2, pad=1)
        act = leaky_relu(pre)
        cache["enc"][l] = (cols, pre, cur.shape)
        cache["a"][l] = act
        cur = act
    d = {L: cache["a"][L]}
    flow = {}
    hy, hcols = conv2d_forward(d[L], params[f"head{L}.w"], params[f"head{L}.b"], stride=1, pad=1)
    cache["head"][L] = (hcols, d[L].shape)
    flow[L] = hy
    for l in range(L - 1, 0, -1):
        up_d = upsample2_bilinear(d[l + 1])
        up_f = upsample2_bilinear(flow[l + 1])
        uin = np.concatenate([up_d, cache["a"][l], up_f], axis=1)
        pre, cols = conv2d_forward(uin, params[f"dec{l}.w"], params[f"dec{l}.b"], stride=1, pad=1)
        act = leaky_relu(pre)
        hy, hcols = conv2d_forward(act, params[f"head{l}.w"], params[f"head{l}.b"], stride=1, pad=1)
        cache["dec"][l] = (cols, pre, uin.shape)
        cache["head"][l] = (hcols, act.shape)
        d[l] = act
        flow[l] = hy + up_f
    flow[0] = upsample2_bilinear(flow[1])
    cache["d"] = d
    cache["flow"] = flow
    flows = [flow[k] for k in range(L, -1, -1)]
    return flows, cache


def _downsample_gold(gold: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return gold
    n, c, h, w = gold.shape
    return gold.reshape(n, c, h // factor, factor, w // factor, factor).mean(axis=(3, 5))


def loss_and_flow_grads(flows: list[np.ndarray], gold: np.ndarray, weights):
    """Multi-scale L1 loss on batched arrays plus dL/d(flow) per scale.

    Matches metrics.multiscale_l1_loss term-for-term (same reduction
    order) so the scalar agrees bit-exactly with the metrics module.
    L1 subgradient convention: sign(0) = 0.
    """
    if len(weights) != len(flows):
        raise ValueError(f"{len(weights)} weights for {len(flows)} scales")
    total = 0.0
    grads = []
    full_w = gold.shape[3]
    for level, weight in zip(flows, weights):
        factor = full_w // level.shape[3]
        g = _downsample_gold(gold, factor)
        diff = level - g
        term = (np.mean(np.abs(diff[:, 0])) + np.mean(np.abs(diff[:, 1]))) / factor
        total += weight * term
        count = diff[:, 0].size
        grads.append(weight * np.sign(diff) / (count * factor))
    return float(total), grads


def backward_arrays(params, config: NetConfig, x: np.ndarray, gold: np.ndarray, weights):
    """Loss plus exact analytic gradients for every named parameter."""
    L = config.levels
    flows, cache = forward_arrays(params, config, x)
    loss, flow_grads = loss_and_flow_grads(flows, gold, weights)
    # flows list index i corresponds to pyramid level k = L - i (last is k=0)
    g_flow = {L - i: flow_grads[i].copy() for i in range(L + 1)}
    grads = {name: np.zeros_like(p) for name, p in params.items()}

    # full-resolution entry is a pure upsample of the level-1 prediction
    g_flow[1] += upsample2_bilinear_adjoint(g_flow[0])

    g_d = {l: None for l in range(1, L + 1)}
    g_a = {l: None for l in range(0, L + 1)}

    def _acc(store, key, val):
        store[key] = val if store[key] is None else store[key] + val

    c = channel_plan(config)
    for l in range(1, L):
        # head at level l
        hcols, d_shape = cache["head"][l]
        dx, dw, db = conv2d_backward(g_flow[l], hcols, params[f"head{l}.w"], d_shape)
        grads[f"head{l}.w"] += dw
        grads[f"head{l}.b"] += db
        _acc(g_d, l, dx)
        # residual path into the coarser flow
        g_flow[l + 1] += upsample2_bilinear_adjoint(g_flow[l])
        # decoder conv at level l
        cols, pre, uin_shape = cache["dec"][l]
        g_pre = leaky_relu_grad(pre, g_d[l])
        g_uin, dw, db = conv2d_backward(g_pre, cols, params[f"dec{l}.w"], uin_shape)
        grads[f"dec{l}.w"] += dw
        grads[f"dec{l}.b"] += db
        split1, split2 = c[l + 1], c[l + 1] + c[l]
        _acc(g_d, l + 1, upsample2_bilinear_adjoint(g_uin[:, :split1]))
        _acc(g_a, l, g_uin[:, split1:split2])
        g_flow[l + 1] += upsample2_bilinear_adjoint(g_uin[:, split2:])

    # coarsest head feeds straight off the deepest encoder activation
    hcols, d_shape = cache["head"][L]
    dx, dw, db = conv2d_backward(g_flow[L], hcols, params[f"head{L}.w"], d_shape)
    grads[f"head{L}.w"] += dw
    grads[f"head{L}.b"] += db
    _acc(g_d, L, dx)
    _acc(g_a, L, g_d[L])

    for l in range(L, 0, -1):
        cols, pre, in_shape = cache["enc"][l]
        g_pre = leaky_relu_grad(pre, g_a[l])
        dx, dw, db = conv2d_backward(g_pre, cols, params[f"enc{l}.w"], in_shape, stride=2, pad=1)
        grads[f"enc{l}.w"] += dw
        grads[f"enc{l}.b"] += db
        if l > 1:
            _acc(g_a, l - 1, dx)
    return loss, grads


# ---------------------------------------------------------------------------
# value-type API


def _flows_to_multiscale(flows: list[np.ndarray]) -> MultiScaleFlow:
    return MultiScaleFlow([FlowField(f[0, 0], f[0, 1]) for f in flows])


def forward(net: StudentNet, pair: FramePair) -> MultiScaleFlow:
    """Multi-scale flow prediction, coarsest to finest; pure in (params, input)."""
    x = pair_to_input(pair, net.config)
    flows, _ = forward_arrays(net.params, net.config, x)
    return _flows_to_multiscale(flows)


def predict_flow(net: StudentNet, pair: FramePair) -> FlowField:
    """Finest (full-resolution) prediction only."""
    return forward(net, pair).finest


def backward(net: StudentNet, pair: FramePair, gold: FlowField, weights=None):
    """Loss and exact analytic parameter gradients for one frame pair."""
    if weights is None:
        weights = default_loss_weights(net.config)
    x = pair_to_input(pair, net.config)
    if (gold.height, gold.width) != (pair.height, pair.width):
        raise ValueError(
            f"gold {gold.width}x{gold.height} does not match pair "
            f"{pair.width}x{pair.height}"
        )
    gold_arr = np.stack([gold.u, gold.v])[None]
    return backward_arrays(net.params, net.config, x, gold_arr, weights)
