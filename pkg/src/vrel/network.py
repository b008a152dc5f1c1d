"""Config-described sequential 3D CNN with an activation-caching forward pass.

Architectures are JSON documents with an ordered layer list (see
``configs/c3d.json`` for the bundled C3D). Batch norm layers exist only in
configs and containers: binding folds them into the preceding convolution, so
the relevance pass only ever sees conv / linear / relu / pool / flatten.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import kernels
from .errors import BindError, ConfigError, ShapeError
from .kernels import PoolMask, Triple
from .tensor import Tensor, as_tensor, freeze

SPATIAL_KINDS = ("conv3d", "maxpool3d", "avgpool3d")
KINDS = ("conv3d", "linear", "relu", "maxpool3d", "avgpool3d", "batchnorm", "flatten")


@dataclass(frozen=True)
class LayerDescriptor:
    kind: str
    name: str | None = None
    in_channels: int | None = None
    out_channels: int | None = None
    in_features: int | None = None
    out_features: int | None = None
    kernel: Triple | None = None
    stride: Triple | None = None
    padding: Triple | None = None
    channels: int | None = None   # batchnorm only
    eps: float | None = None      # batchnorm only

    @property
    def weight_name(self) -> str:
        return f"{self.name}.weight"

    @property
    def bias_name(self) -> str:
        return f"{self.name}.bias"


@dataclass(frozen=True)
class Network:
    name: str
    input_shape: tuple[int, int, int, int]
    num_classes: int
    layers: tuple[LayerDescriptor, ...]
    parameters: Mapping[str, Tensor] | None = None

    @property
    def bound(self) -> bool:
        return self.parameters is not None

    def forward(self, x: np.ndarray):
        return forward(self, x)


@dataclass
class ActivationCache:
    """Per-layer input activations plus max-pool selection masks."""
    inputs: list[np.ndarray] = field(default_factory=list)
    pool_masks: dict[int, PoolMask] = field(default_factory=dict)


def _triple(value, *, default=None, minimum=1, what="extent") -> Triple:
    if value is None:
        if default is None:
            raise ConfigError(f"missing {what}")
        return default
    if isinstance(value, int):
        value = [value, value, value]
    if len(value) != 3 or any(not isinstance(v, int) for v in value):
        raise ConfigError(f"{what} must be an int or a list of 3 ints, got {value!r}")
    if any(v < minimum for v in value):
        raise ConfigError(f"{what} {list(value)} has entries below {minimum}")
    return tuple(value)  # type: ignore[return-value]


def _parse_layer(idx: int, raw: dict) -> LayerDescriptor:
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"layer {idx}: unknown kind {kind!r}")
    try:
        if kind == "conv3d":
            kernel = _triple(raw.get("kernel"), what="kernel")
            return LayerDescriptor(
                kind=kind, name=raw["name"],
                in_channels=int(raw["in_channels"]), out_channels=int(raw["out_channels"]),
                kernel=kernel,
                stride=_triple(raw.get("stride"), default=(1, 1, 1), what="stride"),
                padding=_triple(raw.get("padding"), default=(0, 0, 0), minimum=0, what="padding"),
            )
        if kind in ("maxpool3d", "avgpool3d"):
            kernel = _triple(raw.get("kernel"), what="kernel")
            stride = _triple(raw.get("stride"), default=kernel, what="stride")
            padding = _triple(raw.get("padding"), default=(0, 0, 0), minimum=0, what="padding")
            if any(p > k // 2 for k, p in zip(kernel, padding)):
                raise ConfigError(f"layer {idx}: pool padding {padding} exceeds half the "
                                  f"kernel {kernel}")
            return LayerDescriptor(kind=kind, kernel=kernel, stride=stride, padding=padding)
        if kind == "linear":
            return LayerDescriptor(kind=kind, name=raw["name"],
                                   in_features=int(raw["in_features"]),
                                   out_features=int(raw["out_features"]))
        if kind == "batchnorm":
            return LayerDescriptor(kind=kind, name=raw["name"], channels=int(raw["channels"]),
                                   eps=float(raw.get("eps", 1e-5)))
        return LayerDescriptor(kind=kind)  # relu / flatten
    except KeyError as exc:
        raise ConfigError(f"layer {idx} ({kind}): missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"layer {idx} ({kind}): {exc}") from None


def layer_output_shape(layer: LayerDescriptor, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    """Shape a single layer produces for ``in_shape``; raises ShapeError on mismatch."""
    if layer.kind == "conv3d":
        if len(in_shape) != 4 or in_shape[0] != layer.in_channels:
            raise ShapeError(f"conv3d expects {layer.in_channels} channels, got {in_shape}")
        return kernels.conv_output_shape(in_shape, layer.out_channels, layer.kernel,
                                         layer.stride, layer.padding)
    if layer.kind in ("maxpool3d", "avgpool3d"):
        if len(in_shape) != 4:
            raise ShapeError(f"{layer.kind} expects a (C,T,H,W) input, got {in_shape}")
        return kernels.pool_output_shape(in_shape, layer.kernel, layer.stride, layer.padding)
    if layer.kind == "batchnorm":
        if len(in_shape) != 4 or in_shape[0] != layer.channels:
            raise ShapeError(f"batchnorm expects {layer.channels} channels, got {in_shape}")
        return in_shape
    if layer.kind == "flatten":
        return (int(np.prod(in_shape)),)
    if layer.kind == "linear":
        if in_shape != (layer.in_features,):
            raise ShapeError(f"linear expects a flat ({layer.in_features},) input, got "
                             f"{in_shape}; add a flatten layer if needed")
        return (layer.out_features,)
    return in_shape  # relu


def chain_shapes(net: Network) -> list[tuple[int, ...]]:
    """Walk the layer list from the declared input shape; returns the shape after
    each layer. Raises ConfigError naming the first offending layer."""
    shape: tuple[int, ...] = net.input_shape
    shapes = []
    for i, layer in enumerate(net.layers):
        try:
            shape = layer_output_shape(layer, shape)
        except ShapeError as exc:
            raise ConfigError(f"layer {i} ({layer.kind}): {exc}") from None
        shapes.append(shape)
    if shape != (net.num_classes,):
        raise ConfigError(f"final layer produces {shape}, expected ({net.num_classes},); "
                          "the last layer must emit one logit per class")
    return shapes


def load_architecture(config_text: str) -> Network:
    """Parse a JSON architecture document into an unbound, chain-checked Network."""
    try:
        doc = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "layers" not in doc:
        raise ConfigError("config must be an object with a 'layers' list")
    try:
        input_shape = tuple(int(e) for e in doc["input_shape"])
        num_classes = int(doc["num_classes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad input_shape/num_classes: {exc}") from None
    if len(input_shape) != 4 or min(input_shape) < 1:
        raise ConfigError(f"input_shape must be 4 positive extents (C,T,H,W), got {input_shape}")
    if num_classes < 1:
        raise ConfigError("num_classes must be positive")
    layers = tuple(_parse_layer(i, raw) for i, raw in enumerate(doc["layers"]))
    names = [l.name for l in layers if l.name is not None]
    if len(names) != len(set(names)):
        raise ConfigError("layer names must be unique")
    net = Network(name=str(doc.get("name", "net")), input_shape=input_shape,
                  num_classes=num_classes, layers=layers)
    chain_shapes(net)
    return net


def fold_batchnorm(conv_w: Tensor, conv_b: Tensor, mean: Tensor, var: Tensor,
                   gamma: Tensor, beta: Tensor, eps: float) -> tuple[Tensor, Tensor]:
    """Fold an inference-mode batch norm into the preceding convolution.

    Returns (w', b') with w' = w * g/sqrt(var+eps) per output channel and
    b' = (b - mean) * g/sqrt(var+eps) + beta, so the folded conv reproduces
    conv-then-batchnorm exactly.
    """
    n = conv_w.shape[0]
    for t, label in ((mean, "mean"), (var, "var"), (gamma, "gamma"), (beta, "beta")):
        if t.shape != (n,):
            raise BindError(f"batchnorm {label} has shape {t.shape}, conv has {n} output channels")
    if np.any(var < 0):
        raise BindError("batchnorm variance must be elementwise >= 0")
    scale = gamma / np.sqrt(var + np.float32(eps))
    w = conv_w * scale.reshape(-1, 1, 1, 1, 1)
    b = (conv_b - mean) * scale + beta
    return as_tensor(w), as_tensor(b)


def bind_weights(net: Network, container) -> Network:
    """Attach parameters from a WeightContainer and fold every batch norm away.

    ``container`` is any mapping-like with ``entries: dict[str, Tensor]``
    (see :class:`vrel.model_io.WeightContainer`).
    """
    entries = container.entries if hasattr(container, "entries") else dict(container)

    def fetch(name: str, shape: tuple[int, ...]) -> Tensor:
        if name not in entries:
            raise BindError(f"container is missing tensor {name!r}")
        t = entries[name]
        if tuple(t.shape) != shape:
            raise BindError(f"tensor {name!r}: expected shape {shape}, found {tuple(t.shape)}")
        return t

    params: dict[str, Tensor] = {}
    out_layers: list[LayerDescriptor] = []
    for layer in net.layers:
        if layer.kind == "conv3d":
            shape = (layer.out_channels, layer.in_channels, *layer.kernel)
            params[layer.weight_name] = fetch(layer.weight_name, shape)
            params[layer.bias_name] = fetch(layer.bias_name, (layer.out_channels,))
            out_layers.append(layer)
        elif layer.kind == "linear":
            params[layer.weight_name] = fetch(layer.weight_name,
                                              (layer.out_features, layer.in_features))
            params[layer.bias_name] = fetch(layer.bias_name, (layer.out_features,))
            out_layers.append(layer)
        elif layer.kind == "batchnorm":
            if not out_layers or out_layers[-1].kind != "conv3d":
                raise BindError(f"batchnorm {layer.name!r} must directly follow a conv3d layer "
                                "to be folded")
            conv = out_layers[-1]
            if layer.channels != conv.out_channels:
                raise BindError(f"batchnorm {layer.name!r} has {layer.channels} channels, "
                                f"conv {conv.name!r} outputs {conv.out_channels}")
            bn = {k: fetch(f"{layer.name}.{k}", (layer.channels,))
                  for k in ("mean", "var", "gamma", "beta")}
            w, b = fold_batchnorm(params[conv.weight_name], params[conv.bias_name],
                                  bn["mean"], bn["var"], bn["gamma"], bn["beta"], layer.eps)
            params[conv.weight_name] = w
            params[conv.bias_name] = b
        else:
            out_layers.append(layer)
    bound = replace(net, layers=tuple(out_layers), parameters=params)
    chain_shapes(bound)
    return bound


def forward(net: Network, x: np.ndarray) -> tuple[Tensor, ActivationCache]:
    """Run the network on one clip, caching every layer's input activation.

    Returns (logits, cache); deterministic for identical inputs.
    """
    if not net.bound:
        raise BindError("network has no parameters bound; call bind_weights first")
    x = np.asarray(x, dtype=np.float32)
    if x.shape != net.input_shape:
        raise ShapeError(f"input shape {x.shape} does not match declared {net.input_shape}")
    cache = ActivationCache()
    act = as_tensor(x)  # defensive frozen copy; later activations are owned outputs
    for i, layer in enumerate(net.layers):
        cache.inputs.append(freeze(act))
        try:
            if layer.kind == "conv3d":
                act = kernels.conv3d_forward(act, net.parameters[layer.weight_name],
                                             net.parameters[layer.bias_name],
                                             layer.stride, layer.padding)
            elif layer.kind == "linear":
                act = kernels.linear_forward(act, net.parameters[layer.weight_name],
                                             net.parameters[layer.bias_name])
            elif layer.kind == "relu":
                act = kernels.relu_forward(act)
            elif layer.kind == "maxpool3d":
                act, mask = kernels.maxpool3d_forward(act, layer.kernel, layer.stride,
                                                      layer.padding)
                cache.pool_masks[i] = mask
            elif layer.kind == "avgpool3d":
                act = kernels.avgpool3d_forward(act, layer.kernel, layer.stride, layer.padding)
            elif layer.kind == "flatten":
                act = act.reshape(-1)
            else:
                raise ShapeError(f"unexpected kind {layer.kind!r} in a bound network")
        except ShapeError as exc:
            raise ShapeError(f"layer {i} ({layer.kind}): {exc}") from None
    return freeze(np.ascontiguousarray(act)), cache
