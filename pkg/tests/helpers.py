"""Shared builders for synthetic networks, weights and clips."""

import json
from importlib import resources

import numpy as np

from vrel import network
from vrel.model_io import WeightContainer
from vrel.tensor import as_tensor


def bundled_config(name: str) -> str:
    return resources.files("vrel.configs").joinpath(f"{name}.json").read_text()


def random_entries(net, rng, scale=0.3, zero_bias=False):
    """Random parameter tensors for every conv/linear/batchnorm layer."""
    entries = {}
    for layer in net.layers:
        if layer.kind == "conv3d":
            w_shape = (layer.out_channels, layer.in_channels, *layer.kernel)
            n_out = layer.out_channels
        elif layer.kind == "linear":
            w_shape = (layer.out_features, layer.in_features)
            n_out = layer.out_features
        elif layer.kind == "batchnorm":
            n = layer.channels
            entries[f"{layer.name}.mean"] = as_tensor(rng.standard_normal(n) * scale)
            entries[f"{layer.name}.var"] = as_tensor(rng.uniform(0.1, 2.0, n))
            entries[f"{layer.name}.gamma"] = as_tensor(rng.uniform(0.5, 1.5, n))
            entries[f"{layer.name}.beta"] = as_tensor(rng.standard_normal(n) * scale)
            continue
        else:
            continue
        entries[layer.weight_name] = as_tensor(rng.standard_normal(w_shape) * scale)
        bias = np.zeros(n_out) if zero_bias else rng.standard_normal(n_out) * scale
        entries[layer.bias_name] = as_tensor(bias)
    return entries


def bind_random(net, seed, scale=0.3, zero_bias=False):
    rng = np.random.default_rng(seed)
    return network.bind_weights(net, WeightContainer(random_entries(net, rng, scale, zero_bias)))


def make_net(config: dict, seed=0, scale=0.3, zero_bias=False):
    net = network.load_architecture(json.dumps(config))
    return bind_random(net, seed, scale=scale, zero_bias=zero_bias)


def small_conv_net_config(in_shape=(3, 4, 8, 8), conv_out=6, classes=5, pool="maxpool3d"):
    """conv-relu-pool-flatten-linear on a tiny clip; pools tile exactly."""
    c, t, h, w = in_shape
    feat = conv_out * (t // 2) * (h // 2) * (w // 2)
    return {
        "name": "small",
        "input_shape": list(in_shape),
        "num_classes": classes,
        "layers": [
            {"kind": "conv3d", "name": "c1", "in_channels": c, "out_channels": conv_out,
             "kernel": [3, 3, 3], "stride": [1, 1, 1], "padding": [1, 1, 1]},
            {"kind": "relu"},
            {"kind": pool, "kernel": [2, 2, 2], "stride": [2, 2, 2]},
            {"kind": "flatten"},
            {"kind": "linear", "name": "fc", "in_features": feat, "out_features": classes},
        ],
    }


def frame_uniform_net_config(in_shape=(3, 4, 8, 8), conv_out=5, classes=4):
    """A net that treats frames independently and identically: 1-frame conv
    kernels, frame-wise spatial pooling, then an average pool over the whole
    temporal extent. Explanations of static clips are frame-uniform bitwise."""
    c, t, h, w = in_shape
    feat = conv_out * (h // 2) * (w // 2)
    return {
        "name": "frame-uniform",
        "input_shape": list(in_shape),
        "num_classes": classes,
        "layers": [
            {"kind": "conv3d", "name": "c1", "in_channels": c, "out_channels": conv_out,
             "kernel": [1, 3, 3], "stride": [1, 1, 1], "padding": [0, 1, 1]},
            {"kind": "relu"},
            {"kind": "maxpool3d", "kernel": [1, 2, 2], "stride": [1, 2, 2]},
            {"kind": "avgpool3d", "kernel": [t, 1, 1], "stride": [t, 1, 1]},
            {"kind": "flatten"},
            {"kind": "linear", "name": "fc", "in_features": feat, "out_features": classes},
        ],
    }


def random_clip(rng, shape=(3, 4, 8, 8), low=0.0, high=255.0):
    return rng.uniform(low, high, size=shape).astype(np.float32)


def static_clip(rng, shape=(3, 4, 8, 8)):
    frame = rng.uniform(0.0, 255.0, size=(shape[0], 1, *shape[2:])).astype(np.float32)
    return np.ascontiguousarray(np.broadcast_to(frame, shape))


def tiny4_net(seed=0, zero_bias=True):
    net = network.load_architecture(bundled_config("tiny4"))
    return bind_random(net, seed, scale=0.05, zero_bias=zero_bias)
