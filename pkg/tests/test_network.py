import json

import numpy as np
import pytest

import helpers
from vrel import kernels, network, oracle
from vrel.errors import BindError, ConfigError, ShapeError
from vrel.model_io import WeightContainer
from vrel.tensor import as_tensor


class TestLoadArchitecture:
    def test_bundled_c3d(self):
        net = network.load_architecture(helpers.bundled_config("c3d"))
        kinds = [l.kind for l in net.layers]
        assert kinds.count("conv3d") == 8
        assert kinds.count("maxpool3d") == 5
        assert kinds.count("linear") == 3
        assert net.num_classes == 101
        shapes = network.chain_shapes(net)
        assert shapes[-1] == (101,)
        assert net.input_shape == (3, 16, 112, 112)

    def test_c3d_intermediate_shapes(self):
        net = network.load_architecture(helpers.bundled_config("c3d"))
        shapes = network.chain_shapes(net)
        flat_idx = [i for i, l in enumerate(net.layers) if l.kind == "flatten"][0]
        assert shapes[flat_idx - 1] == (512, 1, 4, 4)
        assert shapes[flat_idx] == (8192,)

    def test_single_linear(self):
        net = network.load_architecture(json.dumps({
            "input_shape": [4, 1, 1, 1], "num_classes": 2,
            "layers": [{"kind": "flatten"},
                       {"kind": "linear", "name": "fc", "in_features": 4, "out_features": 2}],
        }))
        assert len(net.layers) == 2

    def test_stride_zero_rejected(self):
        cfg = helpers.small_conv_net_config()
        cfg["layers"][0]["stride"] = [0, 1, 1]
        with pytest.raises(ConfigError):
            network.load_architecture(json.dumps(cfg))

    def test_parse_error(self):
        with pytest.raises(ConfigError):
            network.load_architecture("{not json")

    def test_chain_error_names_layer(self):
        cfg = helpers.small_conv_net_config()
        cfg["layers"][4]["in_features"] = 123  # wrong fan-in
        with pytest.raises(ConfigError, match="layer 4"):
            network.load_architecture(json.dumps(cfg))

    def test_duplicate_names_rejected(self):
        cfg = helpers.small_conv_net_config()
        cfg["layers"][4]["name"] = "c1"
        with pytest.raises(ConfigError, match="unique"):
            network.load_architecture(json.dumps(cfg))


class TestBindWeights:
    def test_round_trip(self):
        net = network.load_architecture(json.dumps(helpers.small_conv_net_config()))
        bound = helpers.bind_random(net, 0)
        assert bound.bound and not net.bound
        assert "c1.weight" in bound.parameters

    def test_missing_tensor(self):
        net = network.load_architecture(json.dumps(helpers.small_conv_net_config()))
        entries = helpers.random_entries(net, np.random.default_rng(0))
        del entries["fc.weight"]
        with pytest.raises(BindError, match="fc.weight"):
            network.bind_weights(net, WeightContainer(entries))

    def test_transposed_linear_weight(self):
        net = network.load_architecture(json.dumps(helpers.small_conv_net_config()))
        entries = helpers.random_entries(net, np.random.default_rng(0))
        entries["fc.weight"] = as_tensor(np.asarray(entries["fc.weight"]).T)
        with pytest.raises(BindError, match="expected shape"):
            network.bind_weights(net, WeightContainer(entries))


class TestFoldBatchnorm:
    def test_identity(self):
        w = as_tensor(np.ones((1, 1, 1, 1, 1)))
        b = as_tensor([0.0])
        w2, b2 = network.fold_batchnorm(w, b, as_tensor([0.0]), as_tensor([1.0]),
                                        as_tensor([1.0]), as_tensor([0.0]), 0.0)
        assert np.array_equal(w2, w) and np.array_equal(b2, b)

    def test_pure_scale(self):
        w = as_tensor(np.ones((1, 1, 1, 1, 1)))
        b = as_tensor([0.0])
        w2, b2 = network.fold_batchnorm(w, b, as_tensor([0.0]), as_tensor([1.0]),
                                        as_tensor([2.0]), as_tensor([0.0]), 0.0)
        assert w2.reshape(-1)[0] == 2.0 and b2[0] == 0.0

    def test_negative_variance_rejected(self):
        w, b = as_tensor(np.ones((1, 1, 1, 1, 1))), as_tensor([0.0])
        with pytest.raises(BindError):
            network.fold_batchnorm(w, b, as_tensor([0.0]), as_tensor([-1.0]),
                                   as_tensor([1.0]), as_tensor([0.0]), 0.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_folded_equals_composed(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((2, 2, 2, 2)).astype(np.float32)
        w = rng.standard_normal((4, 2, 1, 1, 1)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        mean, var = rng.standard_normal(4).astype(np.float32), rng.uniform(0.1, 2, 4).astype(np.float32)
        gamma, beta = rng.uniform(0.5, 1.5, 4).astype(np.float32), rng.standard_normal(4).astype(np.float32)
        eps = 1e-5
        y = kernels.conv3d_forward(x, w, b, (1, 1, 1), (0, 0, 0))
        composed = gamma.reshape(-1, 1, 1, 1) * (y - mean.reshape(-1, 1, 1, 1)) \
            / np.sqrt(var.reshape(-1, 1, 1, 1) + eps) + beta.reshape(-1, 1, 1, 1)
        w2, b2 = network.fold_batchnorm(as_tensor(w), as_tensor(b), as_tensor(mean),
                                        as_tensor(var), as_tensor(gamma), as_tensor(beta), eps)
        folded = kernels.conv3d_forward(x, np.asarray(w2), np.asarray(b2), (1, 1, 1), (0, 0, 0))
        np.testing.assert_allclose(folded, composed, atol=1e-4)

    def test_bind_folds_batchnorm_away(self):
        cfg = helpers.small_conv_net_config()
        cfg["layers"].insert(1, {"kind": "batchnorm", "name": "bn1", "channels": 6})
        net = network.load_architecture(json.dumps(cfg))
        rng = np.random.default_rng(1)
        entries = helpers.random_entries(net, rng)
        bound = network.bind_weights(net, WeightContainer(entries))
        assert all(l.kind != "batchnorm" for l in bound.layers)
        # folded forward equals conv-then-bn evaluated directly
        x = rng.standard_normal((3, 4, 8, 8)).astype(np.float32)
        conv = net.layers[0]
        y = kernels.conv3d_forward(x, np.asarray(entries["c1.weight"]),
                                   np.asarray(entries["c1.bias"]), conv.stride, conv.padding)
        g, bta = np.asarray(entries["bn1.gamma"]), np.asarray(entries["bn1.beta"])
        m, v = np.asarray(entries["bn1.mean"]), np.asarray(entries["bn1.var"])
        want = g.reshape(-1, 1, 1, 1) * (y - m.reshape(-1, 1, 1, 1)) \
            / np.sqrt(v.reshape(-1, 1, 1, 1) + 1e-5) + bta.reshape(-1, 1, 1, 1)
        logits_in = kernels.conv3d_forward(x, np.asarray(bound.parameters["c1.weight"]),
                                           np.asarray(bound.parameters["c1.bias"]),
                                           conv.stride, conv.padding)
        np.testing.assert_allclose(logits_in, want, atol=1e-4)

    def test_batchnorm_without_preceding_conv_rejected(self):
        cfg = helpers.small_conv_net_config()
        cfg["layers"].insert(0, {"kind": "batchnorm", "name": "bn0", "channels": 3})
        net = network.load_architecture(json.dumps(cfg))
        entries = helpers.random_entries(net, np.random.default_rng(0))
        with pytest.raises(BindError, match="follow a conv3d"):
            network.bind_weights(net, WeightContainer(entries))


class TestForward:
    def test_identity_linear(self):
        net = network.load_architecture(json.dumps({
            "input_shape": [2, 1, 1, 1], "num_classes": 2,
            "layers": [{"kind": "flatten"},
                       {"kind": "linear", "name": "fc", "in_features": 2, "out_features": 2}],
        }))
        bound = network.bind_weights(net, WeightContainer({
            "fc.weight": as_tensor(np.eye(2)), "fc.bias": as_tensor([0.0, 0.0])}))
        logits, cache = network.forward(bound, np.array([1.0, 2.0], np.float32).reshape(2, 1, 1, 1))
        assert np.array_equal(logits, [1.0, 2.0])
        assert len(cache.inputs) == 2

    @pytest.mark.parametrize("seed", range(5))
    def test_two_layer_conv_matches_naive(self, seed):
        cfg = {
            "input_shape": [3, 4, 8, 8], "num_classes": 4 * 2 * 4 * 4,
            "layers": [
                {"kind": "conv3d", "name": "a", "in_channels": 3, "out_channels": 5,
                 "kernel": [3, 3, 3], "padding": [1, 1, 1]},
                {"kind": "conv3d", "name": "b", "in_channels": 5, "out_channels": 4,
                 "kernel": [2, 2, 2], "stride": [2, 2, 2]},
                {"kind": "flatten"},
            ],
        }
        bound = helpers.make_net(cfg, seed)
        rng = np.random.default_rng(seed + 100)
        x = rng.standard_normal((3, 4, 8, 8)).astype(np.float32)
        logits, _ = network.forward(bound, x)
        y1 = oracle.naive_conv3d(x, np.asarray(bound.parameters["a.weight"]),
                                 np.asarray(bound.parameters["a.bias"]), (1, 1, 1), (1, 1, 1))
        y2 = oracle.naive_conv3d(y1, np.asarray(bound.parameters["b.weight"]),
                                 np.asarray(bound.parameters["b.bias"]), (2, 2, 2), (0, 0, 0))
        np.testing.assert_allclose(logits, y2.reshape(-1), atol=1e-4)

    def test_deterministic(self):
        bound = helpers.make_net(helpers.small_conv_net_config(), 7)
        x = helpers.random_clip(np.random.default_rng(1))
        a, _ = network.forward(bound, x)
        b, _ = network.forward(bound, x)
        assert np.array_equal(a, b)

    def test_unbound_rejected(self):
        net = network.load_architecture(json.dumps(helpers.small_conv_net_config()))
        with pytest.raises(BindError):
            network.forward(net, np.zeros((3, 4, 8, 8), np.float32))

    def test_wrong_input_shape(self):
        bound = helpers.make_net(helpers.small_conv_net_config(), 0)
        with pytest.raises(ShapeError):
            network.forward(bound, np.zeros((3, 4, 8, 7), np.float32))

    def test_cache_has_one_entry_per_layer(self):
        bound = helpers.make_net(helpers.small_conv_net_config(), 0)
        x = helpers.random_clip(np.random.default_rng(0))
        _, cache = network.forward(bound, x)
        assert len(cache.inputs) == len(bound.layers)
        assert list(cache.pool_masks) == [2]
