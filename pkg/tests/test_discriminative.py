import numpy as np
import pytest

import helpers
from vrel import discriminative, network, relevance
from vrel.relevance import RelevanceConfig

# explaining arbitrary fixed classes of random nets routinely hits negative
# logits; the warning itself is covered in test_relevance
pytestmark = pytest.mark.filterwarnings(
    "ignore:target logit.*negative:RuntimeWarning")


@pytest.fixture(scope="module")
def small_net():
    return helpers.make_net(helpers.small_conv_net_config(), seed=0, zero_bias=True)


class TestFreezeFrame:
    def test_every_slice_equals_chosen_frame(self):
        rng = np.random.default_rng(0)
        video = helpers.random_clip(rng)
        out = discriminative.freeze_frame(video, 0)
        for t in range(video.shape[1]):
            assert np.array_equal(out[:, t], video[:, 0])
        assert out.shape == video.shape

    def test_static_video_is_fixed_point(self):
        video = helpers.static_clip(np.random.default_rng(1))
        for t in range(video.shape[1]):
            assert np.array_equal(discriminative.freeze_frame(video, t), video)

    def test_out_of_range(self):
        video = helpers.random_clip(np.random.default_rng(0))
        with pytest.raises(IndexError):
            discriminative.freeze_frame(video, video.shape[1])
        with pytest.raises(IndexError):
            discriminative.freeze_frame(video, -1)


class TestSpatialRelevance:
    def test_static_video_spatial_equals_original(self, small_net):
        video = helpers.static_clip(np.random.default_rng(2))
        cfg = RelevanceConfig()
        original = relevance.explain(small_net, video, cfg)
        spatial, preds = discriminative.spatial_relevance(small_net, video, cfg,
                                                          original.target_class)
        assert np.array_equal(spatial.tensor, original.tensor)
        assert all(p == preds[0] for p in preds)

    def test_shape_and_finiteness(self, small_net):
        video = helpers.random_clip(np.random.default_rng(3))
        spatial, preds = discriminative.spatial_relevance(small_net, video,
                                                          RelevanceConfig(), 0)
        assert spatial.tensor.shape == video.shape
        assert np.all(np.isfinite(spatial.tensor))
        assert len(preds) == video.shape[1]

    def test_records_per_frame_argmax(self, small_net):
        video = helpers.random_clip(np.random.default_rng(4))
        _, preds = discriminative.spatial_relevance(small_net, video, RelevanceConfig(), 1)
        for t, p in enumerate(preds):
            logits, _ = network.forward(small_net, discriminative.freeze_frame(video, t))
            assert p == int(np.argmax(logits))

    def test_freeze_frames_depend_only_on_their_frame(self, small_net):
        # unconditional permutation property: the t-th freeze-frame explanation
        # of the permuted clip is the perm[t]-th one of the original, bitwise
        rng = np.random.default_rng(5)
        video = helpers.random_clip(rng)
        cfg = RelevanceConfig(target=0)
        perm = rng.permutation(video.shape[1])
        permuted = np.ascontiguousarray(video[:, perm])
        for t in range(video.shape[1]):
            a = relevance.explain(small_net, discriminative.freeze_frame(permuted, t), cfg)
            b = relevance.explain(small_net,
                                  discriminative.freeze_frame(video, int(perm[t])), cfg)
            assert np.array_equal(a.tensor, b.tensor)

    def test_frame_permutation_consistency(self):
        # the slice-wise form needs a net whose static-clip explanations are
        # frame-uniform, i.e. no temporal mixing before the final pool
        net = helpers.make_net(helpers.frame_uniform_net_config(), seed=12, zero_bias=True)
        rng = np.random.default_rng(5)
        video = helpers.random_clip(rng)
        cfg = RelevanceConfig()
        spatial, preds = discriminative.spatial_relevance(net, video, cfg, 2)
        perm = rng.permutation(video.shape[1])
        permuted = np.ascontiguousarray(video[:, perm])
        spatial_p, preds_p = discriminative.spatial_relevance(net, permuted, cfg, 2)
        assert np.array_equal(spatial_p.tensor, spatial.tensor[:, perm])
        assert list(preds_p) == [preds[i] for i in perm]

    def test_thread_pool_matches_serial(self, small_net, monkeypatch):
        video = helpers.random_clip(np.random.default_rng(6))
        cfg = RelevanceConfig()
        serial, sp = discriminative.spatial_relevance(small_net, video, cfg, 0)
        monkeypatch.setenv(discriminative.THREADS_ENV, "4")
        threaded, tp = discriminative.spatial_relevance(small_net, video, cfg, 0)
        assert np.array_equal(serial.tensor, threaded.tensor)
        assert sp == tp


class TestDecompose:
    def test_static_video_null_motion(self, small_net):
        video = helpers.static_clip(np.random.default_rng(7))
        triple = discriminative.discriminative_decompose(small_net, video, RelevanceConfig())
        assert np.max(np.abs(triple.temporal.tensor)) <= 1e-5

    def test_reconstruction_bitwise(self, small_net):
        for seed in range(4):
            video = helpers.random_clip(np.random.default_rng(seed))
            triple = discriminative.discriminative_decompose(small_net, video,
                                                             RelevanceConfig())
            assert np.array_equal(triple.spatial.tensor + triple.temporal.tensor,
                                  triple.original.tensor)

    def test_shapes_match_input(self, small_net):
        video = helpers.random_clip(np.random.default_rng(8))
        triple = discriminative.discriminative_decompose(small_net, video, RelevanceConfig())
        for m in (triple.original, triple.spatial, triple.temporal):
            assert m.tensor.shape == video.shape

    def test_uses_original_target_for_all_frames(self, small_net, monkeypatch):
        video = helpers.random_clip(np.random.default_rng(9))
        seen_targets = []
        real_explain = discriminative.explain

        def spy(net, x, cfg):
            seen_targets.append(cfg.target)
            return real_explain(net, x, cfg)

        monkeypatch.setattr(discriminative, "explain", spy)
        triple = discriminative.discriminative_decompose(small_net, video, RelevanceConfig())
        assert seen_targets[0] == "argmax"
        assert all(t == triple.target_class for t in seen_targets[1:])

    def test_cost_law_exactly_t_plus_one_passes(self, small_net, monkeypatch):
        video = helpers.random_clip(np.random.default_rng(10))
        calls = []
        real_explain = discriminative.explain
        monkeypatch.setattr(discriminative, "explain",
                            lambda *a, **k: (calls.append(1) or real_explain(*a, **k)))
        discriminative.discriminative_decompose(small_net, video, RelevanceConfig())
        assert len(calls) == video.shape[1] + 1

    def test_sums_not_required_to_match(self, small_net):
        # the decomposition is an approximation: |spatial| + |temporal| sums need
        # not reproduce the original's, only the reconstruction identity holds
        video = helpers.random_clip(np.random.default_rng(11))
        triple = discriminative.discriminative_decompose(small_net, video, RelevanceConfig())
        sums = {name: float(np.sum(np.abs(m.tensor), dtype=np.float64))
                for name, m in (("original", triple.original), ("spatial", triple.spatial),
                                ("temporal", triple.temporal))}
        assert all(np.isfinite(v) for v in sums.values())

    def test_worker_count_env(self, monkeypatch):
        monkeypatch.delenv(discriminative.THREADS_ENV, raising=False)
        assert discriminative.worker_count() == 1
        monkeypatch.setenv(discriminative.THREADS_ENV, "8")
        assert discriminative.worker_count() == 8
        monkeypatch.setenv(discriminative.THREADS_ENV, "junk")
        assert discriminative.worker_count() == 1
