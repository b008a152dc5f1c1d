import json

import numpy as np
import pytest

import helpers
from vrel import model_io, network, pipeline
from vrel.errors import VrelError


@pytest.fixture()
def model_files(tmp_path):
    config = helpers.small_conv_net_config()
    arch = tmp_path / "arch.json"
    arch.write_text(json.dumps(config))
    net = network.load_architecture(json.dumps(config))
    entries = helpers.random_entries(net, np.random.default_rng(0), zero_bias=True)
    weights = tmp_path / "weights.vrelw"
    model_io.write_weight_container(entries, weights)
    clip = tmp_path / "clip.vrelv"
    model_io.write_raw_tensor(helpers.random_clip(np.random.default_rng(1)), clip)
    return arch, weights, clip


class TestLoadNetwork:
    def test_loads_and_binds(self, model_files):
        arch, weights, _ = model_files
        net = pipeline.load_network(arch, weights)
        assert net.bound

    def test_missing_paths(self, model_files, tmp_path):
        arch, weights, _ = model_files
        with pytest.raises(FileNotFoundError, match="gone.json"):
            pipeline.load_network(tmp_path / "gone.json", weights)
        with pytest.raises(FileNotFoundError, match="gone.vrelw"):
            pipeline.load_network(arch, tmp_path / "gone.vrelw")


class TestRunners:
    def test_predict_top_k(self, model_files):
        arch, weights, clip = model_files
        net = pipeline.load_network(arch, weights)
        result = pipeline.run_predict(net, clip, top=3)
        assert len(result["predictions"]) == 3

    def test_clip_shape_mismatch(self, model_files, tmp_path):
        arch, weights, _ = model_files
        net = pipeline.load_network(arch, weights)
        bad = tmp_path / "bad.vrelv"
        model_io.write_raw_tensor(np.zeros((3, 4, 8, 9), np.float32), bad)
        with pytest.raises(VrelError):
            pipeline.run_predict(net, bad)

    def test_unknown_emit_flag(self, model_files):
        arch, weights, clip = model_files
        net = pipeline.load_network(arch, weights)
        with pytest.raises(VrelError, match="emit"):
            pipeline.run_explain(net, clip, emit=["bogus"])

    def test_explain_without_out_dir_writes_nothing(self, model_files):
        arch, weights, clip = model_files
        net = pipeline.load_network(arch, weights)
        result = pipeline.run_explain(net, clip)
        assert result["outputs"] == {}


class TestOutputCleanup:
    def test_failure_removes_created_directory(self, model_files, tmp_path, monkeypatch):
        arch, weights, clip = model_files
        net = pipeline.load_network(arch, weights)
        out = tmp_path / "fresh"

        def boom(*a, **k):
            raise OSError("disk full")

        monkeypatch.setattr(model_io, "save_heatmap_frames", boom)
        monkeypatch.setattr(pipeline.model_io, "save_heatmap_frames", boom)
        with pytest.raises(OSError):
            pipeline.run_explain(net, clip, out_dir=out)
        assert not out.exists()

    def test_failure_keeps_preexisting_directory(self, model_files, tmp_path, monkeypatch):
        arch, weights, clip = model_files
        net = pipeline.load_network(arch, weights)
        out = tmp_path / "existing"
        out.mkdir()
        keep = out / "keep.txt"
        keep.write_text("mine")

        calls = {"n": 0}
        real = model_io.write_relevance

        def fail_second(arr, path):
            calls["n"] += 1
            if calls["n"] >= 2:
                raise OSError("disk full")
            return real(arr, path)

        monkeypatch.setattr(pipeline.model_io, "write_relevance", fail_second)
        with pytest.raises(OSError):
            pipeline.run_decompose(net, clip, out_dir=out, emit=["raw"])
        assert keep.read_text() == "mine"
        assert not (out / "original.vrelv").exists()
        assert not (out / "spatial.vrelv").exists()
