"""Shared predict / explain / decompose runners.

The CLI and the HTTP service both drive these. Runners are pure functions of
(bound network, normalization mean, request parameters); any outputs are
written under a caller-chosen directory, and partially written outputs are
removed again if a run fails, so reruns stay idempotent.
"""

from __future__ import annotations

import json
import logging
import shutil
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import model_io
from .discriminative import discriminative_decompose
from .errors import VrelError
from .network import Network, bind_weights, forward, load_architecture
from .relevance import RelevanceConfig, explain

log = logging.getLogger("vrel")

EMIT_CHOICES = ("heatmaps", "raw", "predictions")
DEFAULT_EMIT = ("heatmaps", "predictions")


class OutputSession:
    """Tracks everything written below an output directory and removes it on
    failure (including the directory itself if this run created it)."""

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)
        self._created_root = not self.out_dir.exists()
        self._paths: list[Path] = []

    def __enter__(self) -> "OutputSession":
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self

    def track(self, path: Path) -> Path:
        self._paths.append(path)
        return path

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            return False
        for p in reversed(self._paths):
            if p.is_dir():
                shutil.rmtree(p, ignore_errors=True)
            else:
                p.unlink(missing_ok=True)
        if self._created_root:
            shutil.rmtree(self.out_dir, ignore_errors=True)
        return False


def load_network(arch_path: str | Path, weights_path: str | Path) -> Network:
    arch_path, weights_path = Path(arch_path), Path(weights_path)
    if not arch_path.exists():
        raise FileNotFoundError(f"architecture config not found: {arch_path}")
    if not weights_path.exists():
        raise FileNotFoundError(f"weights file not found: {weights_path}")
    net = load_architecture(arch_path.read_text())
    return bind_weights(net, model_io.load_weight_container(weights_path))


def resolve_mean(mean: Sequence[float] | None, channels: int) -> np.ndarray:
    if mean is None:
        mean = [0.0]
    arr = np.asarray(list(mean), dtype=np.float32)
    if arr.size == 1:
        arr = np.full(channels, float(arr[0]), dtype=np.float32)
    if arr.size != channels:
        raise VrelError(f"normalization mean needs 1 or {channels} values, got {arr.size}")
    return arr


def make_config(channels: int, alpha: float = 1.0, beta: float = 0.0, eps: float = 1e-9,
                target: int | str = "argmax",
                mean: Sequence[float] | None = None) -> tuple[RelevanceConfig, np.ndarray]:
    """Relevance config with input bounds set to the post-normalization images
    of pixel values 0 and 255."""
    mean_arr = resolve_mean(mean, channels)
    low, high = model_io.bounds_after_normalization(mean_arr)
    cfg = RelevanceConfig(alpha=alpha, beta=beta, eps=eps,
                          input_low=tuple(float(v) for v in low),
                          input_high=tuple(float(v) for v in high),
                          target=target)
    return cfg, mean_arr


def load_input(net: Network, input_path: str | Path, mean: np.ndarray):
    """Read a clip, validate it against the network geometry, normalize."""
    clip = model_io.read_video(input_path, expected_frames=net.input_shape[1])
    if clip.tensor.shape != net.input_shape:
        raise VrelError(f"clip shape {clip.tensor.shape} does not match network input "
                        f"{net.input_shape}")
    return model_io.normalize_clip(clip.tensor, mean)


def _normalize_emit(emit: Iterable[str] | None) -> tuple[str, ...]:
    if emit is None:
        return DEFAULT_EMIT
    emit = tuple(emit)
    for e in emit:
        if e not in EMIT_CHOICES:
            raise VrelError(f"unknown emit flag {e!r}, expected subset of {EMIT_CHOICES}")
    return emit


def run_predict(net: Network, input_path: str | Path, mean: Sequence[float] | None = None,
                top: int = 5) -> dict:
    """Top-k classes with logits, descending."""
    _, mean_arr = make_config(net.input_shape[0], mean=mean)
    x = load_input(net, input_path, mean_arr)
    logits, _ = forward(net, x)
    order = np.argsort(-logits, kind="stable")[:max(1, top)]
    return {"predictions": [{"class": int(i), "logit": float(logits[i])} for i in order]}


def run_explain(net: Network, input_path: str | Path, out_dir: str | Path | None = None,
                alpha: float = 1.0, beta: float = 0.0, eps: float = 1e-9,
                target: int | str = "argmax", mean: Sequence[float] | None = None,
                emit: Iterable[str] | None = None) -> dict:
    emit = _normalize_emit(emit)
    cfg, mean_arr = make_config(net.input_shape[0], alpha, beta, eps, target, mean)
    x = load_input(net, input_path, mean_arr)
    rmap = explain(net, x, cfg)
    result = {
        "target_class": rmap.target_class,
        "target_logit": rmap.target_logit,
        "relevance_sum": float(np.sum(rmap.tensor, dtype=np.float64)),
        "outputs": {},
    }
    if out_dir is not None:
        with OutputSession(out_dir) as session:
            if "heatmaps" in emit:
                d = session.track(session.out_dir / "heatmaps")
                model_io.save_heatmap_frames(rmap.tensor, d)
                result["outputs"]["heatmaps"] = str(d)
            if "raw" in emit:
                p = session.track(session.out_dir / "relevance.vrelv")
                model_io.write_relevance(rmap.tensor, p)
                result["outputs"]["raw"] = str(p)
    return result


def run_decompose(net: Network, input_path: str | Path, out_dir: str | Path | None = None,
                  alpha: float = 1.0, beta: float = 0.0, eps: float = 1e-9,
                  target: int | str = "argmax", mean: Sequence[float] | None = None,
                  emit: Iterable[str] | None = None) -> dict:
    emit = _normalize_emit(emit)
    cfg, mean_arr = make_config(net.input_shape[0], alpha, beta, eps, target, mean)
    x = load_input(net, input_path, mean_arr)
    triple = discriminative_decompose(net, x, cfg)
    frames = net.input_shape[1]
    maps = {"original": triple.original, "spatial": triple.spatial, "temporal": triple.temporal}
    result = {
        "target_class": triple.target_class,
        "target_logit": triple.original.target_logit,
        "per_frame_predictions": list(triple.per_frame_predictions),
        "abs_sums": {name: float(np.sum(np.abs(m.tensor), dtype=np.float64))
                     for name, m in maps.items()},
        "explanation_passes": frames + 1,
        "outputs": {},
    }
    if out_dir is not None:
        with OutputSession(out_dir) as session:
            if "heatmaps" in emit:
                for name, m in maps.items():
                    d = session.track(session.out_dir / name)
                    model_io.save_heatmap_frames(m.tensor, d)
                    result["outputs"][f"heatmaps_{name}"] = str(d)
            if "raw" in emit:
                for name, m in maps.items():
                    p = session.track(session.out_dir / f"{name}.vrelv")
                    model_io.write_relevance(m.tensor, p)
                    result["outputs"][f"raw_{name}"] = str(p)
            if "predictions" in emit:
                p = session.track(session.out_dir / "predictions.json")
                p.write_text(json.dumps({
                    "target_class": triple.target_class,
                    "per_frame_predictions": list(triple.per_frame_predictions),
                }, indent=2) + "\n")
                result["outputs"]["predictions"] = str(p)
    log.info("decomposition finished: %d explanation passes", frames + 1)
    return result
