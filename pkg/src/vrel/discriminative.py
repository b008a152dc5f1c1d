"""Discriminative decomposition of a video explanation.

Motion is removed from the input by replacing the whole clip with one of its
frames repeated across the temporal extent (a freeze frame, rather than zero
padding, which would fake a hard cut). Explaining every freeze frame for the
clip's own target class and taking slice t from the t-th result builds the
spatial explanation; subtracting it from the full explanation leaves
relevance that is attributable to motion.

Costs T extra forward+backward passes for a T-frame clip. The spatial and
temporal sums are not constrained to add up to anything: the split is an
approximation, and the mismatch is expected.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .network import Network
from .relevance import RelevanceConfig, RelevanceMap, explain
from .tensor import Tensor, as_tensor, freeze

log = logging.getLogger("vrel")

THREADS_ENV = "VREL_THREADS"


@dataclass(frozen=True)
class ExplanationTriple:
    """Original, spatial and temporal relevance for one clip.

    temporal = original - spatial elementwise, by construction, so
    spatial + temporal reconstructs the original. ``per_frame_predictions``
    holds the argmax class of each freeze-frame input (metadata only; the
    explained class is always the original clip's target).
    """
    original: RelevanceMap
    spatial: RelevanceMap
    temporal: RelevanceMap
    target_class: int
    per_frame_predictions: tuple[int, ...]


def worker_count() -> int:
    """Per-frame parallelism cap from the VREL_THREADS environment variable."""
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def freeze_frame(video: Tensor, t: int) -> Tensor:
    """Repeat temporal slice ``t`` across the whole clip."""
    if video.ndim != 4:
        raise ValueError(f"expected a (C,T,H,W) clip, got shape {video.shape}")
    frames = video.shape[1]
    if not 0 <= t < frames:
        raise IndexError(f"frame index {t} out of range for {frames} frames")
    out = np.broadcast_to(video[:, t:t + 1], video.shape)
    return freeze(np.ascontiguousarray(out))


def spatial_relevance(net: Network, video: np.ndarray, cfg: RelevanceConfig,
                      target: int) -> tuple[RelevanceMap, tuple[int, ...]]:
    """Explain each frame's freeze-frame input for the fixed target class.

    Frame t of the returned map is temporal slice t of the t-th freeze-frame
    explanation. The freeze-frame argmax predictions are recorded alongside;
    they do not influence the seeding.
    """
    clip = as_tensor(video)
    frames = clip.shape[1]
    frame_cfg = cfg.with_target(target)

    def one(t: int) -> RelevanceMap:
        log.info("explanation pass: freeze frame %d/%d", t + 1, frames)
        return explain(net, freeze_frame(clip, t), frame_cfg)

    workers = min(worker_count(), frames)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            maps = list(pool.map(one, range(frames)))
    else:
        maps = [one(t) for t in range(frames)]

    spatial = np.empty(clip.shape, dtype=np.float32)
    preds = []
    for t, m in enumerate(maps):
        spatial[:, t] = m.tensor[:, t]
        preds.append(int(np.argmax(m.logits)))
    return (RelevanceMap(tensor=freeze(spatial), target_class=target),
            tuple(preds))


def discriminative_decompose(net: Network, video: np.ndarray,
                             cfg: RelevanceConfig) -> ExplanationTriple:
    """Full decomposition: explain the clip, explain its freeze frames, subtract.

    Performs exactly T + 1 explanation passes for a T-frame clip. The stored
    original is re-rounded through spatial + temporal so the reconstruction
    identity holds bitwise; that can move a voxel by at most one ulp of the
    subtraction (and not at all when the clip is static), which is far below
    every other tolerance in play.
    """
    log.info("explanation pass: original clip")
    raw = explain(net, video, cfg)
    spatial, preds = spatial_relevance(net, video, cfg, raw.target_class)
    temporal = raw.tensor - spatial.tensor
    original = replace(raw, tensor=freeze(spatial.tensor + temporal))
    return ExplanationTriple(
        original=original,
        spatial=spatial,
        temporal=RelevanceMap(tensor=freeze(temporal), target_class=raw.target_class),
        target_class=raw.target_class,
        per_frame_predictions=preds,
    )
