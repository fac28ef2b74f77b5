"""Clip-level tracking driver: sample clips, associate within, merge between.

Clips of ``clip_size`` frames start every ``clip_interval`` frames (overlap
allowed, gaps not); each clip is associated into tracklets, matched against
the global track store, and merged.  With clip size and interval 1 and the
two-clip history this reduces exactly to a sequential frame-by-frame tracker;
that baseline is implemented here too and the equivalence is bitwise.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .core import Assignment, Detection, GlobalTrack, solve_assignment
from .inter_clip import (
    MANAGEMENT_STRATEGIES,
    MATCHERS,
    GlobalTrackStore,
    MatchConfig,
    _mean_embedding,
    match,
    merge,
)
from .intra_clip import Clip, associate_direction_free, associate_directional
from .metrics import EvalReport, Tracks, evaluate, tracks_from_global
from .summarizer import SummarizerWeights

INTRA_VARIANTS = ("directional", "direction_free")


@dataclass(frozen=True)
class PipelineConfig:
    clip_size: int = 10
    clip_interval: int = 5
    intra: str = "directional"
    inter: str = "temporal_average"
    management: str = "feature_bank"
    buffer_size: int = 30
    init_score: float = 0.5
    match_threshold: float = 0.5
    merge_threshold: float = 0.4
    iou_threshold: float = 0.5
    temperature: float = 0.1
    patience: int | None = None  # None: stay revivable for the whole clip
    momentum: float = 0.8
    weights_path: str | None = None

    def __post_init__(self):
        if self.clip_size < 1:
            raise ValueError("clip size must be >= 1")
        if not 1 <= self.clip_interval <= self.clip_size:
            raise ValueError("clip interval must lie in [1, clip size]; gapped clips are not supported")
        if self.intra not in INTRA_VARIANTS:
            raise ValueError(f"unknown intra variant {self.intra!r}")
        if self.inter not in MATCHERS:
            raise ValueError(f"unknown inter matcher {self.inter!r}")
        if self.management not in MANAGEMENT_STRATEGIES:
            raise ValueError(f"unknown management strategy {self.management!r}")
        for name in ("init_score", "match_threshold", "iou_threshold"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @staticmethod
    def high_fps(**overrides) -> "PipelineConfig":
        base = PipelineConfig(clip_size=10, clip_interval=5, buffer_size=30)
        return replace(base, **overrides)

    @staticmethod
    def low_fps(**overrides) -> "PipelineConfig":
        base = PipelineConfig(clip_size=6, clip_interval=3, buffer_size=10)
        return replace(base, **overrides)


def _associate_clip(clip: Clip, cfg: PipelineConfig):
    if cfg.intra == "directional":
        return associate_directional(
            clip,
            init_score=cfg.init_score,
            match_threshold=cfg.match_threshold,
            patience=cfg.patience,
            temperature=cfg.temperature,
        )
    return associate_direction_free(clip, merge_threshold=cfg.merge_threshold)


def run(
    detections: list[list[Detection]],
    cfg: PipelineConfig,
    weights: SummarizerWeights | None = None,
    on_clip_end=None,
) -> list[GlobalTrack]:
    """Track a whole detection stream; returns the store's tracks by id."""
    if cfg.inter == "clip_tracker" and weights is None:
        raise ValueError("clip_tracker matching requires summarizer weights")
    n = len(detections)
    store = GlobalTrackStore(
        buffer_size=cfg.buffer_size, management=cfg.management, momentum=cfg.momentum
    )
    if n == 0:
        return []

    processed_end = 0
    start = 0
    while start < n:
        end = min(start + cfg.clip_size, n)
        clip = Clip(start, end - 1, tuple(tuple(f) for f in detections[start:end]))
        tracklets = _associate_clip(clip, cfg)

        overlap = range(start, min(processed_end, end))
        if not store.tracks:
            assignment = Assignment.all_unmatched(0, len(tracklets))
        else:
            threshold = cfg.iou_threshold if cfg.inter == "iou_chain" else cfg.match_threshold
            assignment = match(
                store, tracklets, MatchConfig(cfg.inter, threshold), overlap, weights
            )
        merge(store, assignment, tracklets)

        processed_end = max(processed_end, end)
        if on_clip_end is not None:
            on_clip_end(store)
        if end == n:
            break
        start += cfg.clip_interval
    return store.ordered_tracks()


def frame_by_frame_baseline(
    detections: list[list[Detection]], cfg: PipelineConfig
) -> list[GlobalTrack]:
    """Sequential tracking-by-detection reference.

    Per frame: detections above init_score are matched to each track's most
    recent embedding by cosine similarity gated at match_threshold; leftovers
    open new tracks.  Arithmetic mirrors the clip pipeline's two-clip /
    temporal-average path exactly.
    """
    tracks: dict[int, GlobalTrack] = {}
    last_emb: dict[int, np.ndarray] = {}
    next_id = 1
    for frame_dets in detections:
        dets = [d for d in frame_dets if d.score >= cfg.init_score]
        ids = sorted(tracks)
        matched_cols: set[int] = set()
        if ids and dets:
            reps = [_mean_embedding([last_emb[i]]) for i in ids]
            det_reps = [_mean_embedding([d.embedding]) for d in dets]
            cost = np.array([[1.0 - float(np.dot(a, b)) for b in det_reps] for a in reps])
            assignment = solve_assignment(cost, 1.0 - cfg.match_threshold)
            for r, c in assignment.pairs:
                track = tracks[ids[r]]
                det = dets[c]
                track.entries.append(det)
                track.last_frame = det.frame
                last_emb[track.id] = det.embedding
                matched_cols.add(c)
        for c, det in enumerate(dets):
            if c in matched_cols:
                continue
            track = GlobalTrack(id=next_id, entries=[det], last_frame=det.frame)
            next_id += 1
            tracks[track.id] = track
            last_emb[track.id] = det.embedding
    return [tracks[i] for i in sorted(tracks)]


def sweep(
    detections: list[list[Detection]],
    gt_tracks: Tracks,
    grid: list[tuple[int, int]],
    base_cfg: PipelineConfig,
    weights: SummarizerWeights | None = None,
    inters: list[str] | None = None,
) -> list[dict]:
    """Run each (clip size, clip interval) x matcher cell and score it.

    Per-cell failures do not abort the sweep; the row carries the error text.
    """
    rows: list[dict] = []
    for clip_size, clip_interval in grid:
        for inter in inters or [base_cfg.inter]:
            cell = {
                "clip_size": clip_size,
                "clip_interval": clip_interval,
                "intra": base_cfg.intra,
                "inter": inter,
                "management": base_cfg.management,
            }
            try:
                cfg = replace(
                    base_cfg, clip_size=clip_size, clip_interval=clip_interval, inter=inter
                )
                tracks = run(detections, cfg, weights)
                report = evaluate(gt_tracks, tracks_from_global(tracks), base_cfg.iou_threshold)
                cell.update(status="ok", **asdict(report))
            except ValueError as err:
                cell.update(status=f"error: {err}")
            rows.append(cell)
    return rows


SWEEP_COLUMNS = [
    "clip_size", "clip_interval", "intra", "inter", "management", "status",
    *[f.name for f in EvalReport.__dataclass_fields__.values()],
]
