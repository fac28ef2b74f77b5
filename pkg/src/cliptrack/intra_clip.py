"""Association of detections within a single clip into tracklets.

Two interchangeable matchers:

* directional -- frames are swept left to right, detections are assigned to
  open tracks by bi-softmax affinity plus gated minimum-cost matching, and
  briefly lost tracks are kept revivable for a bounded number of frames.
* direction-free -- frame order is ignored and detections are merged by
  single-linkage agglomerative clustering driven by a lazily invalidated
  min-heap, with same-frame pairs infinitely far apart and frame-overlapping
  clusters unmergeable.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Detection,
    Embedding,
    Tracklet,
    bisoftmax_affinity,
    cosine_similarity,
    solve_assignment,
)


@dataclass(frozen=True, eq=False)
class Clip:
    """A contiguous window of frames and their detections."""

    start_frame: int
    end_frame: int
    detections_per_frame: tuple[tuple[Detection, ...], ...]

    def __post_init__(self):
        if self.end_frame < self.start_frame:
            raise ValueError("clip end before start")
        if len(self.detections_per_frame) != self.end_frame - self.start_frame + 1:
            raise ValueError("one detection list per frame required")

    def __len__(self) -> int:
        return self.end_frame - self.start_frame + 1

    @property
    def detections(self) -> list[Detection]:
        return [d for frame in self.detections_per_frame for d in frame]


@dataclass
class RebirthMemory:
    """Lost tracks kept revivable: local id -> (last embedding, last frame, misses)."""

    patience: int
    lost: dict[int, tuple[Embedding, int, int]] = field(default_factory=dict)


@dataclass
class _OpenTrack:
    local_id: int
    entries: list[Detection]
    embedding: Embedding
    misses: int = 0


def associate_directional(
    clip: Clip,
    init_score: float = 0.5,
    match_threshold: float = 0.5,
    patience: int | None = None,
    temperature: float = 0.1,
) -> list[Tracklet]:
    """Sweep the clip left to right, matching detections to open tracks.

    Only detections with score >= init_score take part.  A track missing from
    more than ``patience`` consecutive frames is finalized and can no longer be
    revived; ``patience`` defaults to the clip length, i.e. tracks stay
    revivable for the whole clip.
    """
    if patience is None:
        patience = len(clip)
    open_tracks: list[_OpenTrack] = []
    done: list[_OpenTrack] = []
    memory = RebirthMemory(patience=patience)
    next_local = 0

    for offset, frame_dets in enumerate(clip.detections_per_frame):
        frame = clip.start_frame + offset
        dets = [d for d in frame_dets if d.score >= init_score]

        matched_tracks: set[int] = set()
        matched_dets: set[int] = set()
        if open_tracks and dets:
            affinity = bisoftmax_affinity(
                [t.embedding for t in open_tracks],
                [d.embedding for d in dets],
                temperature,
            )
            assignment = solve_assignment(1.0 - affinity, 1.0 - match_threshold)
            for r, c in assignment.pairs:
                track = open_tracks[r]
                det = dets[c]
                track.entries.append(det)
                track.embedding = det.embedding
                track.misses = 0
                memory.lost.pop(track.local_id, None)
                matched_tracks.add(r)
                matched_dets.add(c)

        survivors = []
        for r, track in enumerate(open_tracks):
            if r in matched_tracks:
                survivors.append(track)
                continue
            track.misses += 1
            if track.misses > patience:
                memory.lost.pop(track.local_id, None)
                done.append(track)
            else:
                memory.lost[track.local_id] = (track.embedding, track.entries[-1].frame, track.misses)
                survivors.append(track)
        open_tracks = survivors

        for c, det in enumerate(dets):
            if c in matched_dets:
                continue
            open_tracks.append(_OpenTrack(next_local, [det], det.embedding))
            next_local += 1

    done.extend(open_tracks)
    done.sort(key=lambda t: t.local_id)
    span = (clip.start_frame, clip.end_frame)
    return [Tracklet(t.local_id, tuple(t.entries), span) for t in done]


@dataclass
class _Cluster:
    members: list[int]
    frames: set[int]


@dataclass
class ClusterState:
    """Mutable agglomeration state: live clusters plus the candidate-pair heap.

    Heap entries referencing merged-away cluster ids are skipped on pop
    (lazy invalidation) instead of being deleted in place.
    """

    clusters: dict[int, _Cluster] = field(default_factory=dict)
    distances: dict[tuple[int, int], float] = field(default_factory=dict)
    heap: list[tuple[float, int, int]] = field(default_factory=list)
    next_id: int = 0


def associate_direction_free(clip: Clip, merge_threshold: float = 0.4) -> list[Tracklet]:
    """Cluster the clip's detections into tracklets ignoring frame order.

    Single linkage over embedding distances (1 - cosine similarity); merging
    stops once the smallest remaining inter-cluster distance exceeds the
    threshold.  Ties break on (distance, lower cluster id pair).
    """
    dets = clip.detections
    n = len(dets)
    if n == 0:
        return []

    base = np.full((n, n), math.inf)
    for i in range(n):
        for j in range(i + 1, n):
            if dets[i].frame != dets[j].frame:
                d = 1.0 - cosine_similarity(dets[i].embedding, dets[j].embedding)
                base[i, j] = base[j, i] = d

    state = ClusterState(next_id=n)
    for i in range(n):
        state.clusters[i] = _Cluster([i], {dets[i].frame})
    for i in range(n):
        for j in range(i + 1, n):
            if math.isfinite(base[i, j]):
                state.distances[(i, j)] = float(base[i, j])
                heapq.heappush(state.heap, (float(base[i, j]), i, j))

    while state.heap:
        d, a, b = heapq.heappop(state.heap)
        if a not in state.clusters or b not in state.clusters:
            continue
        if d > merge_threshold:
            break
        ca = state.clusters.pop(a)
        cb = state.clusters.pop(b)
        new_id = state.next_id
        state.next_id += 1
        merged = _Cluster(ca.members + cb.members, ca.frames | cb.frames)
        for other_id, other in state.clusters.items():
            if merged.frames & other.frames:
                continue
            da = state.distances[tuple(sorted((a, other_id)))]
            db = state.distances[tuple(sorted((b, other_id)))]
            nd = min(da, db)
            state.distances[(other_id, new_id)] = nd
            heapq.heappush(state.heap, (nd, other_id, new_id))
        state.clusters[new_id] = merged

    groups = sorted(state.clusters.values(), key=lambda c: min(c.members))
    span = (clip.start_frame, clip.end_frame)
    tracklets = []
    for local_id, cluster in enumerate(groups):
        entries = tuple(sorted((dets[i] for i in cluster.members), key=lambda d: d.frame))
        tracklets.append(Tracklet(local_id, entries, span))
    return tracklets
