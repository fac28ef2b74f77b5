"""Domain types, geometry and similarity primitives, and the assignment solver.

Embeddings are plain 1-D float64 numpy arrays throughout the package; the
helpers here validate them at construction boundaries.  All operations are
pure; values are immutable once built and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

Embedding = np.ndarray


def as_embedding(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"embedding must be 1-D, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise ValueError("embedding entries must be finite")
    return v


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box, top-left origin, positive extent."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"box {name} must be finite")
        if self.w <= 0 or self.h <= 0:
            raise ValueError("box width and height must be positive")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True, eq=False)
class Detection:
    """One frame-level observation: box, confidence, appearance embedding."""

    frame: int
    box: BoundingBox
    score: float
    embedding: Embedding
    source_index: int

    def __post_init__(self):
        if self.frame < 0:
            raise ValueError("frame index must be >= 0")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must lie in [0, 1]")
        object.__setattr__(self, "embedding", as_embedding(self.embedding))


@dataclass(frozen=True, eq=False)
class Tracklet:
    """Clip-local track: ordered detections of one identity within one clip."""

    local_id: int
    entries: tuple[Detection, ...]
    clip_range: tuple[int, int]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("tracklet must be nonempty")
        frames = [d.frame for d in self.entries]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("tracklet frames must be strictly increasing")
        lo, hi = self.clip_range
        if frames[0] < lo or frames[-1] > hi:
            raise ValueError("tracklet entries must lie within the clip range")

    def frames(self) -> list[int]:
        return [d.frame for d in self.entries]

    def embeddings(self) -> np.ndarray:
        return np.stack([d.embedding for d in self.entries])


@dataclass(eq=False)
class GlobalTrack:
    """Video-level track with a bounded buffer of recent embeddings.

    ``embedding_buffer`` holds (frame, embedding) for the most recent frames;
    ``last_added`` holds the embeddings appended by the most recent merge that
    added at least one new frame (the two-clip history view).
    """

    id: int
    entries: list[Detection] = field(default_factory=list)
    embedding_buffer: list[tuple[int, Embedding]] = field(default_factory=list)
    last_frame: int = -1
    last_added: list[Embedding] = field(default_factory=list)

    def frames(self) -> list[int]:
        return [d.frame for d in self.entries]

    def box_at(self, frame: int) -> BoundingBox | None:
        for d in self.entries:
            if d.frame == frame:
                return d.box
        return None


@dataclass(frozen=True)
class Assignment:
    """Partial bipartite matching: matched pairs plus the leftovers of each side."""

    pairs: tuple[tuple[int, int], ...]
    unmatched_rows: tuple[int, ...]
    unmatched_cols: tuple[int, ...]

    @staticmethod
    def all_unmatched(n_rows: int, n_cols: int) -> "Assignment":
        return Assignment((), tuple(range(n_rows)), tuple(range(n_cols)))

    def row_to_col(self) -> dict[int, int]:
        return dict(self.pairs)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes, in [0, 1].

    Areas are computed from the rounded edge coordinates so that
    iou(a, a) == 1.0 holds exactly.
    """
    ax2, ay2, bx2, by2 = a.x2, a.y2, b.x2, b.y2
    iw = min(ax2, bx2) - max(a.x, b.x)
    ih = min(ay2, by2) - max(a.y, b.y)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    area_a = (ax2 - a.x) * (ay2 - a.y)
    area_b = (bx2 - b.x) * (by2 - b.y)
    return inter / (area_a + area_b - inter)


def cosine_similarity(a: Embedding, b: Embedding) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm embedding")
    return float(np.dot(a, b)) / (na * nb)


def bisoftmax_affinity(
    queries: Sequence[Embedding], refs: Sequence[Embedding], temperature: float = 0.1
) -> np.ndarray:
    """Bi-directional softmax affinity between query and reference embeddings.

    Scaled dot products are softmax-normalized once over the references (per
    query) and once over the queries (per reference); the affinity is the mean
    of the two, so every entry lies in (0, 1].
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    q = np.stack([np.asarray(e, dtype=np.float64) for e in queries]) if len(queries) else None
    r = np.stack([np.asarray(e, dtype=np.float64) for e in refs]) if len(refs) else None
    if q is None or r is None:
        raise ValueError("bisoftmax affinity requires nonempty queries and refs")
    if q.shape[1] != r.shape[1]:
        raise ValueError("query/ref dimension mismatch")
    scores = q @ r.T / temperature
    row = np.exp(scores - scores.max(axis=1, keepdims=True))
    row /= row.sum(axis=1, keepdims=True)
    col = np.exp(scores - scores.max(axis=0, keepdims=True))
    col /= col.sum(axis=0, keepdims=True)
    return 0.5 * (row + col)


# --- assignment solver -------------------------------------------------------
#
# Pairs with cost > max_cost (or non-finite cost) are forbidden.  Among
# matchings over allowed pairs the solver maximizes the number of matched
# pairs, then minimizes total cost, then picks the lexicographically smallest
# sorted (row, col) pair list.  Every float is a dyadic rational, so the whole
# objective is encoded into exact integers: primary costs are scaled to a
# common power-of-two denominator and combined with per-pair tie-break bits.
# The result is bit-reproducible across platforms and agrees with exhaustive
# search.


def _exact_int_costs(cost: np.ndarray, allowed: np.ndarray) -> list[list[int]]:
    fracs = {}
    max_shift = 0
    for i, j in zip(*np.nonzero(allowed)):
        f = Fraction(float(cost[i, j]))
        fracs[(int(i), int(j))] = f
        max_shift = max(max_shift, f.denominator.bit_length() - 1)
    ints = [[0] * cost.shape[1] for _ in range(cost.shape[0])]
    for (i, j), f in fracs.items():
        shift = max_shift - (f.denominator.bit_length() - 1)
        ints[i][j] = f.numerator << shift
    return ints


def solve_assignment(cost, max_cost: float) -> Assignment:
    """Gated minimum-cost bipartite matching with exact deterministic tie-breaks."""
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    n, m = c.shape
    if n == 0 or m == 0:
        return Assignment.all_unmatched(n, m)

    allowed = np.isfinite(c) & (c <= max_cost)
    if not allowed.any():
        return Assignment.all_unmatched(n, m)

    ints = _exact_int_costs(c, allowed)
    pmin = min(ints[i][j] for i, j in zip(*np.nonzero(allowed)))
    pmax = 0
    for i, j in zip(*np.nonzero(allowed)):
        ints[i][j] -= pmin
        pmax = max(pmax, ints[i][j])

    nm = n * m
    base = 1 << nm
    size = max(n, m)
    # One forbidden slot must outweigh any achievable allowed total.
    forbid = (size * (pmax + 1) + size + 1) * base

    combined = [[forbid] * size for _ in range(size)]
    for i in range(n):
        for j in range(m):
            if allowed[i, j]:
                combined[i][j] = ints[i][j] * base + base - (1 << (nm - 1 - (i * m + j)))

    col_to_row = _jv_square(combined, size)

    pairs = []
    for j in range(m):
        i = col_to_row[j]
        if i < n and allowed[i, j]:
            pairs.append((i, j))
    pairs.sort()
    matched_rows = {i for i, _ in pairs}
    matched_cols = {j for _, j in pairs}
    return Assignment(
        tuple(pairs),
        tuple(i for i in range(n) if i not in matched_rows),
        tuple(j for j in range(m) if j not in matched_cols),
    )


def _jv_square(a: list[list[int]], n: int) -> list[int]:
    """Shortest-augmenting-path assignment on a dense square integer matrix.

    Returns col -> row of an optimal perfect matching.  Potentials and path
    costs stay integers, so every comparison is exact.
    """
    inf = math.inf
    u = [0] * (n + 1)
    v = [0] * (n + 1)
    p = [0] * (n + 1)  # p[j]: row matched to column j, 1-based; 0 = free
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            row = a[i0 - 1]
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = row[j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    return [p[j] - 1 for j in range(1, n + 1)]
