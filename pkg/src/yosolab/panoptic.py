"""Panoptic merging, PQ/SQ/RQ evaluation, and minimum-cost assignment."""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .tensor import ShapeError

VOID = 0xFFFFFFFF


class SegFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ClassTable:
    num_classes: int
    stuff: frozenset[int] = frozenset()

    def __post_init__(self):
        bad = [c for c in self.stuff if not 0 <= c < self.num_classes]
        if bad:
            raise ValueError(f"stuff ids {bad} outside 0..{self.num_classes - 1}")

    def is_thing(self, cls: int) -> bool:
        return cls not in self.stuff

    def kind(self, cls: int) -> str:
        return "stuff" if cls in self.stuff else "thing"


@dataclass
class PanopticMap:
    class_ids: np.ndarray  # (h, w) uint32, VOID for unassigned
    instance_ids: np.ndarray  # (h, w) uint32, 0 for stuff and void

    def __post_init__(self):
        self.class_ids = np.asarray(self.class_ids, dtype=np.uint32)
        self.instance_ids = np.asarray(self.instance_ids, dtype=np.uint32)
        if self.class_ids.ndim != 2 or self.class_ids.shape != self.instance_ids.shape:
            raise ShapeError("class and instance grids must be 2-D and equal in shape")

    @property
    def shape(self) -> tuple[int, int]:
        return self.class_ids.shape

    @classmethod
    def void(cls, h: int, w: int) -> "PanopticMap":
        return cls(np.full((h, w), VOID, np.uint32), np.zeros((h, w), np.uint32))

    def segments(self) -> dict[tuple[int, int], int]:
        """(class_id, instance_id) -> pixel count, VOID excluded."""
        keys = _keys(self)
        keys = keys[self.class_ids != VOID]
        uniq, counts = np.unique(keys, return_counts=True)
        return {(int(k >> 32), int(k & 0xFFFFFFFF)): int(c) for k, c in zip(uniq, counts)}

    def check_partition(self, classes: ClassTable) -> None:
        """Raise if the map breaks the panoptic partition rules."""
        void = self.class_ids == VOID
        if np.any(self.instance_ids[void] != 0):
            raise ValueError("void pixels must carry instance id 0")
        live = self.class_ids[~void]
        if live.size and live.max() >= classes.num_classes:
            raise ValueError("class id out of range")
        stuff = np.isin(self.class_ids, list(classes.stuff)) & ~void
        if np.any(self.instance_ids[stuff] != 0):
            raise ValueError("stuff pixels must carry instance id 0")
        things = ~void & ~stuff
        ids = np.unique(self.instance_ids[things])
        if ids.size and (ids[0] != 1 or not np.array_equal(ids, np.arange(1, ids.size + 1))):
            raise ValueError(f"thing instance ids are not contiguous from 1: {ids.tolist()}")
        for iid in ids:
            if np.unique(self.class_ids[things & (self.instance_ids == iid)]).size != 1:
                raise ValueError(f"thing instance {iid} spans several classes")


def _keys(m: PanopticMap) -> np.ndarray:
    return (m.class_ids.astype(np.uint64) << np.uint64(32)) | m.instance_ids.astype(np.uint64)


# --------------------------------------------------------------------------
# merge


def merge(class_probs: np.ndarray, binary_masks: np.ndarray, classes: ClassTable, threshold: float = 0.5) -> PanopticMap:
    """Merge per-prediction masks into one panoptic map.

    Predictions whose top class probability is below ``threshold`` are
    dropped. Each pixel goes to the covering prediction with the highest top
    probability (lowest index on ties). Stuff predictions of one class share
    a segment with instance id 0; thing predictions that win at least one
    pixel get ids 1, 2, ... in prediction order. Uncovered pixels are VOID.
    """
    n, h, w = binary_masks.shape
    if class_probs.shape[0] != n:
        raise ShapeError(f"{class_probs.shape[0]} class rows for {n} masks")
    if class_probs.shape[1] != classes.num_classes:
        raise ShapeError(f"class_probs has {class_probs.shape[1]} columns, table has {classes.num_classes}")
    labels = np.argmax(class_probs, axis=1)
    scores = class_probs[np.arange(n), labels].astype(np.float64)
    keep = scores >= threshold
    score_map = np.where(keep[:, None, None] & (binary_masks > 0), scores[:, None, None], -np.inf)
    winner = np.argmax(score_map, axis=0) if n else np.zeros((h, w), np.int64)
    covered = np.isfinite(np.max(score_map, axis=0)) if n else np.zeros((h, w), bool)

    out = PanopticMap.void(h, w)
    next_id = 1
    for i in range(n):
        region = covered & (winner == i)
        if not region.any():
            continue
        cls = int(labels[i])
        out.class_ids[region] = cls
        if classes.is_thing(cls):
            out.instance_ids[region] = next_id
            next_id += 1
    return out


def merge_output(out, classes: ClassTable, threshold: float = 0.5) -> PanopticMap:
    """:func:`merge` applied to a decoder output."""
    return merge(out.class_probs, out.binary, classes, threshold)


# --------------------------------------------------------------------------
# PQ


@dataclass
class ClassPq:
    kind: str
    tp: int = 0
    fp: int = 0
    fn: int = 0
    # exact rational sum, so the result cannot depend on match order
    iou_sum: Fraction = Fraction(0)

    @property
    def present(self) -> bool:
        return self.tp + self.fp + self.fn > 0

    @property
    def _denom(self) -> Fraction:
        return Fraction(2 * self.tp + self.fp + self.fn, 2)

    @property
    def rq(self) -> float:
        return float(self.tp / self._denom) if self.present else 0.0

    @property
    def sq(self) -> float:
        return float(self.iou_sum / self.tp) if self.tp else 0.0

    @property
    def pq(self) -> float:
        return float(self.iou_sum / self._denom) if self.present else 0.0


@dataclass
class PqReport:
    per_class: dict[int, ClassPq] = field(default_factory=dict)

    def _mean(self, attr: str, kind: str | None = None) -> float:
        vals = [getattr(c, attr) for c in self.per_class.values() if c.present and kind in (None, c.kind)]
        return float(np.mean(vals)) if vals else 0.0

    @property
    def pq(self) -> float:
        return self._mean("pq")

    @property
    def sq(self) -> float:
        return self._mean("sq")

    @property
    def rq(self) -> float:
        return self._mean("rq")

    def summary(self, kind: str | None = None) -> dict:
        present = [c for c in self.per_class.values() if c.present and kind in (None, c.kind)]
        return {
            "pq": self._mean("pq", kind),
            "sq": self._mean("sq", kind),
            "rq": self._mean("rq", kind),
            "n": len(present),
        }

    def to_dict(self) -> dict:
        return {
            "all": self.summary(),
            "things": self.summary("thing"),
            "stuff": self.summary("stuff"),
            "tp": sum(c.tp for c in self.per_class.values()),
            "fp": sum(c.fp for c in self.per_class.values()),
            "fn": sum(c.fn for c in self.per_class.values()),
            "per_class": {
                str(k): {"kind": c.kind, "pq": c.pq, "sq": c.sq, "rq": c.rq, "tp": c.tp, "fp": c.fp, "fn": c.fn}
                for k, c in sorted(self.per_class.items())
                if c.present
            },
        }


def pq_evaluate(pred: PanopticMap, gt: PanopticMap, classes: ClassTable) -> PqReport:
    """Panoptic quality with IoU > 0.5 matching.

    Prediction pixels on gt VOID are removed from the IoU union, and an
    unmatched prediction that lies mostly (> 50%) on gt VOID is not an FP.
    """
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    report = PqReport({c: ClassPq(classes.kind(c)) for c in range(classes.num_classes)})
    gt_segs = gt.segments()
    pred_segs = pred.segments()
    for cls, _ in list(gt_segs) + list(pred_segs):
        if cls >= classes.num_classes:
            raise ValueError(f"class id {cls} outside table of {classes.num_classes}")

    gt_void = gt.class_ids == VOID
    pk = _keys(pred)
    pred_live = pred.class_ids != VOID
    void_hits = dict(zip(*_count(pk[pred_live & gt_void])))
    both = pred_live & ~gt_void
    pair_keys = np.stack([_keys(gt)[both], pk[both]], axis=1)
    inter: dict[tuple[int, int], int] = {}
    if pair_keys.size:
        uniq, counts = np.unique(pair_keys, axis=0, return_counts=True)
        inter = {(int(g), int(p)): int(c) for (g, p), c in zip(uniq, counts)}

    def unpack(k):
        return (k >> 32, k & 0xFFFFFFFF)

    matched_gt, matched_pred = set(), set()
    for (gk, pk_), n_inter in sorted(inter.items()):
        g, p = unpack(gk), unpack(pk_)
        if g[0] != p[0]:
            continue
        union = pred_segs[p] + gt_segs[g] - n_inter - void_hits.get(pk_, 0)
        iou = Fraction(n_inter, union)
        if iou > 0.5:
            report.per_class[g[0]].tp += 1
            report.per_class[g[0]].iou_sum += iou
            matched_gt.add(g)
            matched_pred.add(p)
    for g in gt_segs:
        if g not in matched_gt:
            report.per_class[g[0]].fn += 1
    for p, area in pred_segs.items():
        if p in matched_pred:
            continue
        key = (p[0] << 32) | p[1]
        if void_hits.get(key, 0) / area > 0.5:
            continue
        report.per_class[p[0]].fp += 1
    return report


def _count(keys: np.ndarray):
    uniq, counts = np.unique(keys, return_counts=True)
    return [int(k) for k in uniq], [int(c) for c in counts]


# --------------------------------------------------------------------------
# .seg files


def write_seg(path, m: PanopticMap, classes: ClassTable) -> Path:
    path = Path(path)
    h, w = m.shape
    header = json.dumps({"h": h, "w": w, "l": classes.num_classes, "stuff": sorted(classes.stuff)})
    body = np.stack([m.class_ids, m.instance_ids], axis=-1).astype("<u4").tobytes()
    path.write_bytes(header.encode() + b"\n" + body)
    return path


def read_seg(path) -> tuple[PanopticMap, ClassTable]:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise SegFormatError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:nl])
        h, w, l = int(header["h"]), int(header["w"]), int(header["l"])
        stuff = frozenset(int(s) for s in header.get("stuff", []))
    except (ValueError, KeyError, TypeError) as exc:
        raise SegFormatError(f"{path}: bad header: {exc}") from exc
    body = raw[nl + 1 :]
    if len(body) != h * w * 8:
        raise SegFormatError(f"{path}: expected {h * w * 8} payload bytes, found {len(body)}")
    pairs = np.frombuffer(body, dtype="<u4").reshape(h, w, 2)
    return PanopticMap(pairs[..., 0].copy(), pairs[..., 1].copy()), ClassTable(l, stuff)


# --------------------------------------------------------------------------
# assignment


def _solve_square(c: np.ndarray):
    """Shortest-augmenting-path Hungarian method on a square matrix.

    Returns (row -> col assignment, row potentials, column potentials).
    """
    n = c.shape[0]
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)  # p[j]: row matched to column j (1-based, 0 = none)
    way = [0] * (n + 1)
    rows = c.tolist()
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            ci = rows[i0 - 1]
            ui = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = ci[j - 1] - ui - v[j]
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
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    assign = [0] * n
    for j in range(1, n + 1):
        assign[p[j] - 1] = j - 1
    return assign, np.array(u[1:]), np.array(v[1:])


def _augment(start_row, target_col, adj, owner, banned_rows, banned_cols):
    """Alternating path from ``start_row`` to ``target_col`` in the tight graph."""
    prev = {}
    seen_cols = set()
    queue = deque([start_row])
    while queue:
        r = queue.popleft()
        for col in adj[r]:
            if col in banned_cols or col in seen_cols:
                continue
            seen_cols.add(col)
            prev[col] = r
            if col == target_col:
                return prev
            nxt = owner[col]
            if nxt in banned_rows:
                continue
            queue.append(nxt)
    return None


def _lexicographic(c: np.ndarray, n_real: int, assign, u, v):
    """Lexicographically smallest optimum among tight-edge perfect matchings."""
    n = c.shape[0]
    tol = 1e-9 * (1.0 + float(np.max(np.abs(c))))
    reduced = c - u[:, None] - v[None, :]
    adj = [sorted(np.flatnonzero(reduced[i] <= tol).tolist()) for i in range(n)]
    match = list(assign)
    owner = [0] * n
    for r, col in enumerate(match):
        owner[col] = r
    fixed_rows, fixed_cols = set(), set()
    for i in range(n_real):
        for j in adj[i]:
            if j in fixed_cols:
                continue
            if j == match[i]:
                break
            r = owner[j]
            target = match[i]
            prev = _augment(r, target, adj, owner, fixed_rows | {i}, fixed_cols | {j})
            if prev is None:
                continue
            col = target
            while True:
                row = prev[col]
                old = match[row]
                match[row] = col
                owner[col] = row
                if row == r:
                    break
                col = old
            match[i] = j
            owner[j] = i
            break
        fixed_rows.add(i)
        fixed_cols.add(match[i])
    return match


def _row_order_total(c: np.ndarray, pairs) -> float:
    total = 0.0
    for r, col in pairs:
        total += float(c[r, col])
    return total


def hungarian(cost) -> tuple[list[tuple[int, int]], float]:
    """Minimum-cost one-to-one assignment of min(n, m) pairs.

    Among optimal assignments the lexicographically smallest row-sorted pair
    list is returned. The total is summed in row order.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or 0 in c.shape:
        raise ShapeError(f"cost must be a non-empty 2-D matrix, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix contains non-finite entries")
    n, m = c.shape
    size = max(n, m)
    sq = np.zeros((size, size))
    sq[:n, :m] = c
    assign, u, v = _solve_square(sq)
    base = [(r, assign[r]) for r in range(n) if assign[r] < m]
    lex = _lexicographic(sq, n, assign, u, v)
    pairs = [(r, lex[r]) for r in range(n) if lex[r] < m]
    if len(pairs) != min(n, m) or _row_order_total(c, pairs) > _row_order_total(c, base):
        pairs = base
    return pairs, _row_order_total(c, pairs)


def brute_force_assignment(cost) -> tuple[list[tuple[int, int]], float]:
    """Exhaustive minimum over all injective assignments (small matrices only)."""
    c = np.asarray(cost, dtype=np.float64)
    n, m = c.shape
    best, best_pairs = float("inf"), None
    if n <= m:
        for cols in itertools.permutations(range(m), n):
            pairs = list(zip(range(n), cols))
            total = _row_order_total(c, pairs)
            if total < best:
                best, best_pairs = total, pairs
    else:
        for rows in itertools.permutations(range(n), m):
            pairs = sorted(zip(rows, range(m)))
            total = _row_order_total(c, pairs)
            if total < best:
                best, best_pairs = total, pairs
    return best_pairs, best
