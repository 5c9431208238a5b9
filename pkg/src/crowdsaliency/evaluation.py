"""Detection-vs-ground-truth matching with the PASCAL-style 50% overlap rule."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import Rect

# Motion categories reported by the evaluation table.
CATEGORIES = ("crowding", "source_sink", "local_irregularity")

_DISPLAY_NAMES = {
    "crowding": "Crowding",
    "source_sink": "Sources & Sinks",
    "local_irregularity": "Local Irregularity",
}

_TABLE_HEADER = (
    "Motion Category & Total # of Labelled Region & # of Detection"
    " & # of Missed Detection & # of False Detection & F-measure"
)


@dataclass(frozen=True)
class GroundTruthEntry:
    bbox: Rect
    category: str

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(
                f"unknown category {self.category!r}, expected one of {CATEGORIES}"
            )


@dataclass
class GroundTruth:
    entries: list[GroundTruthEntry]
    frame_width: int
    frame_height: int

    def __post_init__(self):
        frame = Rect(0, 0, self.frame_width, self.frame_height)
        for e in self.entries:
            if not frame.contains_rect(e.bbox):
                raise ValueError(f"ground-truth box {e.bbox} outside frame {frame}")


@dataclass
class CategoryCounts:
    """Per-category tallies; `detected` follows the table convention of
    counting true and false detections together."""

    labelled: int = 0
    matched: int = 0
    missed: int = 0
    false: int = 0

    @property
    def detected(self) -> int:
        return self.matched + self.false

    def f_measure(self) -> float:
        return _f_from_counts(self.matched, self.missed, self.false)


@dataclass
class MatchReport:
    by_category: dict[str, CategoryCounts]
    pairing: list[tuple[int, int, float]] = field(default_factory=list)

    def totals(self) -> CategoryCounts:
        t = CategoryCounts()
        for c in self.by_category.values():
            t.labelled += c.labelled
            t.matched += c.matched
            t.missed += c.missed
            t.false += c.false
        return t


def overlap(a, b) -> float:
    """Intersection-over-union of two rectangles; empty rectangles give 0."""
    a = Rect.from_any(a)
    b = Rect.from_any(b)
    if a.area <= 0 or b.area <= 0:
        return 0.0
    inter = a.intersection(b).area
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def match_detections(detections, ground_truth: GroundTruth, thresh: float = 0.5) -> MatchReport:
    """Greedy one-to-one matching of detections to ground truth.

    Candidate pairs with IoU strictly above `thresh` are taken in descending
    IoU order (ties broken by detection then ground-truth index). Unmatched
    ground truth counts as missed; unmatched detections count as false and
    are attributed to the category of their best-overlapping ground-truth
    box (falling back to the most common labelled category).
    """
    det_boxes = [Rect.from_any(getattr(d, "bbox", d)) for d in detections]
    gts = ground_truth.entries

    ious = [
        [overlap(db, g.bbox) for g in gts]
        for db in det_boxes
    ]
    candidates = [
        (ious[di][gi], di, gi)
        for di in range(len(det_boxes))
        for gi in range(len(gts))
        if ious[di][gi] > thresh
    ]
    candidates.sort(key=lambda t: (-t[0], t[1], t[2]))

    det_used = [False] * len(det_boxes)
    gt_used = [False] * len(gts)
    pairing: list[tuple[int, int, float]] = []
    for iou, di, gi in candidates:
        if det_used[di] or gt_used[gi]:
            continue
        det_used[di] = True
        gt_used[gi] = True
        pairing.append((di, gi, iou))

    by_category: dict[str, CategoryCounts] = {}

    def counts_for(cat: str) -> CategoryCounts:
        return by_category.setdefault(cat, CategoryCounts())

    for gi, g in enumerate(gts):
        c = counts_for(g.category)
        c.labelled += 1
        if gt_used[gi]:
            c.matched += 1
        else:
            c.missed += 1

    fallback = None
    if gts:
        fallback = Counter(g.category for g in gts).most_common(1)[0][0]
    for di in range(len(det_boxes)):
        if det_used[di]:
            continue
        cat = fallback or "local_irregularity"
        if gts:
            best = max(range(len(gts)), key=lambda gi: ious[di][gi])
            if ious[di][best] > 0:
                cat = gts[best].category
        counts_for(cat).false += 1

    return MatchReport(by_category=by_category, pairing=pairing)


def _f_from_counts(matched: int, missed: int, false: int) -> float:
    precision = matched / (matched + false) if matched + false > 0 else 0.0
    recall = matched / (matched + missed) if matched + missed > 0 else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def f_measure(report: MatchReport) -> float:
    """Harmonic mean of precision and recall over all categories; 0 when both are 0."""
    t = report.totals()
    return _f_from_counts(t.matched, t.missed, t.false)


def summary_table(by_category) -> str:
    """Render per-category counts in the four-column report layout plus F-measure.

    Accepts a MatchReport or a mapping of category name to CategoryCounts.
    Rows are '&'-separated: name, labelled, detection, missed, false, F.
    """
    if isinstance(by_category, MatchReport):
        by_category = by_category.by_category
    lines = [_TABLE_HEADER]
    known = [c for c in CATEGORIES if c in by_category]
    extra = sorted(c for c in by_category if c not in CATEGORIES)
    for cat in known + extra:
        c = by_category[cat]
        name = _DISPLAY_NAMES.get(cat, cat)
        lines.append(
            f"{name} & {c.labelled} & {c.detected} & {c.missed} & {c.false}"
            f" & {c.f_measure():.3f}"
        )
    return "\n".join(lines) + "\n"


def report_to_dict(report: MatchReport) -> dict:
    """Machine-readable mirror of the summary table."""
    out = {
        "categories": {
            cat: {
                "labelled": c.labelled,
                "detection": c.detected,
                "missed": c.missed,
                "false": c.false,
                "f_measure": c.f_measure(),
            }
            for cat, c in report.by_category.items()
        },
        "f_measure": f_measure(report),
        "pairing": [
            {"detection": di, "ground_truth": gi, "iou": iou}
            for di, gi, iou in report.pairing
        ],
    }
    return out


def save_ground_truth(gt: GroundTruth, path) -> None:
    doc = {
        "frame": [gt.frame_width, gt.frame_height],
        "regions": [
            {"bbox": e.bbox.to_list(), "category": e.category} for e in gt.entries
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_ground_truth(path) -> GroundTruth:
    doc = json.loads(Path(path).read_text())
    entries = [
        GroundTruthEntry(bbox=Rect.from_any(r["bbox"]), category=r["category"])
        for r in doc["regions"]
    ]
    w, h = doc["frame"]
    return GroundTruth(entries=entries, frame_width=int(w), frame_height=int(h))
