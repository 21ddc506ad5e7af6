"""Detection evaluation: greedy IoU matching, all-point interpolated average
precision, and greedy non-maximum suppression.

Single class, so mAP here is the AP of that class at one IoU threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenes import iou_matrix


@dataclass
class EvalReport:
    map_50: float
    precision: np.ndarray  # cumulative precision per prediction rank
    recall: np.ndarray  # cumulative recall per prediction rank
    n_predictions: int
    n_ground_truth: int
    iou_thresh: float = 0.5

    def counts(self) -> dict:
        return {
            "predictions": int(self.n_predictions),
            "ground_truth": int(self.n_ground_truth),
            "true_positives": int(round(self.recall[-1] * self.n_ground_truth)) if len(self.recall) else 0,
        }


def nms(boxes: np.ndarray, scores: np.ndarray, iou_thresh: float = 0.5) -> np.ndarray:
    """Greedy NMS; returns kept indices in descending score order."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    order = np.argsort(-scores, kind="stable")
    keep = []
    suppressed = np.zeros(len(order), dtype=bool)
    for rank, i in enumerate(order):
        if suppressed[rank]:
            continue
        keep.append(i)
        rest = order[rank + 1 :]
        if len(rest) == 0:
            break
        ious = iou_matrix(boxes[i][None], boxes[rest])[0]
        suppressed[rank + 1 :] |= ious > iou_thresh
    return np.array(keep, dtype=np.int64)


def evaluate_map(predictions: list, ground_truth: list, iou_thresh: float = 0.5) -> EvalReport:
    """AP of one class over a dataset.

    predictions: per image, (boxes [n,4], scores [n]); ground_truth: per
    image, boxes [m,4]. Predictions are ranked globally by score; each is
    greedily matched to the best still-unmatched GT of its image at
    IoU >= iou_thresh. AP integrates the interpolated precision over every
    recall step (all-point interpolation).
    """
    if len(predictions) != len(ground_truth):
        raise ValueError(f"evaluate_map: {len(predictions)} prediction sets vs {len(ground_truth)} GT sets")
    if len(ground_truth) == 0:
        raise ValueError("evaluate_map: empty dataset")

    n_gt = int(sum(len(np.asarray(g).reshape(-1, 4)) for g in ground_truth))
    flat = []  # (score, image_idx, box)
    for img_idx, (boxes, scores) in enumerate(predictions):
        boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
        scores = np.asarray(scores, dtype=np.float64).reshape(-1)
        for b, s in zip(boxes, scores):
            flat.append((float(s), img_idx, b))
    # stable sort on negative score keeps insertion order among ties
    flat.sort(key=lambda t: -t[0])

    matched: dict[int, np.ndarray] = {
        i: np.zeros(len(np.asarray(g).reshape(-1, 4)), dtype=bool) for i, g in enumerate(ground_truth)
    }
    tp = np.zeros(len(flat))
    for rank, (score, img_idx, box) in enumerate(flat):
        gt = np.asarray(ground_truth[img_idx], dtype=np.float64).reshape(-1, 4)
        if len(gt) == 0:
            continue
        ious = iou_matrix(box[None], gt)[0]
        ious[matched[img_idx]] = -1.0
        best = int(np.argmax(ious))
        if ious[best] >= iou_thresh:
            tp[rank] = 1.0
            matched[img_idx][best] = True

    cum_tp = np.cumsum(tp)
    ranks = np.arange(1, len(flat) + 1)
    precision = cum_tp / ranks if len(flat) else np.zeros(0)
    recall = cum_tp / n_gt if n_gt > 0 else np.zeros(len(flat))
    ap = _allpoint_ap(precision, recall)
    return EvalReport(
        map_50=ap,
        precision=precision,
        recall=recall,
        n_predictions=len(flat),
        n_ground_truth=n_gt,
        iou_thresh=iou_thresh,
    )


def _allpoint_ap(precision: np.ndarray, recall: np.ndarray) -> float:
    """Area under the interpolated precision-recall curve."""
    if len(precision) == 0:
        return 0.0
    r = np.concatenate([[0.0], recall, [recall[-1]]])
    p = np.concatenate([[0.0], precision, [0.0]])
    # interpolated precision at recall r = max precision at any recall >= r
    for i in range(len(p) - 2, -1, -1):
        p[i] = max(p[i], p[i + 1])
    # sequential sum in recall order so the value is a plain left-to-right
    # accumulation of the changepoint terms
    ap = 0.0
    for i in range(len(r) - 1):
        if r[i + 1] != r[i]:
            ap += (r[i + 1] - r[i]) * p[i + 1]
    return float(ap)
