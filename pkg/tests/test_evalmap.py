"""Detection evaluation: NMS behavior, hand-computed AP cases, exact
agreement with the brute-force reference."""

import numpy as np
import pytest

from darklight import evalmap
import oracles


def _box(x0, y0, x1, y1):
    return np.array([x0, y0, x1, y1], dtype=float)


class TestNms:
    def test_keeps_highest_and_suppresses_overlap(self):
        boxes = np.stack([_box(0, 0, 10, 10), _box(1, 1, 11, 11), _box(50, 50, 60, 60)])
        scores = np.array([0.9, 0.8, 0.7])
        keep = evalmap.nms(boxes, scores, iou_thresh=0.5)
        assert list(keep) == [0, 2]

    def test_returns_descending_score_order(self):
        boxes = np.stack([_box(0, 0, 5, 5), _box(20, 20, 25, 25), _box(40, 40, 45, 45)])
        scores = np.array([0.2, 0.9, 0.5])
        assert list(evalmap.nms(boxes, scores)) == [1, 2, 0]

    def test_boundary_iou_not_suppressed(self):
        # IoU exactly 0.5: suppression requires strictly greater
        boxes = np.stack([_box(0, 0, 10, 10), _box(0, 0, 10, 5)])
        scores = np.array([1.0, 0.9])
        assert scenes_iou(boxes[0], boxes[1]) == pytest.approx(0.5)
        keep = evalmap.nms(boxes, scores, iou_thresh=0.5)
        assert list(keep) == [0, 1]

    def test_tie_scores_stable(self):
        boxes = np.stack([_box(0, 0, 10, 10), _box(0, 0, 10, 10)])
        scores = np.array([0.5, 0.5])
        keep = evalmap.nms(boxes, scores)
        assert list(keep) == [0]  # first listed wins the tie

    def test_empty(self):
        keep = evalmap.nms(np.zeros((0, 4)), np.zeros(0))
        assert len(keep) == 0


def scenes_iou(a, b):
    from darklight.scenes import iou_matrix

    return float(iou_matrix(a[None], b[None])[0, 0])


class TestEvaluateMapHandCases:
    def test_single_perfect_detection(self):
        gt = [np.array([[10, 10, 30, 30]], dtype=float)]
        preds = [(np.array([[10, 10, 30, 30]], dtype=float), np.array([0.9]))]
        rep = evalmap.evaluate_map(preds, gt)
        assert rep.map_50 == 1.0
        assert rep.counts() == {"predictions": 1, "ground_truth": 1, "true_positives": 1}

    def test_miss_below_iou(self):
        gt = [np.array([[10, 10, 30, 30]], dtype=float)]
        preds = [(np.array([[25, 25, 45, 45]], dtype=float), np.array([0.9]))]
        rep = evalmap.evaluate_map(preds, gt)
        assert rep.map_50 == 0.0

    def test_fp_ranked_above_tp(self):
        # prediction order by score: FP (0.9), TP (0.8)
        # precision at the TP is 1/2, recall goes 0 -> 1, so AP = 0.5
        gt = [np.array([[0, 0, 10, 10]], dtype=float)]
        preds = [(np.stack([_box(50, 50, 60, 60), _box(0, 0, 10, 10)]), np.array([0.9, 0.8]))]
        rep = evalmap.evaluate_map(preds, gt)
        assert rep.map_50 == pytest.approx(0.5)

    def test_tp_ranked_above_fp(self):
        gt = [np.array([[0, 0, 10, 10]], dtype=float)]
        preds = [(np.stack([_box(0, 0, 10, 10), _box(50, 50, 60, 60)]), np.array([0.9, 0.8]))]
        rep = evalmap.evaluate_map(preds, gt)
        assert rep.map_50 == pytest.approx(1.0)

    def test_duplicate_detection_is_fp(self):
        gt = [np.array([[0, 0, 10, 10]], dtype=float)]
        preds = [(np.stack([_box(0, 0, 10, 10), _box(0, 0, 10, 10)]), np.array([0.9, 0.8]))]
        rep = evalmap.evaluate_map(preds, gt)
        assert rep.map_50 == pytest.approx(1.0)  # duplicate adds FP after full recall
        assert rep.counts()["true_positives"] == 1

    def test_two_images_interleaved_ranking(self):
        gt = [np.array([[0, 0, 10, 10]], dtype=float), np.array([[0, 0, 10, 10]], dtype=float)]
        preds = [
            (np.array([[0, 0, 10, 10]], dtype=float), np.array([0.6])),
            (np.array([[40, 40, 50, 50]], dtype=float), np.array([0.8])),  # FP ranks first
        ]
        rep = evalmap.evaluate_map(preds, gt)
        # ranks: FP, TP -> precision [0, .5], recall [0, .5]; AP = 0.5 * 0.5
        assert rep.map_50 == pytest.approx(0.25)

    def test_no_predictions(self):
        gt = [np.array([[0, 0, 10, 10]], dtype=float)]
        rep = evalmap.evaluate_map([(np.zeros((0, 4)), np.zeros(0))], gt)
        assert rep.map_50 == 0.0 and rep.n_predictions == 0

    def test_image_without_gt_collects_fps(self):
        gt = [np.array([[0, 0, 10, 10]], dtype=float), np.zeros((0, 4))]
        preds = [
            (np.array([[0, 0, 10, 10]], dtype=float), np.array([0.5])),
            (np.array([[1, 1, 9, 9]], dtype=float), np.array([0.9])),
        ]
        rep = evalmap.evaluate_map(preds, gt)
        assert rep.map_50 == pytest.approx(0.5)

    def test_recall_curve_monotone(self, rng):
        preds, gt = _random_dataset(rng, n_images=6)
        rep = evalmap.evaluate_map(preds, gt)
        assert np.all(np.diff(rep.recall) >= 0)
        assert rep.recall[-1] == pytest.approx(
            rep.counts()["true_positives"] / rep.n_ground_truth
        )

    def test_input_contracts(self):
        with pytest.raises(ValueError, match="prediction sets"):
            evalmap.evaluate_map([], [np.zeros((1, 4))])
        with pytest.raises(ValueError, match="empty"):
            evalmap.evaluate_map([], [])


def _random_dataset(rng, n_images=8, max_gt=4, max_preds=10):
    gt, preds = [], []
    for _ in range(n_images):
        n_g = int(rng.integers(0, max_gt + 1))
        boxes = []
        for _ in range(n_g):
            x0, y0 = rng.uniform(0, 70, 2)
            w, h = rng.uniform(5, 25, 2)
            boxes.append([x0, y0, x0 + w, y0 + h])
        gt.append(np.array(boxes, dtype=float).reshape(-1, 4))
        n_p = int(rng.integers(0, max_preds + 1))
        pb, ps = [], []
        for _ in range(n_p):
            if boxes and rng.random() < 0.6:
                b = np.array(boxes[int(rng.integers(0, len(boxes)))])
                jitter = rng.uniform(-4, 4, 4)
                pb.append(b + jitter)
            else:
                x0, y0 = rng.uniform(0, 70, 2)
                w, h = rng.uniform(5, 25, 2)
                pb.append([x0, y0, x0 + w, y0 + h])
            # quantized scores force ties across images
            ps.append(round(float(rng.random()), 1))
        preds.append((np.array(pb, dtype=float).reshape(-1, 4), np.array(ps, dtype=float)))
    return preds, gt


class TestOracleEquivalence:
    def test_exact_match_on_random_datasets(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            preds, gt = _random_dataset(rng)
            if sum(len(g) for g in gt) == 0:
                continue
            got = evalmap.evaluate_map(preds, gt).map_50
            want = oracles.ap_reference(preds, gt)
            assert got == want, f"seed {seed}: {got!r} != {want!r}"

    def test_exact_match_with_heavy_ties(self):
        rng = np.random.default_rng(99)
        preds, gt = _random_dataset(rng, n_images=12, max_preds=14)
        # make every score identical: ranking must fall back to insertion order
        preds = [(b, np.full(len(s), 0.5)) for b, s in preds]
        got = evalmap.evaluate_map(preds, gt).map_50
        want = oracles.ap_reference(preds, gt)
        assert got == want
