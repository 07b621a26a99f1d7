"""
Dense and sparse flow metrics: AEPE, PCK, F1-all.
"""
from typing import Optional, Sequence, Union

import numpy as np

from config import presets
from evaluation.report import MetricReport, threshold_key
from flow.fields import FlowField
from flow.warp import sample_bilinear_points
from utils.errors import DataError, EmptyMaskError, ShapeMismatchError

FlowLike = Union[FlowField, np.ndarray]


def _as_array(flow: FlowLike) -> np.ndarray:
    """(N, 2, H, W) float64 values in the pixels of the flow's own grid"""
    if isinstance(flow, FlowField):
        factor_x, factor_y = flow.level_factors()
        values = flow.numpy().astype(np.float64)
        values[:, 0] /= factor_x
        values[:, 1] /= factor_y
        return values
    values = np.asarray(flow, dtype=np.float64)
    return values[None] if values.ndim == 3 else values


def _endpoint_errors(pred: FlowLike, gt: FlowLike, mask: Optional[np.ndarray]):
    """Per-pixel EPE and GT magnitude over the masked pixels"""
    p, g = _as_array(pred), _as_array(gt)
    if p.shape != g.shape:
        raise ShapeMismatchError("metrics", "flow shape", None, None, f"prediction {p.shape} vs ground truth {g.shape}")
    epe = np.sqrt(((p - g) ** 2).sum(axis=1))
    magnitude = np.sqrt((g ** 2).sum(axis=1))
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), epe.shape)
        epe, magnitude = epe[mask], magnitude[mask]
    else:
        epe, magnitude = epe.ravel(), magnitude.ravel()
    if epe.size == 0:
        raise EmptyMaskError("metric requested over an empty mask")
    return epe, magnitude


def _pck_from_epe(epe: np.ndarray, threshold: float) -> float:
    if threshold <= 0:
        raise DataError(f"PCK threshold must be > 0, got {threshold}")
    return 100.0 * float(np.count_nonzero(epe <= threshold)) / epe.size


def _f1_from_epe(epe: np.ndarray, magnitude: np.ndarray) -> float:
    outliers = (epe >= presets.F1_PIXEL_THRESHOLD) & (epe >= presets.F1_RELATIVE_THRESHOLD * magnitude)
    return 100.0 * float(np.count_nonzero(outliers)) / epe.size


def aepe(pred: FlowLike, gt: FlowLike, mask: Optional[np.ndarray] = None) -> float:
    """Mean endpoint error over the masked pixels"""
    epe, _ = _endpoint_errors(pred, gt, mask)
    return float(epe.mean())


def pck(pred: FlowLike, gt: FlowLike, mask: Optional[np.ndarray], threshold: float) -> float:
    """Percentage of masked pixels with EPE <= threshold pixels"""
    epe, _ = _endpoint_errors(pred, gt, mask)
    return _pck_from_epe(epe, threshold)


def pck_relative(
    pred: FlowLike,
    gt: FlowLike,
    mask: Optional[np.ndarray],
    alpha: float,
    source_height: int,
    source_width: int,
) -> float:
    """PCK with threshold alpha * max(H_s, W_s)"""
    if alpha <= 0:
        raise DataError(f"alpha must be > 0, got {alpha}")
    return pck(pred, gt, mask, alpha * max(source_height, source_width))


def f1_all(pred: FlowLike, gt: FlowLike, mask: Optional[np.ndarray] = None) -> float:
    """Percentage of outliers: EPE >= 3 px and EPE >= 5% of the GT magnitude"""
    epe, magnitude = _endpoint_errors(pred, gt, mask)
    return _f1_from_epe(epe, magnitude)


def _report(epe: np.ndarray, magnitude: np.ndarray, thresholds: Sequence[float]) -> MetricReport:
    return MetricReport(
        aepe=float(epe.mean()),
        pck={threshold_key(t): _pck_from_epe(epe, t) for t in thresholds},
        f1_all=_f1_from_epe(epe, magnitude),
        count=int(epe.size),
    )


def evaluate_dense(
    pred: FlowLike,
    gt: FlowLike,
    mask: Optional[np.ndarray] = None,
    thresholds: Sequence[float] = tuple(presets.PCK_THRESHOLDS),
) -> MetricReport:
    """Every dense metric in one report"""
    epe, magnitude = _endpoint_errors(pred, gt, mask)
    return _report(epe, magnitude, thresholds)


def eval_sparse(
    pred: FlowLike,
    correspondences: np.ndarray,
    thresholds: Sequence[float] = tuple(presets.PCK_THRESHOLDS),
) -> MetricReport:
    """
    Metrics against sparse matches

    Args:
        pred: Single flow (batch 1)
        correspondences: (K, 4) rows (x_t, y_t, x_s, y_s) in pixels
        thresholds: PCK thresholds in pixels

    Returns:
        MetricReport over the K correspondences
    """
    points = np.asarray(correspondences, dtype=np.float64).reshape(-1, 4)
    if len(points) == 0:
        raise EmptyMaskError("no sparse correspondences given")
    flow = _as_array(pred)
    if flow.shape[0] != 1:
        raise ShapeMismatchError("eval_sparse", "batch", 1, flow.shape[0])
    _, _, height, width = flow.shape
    targets, sources = points[:, :2], points[:, 2:]
    inside = ((targets[:, 0] >= 0) & (targets[:, 0] <= width - 1)
              & (targets[:, 1] >= 0) & (targets[:, 1] <= height - 1))
    if not inside.all():
        raise DataError(f"{int((~inside).sum())} target points lie outside the {height}x{width} flow")

    sampled = sample_bilinear_points(flow[0], targets)
    predicted = targets + sampled
    epe = np.sqrt(((predicted - sources) ** 2).sum(axis=1))
    magnitude = np.sqrt(((sources - targets) ** 2).sum(axis=1))
    return _report(epe, magnitude, thresholds)


def evaluate_dense_many(
    preds: Sequence[FlowLike],
    gts: Sequence[FlowLike],
    masks: Optional[Sequence[Optional[np.ndarray]]] = None,
    thresholds: Sequence[float] = tuple(presets.PCK_THRESHOLDS),
) -> MetricReport:
    """One report pooled over the pixels of several (possibly differently sized) flows"""
    if len(preds) != len(gts):
        raise DataError(f"{len(preds)} predictions for {len(gts)} ground-truth flows")
    if not preds:
        raise EmptyMaskError("no flows to evaluate")
    masks = masks if masks is not None else [None] * len(preds)
    errors = [_endpoint_errors(p, g, m) for p, g, m in zip(preds, gts, masks)]
    return _report(np.concatenate([e for e, _ in errors]), np.concatenate([m for _, m in errors]), thresholds)
