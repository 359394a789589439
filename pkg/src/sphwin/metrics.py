"""Depth evaluation metrics, median alignment, and the SILog loss.

Only pixels observed in the ground truth (value above the unobserved
threshold, 0 by default) enter any statistic.  All accumulation is float64
regardless of input precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError


@dataclass(frozen=True)
class DepthPair:
    """Prediction / ground-truth pair with the observed-pixel mask.

    ``prediction`` must be strictly positive everywhere; ground-truth
    pixels at or below ``min_depth`` count as unobserved.
    """

    prediction: np.ndarray
    ground_truth: np.ndarray
    mask: np.ndarray

    @classmethod
    def from_arrays(cls, prediction, ground_truth, min_depth: float = 0.0) -> "DepthPair":
        pred = np.asarray(prediction, dtype=np.float64)
        gt = np.asarray(ground_truth, dtype=np.float64)
        if pred.shape != gt.shape:
            raise ShapeError(
                f"prediction {pred.shape} and ground truth {gt.shape} differ"
            )
        if not (np.isfinite(pred).all() and np.isfinite(gt).all()):
            raise DomainError("depth maps must be finite")
        if (pred <= 0).any():
            raise DomainError("prediction must be strictly positive")
        if (gt < 0).any():
            raise DomainError("ground truth must be non-negative")
        mask = gt > min_depth
        if not mask.any():
            raise DomainError("no observed pixels in the ground truth")
        return cls(prediction=pred, ground_truth=gt, mask=mask)

    @property
    def observed(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    delta1: float
    delta2: float
    delta3: float
    aligned: bool

    def as_dict(self) -> dict:
        return {
            "abs_rel": self.abs_rel,
            "sq_rel": self.sq_rel,
            "rmse": self.rmse,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "delta3": self.delta3,
            "aligned": self.aligned,
        }


def median_align(pair: DepthPair) -> DepthPair:
    """Rescale the prediction so its median matches the ground truth median
    over the observed pixels."""
    med_pred = float(np.median(pair.prediction[pair.mask]))
    if med_pred <= 0:
        raise DomainError("prediction median must be positive for alignment")
    med_gt = float(np.median(pair.ground_truth[pair.mask]))
    scaled = pair.prediction * (med_gt / med_pred)
    return DepthPair(prediction=scaled, ground_truth=pair.ground_truth, mask=pair.mask)


def evaluate(pair: DepthPair, align: bool = False) -> DepthMetrics:
    """Standard depth error suite over the observed pixels.

    abs_rel = mean(|D - D*| / D*)
    sq_rel  = mean((D - D*)^2 / D*)
    rmse    = sqrt(mean((D - D*)^2))
    delta_m = fraction with max(D/D*, D*/D) < 1.25^m, m in {1, 2, 3}
    """
    if align:
        pair = median_align(pair)
    d = pair.prediction[pair.mask]
    g = pair.ground_truth[pair.mask]
    diff = d - g
    thresh = np.maximum(d / g, g / d)
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff**2 / g)),
        rmse=float(np.sqrt(np.mean(diff**2))),
        delta1=float(np.mean(thresh < 1.25)),
        delta2=float(np.mean(thresh < 1.25**2)),
        delta3=float(np.mean(thresh < 1.25**3)),
        aligned=align,
    )


def silog_loss(pair: DepthPair, alpha: float = 10.0, lam: float = 0.85) -> float:
    """Scale-invariant logarithmic loss over the observed pixels.

    With log differences ``e_i = log D_i - log D*_i`` and K observed pixels:
    ``alpha * sqrt(mean(e^2) - lam * (sum(e))^2 / K^2)``.  With ``lam = 1``
    the loss is invariant to uniform positive rescaling of the prediction;
    at the default 0.85 it is not.  The radicand is clamped at zero against
    floating-point rounding.
    """
    d = pair.prediction[pair.mask]
    g = pair.ground_truth[pair.mask]
    if (d <= 0).any() or (g <= 0).any():
        raise DomainError("SILog needs strictly positive depths on the mask")
    e = np.log(d) - np.log(g)
    k = e.size
    radicand = np.mean(e**2) - lam * (np.sum(e) ** 2) / (k * k)
    return float(alpha * np.sqrt(max(radicand, 0.0)))


def format_report(metrics: DepthMetrics) -> str:
    """Line-oriented human-readable report."""
    lines = [
        f"abs_rel  {metrics.abs_rel:.6f}",
        f"sq_rel   {metrics.sq_rel:.6f}",
        f"rmse     {metrics.rmse:.6f}",
        f"delta1   {metrics.delta1:.6f}",
        f"delta2   {metrics.delta2:.6f}",
        f"delta3   {metrics.delta3:.6f}",
        f"aligned  {'yes' if metrics.aligned else 'no'}",
    ]
    return "\n".join(lines)


def format_key_values(metrics: DepthMetrics) -> str:
    """Machine-readable document, one ``key=value`` per line, full precision."""
    items = metrics.as_dict()
    out = []
    for key, value in items.items():
        if isinstance(value, bool):
            out.append(f"{key}={'true' if value else 'false'}")
        else:
            out.append(f"{key}={value!r}")
    return "\n".join(out)
