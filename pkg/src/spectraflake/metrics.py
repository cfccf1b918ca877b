"""Confusion-matrix accumulation and per-class / macro IoU, precision, recall.

Rates are reported as percentages. A class whose denominator is zero (0/0)
is *undefined* for that metric: it is stored as NaN, rendered as ``n/a`` and
excluded from the macro average instead of being counted as zero. The macro
average is the unweighted mean over all defined classes, background included.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .cube import LabelMask


def _as_labels(mask) -> np.ndarray:
    if isinstance(mask, LabelMask):
        return mask.labels
    return np.asarray(mask)


def confusion(pred, target, n_classes: int) -> np.ndarray:
    """Count ``(target, predicted)`` pairs into an ``(n, n)`` int64 matrix.

    Rows index the target class, columns the predicted class.
    """
    p = _as_labels(pred)
    t = _as_labels(target)
    if p.shape != t.shape:
        raise ValueError(f"prediction shape {p.shape} does not match target {t.shape}")
    if p.size:
        hi = max(int(p.max()), int(t.max()))
        if hi >= n_classes:
            raise ValueError(f"labels contain class {hi} but only {n_classes} classes exist")
    pairs = t.astype(np.int64).reshape(-1) * n_classes + p.astype(np.int64).reshape(-1)
    return np.bincount(pairs, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def per_class(conf: np.ndarray) -> np.ndarray:
    """Per-class ``(iou, precision, recall)`` percentages; NaN where 0/0.

    For class k: ``TP = conf[k, k]``, ``FP = column sum - TP``,
    ``FN = row sum - TP``; IoU = TP/(TP+FP+FN), precision = TP/(TP+FP),
    recall = TP/(TP+FN).
    """
    conf = np.asarray(conf, dtype=np.float64)
    if conf.ndim != 2 or conf.shape[0] != conf.shape[1]:
        raise ValueError(f"confusion matrix must be square; got {conf.shape}")
    if np.any(conf < 0):
        raise ValueError("confusion matrix entries must be non-negative")
    tp = np.diag(conf)
    fp = conf.sum(axis=0) - tp
    fn = conf.sum(axis=1) - tp
    out = np.full((conf.shape[0], 3), np.nan)
    for col, denom in enumerate((tp + fp + fn, tp + fp, tp + fn)):
        defined = denom > 0
        out[defined, col] = 100.0 * tp[defined] / denom[defined]
    return out


def macro(per: np.ndarray) -> np.ndarray:
    """Unweighted mean of each metric over the classes where it is defined."""
    per = np.asarray(per, dtype=np.float64)
    if per.ndim != 2 or per.shape[1] != 3:
        raise ValueError(f"expected (n, 3) per-class metrics; got {per.shape}")
    if np.isnan(per).all():
        raise ValueError("macro average undefined: every class is undefined")
    out = np.full(3, np.nan)
    for col in range(3):
        defined = ~np.isnan(per[:, col])
        if defined.any():
            out[col] = per[defined, col].mean()
    return out


@dataclass(frozen=True)
class EvalReport:
    """Confusion matrix plus per-class and macro IoU/precision/recall."""

    confusion: np.ndarray
    class_names: tuple[str, ...]
    per_class: np.ndarray  # (n, 3) percent, NaN = undefined
    macro: np.ndarray      # (3,) percent

    @property
    def macro_iou(self) -> float:
        return float(self.macro[0])

    def to_json(self) -> str:
        def cell(v: float):
            return None if np.isnan(v) else round(float(v), 3)

        payload = {
            "confusion": self.confusion.tolist(),
            "classes": [
                {
                    "name": name,
                    "iou": cell(self.per_class[i, 0]),
                    "precision": cell(self.per_class[i, 1]),
                    "recall": cell(self.per_class[i, 2]),
                }
                for i, name in enumerate(self.class_names)
            ],
            "macro": {
                "iou": cell(self.macro[0]),
                "precision": cell(self.macro[1]),
                "recall": cell(self.macro[2]),
            },
        }
        return json.dumps(payload, indent=2)

    def format_table(self) -> str:
        def fmt(v: float) -> str:
            return "  n/a" if np.isnan(v) else f"{v:5.1f}"

        width = max(len(n) for n in self.class_names + ("macro",))
        lines = [f"{'class':<{width}}    IoU  Prec   Rec"]
        for i, name in enumerate(self.class_names):
            row = self.per_class[i]
            lines.append(f"{name:<{width}}  {fmt(row[0])} {fmt(row[1])} {fmt(row[2])}")
        lines.append(
            f"{'macro':<{width}}  {fmt(self.macro[0])} {fmt(self.macro[1])} {fmt(self.macro[2])}"
        )
        return "\n".join(lines)

    def csv_row(self) -> str:
        """``macro_iou,macro_precision,macro_recall`` then per-class triples."""
        cells = list(self.macro) + list(self.per_class.reshape(-1))
        return ",".join("" if np.isnan(v) else f"{v:.3f}" for v in cells)


def evaluate(pred, target, n_classes: int, class_names: tuple[str, ...] | None = None) -> EvalReport:
    """Confusion + per-class + macro metrics in one call."""
    conf = confusion(pred, target, n_classes)
    if class_names is None:
        class_names = tuple(f"class{k}" for k in range(n_classes))
    if len(class_names) != n_classes:
        raise ValueError(f"{len(class_names)} names for {n_classes} classes")
    per = per_class(conf)
    conf.setflags(write=False)
    per.setflags(write=False)
    return EvalReport(conf, tuple(class_names), per, macro(per))
