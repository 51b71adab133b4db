"""
Metrics
Confusion matrix, overall accuracy, average accuracy, Cohen's kappa and
aggregation across repetitions.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix

from gwcl.config import read_key_values
from gwcl.errors import MetricUndefinedError

logger = logging.getLogger("gwcl.metrics")


@dataclass
class MetricReport:
    oa: float
    aa: float
    kappa: float
    per_class_recall: np.ndarray
    runs: int = 1
    oa_std: float = 0.0
    aa_std: float = 0.0
    kappa_std: float = 0.0
    per_class_std: Optional[np.ndarray] = None
    extra: Dict[str, str] = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return int(self.per_class_recall.size)

    def to_kv(self) -> Dict[str, str]:
        kv = {
            "runs": str(self.runs),
            "oa": f"{self.oa:.6f}",
            "aa": f"{self.aa:.6f}",
            "kappa": f"{self.kappa:.6f}",
            "oa_std": f"{self.oa_std:.6f}",
            "aa_std": f"{self.aa_std:.6f}",
            "kappa_std": f"{self.kappa_std:.6f}",
        }
        for k, recall in enumerate(self.per_class_recall, 1):
            kv[f"recall_class{k}"] = f"{recall:.6f}"
            if self.per_class_std is not None:
                kv[f"recall_class{k}_std"] = f"{self.per_class_std[k - 1]:.6f}"
        kv.update(self.extra)
        return kv

    def to_text(self, class_names: Optional[Sequence[str]] = None) -> str:
        """Per-class recall table followed by OA / AA / kappa, as percentages"""
        lines = [f"{'Class':<6}{'Name':<28}{'Recall':>16}"]
        for k, recall in enumerate(self.per_class_recall, 1):
            name = class_names[k - 1] if class_names and k <= len(class_names) else ""
            spread = f" ({self.per_class_std[k - 1] * 100:.2f})" if self.per_class_std is not None else ""
            lines.append(f"{k:<6}{name:<28}{recall * 100:>8.2f}{spread}")
        for label, value, std in (("OA", self.oa, self.oa_std), ("AA", self.aa, self.aa_std),
                                  ("kappa", self.kappa, self.kappa_std)):
            lines.append(f"{label:<34}{value * 100:>8.2f} ({std * 100:.2f})")
        return "\n".join(lines)


def confusion(preds: np.ndarray, truths: np.ndarray, c: int) -> np.ndarray:
    """
    c x c counts, rows = true class, columns = predicted class (codes 1..c)

    Raises:
        MetricUndefinedError: lengths differ or a code is outside 1..c
    """
    preds = np.asarray(preds, dtype=np.int64)
    truths = np.asarray(truths, dtype=np.int64)
    if preds.shape != truths.shape:
        raise MetricUndefinedError(f"Length mismatch: {preds.shape} predictions vs {truths.shape} truths")
    for name, codes in (("prediction", preds), ("truth", truths)):
        if codes.size and (codes.min() < 1 or codes.max() > c):
            raise MetricUndefinedError(f"{name} code outside 1..{c}")
    return confusion_matrix(truths, preds, labels=np.arange(1, c + 1)).astype(np.int64)


def _total(cm: np.ndarray) -> int:
    total = int(cm.sum())
    if total <= 0:
        raise MetricUndefinedError("Empty confusion matrix")
    return total


def oa(cm: np.ndarray) -> float:
    return float(np.trace(cm) / _total(cm))


def per_class_recall(cm: np.ndarray) -> np.ndarray:
    rows = cm.sum(axis=1)
    if np.any(rows == 0):
        missing = (np.flatnonzero(rows == 0) + 1).tolist()
        raise MetricUndefinedError(f"Average accuracy undefined: no test pixels for classes {missing}")
    return np.diag(cm) / rows


def aa(cm: np.ndarray) -> float:
    _total(cm)
    return float(per_class_recall(cm).mean())


def kappa(cm: np.ndarray) -> float:
    total = _total(cm)
    p_e = float(np.dot(cm.sum(axis=1), cm.sum(axis=0))) / float(total) ** 2
    if p_e >= 1.0:
        raise MetricUndefinedError("Kappa undefined: chance agreement is 1")
    return (oa(cm) - p_e) / (1.0 - p_e)


def evaluate(preds: np.ndarray, truths: np.ndarray, c: int) -> MetricReport:
    cm = confusion(preds, truths, c)
    return MetricReport(oa=oa(cm), aa=aa(cm), kappa=kappa(cm), per_class_recall=per_class_recall(cm))


def aggregate(reports: List[MetricReport]) -> MetricReport:
    """
    Mean and sample (n-1) standard deviation of each metric; std is 0 for one run
    """
    if not reports:
        raise MetricUndefinedError("Nothing to aggregate")
    c = reports[0].n_classes
    if any(r.n_classes != c for r in reports):
        raise MetricUndefinedError("Reports disagree on the class count")
    ddof = 1 if len(reports) > 1 else 0
    table = np.array([[r.oa, r.aa, r.kappa] for r in reports])
    recalls = np.array([r.per_class_recall for r in reports])
    # offsets from the first run keep identical runs at exactly zero spread
    offsets = table - table[0]
    mean = table[0] + offsets.mean(axis=0)
    std = offsets.std(axis=0, ddof=ddof)
    recall_offsets = recalls - recalls[0]
    return MetricReport(
        oa=float(mean[0]), aa=float(mean[1]), kappa=float(mean[2]),
        per_class_recall=recalls[0] + recall_offsets.mean(axis=0),
        runs=len(reports),
        oa_std=float(std[0]), aa_std=float(std[1]), kappa_std=float(std[2]),
        per_class_std=recall_offsets.std(axis=0, ddof=ddof),
    )


def write_kv(path: str | Path, values: Dict[str, str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{k}={v}\n" for k, v in values.items()), encoding="utf-8")
    return path


def read_report(path: str | Path) -> MetricReport:
    """Re-read a metrics .kv file written by :func:`write_kv`"""
    kv = read_key_values(Path(path))
    recalls = []
    k = 1
    while f"recall_class{k}" in kv:
        recalls.append(float(kv[f"recall_class{k}"]))
        k += 1
    return MetricReport(oa=float(kv["oa"]), aa=float(kv["aa"]), kappa=float(kv["kappa"]),
                        per_class_recall=np.array(recalls), runs=int(kv.get("runs", "1")))
