"""Accuracy metrics: mean relative error, relative-error CDFs and loss correlation."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import queueing
from .datasets import Sample, assemble
from .model import ModelParams, predict_kpis


@dataclass
class Predictions:
    delay: np.ndarray
    jitter: np.ndarray
    loss: np.ndarray


@dataclass
class Truth:
    n: np.ndarray
    delay: np.ndarray
    jitter: np.ndarray
    loss: np.ndarray
    dropped: np.ndarray


def truth_of(samples: Sequence[Sample]) -> Truth:
    t = lambda k: np.concatenate([s.targets[k] for s in samples]) if samples else np.zeros(0)
    loss = np.concatenate([s.loss_ratio for s in samples]) if samples else np.zeros(0)
    return Truth(t("n"), t("mean"), t("var"), loss, t("dropped"))


def model_predictions(delay_params: ModelParams, drops_params: ModelParams,
                      samples: Sequence[Sample], chunk: int = 64) -> Predictions:
    parts = []
    for i in range(0, len(samples), chunk):
        batch = assemble(samples[i:i + chunk])
        parts.append(predict_kpis(delay_params, drops_params, batch.graph))
    cat = lambda f: np.concatenate([getattr(p, f) for p in parts]) if parts else np.zeros(0)
    return Predictions(cat("delay"), cat("jitter"), cat("loss"))


def baseline_predictions(samples: Sequence[Sample]) -> Predictions:
    d, j, l = [], [], []
    for s in samples:
        sol = queueing.solve_fixed_point(s.topology, s.routing, s.tm)
        d.append(sol.path_delay)
        j.append(sol.path_variance)
        l.append(sol.path_loss)
    cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0)
    return Predictions(cat(d), cat(j), cat(l))


def relative_errors(pred: np.ndarray, true: np.ndarray, eligible: np.ndarray) -> tuple[np.ndarray, int]:
    """Signed ``(pred - true) / true`` over eligible entries with ``true > 0``."""
    ok = eligible & (true > 0)
    excluded = int(np.sum(eligible & ~ok))
    return (pred[ok] - true[ok]) / true[ok], excluded


def mre(rel: np.ndarray) -> float:
    return float(np.mean(np.abs(rel))) if rel.size else float("nan")


def pearson(pred: np.ndarray, true: np.ndarray) -> tuple[float, bool]:
    """Correlation and a degenerate flag (constant input -> 0.0, True)."""
    if pred.size < 2 or np.std(pred) == 0 or np.std(true) == 0:
        return 0.0, True
    return float(np.corrcoef(pred, true)[0, 1]), False


def export_cdf(errors) -> list[tuple[float, float]]:
    """Empirical CDF of errors: sorted distinct values with the fraction <= each."""
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise ValueError("no errors to export")
    values, counts = np.unique(e, return_counts=True)
    cdf = np.cumsum(counts) / e.size
    return [(float(v), float(c)) for v, c in zip(values, cdf)]


def cdf_csv(errors) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["relative_error", "cdf"])
    for v, c in export_cdf(errors):
        w.writerow([repr(v), repr(c)])
    return out.getvalue()


@dataclass
class MetricsReport:
    label: str
    mre_delay: float
    mre_jitter: float
    mre_drops: float
    loss_correlation: float
    degenerate_loss_predictor: bool
    counts: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict, repr=False)

    def summary(self) -> dict:
        return {"label": self.label, "mre_delay": self.mre_delay, "mre_jitter": self.mre_jitter,
                "mre_drops": self.mre_drops, "loss_correlation": self.loss_correlation,
                "degenerate_loss_predictor": self.degenerate_loss_predictor, "counts": self.counts}


def report(pred: Predictions, truth: Truth, label: str) -> MetricsReport:
    delivered = truth.n > 0
    rd, xd = relative_errors(pred.delay, truth.delay, delivered)
    rj, xj = relative_errors(pred.jitter, truth.jitter, delivered)
    rl, xl = relative_errors(pred.loss, truth.loss, truth.dropped > 0)
    corr, degenerate = pearson(pred.loss, truth.loss)
    counts = {"pairs": int(truth.n.size), "delay": int(rd.size), "jitter": int(rj.size),
              "drops": int(rl.size), "excluded_zero_delay": xd, "excluded_zero_jitter": xj,
              "excluded_zero_loss": xl}
    return MetricsReport(label, mre(rd), mre(rj), mre(rl), corr, degenerate, counts,
                         {"delay": rd, "jitter": rj, "drops": rl})


def evaluate(delay_params: ModelParams, drops_params: ModelParams, samples: Sequence[Sample],
             with_baseline: bool = False) -> dict[str, MetricsReport]:
    truth = truth_of(samples)
    out = {"RN": report(model_predictions(delay_params, drops_params, samples), truth, "RN")}
    if with_baseline:
        out["QT"] = report(baseline_predictions(samples), truth, "QT")
    return out


def table(reports: dict[str, MetricsReport], row_label: str = "Test set") -> str:
    """Delay/jitter/drops MRE with one RN/QT column pair per metric."""
    labels = list(reports)
    head1 = f"{'':<12}" + "".join(f"| {m:<{9 * len(labels)}}" for m in ("Delay", "Jitter", "Drops"))
    head2 = f"{'':<12}" + "".join("| " + "".join(f"{l:<9}" for l in labels) for _ in range(3))
    cells = []
    for metric in ("mre_delay", "mre_jitter", "mre_drops"):
        cells.append("| " + "".join(f"{getattr(reports[l], metric):<9.3f}" for l in labels))
    return "\n".join([head1, head2, f"{row_label:<12}" + "".join(cells)])


def reports_json(reports: dict[str, MetricsReport], meta: dict | None = None) -> str:
    return json.dumps({"meta": meta or {}, "reports": {k: v.summary() for k, v in reports.items()}},
                      sort_keys=True, indent=2)
