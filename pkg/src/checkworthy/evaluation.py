"""Ranking metrics, the cross-validation harness, and significance testing.

Sentences of one speech form one ranking query. The protocol trains and
scores per fold and repetition, averages each metric across folds and then
repetitions, and keeps the raw per-fold values so two runs can be compared
with a paired two-tailed t-test on their per-repetition means.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .corpus import Dataset, FoldPlan, Sentence

METRIC_NAMES = ("MAP", "P@5", "P@10", "P@20", "P@R")


class EvaluationError(ValueError):
    pass


class RankedItem(NamedTuple):
    sentence_id: str
    score: float
    relevant: bool


def rank_items(items: Iterable[tuple[str, float, bool]]) -> list[RankedItem]:
    """Sort by score descending; ties break on sentence id ascending."""
    ranked = [RankedItem(str(i), float(s), bool(r)) for i, s, r in items]
    ranked.sort(key=lambda item: (-item.score, item.sentence_id))
    return ranked


def average_precision(ranked: Sequence[RankedItem]) -> float:
    """AP = (1/R) * sum of precision at each relevant rank; 0 when R = 0."""
    num_relevant = sum(1 for item in ranked if item.relevant)
    if num_relevant == 0:
        return 0.0
    hits = 0
    total = 0.0
    for k, item in enumerate(ranked, start=1):
        if item.relevant:
            hits += 1
            total += hits / k
    return total / num_relevant


def precision_at(ranked: Sequence[RankedItem], k: int) -> float:
    """Relevant items in the top min(k, length), divided by k."""
    if k < 1:
        raise EvaluationError("k must be >= 1")
    hits = sum(1 for item in ranked[:k] if item.relevant)
    return hits / k


@dataclass
class QueryMetrics:
    query_id: str
    ap: float
    p5: float
    p10: float
    p20: float
    p_at_r: float
    num_relevant: int
    zero_positive_warning: bool

    def metric_values(self) -> dict[str, float]:
        return {
            "MAP": self.ap,
            "P@5": self.p5,
            "P@10": self.p10,
            "P@20": self.p20,
            "P@R": self.p_at_r,
        }


def evaluate_fold(
    scored: Iterable[tuple[str, float, bool]], query_id: str
) -> QueryMetrics:
    """All metrics for one ranking query (the test speech of a fold).

    R is the number of relevant sentences in the query; a query with zero
    positives yields all-zero metrics and a warning flag.
    """
    ranked = rank_items(scored)
    num_relevant = sum(1 for item in ranked if item.relevant)
    if num_relevant == 0:
        warnings.warn(f"query {query_id!r} has no check-worthy sentences; metrics are 0")
        return QueryMetrics(query_id, 0.0, 0.0, 0.0, 0.0, 0.0, 0, True)
    return QueryMetrics(
        query_id=query_id,
        ap=average_precision(ranked),
        p5=precision_at(ranked, 5),
        p10=precision_at(ranked, 10),
        p20=precision_at(ranked, 20),
        p_at_r=precision_at(ranked, num_relevant),
        num_relevant=num_relevant,
        zero_positive_warning=False,
    )


# --- Protocol harness -------------------------------------------------------

@dataclass
class FoldOutcome:
    repetition: int
    fold_index: int
    metrics: QueryMetrics


@dataclass
class EvalReport:
    """Per-query values, per-repetition means, and their grand means."""

    rows: list[FoldOutcome]
    per_repetition_means: list[dict[str, float]]
    grand_means: dict[str, float]
    significance: dict[str, dict[str, float]] | None = None

    def repetition_series(self, metric: str) -> list[float]:
        return [means[metric] for means in self.per_repetition_means]

    def to_dict(self) -> dict:
        return {
            "rows": [
                {
                    "repetition": row.repetition,
                    "fold_index": row.fold_index,
                    "query_id": row.metrics.query_id,
                    "num_relevant": row.metrics.num_relevant,
                    "zero_positive_warning": row.metrics.zero_positive_warning,
                    **row.metrics.metric_values(),
                }
                for row in self.rows
            ],
            "per_repetition_means": self.per_repetition_means,
            "grand_means": self.grand_means,
            "significance": self.significance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    def per_fold_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["repetition", "fold_index", "query_id", *METRIC_NAMES])
        for row in self.rows:
            values = row.metrics.metric_values()
            writer.writerow(
                [row.repetition, row.fold_index, row.metrics.query_id]
                + [f"{values[m]:.6f}" for m in METRIC_NAMES]
            )
        return buf.getvalue()

    def summary_table(self) -> str:
        header = " ".join(f"{m:>8}" for m in METRIC_NAMES)
        values = " ".join(f"{self.grand_means[m]:8.3f}" for m in METRIC_NAMES)
        return f"{'':12} {header}\n{'grand mean':12} {values}"

    @staticmethod
    def from_dict(data: dict) -> "EvalReport":
        rows = [
            FoldOutcome(
                repetition=r["repetition"],
                fold_index=r["fold_index"],
                metrics=QueryMetrics(
                    query_id=r["query_id"],
                    ap=r["MAP"],
                    p5=r["P@5"],
                    p10=r["P@10"],
                    p20=r["P@20"],
                    p_at_r=r["P@R"],
                    num_relevant=r["num_relevant"],
                    zero_positive_warning=r["zero_positive_warning"],
                ),
            )
            for r in data["rows"]
        ]
        return EvalReport(
            rows=rows,
            per_repetition_means=data["per_repetition_means"],
            grand_means=data["grand_means"],
            significance=data.get("significance"),
        )


PipelineFn = Callable[
    [int, int, list[Sentence], list[Sentence], list[Sentence]], dict[str, float]
]


def run_protocol(
    dataset: Dataset,
    plan: FoldPlan,
    pipeline: PipelineFn,
    jobs: int = 1,
    pooled: bool = False,
) -> EvalReport:
    """Run the train/score pipeline for every fold and repetition.

    ``pipeline(fold_index, repetition, train, valid, test)`` returns a score
    for every test sentence id. One query per test speech; metrics are
    averaged across folds within a repetition, then across repetitions.
    ``pooled`` instead ranks all test sentences of a fold as a single query.
    Tasks are independent; ``jobs`` > 1 runs them in a thread pool with a
    deterministic single-threaded reduce.
    """
    tasks = [
        (repetition, fold_index)
        for repetition in range(plan.repetitions)
        for fold_index in range(len(plan.folds))
    ]

    def run_task(task: tuple[int, int]):
        repetition, fold_index = task
        train_s, valid_s, test_s = plan.split(dataset, fold_index, repetition)
        return test_s, pipeline(fold_index, repetition, train_s, valid_s, test_s)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run_task, tasks))
    else:
        outcomes = [run_task(t) for t in tasks]

    rows: list[FoldOutcome] = []
    for (repetition, fold_index), (test_s, scores) in zip(tasks, outcomes):
        if pooled:
            queries = {"+".join(sorted({s.speech_id for s in test_s})): test_s}
        else:
            queries = {}
            for s in test_s:
                queries.setdefault(s.speech_id, []).append(s)
        for query_id in sorted(queries):
            items = []
            for s in queries[query_id]:
                if s.id not in scores:
                    raise EvaluationError(
                        f"pipeline did not score test sentence {s.id!r}"
                    )
                items.append((s.id, scores[s.id], s.label == 1.0))
            rows.append(
                FoldOutcome(
                    repetition=repetition,
                    fold_index=fold_index,
                    metrics=evaluate_fold(items, query_id=query_id),
                )
            )
    per_rep: list[dict[str, float]] = []
    for repetition in range(plan.repetitions):
        rep_rows = [r for r in rows if r.repetition == repetition]
        per_rep.append(
            {
                m: float(np.mean([r.metrics.metric_values()[m] for r in rep_rows]))
                for m in METRIC_NAMES
            }
        )
    grand = {m: float(np.mean([means[m] for means in per_rep])) for m in METRIC_NAMES}
    return EvalReport(rows=rows, per_repetition_means=per_rep, grand_means=grand)


# --- Paired t-test -----------------------------------------------------------

class TTestResult(NamedTuple):
    t: float
    p: float
    df: int
    mean_diff: float


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz's method)."""
    max_iter = 300
    eps = 1e-15
    fpmin = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_tailed_p(t: float, df: int) -> float:
    """P(|T_df| >= |t|) via the incomplete beta identity."""
    if df < 1:
        raise EvaluationError("degrees of freedom must be >= 1")
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def paired_ttest(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Classical paired t-test with n-1 degrees of freedom, two-tailed p.

    Zero variance of the differences is reported as p=0 when the means
    differ and p=1 when the series are identical.
    """
    if len(a) != len(b):
        raise EvaluationError("paired series must have equal length")
    if len(a) < 2:
        raise EvaluationError("paired t-test needs at least 2 pairs")
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    n = len(d)
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(t=0.0, p=1.0, df=n - 1, mean_diff=0.0)
        return TTestResult(t=math.inf if mean > 0 else -math.inf, p=0.0, df=n - 1, mean_diff=mean)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t=t, p=student_t_two_tailed_p(t, n - 1), df=n - 1, mean_diff=mean)


def compare_reports(report: EvalReport, baseline: EvalReport) -> dict[str, dict[str, float]]:
    """Paired t-tests on the per-repetition means of every metric."""
    out: dict[str, dict[str, float]] = {}
    for metric in METRIC_NAMES:
        result = paired_ttest(
            report.repetition_series(metric), baseline.repetition_series(metric)
        )
        out[metric] = {"t": result.t, "p": result.p, "mean_diff": result.mean_diff}
    return out
