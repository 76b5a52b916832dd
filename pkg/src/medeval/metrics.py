"""Human-correlation metric harness.

Implements the score-agreement measures (pairwise and per-case ordering
accuracy, rank and linear correlation), annotator-agreement statistics
(two-way random ICC, Krippendorff's interval alpha), a paired t-test with a
hand-evaluated incomplete-beta p-value, and win/tie/loss tables. Everything
is a pure function over immutable inputs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Any, Iterator, Sequence

from .model import HumanAnnotation, InstructionRecord, LengthMismatch, MedevalError

Matrix = Sequence[Sequence[float]]


class NoPairs(MedevalError):
    pass


class NoTripleCases(MedevalError):
    pass


class ConstantInput(MedevalError):
    pass


class IncompleteMatrix(MedevalError):
    pass


class DegenerateVariance(MedevalError):
    pass


class AllMissing(MedevalError):
    pass


class NoVariance(MedevalError):
    pass


class ModelAbsent(MedevalError):
    pass


@dataclass(frozen=True)
class ScoredCase:
    """Per-response model and human scores for one case.

    model_labels optionally names the system behind each response index so
    win/tie tables can be grouped by model pair.
    """

    case_id: str
    model_scores: dict[int, float]
    human_scores: dict[int, float]
    model_labels: dict[int, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.model_scores:
            raise MedevalError(f"case {self.case_id}: no scores")
        if set(self.model_scores) != set(self.human_scores):
            raise MedevalError(f"case {self.case_id}: model/human keys differ")
        if self.model_labels and set(self.model_labels) != set(self.model_scores):
            raise MedevalError(f"case {self.case_id}: label keys differ from score keys")

    @property
    def indices(self) -> list[int]:
        return sorted(self.model_scores)

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "model_scores": {str(k): self.model_scores[k] for k in self.indices},
            "human_scores": {str(k): self.human_scores[k] for k in self.indices},
            "model_labels": {str(k): v for k, v in sorted(self.model_labels.items())},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScoredCase":
        return cls(
            case_id=d["case_id"],
            model_scores={int(k): float(v) for k, v in d["model_scores"].items()},
            human_scores={int(k): float(v) for k, v in d["human_scores"].items()},
            model_labels={int(k): v for k, v in d.get("model_labels", {}).items()},
        )


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


def same_weak_order(a: Sequence[float], b: Sequence[float]) -> bool:
    """True iff the two score vectors induce the same ranking-with-ties:
    every pairwise comparison (<, =, >) agrees."""
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} vs {len(b)} values")
    return all(
        _sign(a[i] - a[j]) == _sign(b[i] - b[j]) for i, j in combinations(range(len(a)), 2)
    )


def _case_pairs(case: ScoredCase) -> Iterator[tuple[float, float, float, float]]:
    idx = case.indices
    for i, j in combinations(idx, 2):
        yield case.model_scores[i], case.model_scores[j], case.human_scores[i], case.human_scores[j]


def accuracy_2tuple(cases: Sequence[ScoredCase], tie_mode: str = "include") -> float:
    """Fraction of response pairs whose model-score ordering matches the
    human ordering, ties included (a tie only matches a tie). With
    tie_mode="strict", pairs tied in either column are skipped."""
    matches = 0
    total = 0
    for case in cases:
        for mi, mj, hi, hj in _case_pairs(case):
            sm, sh = _sign(mi - mj), _sign(hi - hj)
            if tie_mode == "strict" and (sm == 0 or sh == 0):
                continue
            total += 1
            matches += sm == sh
    if total == 0:
        raise NoPairs("no response pairs to compare")
    return matches / total


def accuracy_triple(cases: Sequence[ScoredCase]) -> tuple[float, int]:
    """Fraction of exactly-three-response cases whose full weak ordering
    matches; returns (rate, skipped) where skipped counts other-arity cases."""
    matches = 0
    counted = 0
    skipped = 0
    for case in cases:
        idx = case.indices
        if len(idx) != 3:
            skipped += 1
            continue
        counted += 1
        m = [case.model_scores[i] for i in idx]
        h = [case.human_scores[i] for i in idx]
        matches += same_weak_order(m, h)
    if counted == 0:
        raise NoTripleCases("no three-response cases")
    return matches / counted, skipped


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the mean of their rank positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) != len(ys):
        raise LengthMismatch(f"{len(xs)} vs {len(ys)} values")
    n = len(xs)
    if n < 2:
        raise MedevalError("need at least 2 points")
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    if sxx == 0 or syy == 0:
        raise ConstantInput("correlation undefined for constant input")
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    return sxy / math.sqrt(sxx * syy)


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of average ranks (ties get mean ranks)."""
    if len(xs) != len(ys):
        raise LengthMismatch(f"{len(xs)} vs {len(ys)} values")
    return pearson(average_ranks(xs), average_ranks(ys))


def _validate_matrix(ratings: Matrix) -> tuple[int, int]:
    n = len(ratings)
    if n < 2:
        raise IncompleteMatrix("need at least 2 items")
    k = len(ratings[0])
    if k < 2:
        raise IncompleteMatrix("need at least 2 raters")
    for row in ratings:
        if len(row) != k:
            raise IncompleteMatrix("ragged ratings matrix")
        for v in row:
            if v is None or (isinstance(v, float) and math.isnan(v)):
                raise IncompleteMatrix("missing entry in ratings matrix")
    return n, k


def icc(ratings: Matrix, variant: str = "ICC(2,k)") -> float:
    """Two-way random-effects intraclass correlation from the mean-squares
    decomposition; variant "ICC(2,1)" (single rater) or "ICC(2,k)"
    (average of k raters, the default)."""
    if variant not in ("ICC(2,1)", "ICC(2,k)"):
        raise MedevalError(f"unknown ICC variant {variant!r}")
    n, k = _validate_matrix(ratings)
    grand = sum(sum(row) for row in ratings) / (n * k)
    row_means = [sum(row) / k for row in ratings]
    col_means = [sum(ratings[i][j] for i in range(n)) / n for j in range(k)]
    ssr = k * sum((m - grand) ** 2 for m in row_means)
    ssc = n * sum((m - grand) ** 2 for m in col_means)
    sse = sum(
        (ratings[i][j] - row_means[i] - col_means[j] + grand) ** 2
        for i in range(n)
        for j in range(k)
    )
    msr = ssr / (n - 1)
    msc = ssc / (k - 1)
    mse = sse / ((n - 1) * (k - 1))
    if variant == "ICC(2,1)":
        denom = msr + (k - 1) * mse + (k / n) * (msc - mse)
    else:
        denom = msr + (msc - mse) / n
    if abs(denom) < 1e-300:
        raise DegenerateVariance("zero variance in ratings matrix")
    return (msr - mse) / denom


def krippendorff_alpha(ratings: Sequence[Sequence[float | None]], level: str = "interval") -> float:
    """Krippendorff's alpha via the coincidence matrix; interval level uses
    the squared-difference metric. Items are rows, raters columns; None
    marks a missing rating, and items with fewer than two ratings drop out."""
    if level != "interval":
        raise MedevalError(f"unsupported level {level!r}")
    units: list[list[float]] = []
    for row in ratings:
        present = [float(v) for v in row if v is not None]
        if len(present) >= 2:
            units.append(present)
    if not units:
        raise AllMissing("no item has two or more ratings")

    coincidence: dict[tuple[float, float], float] = {}
    n_total = 0.0
    for unit in units:
        m = len(unit)
        n_total += m
        for i in range(m):
            for j in range(m):
                if i == j:
                    continue
                key = (unit[i], unit[j])
                coincidence[key] = coincidence.get(key, 0.0) + 1.0 / (m - 1)

    values = sorted({v for unit in units for v in unit})
    marginals = {v: 0.0 for v in values}
    for (a, _b), weight in coincidence.items():
        marginals[a] += weight

    d_observed = sum(w * (a - b) ** 2 for (a, b), w in coincidence.items()) / n_total
    d_expected = sum(
        marginals[a] * marginals[b] * (a - b) ** 2 for a in values for b in values
    ) / (n_total * (n_total - 1))
    if d_expected == 0:
        raise NoVariance("all ratings identical; alpha undefined")
    return 1.0 - d_observed / d_expected


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    max_iter = 300
    eps = 3e-16
    fpmin = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
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


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


@dataclass(frozen=True)
class TTestResult:
    statistic: float
    p_value: float
    df: int
    degenerate: bool = False

    def __iter__(self) -> Iterator[float]:
        return iter((self.statistic, self.p_value, self.df))

    def to_dict(self) -> dict[str, Any]:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "df": self.df,
            "degenerate": self.degenerate,
        }


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Two-sided paired t-test; p comes from the regularized incomplete
    beta. A constant nonzero difference has zero variance: reported as
    p -> 0 with the degenerate flag instead of an error."""
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} vs {len(b)} values")
    n = len(a)
    if n < 2:
        raise MedevalError("need at least 2 pairs")
    diffs = [x - y for x, y in zip(a, b)]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    df = n - 1
    if var == 0.0:
        if mean == 0.0:
            return TTestResult(statistic=0.0, p_value=1.0, df=df)
        return TTestResult(
            statistic=math.copysign(math.inf, mean), p_value=0.0, df=df, degenerate=True
        )
    t = mean / math.sqrt(var / n)
    p = betainc_regularized(df / 2.0, 0.5, df / (df + t * t))
    return TTestResult(statistic=t, p_value=min(max(p, 0.0), 1.0), df=df)


@dataclass(frozen=True)
class WinTieResult:
    model_pair: tuple[str, str]
    by_model_scores: tuple[float, float, float]
    by_human_scores: tuple[float, float, float]
    n_cases: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "model_pair": list(self.model_pair),
            "by_model_scores": list(self.by_model_scores),
            "by_human_scores": list(self.by_human_scores),
            "n_cases": self.n_cases,
        }


def _compare_counts(pairs: Sequence[tuple[float, float]]) -> tuple[float, float, float]:
    wins_a = sum(1 for x, y in pairs if x > y)
    ties = sum(1 for x, y in pairs if x == y)
    wins_b = len(pairs) - wins_a - ties
    n = len(pairs)
    return (wins_a / n, ties / n, wins_b / n)


def win_tie_tables(cases: Sequence[ScoredCase], model_pair: tuple[str, str]) -> WinTieResult:
    """Per-case win/tie/loss fractions for a model pair, computed over both
    score columns. Cases lacking either model are skipped."""
    a_label, b_label = model_pair
    model_pairs: list[tuple[float, float]] = []
    human_pairs: list[tuple[float, float]] = []
    for case in cases:
        inverse = {label: idx for idx, label in case.model_labels.items()}
        if a_label not in inverse or b_label not in inverse:
            continue
        ia, ib = inverse[a_label], inverse[b_label]
        model_pairs.append((case.model_scores[ia], case.model_scores[ib]))
        human_pairs.append((case.human_scores[ia], case.human_scores[ib]))
    if not model_pairs:
        raise ModelAbsent(f"no case scores both {a_label!r} and {b_label!r}")
    return WinTieResult(
        model_pair=(a_label, b_label),
        by_model_scores=_compare_counts(model_pairs),
        by_human_scores=_compare_counts(human_pairs),
        n_cases=len(model_pairs),
    )


@dataclass(frozen=True)
class MetricReport:
    acc_2tuple: float
    acc_triple: float | None
    spearman: float
    pearson: float
    n_cases: int
    n_pairs: int
    icc: float | None = None
    krippendorff_alpha: float | None = None
    t_test: TTestResult | None = None
    win_tie: tuple[WinTieResult, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.acc_2tuple <= 1.0:
            raise MedevalError("acc_2tuple outside [0,1]")
        if self.acc_triple is not None and not 0.0 <= self.acc_triple <= 1.0:
            raise MedevalError("acc_triple outside [0,1]")
        for name, value in (("spearman", self.spearman), ("pearson", self.pearson)):
            if not -1.0 - 1e-12 <= value <= 1.0 + 1e-12:
                raise MedevalError(f"{name} outside [-1,1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "acc_2tuple": self.acc_2tuple,
            "acc_triple": self.acc_triple,
            "spearman": self.spearman,
            "pearson": self.pearson,
            "n_cases": self.n_cases,
            "n_pairs": self.n_pairs,
            "icc": self.icc,
            "krippendorff_alpha": self.krippendorff_alpha,
            "t_test": self.t_test.to_dict() if self.t_test else None,
            "win_tie": [w.to_dict() for w in self.win_tie],
        }


def pooled_score_columns(cases: Sequence[ScoredCase]) -> tuple[list[float], list[float]]:
    """All (model, human) score pairs across cases, response-level pooling."""
    xs: list[float] = []
    ys: list[float] = []
    for case in cases:
        for i in case.indices:
            xs.append(case.model_scores[i])
            ys.append(case.human_scores[i])
    return xs, ys


def per_case_correlations(cases: Sequence[ScoredCase]) -> tuple[float, float]:
    """Mean per-case Spearman/Pearson over cases where both are defined."""
    rhos: list[float] = []
    rs: list[float] = []
    for case in cases:
        idx = case.indices
        m = [case.model_scores[i] for i in idx]
        h = [case.human_scores[i] for i in idx]
        try:
            rhos.append(spearman(m, h))
            rs.append(pearson(m, h))
        except (ConstantInput, MedevalError):
            continue
    if not rhos:
        raise ConstantInput("no case with defined correlations")
    return sum(rhos) / len(rhos), sum(rs) / len(rs)


def build_report(
    cases: Sequence[ScoredCase],
    ratings: Matrix | None = None,
    alpha_ratings: Sequence[Sequence[float | None]] | None = None,
    t_test_pair: tuple[Sequence[float], Sequence[float]] | None = None,
    model_pairs: Sequence[tuple[str, str]] = (),
    tie_mode: str = "include",
) -> MetricReport:
    """Assemble the full report; agreement stats and the t-test are
    computed only when their inputs are supplied."""
    if not cases:
        raise MedevalError("no cases")
    xs, ys = pooled_score_columns(cases)
    acc2 = accuracy_2tuple(cases, tie_mode=tie_mode)
    try:
        acc3, _ = accuracy_triple(cases)
    except NoTripleCases:
        acc3 = None
    n_pairs = sum(
        len(list(combinations(case.indices, 2))) for case in cases
    )
    return MetricReport(
        acc_2tuple=acc2,
        acc_triple=acc3,
        spearman=spearman(xs, ys),
        pearson=pearson(xs, ys),
        n_cases=len(cases),
        n_pairs=n_pairs,
        icc=icc(ratings) if ratings is not None else None,
        krippendorff_alpha=krippendorff_alpha(alpha_ratings) if alpha_ratings is not None else None,
        t_test=paired_t_test(*t_test_pair) if t_test_pair is not None else None,
        win_tie=tuple(win_tie_tables(cases, pair) for pair in model_pairs),
    )


def human_score_map(annotations: Sequence[HumanAnnotation]) -> dict[str, dict[int, float]]:
    """case_id -> response index -> human score.

    Each annotator's score for a response is the mean of their
    (relevancy, fluency, knowledge_correctness) triple; the case-level human
    score averages those across the annotators who rated the response.
    """
    sums: dict[str, dict[int, list[float]]] = {}
    for ann in annotations:
        per_case = sums.setdefault(ann.case_id, {})
        for idx in ann.response_scores:
            per_case.setdefault(idx, []).append(ann.response_score(idx))
    return {
        case_id: {idx: sum(vals) / len(vals) for idx, vals in per_case.items()}
        for case_id, per_case in sums.items()
    }


def join_scored_cases(
    records: Sequence[InstructionRecord],
    annotations: Sequence[HumanAnnotation],
) -> list[ScoredCase]:
    """Pair each record's evaluator scores with averaged human scores.

    A case is included only when every one of its responses received at
    least one human rating; unannotated records are dropped.
    """
    humans = human_score_map(annotations)
    cases = []
    for record in records:
        per_case = humans.get(record.record_id)
        if per_case is None:
            continue
        indices = set(record.evaluation.scores)
        if not indices <= set(per_case):
            continue
        cases.append(
            ScoredCase(
                case_id=record.record_id,
                model_scores={i: float(record.evaluation.scores[i]) for i in indices},
                human_scores={i: per_case[i] for i in indices},
                model_labels={
                    i: record.case.responses[i].model_label for i in indices
                },
            )
        )
    return cases


def annotation_matrix(
    annotations: Sequence[HumanAnnotation],
) -> tuple[list[tuple[str, int]], list[str], list[list[float | None]]]:
    """Items-by-annotators score matrix with None for unrated cells.

    Rows are (case_id, response index) pairs in sorted order; columns are
    sorted annotator ids. Feeds the agreement statistics.
    """
    annotators = sorted({a.annotator_id for a in annotations})
    item_keys = sorted({(a.case_id, i) for a in annotations for i in a.response_scores})
    by_annotator = {a: {} for a in annotators}
    for ann in annotations:
        for idx in ann.response_scores:
            by_annotator[ann.annotator_id][(ann.case_id, idx)] = ann.response_score(idx)
    matrix = [
        [by_annotator[a].get(key) for a in annotators] for key in item_keys
    ]
    return item_keys, annotators, matrix


def complete_rows(matrix: Sequence[Sequence[float | None]]) -> list[list[float]]:
    """Rows where every annotator rated; the ICC needs a full matrix."""
    return [list(row) for row in matrix if all(v is not None for v in row)]


def paired_model_columns(
    cases: Sequence[ScoredCase], pair: tuple[str, str]
) -> tuple[list[float], list[float]] | None:
    """Paired evaluator-score columns for two model labels, one entry per
    case where both labels answered. None when fewer than two such cases."""
    xs: list[float] = []
    ys: list[float] = []
    for case in cases:
        inverse = {label: idx for idx, label in case.model_labels.items()}
        if pair[0] in inverse and pair[1] in inverse:
            xs.append(case.model_scores[inverse[pair[0]]])
            ys.append(case.model_scores[inverse[pair[1]]])
    return (xs, ys) if len(xs) >= 2 else None


def write_win_tie_csv(results: Sequence[WinTieResult], path: str | Path) -> None:
    """CSV for external plotting: one row per (pair, score column)."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model_a", "model_b", "column", "win_a", "tie", "win_b", "n_cases"])
        for res in results:
            for column, triple in (
                ("model", res.by_model_scores),
                ("human", res.by_human_scores),
            ):
                writer.writerow(
                    [res.model_pair[0], res.model_pair[1], column, *triple, res.n_cases]
                )
