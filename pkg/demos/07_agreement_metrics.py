"""
Scoring an evaluator against human annotations
==============================================
"""

from medeval.metrics import (
    ScoredCase,
    accuracy_2tuple,
    accuracy_triple,
    build_report,
    icc,
    krippendorff_alpha,
    paired_t_test,
    pearson,
    spearman,
    win_tie_tables,
)

# A ScoredCase holds the evaluator's score and the pooled human score for
# each response index of one case; labels name the system behind each index.
cases = [
    ScoredCase(
        case_id=f"case-{i}",
        model_scores={0: m0, 1: m1, 2: m2},
        human_scores={0: h0, 1: h1, 2: h2},
        model_labels={0: "ours", 1: "baseline", 2: "reference"},
    )
    for i, (m0, m1, m2, h0, h1, h2) in enumerate(
        [
            (5, 3, 4, 5, 2, 4),
            (4, 4, 2, 4, 3, 2),
            (2, 5, 3, 1, 5, 3),
            (3, 3, 5, 3, 4, 5),
        ]
    )
]

# Pairwise and whole-triple ranking agreement.
rate2 = accuracy_2tuple(cases)
rate3, skipped = accuracy_triple(cases)
print(f"2-tuple accuracy {rate2:.3f}, triple accuracy {rate3:.3f} ({skipped} skipped)")

# Correlations over the pooled score columns.
model_col = [c.model_scores[i] for c in cases for i in c.indices]
human_col = [c.human_scores[i] for c in cases for i in c.indices]
print(f"pearson {pearson(model_col, human_col):.3f}, spearman {spearman(model_col, human_col):.3f}")

# Inter-annotator agreement: rows are units, columns raters. krippendorff
# tolerates missing cells; ICC needs a complete matrix.
ratings = [[4.0, 5.0, 4.0], [2.0, 2.0, 3.0], [5.0, 4.0, None], [1.0, 2.0, 2.0]]
print(f"krippendorff alpha {krippendorff_alpha(ratings):.3f}")
complete = [row for row in ratings if None not in row]
print(f"ICC(2,k) {icc(complete):.3f}")

# Paired significance between two systems' per-case scores.
ours = [c.model_scores[0] for c in cases]
baseline = [c.model_scores[1] for c in cases]
t = paired_t_test(ours, baseline)
print(f"t({t.df}) = {t.statistic:.3f}, p = {t.p_value:.3f}")

# Win/tie tables group pairwise outcomes by model pair, for both columns.
table = win_tie_tables(cases, ("ours", "baseline"))
print(f"ours vs baseline by human scores: {table.by_human_scores}")

# build_report bundles everything above into one serializable object.
report = build_report(
    cases,
    alpha_ratings=ratings,
    ratings=complete,
    t_test_pair=(ours, baseline),
    model_pairs=[("ours", "baseline")],
)
print(f"report spearman {report.to_dict()['spearman']:.3f}")
