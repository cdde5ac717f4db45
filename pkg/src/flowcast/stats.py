"""Statistical model comparison: significance gate, pairwise tests, ranking.

The pipeline per dataset: a Friedman test on the per-fold score matrix acts
as a gate; when it finds no significant differences every model gets the
uniform mid rank. Otherwise each model pair is compared with a two-sided
Wilcoxon signed-rank test over folds; significant pairs award a WIN to the
higher-scoring model, the rest tie. Models are ranked by descending WINS
with fractional ranks for groups of equal WINS. Average ranks over datasets
are then compared against the Nemenyi critical distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import chi2, rankdata

# Two-tailed Nemenyi critical values Q_{alpha,M} for M = 2..20: upper
# quantiles of the Studentized range distribution with infinite degrees of
# freedom, divided by sqrt(2) (the standard post-hoc table).
_Q_TABLE = {
    0.05: [1.9600, 2.3437, 2.5690, 2.7278, 2.8497, 2.9483, 3.0309, 3.1017,
           3.1637, 3.2187, 3.2680, 3.3127, 3.3536, 3.3912, 3.4260, 3.4584,
           3.4887, 3.5171, 3.5438],
    0.10: [1.6449, 2.0523, 2.2913, 2.4595, 2.5885, 2.6927, 2.7799, 2.8546,
           2.9199, 2.9778, 3.0297, 3.0767, 3.1197, 3.1592, 3.1957, 3.2297,
           3.2615, 3.2912, 3.3192],
}

EXACT_WILCOXON_MAX_N = 25


def friedman_test(fold_scores, alpha: float = 0.05):
    """Friedman rank test over a P x M (folds x models) score matrix.

    Returns (statistic, p_value, reject). Models are ranked within each
    fold with average ranks for ties; the chi-square statistic carries the
    standard tie correction. A fully tied matrix yields statistic 0 and no
    rejection.
    """
    scores = np.asarray(fold_scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValueError("fold_scores must be a P x M matrix")
    p, m = scores.shape
    if p < 2 or m < 2:
        raise ValueError("need at least 2 folds and 2 models")
    ranks = np.vstack([rankdata(row) for row in scores])
    rank_sums = ranks.sum(axis=0)
    ssbn = float((rank_sums ** 2).sum())
    ties = 0.0
    for row in scores:
        _, counts = np.unique(row, return_counts=True)
        ties += float((counts ** 3 - counts).sum())
    correction = 1.0 - ties / (p * m * (m * m - 1))
    if correction <= 0.0:
        return 0.0, 1.0, False
    statistic = (12.0 / (p * m * (m + 1)) * ssbn - 3.0 * p * (m + 1)) / correction
    statistic = max(statistic, 0.0)
    p_value = float(chi2.sf(statistic, m - 1))
    return float(statistic), p_value, bool(p_value < alpha)


def _signed_rank_counts(doubled_ranks: np.ndarray) -> np.ndarray:
    """Distribution of the positive-rank sum over all sign assignments.

    counts[s] = number of sign assignments whose positive ranks (on the
    doubled, integer scale) sum to s. Exact counterpart of enumerating all
    2^n assignments, in O(n * total) time.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: counts.size - r]
        counts += shifted
    return counts


def wilcoxon_signed_rank(a, b, alpha: float = 0.05, zero_method: str = "discard"):
    """Two-sided paired Wilcoxon signed-rank test; returns (p, significant).

    Zero differences are dropped before ranking ("discard", the classic
    treatment) or kept in the ranking but excluded from the statistic
    ("pratt"). Tied absolute differences share average ranks. Up to 25
    effective pairs the p-value is exact (the full sign-assignment
    distribution); beyond that a normal approximation with tie and
    continuity corrections is used.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("samples must be equal-length vectors of length >= 2")
    if zero_method not in ("discard", "pratt"):
        raise ValueError("zero_method must be 'discard' or 'pratt'")
    diff = x - y
    if zero_method == "discard":
        diff = diff[diff != 0.0]
        ranks = rankdata(np.abs(diff))
    else:
        ranks = rankdata(np.abs(diff))
        keep = diff != 0.0
        ranks = ranks[keep]
        diff = diff[keep]
    n = diff.size
    if n == 0:
        return 1.0, False
    w_plus = float(ranks[diff > 0].sum())
    total = float(ranks.sum())
    w_min = min(w_plus, total - w_plus)
    if n <= EXACT_WILCOXON_MAX_N:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        counts = _signed_rank_counts(doubled)
        tail = float(counts[: int(round(2.0 * w_min)) + 1].sum()) / (2.0 ** n)
        p = min(1.0, 2.0 * tail)
    else:
        # W+ is a sum of rank*Bernoulli(1/2): mean total/2, var sum(r^2)/4
        # (reduces to the textbook tie-corrected formula without zeros)
        mean = total / 2.0
        var = float((ranks ** 2).sum()) / 4.0
        z = (abs(w_plus - mean) - 0.5) / math.sqrt(var)
        p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    return p, bool(p < alpha)


@dataclass
class RankTally:
    """Per-(dataset, model) outcome of the pairwise comparisons."""

    model: str
    wins: int
    ties: int
    losses: int
    rank: float


def fractional_ranks(wins) -> np.ndarray:
    """Ranks by descending wins; equal-wins groups share the mean position."""
    w = np.asarray(wins, dtype=np.float64)
    return rankdata(-w)


def rank_models_for_atr(fold_scores, avg_scores, alpha: float = 0.05,
                        model_names: list[str] | None = None) -> list[RankTally]:
    """Rank M models on one dataset from their P x M fold scores.

    When the Friedman gate finds no significant differences, every pair
    counts as a tie and all models share the uniform mid rank (M+1)/2.
    Otherwise each pair is Wilcoxon-tested: non-significant pairs tie,
    significant ones award a WIN to the model with the higher average
    score. Ranks are fractional over descending WINS.
    """
    scores = np.asarray(fold_scores, dtype=np.float64)
    avg = np.asarray(avg_scores, dtype=np.float64)
    p, m = scores.shape
    if avg.shape != (m,):
        raise ValueError("avg_scores must have one entry per model")
    names = model_names if model_names is not None else [f"m{i + 1}" for i in range(m)]
    if len(names) != m:
        raise ValueError("model_names must have one entry per model")
    wins = np.zeros(m, dtype=int)
    ties = np.zeros(m, dtype=int)
    losses = np.zeros(m, dtype=int)
    _, _, reject = friedman_test(scores, alpha)
    if not reject:
        uniform = (m + 1) / 2.0
        return [RankTally(model=names[i], wins=0, ties=m - 1, losses=0,
                          rank=uniform) for i in range(m)]
    for i in range(m):
        for j in range(i + 1, m):
            _, significant = wilcoxon_signed_rank(scores[:, i], scores[:, j], alpha)
            if not significant:
                ties[i] += 1
                ties[j] += 1
            elif avg[i] > avg[j]:
                wins[i] += 1
                losses[j] += 1
            else:
                wins[j] += 1
                losses[i] += 1
    ranks = fractional_ranks(wins)
    return [RankTally(model=names[i], wins=int(wins[i]), ties=int(ties[i]),
                      losses=int(losses[i]), rank=float(ranks[i]))
            for i in range(m)]


def nemenyi_cd(n_models: int, n_datasets: int, alpha: float = 0.05) -> float:
    """Critical distance Q_{alpha,M} * sqrt(M(M+1) / (6 N))."""
    if n_models < 2 or n_models > 20:
        raise ValueError("critical values tabulated for 2..20 models only")
    if n_datasets < 1:
        raise ValueError("need at least one dataset")
    key = round(alpha, 2)
    if key not in _Q_TABLE:
        raise ValueError(f"alpha must be one of {sorted(_Q_TABLE)} (tabulated levels)")
    q = _Q_TABLE[key][n_models - 2]
    return q * math.sqrt(n_models * (n_models + 1) / (6.0 * n_datasets))


@dataclass
class RankReport:
    """Average ranks across datasets plus the Nemenyi critical distance."""

    model_names: list[str]
    avg_ranks: np.ndarray
    cd: float
    alpha: float
    n_models: int
    n_datasets: int
    cliques: list[list[str]]


def _maximal_cliques(names: list[str], ranks: np.ndarray, cd: float) -> list[list[str]]:
    """Maximal runs of rank-sorted models whose spread stays under cd."""
    order = np.argsort(ranks, kind="stable")
    sorted_ranks = ranks[order]
    m = len(names)
    intervals = []
    for i in range(m):
        j = i
        while j + 1 < m and sorted_ranks[j + 1] - sorted_ranks[i] < cd:
            j += 1
        intervals.append((i, j))
    keep = [(i, j) for (i, j) in intervals
            if not any(oi <= i and j <= oj and (oi, oj) != (i, j) for oi, oj in intervals)]
    seen = set()
    cliques = []
    for i, j in keep:
        span = tuple(order[i:j + 1])
        if span not in seen:
            seen.add(span)
            cliques.append([names[k] for k in span])
    return cliques


def average_ranks(tallies_by_atr: dict, alpha: float = 0.05) -> RankReport:
    """Aggregate per-dataset rank tallies into the final report.

    `tallies_by_atr` maps dataset id -> list of RankTally with a consistent
    model order across datasets.
    """
    if not tallies_by_atr:
        raise ValueError("no datasets to aggregate")
    atrs = sorted(tallies_by_atr)
    names = [t.model for t in tallies_by_atr[atrs[0]]]
    rank_rows = []
    for atr in atrs:
        tallies = tallies_by_atr[atr]
        if [t.model for t in tallies] != names:
            raise ValueError(f"dataset {atr!r} has inconsistent model order")
        rank_rows.append([t.rank for t in tallies])
    ranks = np.asarray(rank_rows, dtype=np.float64)
    avg = ranks.mean(axis=0)
    cd = nemenyi_cd(len(names), len(atrs), alpha)
    cliques = _maximal_cliques(names, avg, cd)
    return RankReport(model_names=names, avg_ranks=avg, cd=cd, alpha=alpha,
                      n_models=len(names), n_datasets=len(atrs), cliques=cliques)


def report_table(report: RankReport) -> str:
    """Human-readable average-rank table."""
    order = np.argsort(report.avg_ranks, kind="stable")
    width = max(len(n) for n in report.model_names)
    lines = [
        f"average ranks over {report.n_datasets} datasets "
        f"(alpha={report.alpha:g}, CD={report.cd:.4f})",
        f"{'model'.ljust(width)}  avg_rank",
    ]
    for i in order:
        lines.append(f"{report.model_names[i].ljust(width)}  {report.avg_ranks[i]:8.4f}")
    for k, clique in enumerate(report.cliques, start=1):
        lines.append(f"group {k}: {', '.join(clique)}")
    return "\n".join(lines) + "\n"


def report_csv(report: RankReport) -> str:
    """Machine-readable export of the rank report."""
    lines = ["model,avg_rank,clique_ids"]
    clique_ids: dict[str, list[str]] = {n: [] for n in report.model_names}
    for k, clique in enumerate(report.cliques, start=1):
        for name in clique:
            clique_ids[name].append(str(k))
    for i, name in enumerate(report.model_names):
        lines.append(f"{name},{float(report.avg_ranks[i])!r},{'|'.join(clique_ids[name])}")
    return "\n".join(lines) + "\n"


def text_diagram(report: RankReport, width: int = 72) -> str:
    """Fixed-width rendering of the critical-distance diagram."""
    m = report.n_models
    span = max(m - 1, 1)
    usable = width - 1

    def col(rank: float) -> int:
        return int(round((rank - 1.0) / span * usable))

    axis = ["-"] * width
    for tick in range(1, m + 1):
        axis[col(tick)] = "+"
    lines = [f"CD = {report.cd:.4f} (alpha={report.alpha:g}, "
             f"{report.n_models} models, {report.n_datasets} datasets)"]
    cd_cols = max(1, col(1.0 + report.cd) - col(1.0))
    lines.append("[" + "=" * min(cd_cols, width - 2) + "] critical distance")
    lines.append("".join(axis))
    ticks = [" "] * width
    for t in range(1, m + 1):
        ticks[col(t)] = str(t)[-1]
    lines.append("".join(ticks))
    order = np.argsort(report.avg_ranks, kind="stable")
    for i in order:
        marker = [" "] * width
        marker[col(report.avg_ranks[i])] = "*"
        lines.append("".join(marker) + f" {report.model_names[i]} "
                     f"({report.avg_ranks[i]:.3f})")
    for k, clique in enumerate(report.cliques, start=1):
        if len(clique) < 2:
            continue
        ranks = [report.avg_ranks[report.model_names.index(n)] for n in clique]
        lo, hi = col(min(ranks)), col(max(ranks))
        bar = [" "] * width
        for c in range(lo, hi + 1):
            bar[c] = "="
        lines.append("".join(bar) + f" group {k}")
    return "\n".join(lines) + "\n"


def cd_diagram(report: RankReport, output, text_output=None, meta: str = "") -> None:
    """Write the critical-distance diagram as SVG (plus a text rendering).

    The SVG shows a rank axis spanning [1, M], a tick per model at its
    average rank, a CD scale bar, and bold connectors joining each maximal
    group of statistically indistinguishable models. A non-empty `meta`
    string is embedded as a comment / header line.
    """
    output = Path(output)
    svg = _render_svg(report, meta)
    try:
        output.write_text(svg)
    except OSError as exc:
        raise ValueError(f"cannot write diagram to {output}: {exc}") from exc
    if text_output is None:
        text_output = output.with_suffix(".txt")
    text = text_diagram(report)
    if meta:
        text = f"# {meta}\n" + text
    Path(text_output).write_text(text)


def _render_svg(report: RankReport, meta: str = "") -> str:
    m = report.n_models
    margin, width = 70.0, 840.0
    axis_y = 70.0
    span = max(m - 1, 1)

    def x(rank: float) -> float:
        return margin + (rank - 1.0) / span * (width - 2.0 * margin)

    order = np.argsort(report.avg_ranks, kind="stable")
    n_left = (m + 1) // 2
    label_rows = max(n_left, m - n_left)
    connector_levels = max(1, len([c for c in report.cliques if len(c) > 1]))
    height = axis_y + 10 + connector_levels * 10 + label_rows * 20 + 30

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
    ]
    if meta:
        parts.append(f"<!-- {meta} -->")
    parts += [
        '<style>text{font-family:monospace;font-size:13px}'
        '.cd{stroke:#444;stroke-width:2}.axis{stroke:#000;stroke-width:1.5}'
        '.stem{stroke:#000;stroke-width:1}.clique{stroke:#000;stroke-width:4}</style>',
        f'<text x="{margin:.1f}" y="22">CD = {report.cd:.4f} '
        f'(alpha={report.alpha:g}, {report.n_datasets} datasets)</text>',
        f'<line class="cd" x1="{x(1.0):.1f}" y1="34" x2="{x(1.0 + report.cd):.1f}" y2="34"/>',
        f'<line class="cd" x1="{x(1.0):.1f}" y1="30" x2="{x(1.0):.1f}" y2="38"/>',
        f'<line class="cd" x1="{x(1.0 + report.cd):.1f}" y1="30" '
        f'x2="{x(1.0 + report.cd):.1f}" y2="38"/>',
        f'<line class="axis" x1="{x(1.0):.1f}" y1="{axis_y:.1f}" '
        f'x2="{x(float(m)):.1f}" y2="{axis_y:.1f}"/>',
    ]
    for tick in range(1, m + 1):
        parts.append(f'<line class="axis" x1="{x(tick):.1f}" y1="{axis_y - 5:.1f}" '
                     f'x2="{x(tick):.1f}" y2="{axis_y:.1f}"/>')
        parts.append(f'<text x="{x(tick) - 4:.1f}" y="{axis_y - 10:.1f}">{tick}</text>')

    level = 0
    for clique in report.cliques:
        if len(clique) < 2:
            continue
        ranks = [report.avg_ranks[report.model_names.index(n)] for n in clique]
        y = axis_y + 8 + level * 10
        parts.append(f'<line class="clique" x1="{x(min(ranks)) - 4:.1f}" y1="{y:.1f}" '
                     f'x2="{x(max(ranks)) + 4:.1f}" y2="{y:.1f}"/>')
        level += 1

    stem_base = axis_y + 10 + connector_levels * 10
    for pos, idx in enumerate(order):
        rank = float(report.avg_ranks[idx])
        name = report.model_names[idx]
        left = pos < n_left
        row = pos if left else pos - n_left
        y = stem_base + row * 20 + 14
        parts.append(f'<line class="stem" x1="{x(rank):.1f}" y1="{axis_y:.1f}" '
                     f'x2="{x(rank):.1f}" y2="{y - 10:.1f}"/>')
        if left:
            label_x, anchor = margin - 60.0, "start"
        else:
            label_x, anchor = width - margin + 60.0, "end"
        parts.append(f'<line class="stem" x1="{x(rank):.1f}" y1="{y - 10:.1f}" '
                     f'x2="{label_x + (4 if left else -4):.1f}" y2="{y - 10:.1f}"/>')
        parts.append(f'<text x="{label_x:.1f}" y="{y - 13:.1f}" text-anchor="{anchor}">'
                     f'{name} ({rank:.3f})</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
