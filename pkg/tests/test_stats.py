import itertools

import numpy as np
import pytest
import scipy.stats

from flowcast import stats
from flowcast.stats import (RankReport, average_ranks, cd_diagram,
                            fractional_ranks, friedman_test, nemenyi_cd,
                            rank_models_for_atr, report_csv, report_table,
                            text_diagram, wilcoxon_signed_rank)


# --------------------------------------------------------------------- friedman

def test_friedman_identical_columns():
    scores = np.tile([0.5, 0.5, 0.5], (10, 1))
    stat, p, reject = friedman_test(scores)
    assert stat == 0.0 and reject is False


def test_friedman_dominant_model_hand_statistic():
    # per fold scores (1.0, 0.5, 0.0): rank sums 30/20/10 -> statistic 20
    scores = np.tile([1.0, 0.5, 0.0], (10, 1))
    stat, p, reject = friedman_test(scores, alpha=0.05)
    assert stat == pytest.approx(20.0, abs=1e-12)
    assert p == pytest.approx(4.539992976248486e-05, rel=1e-9)
    assert reject is True


def test_friedman_textbook_hand_ranked():
    # blocks ranked by hand: rank sums 7, 8, 9 -> chi2 = 12/48*194 - 48 = 0.5
    scores = np.array([[1.0, 2.0, 3.0],
                       [2.0, 4.0, 6.0],
                       [3.0, 1.0, 2.0],
                       [5.0, 6.0, 4.0]])
    stat, p, reject = friedman_test(scores)
    assert stat == pytest.approx(0.5, abs=1e-12)
    assert reject is False


def test_friedman_matches_scipy():
    rng = np.random.default_rng(0)
    for _ in range(10):
        scores = rng.uniform(0, 1, (8, 4))
        stat, p, _ = friedman_test(scores)
        ref_stat, ref_p = scipy.stats.friedmanchisquare(*scores.T)
        assert stat == pytest.approx(ref_stat, rel=1e-10)
        assert p == pytest.approx(ref_p, rel=1e-10)


def test_friedman_ties_match_scipy():
    rng = np.random.default_rng(1)
    scores = np.round(rng.uniform(0, 1, (12, 3)), 1)  # force ties
    stat, p, _ = friedman_test(scores)
    ref_stat, ref_p = scipy.stats.friedmanchisquare(*scores.T)
    assert stat == pytest.approx(ref_stat, rel=1e-10)


def test_friedman_monotone_transform_invariance():
    rng = np.random.default_rng(2)
    scores = rng.uniform(0, 1, (10, 5))
    stat, _, _ = friedman_test(scores)
    transformed = scores.copy()
    transformed[::2] = np.exp(transformed[::2])     # per-fold monotone maps
    transformed[1::2] = transformed[1::2] ** 3 + 1
    stat2, _, _ = friedman_test(transformed)
    assert stat == pytest.approx(stat2, rel=1e-12)


# --------------------------------------------------------------------- wilcoxon

def enumeration_p(diffs):
    """Independent oracle: full 2^n sweep of sign assignments."""
    diffs = np.asarray(diffs, dtype=float)
    diffs = diffs[diffs != 0]
    n = diffs.size
    ranks = scipy.stats.rankdata(np.abs(diffs))
    total = ranks.sum()
    w_obs = min(ranks[diffs > 0].sum(), ranks[diffs < 0].sum())
    count = 0
    for signs in itertools.product((1.0, -1.0), repeat=n):
        wp = sum(r for r, s in zip(ranks, signs) if s > 0)
        if min(wp, total - wp) <= w_obs + 1e-9:
            count += 1
    return min(1.0, count / 2.0 ** n)


def test_wilcoxon_identical_samples():
    a = np.arange(10.0)
    p, significant = wilcoxon_signed_rank(a, a)
    assert p == 1.0 and significant is False


def test_wilcoxon_all_positive_exact_value():
    a = np.arange(10.0) + 1.0
    b = np.zeros(10)
    p, significant = wilcoxon_signed_rank(a, b, alpha=0.05)
    assert p == pytest.approx(2.0 / 1024.0, abs=1e-15)
    assert significant is True


def test_wilcoxon_balanced_equal_magnitudes():
    a = np.array([1.0] * 5 + [-1.0] * 5)
    p, significant = wilcoxon_signed_rank(a, np.zeros(10))
    assert p == 1.0 and significant is False


def test_wilcoxon_symmetry():
    rng = np.random.default_rng(3)
    a = rng.uniform(0, 1, 10)
    b = rng.uniform(0, 1, 10)
    assert wilcoxon_signed_rank(a, b)[0] == wilcoxon_signed_rank(b, a)[0]


@pytest.mark.parametrize("n", [2, 5, 8, 12])
def test_wilcoxon_exact_matches_enumeration(n):
    rng = np.random.default_rng(n)
    for _ in range(8):
        diffs = rng.standard_normal(n)
        if rng.random() < 0.5:
            diffs = np.round(diffs, 1)  # induce tied magnitudes / zeros
        if not np.any(diffs):
            continue
        p, _ = wilcoxon_signed_rank(diffs, np.zeros(n))
        assert p == pytest.approx(enumeration_p(diffs), abs=1e-12)


def test_wilcoxon_exact_matches_scipy_without_ties():
    rng = np.random.default_rng(4)
    for _ in range(10):
        a = rng.standard_normal(12)
        b = rng.standard_normal(12)
        p, _ = wilcoxon_signed_rank(a, b)
        ref = scipy.stats.wilcoxon(a, b, alternative="two-sided", method="exact")
        assert p == pytest.approx(ref.pvalue, abs=1e-12)


def test_wilcoxon_normal_approx_matches_scipy():
    rng = np.random.default_rng(5)
    a = rng.standard_normal(40)
    b = rng.standard_normal(40) + 0.3
    p, _ = wilcoxon_signed_rank(a, b)
    ref = scipy.stats.wilcoxon(a, b, alternative="two-sided", method="approx",
                               correction=True)
    assert p == pytest.approx(ref.pvalue, abs=1e-10)


def test_wilcoxon_zero_differences_discarded():
    a = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    b = np.array([1.0, 2.0, 3.0, 0.0, 9.0])  # three zeros discarded
    p, _ = wilcoxon_signed_rank(a, b)
    expected = enumeration_p((a - b))
    assert p == pytest.approx(expected, abs=1e-12)


def test_wilcoxon_bad_inputs():
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1.0], [2.0])
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError, match="zero_method"):
        wilcoxon_signed_rank([1.0, 2.0], [2.0, 1.0], zero_method="split")


def enumeration_p_pratt(diffs):
    """Oracle for the pratt policy: zeros stay in the ranking but carry no
    sign; enumeration runs over the nonzero differences only."""
    diffs = np.asarray(diffs, dtype=float)
    ranks_all = scipy.stats.rankdata(np.abs(diffs))
    keep = diffs != 0.0
    ranks = ranks_all[keep]
    d = diffs[keep]
    total = ranks.sum()
    w_obs = min(ranks[d > 0].sum(), total - ranks[d > 0].sum())
    count = 0
    for signs in itertools.product((1.0, -1.0), repeat=d.size):
        wp = sum(r for r, s in zip(ranks, signs) if s > 0)
        if min(wp, total - wp) <= w_obs + 1e-9:
            count += 1
    return min(1.0, count / 2.0 ** d.size)


def test_wilcoxon_pratt_matches_enumeration():
    rng = np.random.default_rng(9)
    for _ in range(10):
        diffs = np.round(rng.standard_normal(9), 0)  # plenty of zeros and ties
        if not np.any(diffs):
            continue
        p, _ = wilcoxon_signed_rank(diffs, np.zeros(9), zero_method="pratt")
        assert p == pytest.approx(enumeration_p_pratt(diffs), abs=1e-12)


def test_wilcoxon_pratt_differs_from_discard_with_zeros():
    # hand check: discard gives 2*5/32, pratt's shifted ranks give 2*6/32
    diffs = np.array([0.0, -1.0, -2.0, 3.0, 4.0, 5.0])
    p_discard, _ = wilcoxon_signed_rank(diffs, np.zeros(6))
    p_pratt, _ = wilcoxon_signed_rank(diffs, np.zeros(6), zero_method="pratt")
    assert p_discard == pytest.approx(0.3125, abs=1e-12)
    assert p_pratt == pytest.approx(0.375, abs=1e-12)


# ---------------------------------------------------------------------- ranking

def test_fractional_ranks_tie_arithmetic():
    assert fractional_ranks([3, 1, 1, 0]).tolist() == [1.0, 2.5, 2.5, 4.0]


def test_rank_models_uniform_when_gate_holds():
    scores = np.tile([0.5] * 13, (10, 1))  # fully tied -> gate cannot reject
    tallies = rank_models_for_atr(scores, scores.mean(axis=0), alpha=0.05)
    assert all(t.rank == 7.0 for t in tallies)
    assert all(t.wins == 0 and t.losses == 0 and t.ties == 12 for t in tallies)


def test_rank_models_two_model_base_case():
    rng = np.random.default_rng(6)
    good = 0.9 + rng.normal(0, 0.005, 10)
    bad = 0.5 + rng.normal(0, 0.005, 10)
    scores = np.column_stack([good, bad])
    tallies = rank_models_for_atr(scores, scores.mean(axis=0), alpha=0.05,
                                  model_names=["good", "bad"])
    assert [t.wins for t in tallies] == [1, 0]
    assert [t.losses for t in tallies] == [0, 1]
    assert [t.rank for t in tallies] == [1.0, 2.0]


def test_rank_models_tally_invariants():
    rng = np.random.default_rng(7)
    for _ in range(10):
        m = int(rng.integers(2, 7))
        scores = rng.uniform(0, 1, (10, m))
        scores[:, 0] += rng.choice([0.0, 0.5])  # sometimes a dominant model
        tallies = rank_models_for_atr(scores, scores.mean(axis=0), alpha=0.05)
        for t in tallies:
            assert t.wins + t.ties + t.losses == m - 1
        assert sum(t.rank for t in tallies) == pytest.approx(m * (m + 1) / 2)


def test_rank_models_affine_invariance():
    rng = np.random.default_rng(8)
    scores = rng.uniform(0, 1, (10, 4))
    scores[:, 2] += 0.8
    base = rank_models_for_atr(scores, scores.mean(axis=0))
    scaled = rank_models_for_atr(3.0 * scores + 11.0,
                                 (3.0 * scores + 11.0).mean(axis=0))
    assert [t.rank for t in base] == [t.rank for t in scaled]
    assert [t.wins for t in base] == [t.wins for t in scaled]


# ---------------------------------------------------------------------- nemenyi

def test_nemenyi_two_models_normal_quantile():
    cd = nemenyi_cd(2, 133, alpha=0.05)
    assert cd == pytest.approx(0.1700, abs=5e-4)


def test_nemenyi_thirteen_models_133_datasets():
    cd = nemenyi_cd(13, 133, alpha=0.05)
    assert cd == pytest.approx(1.58, abs=0.01)


def test_nemenyi_scales_inverse_sqrt_n():
    assert nemenyi_cd(5, 400) == pytest.approx(nemenyi_cd(5, 100) / 2.0, rel=1e-12)


def test_nemenyi_table_matches_studentized_range():
    for m in (2, 5, 13, 20):
        for alpha in (0.05, 0.10):
            q_ref = scipy.stats.studentized_range.ppf(1 - alpha, m, np.inf) / np.sqrt(2)
            cd = nemenyi_cd(m, 100, alpha)
            expected = q_ref * np.sqrt(m * (m + 1) / 600.0)
            assert cd == pytest.approx(expected, rel=2e-3)


def test_nemenyi_validation():
    with pytest.raises(ValueError, match="2..20"):
        nemenyi_cd(1, 10)
    with pytest.raises(ValueError, match="2..20"):
        nemenyi_cd(21, 10)
    with pytest.raises(ValueError, match="tabulated"):
        nemenyi_cd(5, 10, alpha=0.01)


# ---------------------------------------------------------------- average ranks

def tallies_from_ranks(ranks, names):
    return [stats.RankTally(model=n, wins=0, ties=len(names) - 1, losses=0,
                            rank=r) for n, r in zip(names, ranks)]


def test_average_ranks_single_atr():
    t = {"a1": tallies_from_ranks([1.0, 2.0], ["x", "y"])}
    report = average_ranks(t)
    assert report.avg_ranks.tolist() == [1.0, 2.0]
    assert report.n_datasets == 1


def test_average_ranks_two_atrs_symmetric():
    t = {"a1": tallies_from_ranks([1.0, 2.0], ["x", "y"]),
         "a2": tallies_from_ranks([2.0, 1.0], ["x", "y"])}
    report = average_ranks(t)
    assert report.avg_ranks.tolist() == [1.5, 1.5]
    assert report.cliques == [["x", "y"]]


def test_average_ranks_singleton_clique():
    names = ["best", "b", "c", "d", "e"]
    t = {f"a{i}": tallies_from_ranks([1.0, 3.0, 3.5, 4.0, 3.5], names)
         for i in range(20)}
    report = average_ranks(t)
    # CD(5, 20) = 2.728 * sqrt(30/120) = 1.364; best is 2.0 away from the rest
    assert report.cd == pytest.approx(1.3639, abs=1e-3)
    assert ["best"] in report.cliques
    assert all("best" not in c for c in report.cliques if len(c) > 1)


def test_average_ranks_empty_errors():
    with pytest.raises(ValueError, match="no datasets"):
        average_ranks({})


# --------------------------------------------------------------------- diagrams

def demo_report():
    return RankReport(model_names=["alpha", "beta", "gamma", "delta"],
                      avg_ranks=np.array([1.2, 2.4, 2.6, 3.8]),
                      cd=0.9, alpha=0.05, n_models=4, n_datasets=40,
                      cliques=[["alpha"], ["beta", "gamma"], ["delta"]])


def test_cd_diagram_single_clique_connector(tmp_path):
    report = RankReport(model_names=["a", "b"], avg_ranks=np.array([1.4, 1.6]),
                        cd=1.0, alpha=0.05, n_models=2, n_datasets=10,
                        cliques=[["a", "b"]])
    out = tmp_path / "cd.svg"
    cd_diagram(report, out)
    svg = out.read_text()
    assert svg.count('class="clique"') == 1
    assert (tmp_path / "cd.txt").exists()


def test_cd_diagram_singleton_best_unconnected(tmp_path):
    report = demo_report()
    out = tmp_path / "cd.svg"
    cd_diagram(report, out)
    svg = out.read_text()
    # exactly one multi-model clique -> one bold connector
    assert svg.count('class="clique"') == 1
    assert "alpha (1.200)" in svg


def test_cd_diagram_golden_file(tmp_path):
    golden = (__import__("pathlib").Path(__file__).parent / "data" / "golden_cd.svg")
    out = tmp_path / "cd.svg"
    cd_diagram(demo_report(), out)
    assert out.read_bytes() == golden.read_bytes()


def test_text_diagram_contents():
    txt = text_diagram(demo_report())
    assert "CD = 0.9000" in txt
    assert "alpha (1.200)" in txt
    assert "group 2" in txt


def test_report_table_and_csv():
    table = report_table(demo_report())
    assert "alpha" in table and "CD=0.9000" in table
    csv = report_csv(demo_report())
    assert csv.splitlines()[0] == "model,avg_rank,clique_ids"
    assert "alpha,1.2,1" in csv
