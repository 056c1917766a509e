import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqcrt.core import Dataset, RngStream, SeqStepParams
from seqcrt.covariates import GaussianModel, gaussian_sample_rows
from seqcrt.crt import CrtConfig, crt_all_variables
from seqcrt.response import ResponseSpec, generate_response
from seqcrt.selection import Ordering, _split_rows, pipeline_split, pipeline_symmetric, seqstep_select
from seqcrt.stats import StatisticKind

CORR = StatisticKind("abs_correlation")


def brute_force_khat(pvals, order, c, q):
    """Oracle: scan every prefix with exact fractions."""
    from fractions import Fraction
    small = [pvals[j] <= c for j in order]
    thr = (1 - Fraction(c).limit_denominator(10**6)) * Fraction(q).limit_denominator(10**6) \
        / Fraction(c).limit_denominator(10**6)
    best = 0
    for k in range(1, len(order) + 1):
        ns = sum(small[:k])
        if Fraction(1 + k - ns, max(ns, 1)) <= thr:
            best = k
    return best, sorted(order[i] for i in range(best) if small[i])


def test_hand_enumerated_example():
    sel = seqstep_select([0.05, 0.05, 0.5, 0.05, 0.9], None, SeqStepParams(0.1, 0.5))
    assert sel.k_hat == 5
    assert sel.selected == (0, 1, 3)
    assert sel.ratio_trace[-1] == pytest.approx(1.0)


def test_all_large_selects_nothing():
    sel = seqstep_select(np.ones(20), None, SeqStepParams(0.1, 0.1))
    assert sel.k_hat == 0 and sel.selected == ()


def test_eight_nonnulls_then_nulls_select_nothing():
    pv = np.array([0.01] * 8 + [1.0] * 92)
    sel = seqstep_select(pv, None, SeqStepParams(0.5, 0.1))
    assert sel.selected == () and sel.k_hat == 0
    assert sel.ratio_trace.min() == pytest.approx(1 / 8)
    assert int(np.argmin(sel.ratio_trace)) == 7


def test_ordering_from_scores_breaks_ties_by_index():
    assert Ordering.from_scores([1.0, 3.0, 3.0, 2.0]).perm.tolist() == [1, 2, 3, 0]
    with pytest.raises(ValueError):
        Ordering([0, 0, 1])


def test_length_and_domain_checks():
    with pytest.raises(ValueError):
        seqstep_select([0.5, 0.5], Ordering.identity(3), SeqStepParams())
    with pytest.raises(ValueError):
        seqstep_select([0.0, 0.5], None, SeqStepParams())


pvals_strategy = st.lists(st.sampled_from([0.02, 0.1, 0.2, 0.5, 1.0]), min_size=1, max_size=40)


@settings(max_examples=200)
@given(pvals_strategy, st.sampled_from([0.1, 0.2, 0.3, 0.5]), st.sampled_from([0.05, 0.1, 0.2, 0.4]),
       st.randoms(use_true_random=False))
def test_matches_prefix_oracle(pv, c, q, rnd):
    order = list(range(len(pv)))
    rnd.shuffle(order)
    sel = seqstep_select(pv, Ordering(order), SeqStepParams(c, q))
    k, chosen = brute_force_khat(pv, order, c, q)
    assert sel.k_hat == k
    assert list(sel.selected) == chosen
    assert set(sel.selected) <= set(order[: sel.k_hat])


@settings(max_examples=200)
@given(st.lists(st.floats(0.001, 1.0), min_size=1, max_size=40), st.sampled_from([0.1, 0.3]),
       st.sampled_from([0.1, 0.3]))
def test_reads_only_indicators(pv, c, q):
    pv = np.array(pv)
    coarse = np.where(pv <= c, c, 1.0)
    a = seqstep_select(pv, None, SeqStepParams(c, q))
    b = seqstep_select(coarse, None, SeqStepParams(c, q))
    assert a.k_hat == b.k_hat and a.selected == b.selected


@settings(max_examples=200)
@given(pvals_strategy, st.floats(0.02, 0.5), st.floats(0.02, 0.5))
def test_monotone_in_q(pv, q1, q2):
    lo, hi = sorted((q1, q2))
    a = seqstep_select(pv, None, SeqStepParams(0.2, lo))
    b = seqstep_select(pv, None, SeqStepParams(0.2, hi))
    assert set(a.selected) <= set(b.selected)


def test_rank_rule_on_crt_grid():
    # 0.1 * 10 rounds to 1.0000000000000002 in floats; the rank rule still counts it
    pv = np.array([1, 1, 3, 1]) / 10
    sel = seqstep_select(pv, None, SeqStepParams(0.1, 0.5), n_randomizations=9)
    assert sel.selected == (0, 1, 3)


def test_split_rows():
    a, b = _split_rows(11, 0.5, RngStream(0))
    assert len(a) == 6 and len(b) == 5
    assert sorted(np.concatenate([a, b]).tolist()) == list(range(11))
    with pytest.raises(ValueError):
        _split_rows(3, 0.5, RngStream(0))
    with pytest.raises(ValueError):
        _split_rows(10, 1.0, RngStream(0))


def _linear(n, p, k, amp, seed):
    m = GaussianModel.ar1(p, 0.5)
    x = gaussian_sample_rows(m, n, RngStream(seed, 0))
    y, truth = generate_response(x, ResponseSpec("linear", amp, k), RngStream(seed, 1))
    return m, Dataset(x, y), truth


def test_split_ordering_ignores_pvalue_fold_rows():
    m, d, _ = _linear(60, 10, 3, 8.0, 0)
    rows_p, rows_o = _split_rows(d.n, 0.5, RngStream(1).child(0))
    x2 = d.x.copy()
    y2 = d.y.copy()
    shuffled = rows_p[np.random.default_rng(0).permutation(rows_p.size)]
    x2[rows_p] = d.x[shuffled]
    y2[rows_p] = d.y[shuffled]
    a = pipeline_split(d, m, CrtConfig(9, "one_shot", CORR), SeqStepParams(), rng=RngStream(1))
    b = pipeline_split(Dataset(x2, y2), m, CrtConfig(9, "one_shot", CORR), SeqStepParams(), rng=RngStream(1))
    assert np.array_equal(a.order, b.order)


def test_split_pipeline_global_null_fdr():
    fdps = []
    for r in range(400):
        m, d, truth = _linear(60, 20, 0, 0.0, r)
        sel = pipeline_split(d, m, CrtConfig(9, "one_shot", CORR), SeqStepParams(0.1, 0.1), rng=RngStream(r, 2))
        fdps.append(truth.fdp(sel.selected))
    assert np.mean(fdps) <= 0.1 + 0.03


def test_symmetric_pipeline_orders_nonnulls_first():
    gaps = []
    for r in range(100):
        m, d, truth = _linear(100, 30, 5, 10.0, 100 + r)
        recs = crt_all_variables(d, m, CrtConfig(9, "one_shot", CORR), RngStream(r, 3))
        sel = pipeline_symmetric(d, m, CrtConfig(9, "one_shot", CORR), SeqStepParams(), records=recs)
        pos = np.empty(30)
        pos[sel.order] = np.arange(30)
        nn = sorted(truth.nonnull_set)
        gaps.append(pos[[j for j in range(30) if j not in truth.nonnull_set]].mean() - pos[nn].mean())
    gaps = np.array(gaps)
    assert gaps.mean() > 4 * gaps.std(ddof=1) / np.sqrt(gaps.size)


def test_symmetric_pipeline_null_amplitude_has_zero_power():
    m, d, truth = _linear(80, 10, 0, 0.0, 7)
    sel = pipeline_symmetric(d, m, CrtConfig(9, "one_shot", CORR), SeqStepParams(), RngStream(8))
    assert truth.power(sel.selected) == 0.0
