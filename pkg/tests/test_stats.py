import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aspo.engine import lognormal_params
from aspo.stats import (
    EmptyLogError, ascii_table, compare_rare_events, exact_binomial_ci, fisher_exact_two_sided,
    ks_distance, percentiles, risk_and_odds_ratio, spearman_rank, summarize_run,
)

from oracles import clopper_pearson_bisect, hypergeom_fisher, ks_sweep, spearman_oracle


def test_binomial_ci_reference_rows():
    lo, hi = exact_binomial_ci(4, 500)
    assert lo == pytest.approx(0.0022, abs=2e-4) and hi == pytest.approx(0.0204, abs=2e-4)
    lo, hi = exact_binomial_ci(5, 1000)
    assert lo == pytest.approx(0.0016, abs=2e-4) and hi == pytest.approx(0.0116, abs=2e-4)


def test_binomial_ci_boundaries():
    lo, hi = exact_binomial_ci(0, 10)
    assert lo == 0.0 and 0 < hi < 1
    lo, hi = exact_binomial_ci(10, 10)
    assert hi == 1.0 and 0 < lo < 1


@pytest.mark.parametrize("k,n", [(-1, 5), (6, 5), (0, 0)])
def test_binomial_ci_rejects_bad_counts(k, n):
    with pytest.raises(ValueError):
        exact_binomial_ci(k, n)


@pytest.mark.parametrize("k,n", [(0, 7), (1, 7), (3, 20), (4, 500), (19, 20), (12, 40)])
def test_binomial_ci_matches_bisection(k, n):
    assert exact_binomial_ci(k, n) == pytest.approx(clopper_pearson_bisect(k, n), abs=1e-9)


def test_binomial_ci_coverage():
    rng = np.random.default_rng(11)
    p, n = 0.008, 500
    ks = rng.binomial(n, p, size=10_000)
    table = {k: exact_binomial_ci(int(k), n) for k in np.unique(ks)}
    hit = np.mean([table[k][0] <= p <= table[k][1] for k in ks])
    assert 0.93 <= hit <= 0.97


def test_fisher_reference_value():
    assert fisher_exact_two_sided(4, 500, 5, 1000) == pytest.approx(0.492, abs=0.005)


def test_fisher_identical_rows():
    assert fisher_exact_two_sided(3, 10, 3, 10) == pytest.approx(1.0)


def test_fisher_rejects_invalid_rows():
    with pytest.raises(ValueError):
        fisher_exact_two_sided(0, 0, 1, 5)
    with pytest.raises(ValueError):
        fisher_exact_two_sided(6, 5, 1, 5)


def test_fisher_matches_enumeration_oracle_small_tables():
    for n1 in range(1, 9):
        for n2 in range(1, 9):
            for k1 in range(n1 + 1):
                for k2 in range(n2 + 1):
                    assert fisher_exact_two_sided(k1, n1, k2, n2) == pytest.approx(
                        hypergeom_fisher(k1, n1, k2, n2), rel=1e-9, abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 15), st.integers(1, 15), st.data())
def test_fisher_matches_oracle_up_to_30(n1, n2, data):
    k1 = data.draw(st.integers(0, n1))
    k2 = data.draw(st.integers(0, n2))
    assert fisher_exact_two_sided(k1, n1, k2, n2) == pytest.approx(
        hypergeom_fisher(k1, n1, k2, n2), rel=1e-9, abs=1e-12)


def test_risk_and_odds_ratio():
    rr, odds = risk_and_odds_ratio(4, 500, 5, 1000)
    assert rr == pytest.approx(0.625, abs=1e-3)
    assert odds == pytest.approx(0.623, abs=1e-3)
    assert risk_and_odds_ratio(2, 10, 4, 20)[0] == pytest.approx(1.0)
    assert risk_and_odds_ratio(0, 10, 4, 20) == (None, None)


def test_compare_rare_events_bundle():
    c = compare_rare_events(4, 500, 5, 1000)
    assert c.rate1 == 0.008 and c.rate2 == 0.005
    assert c.fisher_p == pytest.approx(0.4917, abs=1e-4)


def test_spearman_reference_counts():
    # per-pattern counts in the two workload columns are exactly proportional
    a = [255, 180, 120, 60, 30]
    b = [510, 360, 240, 120, 60]
    assert spearman_rank(a, b) == pytest.approx(1.0)
    assert spearman_rank(a, b[::-1]) == pytest.approx(-1.0)


def test_spearman_length_mismatch():
    with pytest.raises(ValueError):
        spearman_rank([1, 2], [1, 2, 3])


def test_spearman_matches_oracle_with_ties():
    rng = np.random.default_rng(3)
    for _ in range(200):
        xs = list(rng.integers(0, 4, 6))
        ys = list(rng.permutation(xs) if rng.random() < 0.5 else rng.integers(0, 4, 6))
        if len(set(xs)) < 2 or len(set(ys)) < 2:
            assert math.isnan(spearman_rank(xs, ys))
            continue
        assert spearman_rank(xs, ys) == pytest.approx(spearman_oracle(xs, ys), abs=1e-12)


def test_ks_trivial_cases():
    assert ks_distance([1, 2, 3], [1, 2, 3]) == 0
    assert ks_distance([1, 2], [5, 6]) == 1.0
    with pytest.raises(ValueError):
        ks_distance([], [1])


def test_ks_matches_sweep_on_lognormal_draws():
    rng = np.random.default_rng(5)
    mu, sigma = lognormal_params(5.835, 7.615)
    a = rng.lognormal(mu, sigma, 300)
    b = rng.lognormal(mu, sigma, 450)
    assert ks_distance(a, b) == pytest.approx(ks_sweep(a, b), abs=1e-12)


def test_percentiles_nearest_rank():
    xs = list(range(1, 101))
    assert percentiles(xs, [99]) == [99.0]
    assert percentiles(xs, [50, 90]) == [50.0, 90.0]
    assert percentiles([4.2], [1, 50, 100]) == [4.2, 4.2, 4.2]
    with pytest.raises(ValueError):
        percentiles([], [50])


def test_percentile_of_calibrated_latency():
    mu, sigma = lognormal_params(5.835, 7.615)
    xs = np.random.default_rng(9).lognormal(mu, sigma, 20_000)
    assert percentiles(xs, [90])[0] == pytest.approx(7.615, rel=0.05)
    assert xs.mean() == pytest.approx(5.835, rel=0.05)


def _trace(executed, threat="dos", issues=(), failure=None, audit=True, members=("P01",)):
    gate = None if failure else {"ok": not issues, "issues": [{"category": c, "detail": ""} for c in issues]}
    return {
        "executed": executed, "failsafe": not executed, "failure": failure, "threat_label": threat,
        "gate": gate, "audit": None if failure else {"approved": audit and not issues},
        "latency": {"agents": {"context": 1.0, "reasoner": 2.0}, "t_net": 0.1, "t_det": 0.0, "total": 3.1},
        "energy": 7.0, "power": 2.2, "y_det": {"members": list(members), "score": 1.0},
        "node": "n", "epoch": 0,
    }


def test_summary_partition_reconciles():
    traces = [
        _trace(True), _trace(True, "ddos"),
        _trace(False, issues=("set_mismatch", "activation_order_mismatch")),
        _trace(False, issues=("catalog_membership",)),
        _trace(False, failure={"stage": "reasoner", "category": "closed_world", "message": ""}),
        _trace(False, members=()),
    ]
    s = summarize_run(traces, ["P01", "P02"])
    ga = s["gate_audit"]
    assert ga["gate_reject"] + ga["gate_accept"] == len(traces)
    assert sum(s["outcomes"].values()) == len(traces)
    assert s["outcomes"]["gate:set_mismatch"] == 1
    assert s["outcomes"]["empty_selection"] == 1
    assert s["gate_failures"]["activation_order_mismatch"] == 1
    assert s["pattern_counts"] == {"P01": 5, "P02": 0}
    assert s["per_threat"]["ddos"]["rate"] == 1.0


def test_summary_zero_approvals_has_valid_ci():
    s = summarize_run([_trace(False, issues=("conflict",))] * 4)
    assert s["gate_audit"]["approval_rate"] == 0
    lo, hi = s["gate_audit"]["approval_ci"]
    assert lo == 0 and 0 < hi < 1


def test_summary_empty_log():
    with pytest.raises(EmptyLogError):
        summarize_run([])


def test_ascii_table_alignment():
    text = ascii_table(["a", "bb"], [[1, 2.5], [None, (0.1, 0.2)]])
    lines = text.splitlines()
    assert len({len(l) for l in lines}) == 1
    assert "--" in lines[-1]
