"""Rare-event and distributional statistics over decision-trace logs."""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats as _st

from .agents import AGENTS
from .gate import CATEGORIES


# --- estimators -------------------------------------------------------------

def exact_binomial_ci(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Clopper-Pearson interval for ``k`` successes in ``n`` trials."""
    if not (isinstance(k, (int, np.integer)) and isinstance(n, (int, np.integer))):
        raise TypeError("k and n must be integers")
    if n < 1 or k < 0 or k > n:
        raise ValueError(f"invalid counts k={k}, n={n}")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    a = 1.0 - level
    lo = 0.0 if k == 0 else float(_st.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(_st.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def _log_hypergeom(x: int, row1: int, col1: int, total: int) -> float:
    # P(X = x) where X counts successes in row 1
    lc = math.lgamma
    return (lc(col1 + 1) - lc(x + 1) - lc(col1 - x + 1)
            + lc(total - col1 + 1) - lc(row1 - x + 1) - lc(total - col1 - row1 + x + 1)
            - (lc(total + 1) - lc(row1 + 1) - lc(total - row1 + 1)))


def fisher_exact_two_sided(k1: int, n1: int, k2: int, n2: int) -> float:
    """Two-sided Fisher exact p-value for successes ``k1/n1`` vs ``k2/n2``.

    Sums the point probabilities of every table with the observed margins
    whose probability does not exceed the observed one (relative tolerance
    1e-7 for float ties).
    """
    for k, n in ((k1, n1), (k2, n2)):
        if n < 1 or k < 0 or k > n:
            raise ValueError(f"invalid row k={k}, n={n}")
    total = n1 + n2
    col1 = k1 + k2
    lo, hi = max(0, col1 - n2), min(col1, n1)
    logp = np.array([_log_hypergeom(x, n1, col1, total) for x in range(lo, hi + 1)])
    observed = logp[k1 - lo]
    keep = logp <= observed + math.log1p(1e-7)
    p = float(np.exp(logp[keep]).sum())
    return min(1.0, p)


def risk_and_odds_ratio(k1: int, n1: int, k2: int, n2: int) -> tuple[float | None, float | None]:
    """Risk and odds ratio of group 2 relative to group 1; None where undefined."""
    if n1 < 1 or n2 < 1:
        return None, None
    r1, r2 = k1 / n1, k2 / n2
    rr = r2 / r1 if r1 > 0 else None
    if k1 == 0 or n1 - k1 == 0 or n2 - k2 == 0:
        odds = None
    else:
        odds = (k2 / (n2 - k2)) / (k1 / (n1 - k1))
    return rr, odds


@dataclass(frozen=True)
class RareEventComparison:
    k1: int
    n1: int
    k2: int
    n2: int
    rate1: float
    rate2: float
    ci1: tuple[float, float]
    ci2: tuple[float, float]
    risk_ratio: float | None
    odds_ratio: float | None
    fisher_p: float

    def to_dict(self) -> dict:
        return asdict(self)


def compare_rare_events(k1: int, n1: int, k2: int, n2: int, level: float = 0.95) -> RareEventComparison:
    rr, odds = risk_and_odds_ratio(k1, n1, k2, n2)
    return RareEventComparison(
        k1, n1, k2, n2, k1 / n1, k2 / n2,
        exact_binomial_ci(k1, n1, level), exact_binomial_ci(k2, n2, level),
        rr, odds, fisher_exact_two_sided(k1, n1, k2, n2),
    )


def spearman_rank(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman correlation with average ranks for ties (nan if a side is constant)."""
    if len(xs) != len(ys):
        raise ValueError("length mismatch")
    if len(xs) < 2:
        raise ValueError("need at least two observations")
    rx = _st.rankdata(xs)
    ry = _st.rankdata(ys)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    denom = math.sqrt(float((dx * dx).sum() * (dy * dy).sum()))
    if denom == 0:
        return math.nan
    return float(np.clip((dx * dy).sum() / denom, -1.0, 1.0))


def ks_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def percentiles(samples: Sequence[float], qs: Iterable[float] = (50, 90, 99)) -> list[float]:
    """Nearest-rank percentiles: the ceil(q/100 * n)-th smallest value."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("empty sample")
    out = []
    for q in qs:
        if not 0 <= q <= 100:
            raise ValueError(f"percentile {q} out of range")
        rank = max(1, math.ceil(q / 100 * x.size))
        out.append(float(x[rank - 1]))
    return out


# --- run reports ------------------------------------------------------------

class EmptyLogError(ValueError):
    pass


def outcome(trace: Mapping) -> str:
    """Single-label outcome used for the reconciling partition of a log."""
    if trace["executed"]:
        return "approved"
    if trace.get("failure"):
        return "agent_failure"
    gate = trace.get("gate")
    if gate and not gate["ok"]:
        return "gate:" + gate["issues"][0]["category"]
    audit = trace.get("audit")
    if audit and not audit["approved"]:
        return "audit_rejected"
    return "empty_selection"


def summarize_run(traces: Sequence[Mapping], pattern_ids: Iterable[str] = ()) -> dict:
    if not traces:
        raise EmptyLogError("trace log is empty")
    n = len(traces)
    gate_accept = sum(1 for t in traces if t.get("gate") and t["gate"]["ok"])
    audit_approved = sum(1 for t in traces if t.get("audit") and t["audit"]["approved"])
    approved = sum(1 for t in traces if t["executed"])

    categories = Counter({c: 0 for c in CATEGORIES})
    for t in traces:
        if t.get("gate"):
            for c in {i["category"] for i in t["gate"]["issues"]}:
                categories[c] += 1
    partition = Counter(outcome(t) for t in traces)

    per_threat = {}
    for label in sorted({t["threat_label"] for t in traces}):
        sub = [t for t in traces if t["threat_label"] == label]
        k = sum(1 for t in sub if t["executed"])
        per_threat[label] = {"approved": k, "n": len(sub), "rate": k / len(sub),
                             "ci": exact_binomial_ci(k, len(sub))}

    agent_rows = {}
    means = {}
    for a in AGENTS:
        xs = [t["latency"]["agents"][a] for t in traces if a in t["latency"]["agents"]]
        if xs:
            means[a] = float(np.mean(xs))
            agent_rows[a] = {"mean": means[a], "p90": percentiles(xs, [90])[0], "n": len(xs)}
    total_mean = sum(means.values())
    for a in agent_rows:
        agent_rows[a]["share"] = means[a] / total_mean if total_mean else 0.0

    lat = [t["latency"]["total"] for t in traces]
    ene = [t["energy"] for t in traces]
    l50, l90, l99 = percentiles(lat)
    e50, e90, e99 = percentiles(ene)

    counts = Counter({p: 0 for p in pattern_ids})
    for t in traces:
        counts.update(t["y_det"]["members"])
    sizes = Counter(len(t["y_det"]["members"]) for t in traces)

    return {
        "epochs": n,
        "gate_audit": {
            "gate_reject": n - gate_accept,
            "gate_accept": gate_accept,
            "audit_approved": audit_approved,
            "final_approved": approved,
            "approval_rate": approved / n,
            "approval_ci": exact_binomial_ci(approved, n),
        },
        "gate_failures": dict(categories),
        "outcomes": dict(sorted(partition.items())),
        "failsafe": sum(1 for t in traces if t["failsafe"]),
        "per_threat": per_threat,
        "agents": agent_rows,
        "efficiency": {
            "latency_median": l50, "latency_p90": l90, "latency_p99": l99,
            "energy_median": e50, "energy_p90": e90, "energy_p99": e99,
            "avg_power": float(np.mean([t["power"] for t in traces])),
        },
        "pattern_counts": dict(sorted(counts.items())),
        "portfolio_sizes": dict(sorted(sizes.items())),
    }


def compare_runs(a: Sequence[Mapping], b: Sequence[Mapping], pattern_ids: Iterable[str] = ()) -> dict:
    """Cross-workload comparison; ``b`` is the numerator group for RR/OR."""
    pattern_ids = list(pattern_ids)
    sa, sb = summarize_run(a, pattern_ids), summarize_run(b, pattern_ids)
    rare = compare_rare_events(sa["gate_audit"]["final_approved"], sa["epochs"],
                               sb["gate_audit"]["final_approved"], sb["epochs"])
    ids = sorted(set(sa["pattern_counts"]) | set(sb["pattern_counts"]))
    xs = [sa["pattern_counts"].get(i, 0) for i in ids]
    ys = [sb["pattern_counts"].get(i, 0) for i in ids]
    ks = {}
    for agent in AGENTS:
        la = [t["latency"]["agents"][agent] for t in a if agent in t["latency"]["agents"]]
        lb = [t["latency"]["agents"][agent] for t in b if agent in t["latency"]["agents"]]
        if la and lb:
            ks[agent] = ks_distance(la, lb)
    return {
        "summary_a": sa,
        "summary_b": sb,
        "rare_event": rare.to_dict(),
        "pattern_spearman": spearman_rank(xs, ys) if len(ids) >= 2 else math.nan,
        "agent_ks": ks,
        "latency_ks": ks_distance([t["latency"]["total"] for t in a], [t["latency"]["total"] for t in b]),
        "energy_ks": ks_distance([t["energy"] for t in a], [t["energy"] for t in b]),
    }


# --- text rendering ---------------------------------------------------------

def ascii_table(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    def fmt(v):
        if isinstance(v, float):
            return f"{v:.4f}" if abs(v) < 10 else f"{v:.3f}"
        if isinstance(v, tuple) and len(v) == 2:
            return f"[{v[0]:.4f}, {v[1]:.4f}]"
        return "--" if v is None else str(v)

    cells = [list(map(str, header))] + [[fmt(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    rule = "-+-".join("-" * w for w in widths)
    lines = [" | ".join(c.ljust(w) for c, w in zip(cells[0], widths)), rule]
    lines += [" | ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells[1:]]
    return "\n".join(lines)


def render_summary(s: Mapping, label: str = "run") -> str:
    ga = s["gate_audit"]
    out = [f"== {label}: {s['epochs']} epochs ==", "",
           ascii_table(["Setting", "Gate Reject", "Gate Accept", "Final Approved", "Approval Rate", "95% CI"],
                       [[label, ga["gate_reject"], ga["gate_accept"], ga["final_approved"],
                         ga["approval_rate"], tuple(ga["approval_ci"])]]),
           "", "Gate failure categories (multi-label)",
           ascii_table(["Failure Type", "Count"], [[c, n] for c, n in s["gate_failures"].items()]),
           "", "Outcome partition",
           ascii_table(["Outcome", "Count"], [[k, v] for k, v in s["outcomes"].items()]),
           "", "Per-threat approval",
           ascii_table(["Threat", "Approved", "Rate", "95% CI"],
                       [[k, f"{v['approved']}/{v['n']}", v["rate"], tuple(v["ci"])]
                        for k, v in s["per_threat"].items()]),
           "", "Per-agent latency (s)",
           ascii_table(["Agent", "Mean", "P90", "Share"],
                       [[a, r["mean"], r["p90"], r["share"]] for a, r in s["agents"].items()]),
           "", "Efficiency",
           ascii_table(list(s["efficiency"]), [list(s["efficiency"].values())]),
           "", "Pattern selection counts",
           ascii_table(["Pattern", "Count"], list(s["pattern_counts"].items()))]
    return "\n".join(out)


def render_comparison(c: Mapping, labels: tuple[str, str] = ("A", "B")) -> str:
    r = c["rare_event"]
    rows = [
        ["Approvals / Trials", f"{r['k1']} / {r['n1']}", f"{r['k2']} / {r['n2']}"],
        ["Approval rate", r["rate1"], r["rate2"]],
        ["95% CI (exact)", tuple(r["ci1"]), tuple(r["ci2"])],
        ["Risk Ratio (RR)", r["risk_ratio"], ""],
        ["Odds Ratio (OR)", r["odds_ratio"], ""],
        ["Fisher exact test (two-sided)", f"p={r['fisher_p']:.3f}", ""],
        ["Spearman rank (patterns)", c["pattern_spearman"], ""],
        ["KS latency / energy", c["latency_ks"], c["energy_ks"]],
    ]
    out = ["== Rare-event comparison ==",
           ascii_table(["Statistic", labels[0], labels[1]], rows), "",
           "Per-agent KS distance",
           ascii_table(["Agent", "KS"], list(c["agent_ks"].items()))]
    return "\n".join(out)


def export_epochs_csv(traces: Sequence[Mapping], path: str | Path) -> None:
    cols = ["node", "epoch", "threat_label", "executed", "failsafe", "portfolio_size",
            "score", "latency", "energy", "power"] + [f"t_{a}" for a in AGENTS]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for t in traces:
            w.writerow([t["node"], t["epoch"], t["threat_label"], int(t["executed"]), int(t["failsafe"]),
                        len(t["y_det"]["members"]), t["y_det"]["score"], t["latency"]["total"],
                        t["energy"], t["power"]]
                       + [t["latency"]["agents"].get(a, "") for a in AGENTS])
