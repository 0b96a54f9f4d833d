"""Exact statistics for rare approvals: 4/500 versus 5/1000.

Run: python3 demos/05_rare_event_statistics.py
"""
import numpy as np

from aspo.stats import compare_rare_events, exact_binomial_ci, ks_distance, percentiles, spearman_rank

c = compare_rare_events(4, 500, 5, 1000)
print(f"rates        {c.rate1:.4f}  {c.rate2:.4f}")
print(f"95% CI       [{c.ci1[0]:.4f}, {c.ci1[1]:.4f}]  [{c.ci2[0]:.4f}, {c.ci2[1]:.4f}]")
print(f"risk ratio   {c.risk_ratio:.3f}")
print(f"odds ratio   {c.odds_ratio:.3f}")
print(f"Fisher p     {c.fisher_p:.3f}")

# %% how often does the exact interval cover the true rate?
rng = np.random.default_rng(0)
ks = rng.binomial(500, 0.008, size=10_000)
cover = np.mean([lo <= 0.008 <= hi for lo, hi in (exact_binomial_ci(int(k), 500) for k in ks)])
print(f"empirical coverage at p=0.008, n=500: {cover:.3f}")

# %% rank agreement and distribution distance
print("Spearman, proportional counts:", spearman_rank([255, 180, 60, 30], [510, 360, 120, 60]))
a, b = rng.lognormal(1.7, 0.25, 500), rng.lognormal(1.7, 0.25, 1000)
print(f"KS distance between two draws of one law: {ks_distance(a, b):.3f}")
print("nearest-rank P50/P90/P99:", [round(v, 3) for v in percentiles(a)])
