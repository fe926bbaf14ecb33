#!/usr/bin/env python3
"""Generate the bundled synthetic demo trial (data/demo_trial.csv).

Two arms (intervention=1: 204, control=0: 205), four centres, a continuous
quality-of-life score at baseline and 1 year, a dichotomised version of the
1-year score, exact missing-data counts (29/13 outcomes, 13/10 baselines)
and a reason category for each missing outcome.
"""

import json
import numpy as np

rng = np.random.default_rng(409409)

ARM_N = {1: 204, 0: 205}
CENTRES = ["amsterdam", "leipzig", "london", "verona"]
CENTRE_N = {1: [50, 49, 45, 60], 0: [50, 48, 47, 60]}
BASE_MEAN = {1: 38.4, 0: 40.1}
BASE_SD = {1: 11.2, 0: 12.1}
Y1_MEAN = {1: 40.2, 0: 41.3}
Y1_SD = {1: 12.0, 0: 11.5}
MISS_OUT = {1: 29, 0: 13}
MISS_BASE = {1: 13, 0: 10}

rows = []
for arm in (1, 0):
    n = ARM_N[arm]
    centre = np.repeat(CENTRES, CENTRE_N[arm])
    base = rng.normal(BASE_MEAN[arm], BASE_SD[arm], n)
    # 1-year score correlated ~0.55 with baseline, marginals as in the table
    rho = 0.55
    noise = rng.normal(0.0, 1.0, n)
    y1 = Y1_MEAN[arm] + Y1_SD[arm] * (
        rho * (base - BASE_MEAN[arm]) / BASE_SD[arm]
        + np.sqrt(1 - rho**2) * noise
    )
    base = np.round(base, 1)
    y1 = np.round(y1, 1)
    # missing outcomes lean toward lower baseline scores (MAR-flavoured)
    p = 1.0 / (1.0 + np.exp((base - base.mean()) / base.std()))
    miss_y = rng.choice(n, size=MISS_OUT[arm], replace=False, p=p / p.sum())
    miss_b = rng.choice(n, size=MISS_BASE[arm], replace=False)
    reason = rng.choice(["refused", "lost"], size=n, p=[0.6, 0.4])
    for i in range(n):
        rows.append(
            dict(
                arm=arm,
                centre=centre[i],
                mcs_base="" if i in miss_b else f"{base[i]:.1f}",
                mcs_1yr="" if i in miss_y else f"{y1[i]:.1f}",
                mcs40="" if i in miss_y else str(int(y1[i] > 40)),
                reason=reason[i] if i in miss_y else "",
            )
        )

order = rng.permutation(len(rows))
with open("data/demo_trial.csv", "w") as f:
    f.write("id,arm,centre,centre_leipzig,centre_london,centre_verona,"
            "mcs_base,mcs_1yr,mcs40,reason\n")
    for k, idx in enumerate(order, start=1):
        r = rows[idx]
        d = [int(r["centre"] == c) for c in ("leipzig", "london", "verona")]
        f.write(
            f"{k},{r['arm']},{r['centre']},{d[0]},{d[1]},{d[2]},"
            f"{r['mcs_base']},{r['mcs_1yr']},{r['mcs40']},{r['reason']}\n"
        )

manifest = dict(
    n=409,
    arm1=204,
    arm0=205,
    missing_outcome_arm1=29,
    missing_outcome_arm0=13,
    missing_baseline=23,
)
with open("data/demo_trial_manifest.json", "w") as f:
    json.dump(manifest, f, indent=2)
    f.write("\n")
print("wrote data/demo_trial.csv and manifest")
