"""Regenerates dist_oracle.json: seeded parameter sets with log-likelihoods,
binned masses and entropies computed at 40 digits with mpmath."""
import json

import numpy as np
from mpmath import mp, mpf, log, exp, sqrt, pi, ncdf

mp.dps = 40
N_BINS = 25
rng = np.random.default_rng(20240611)


def r(x, d=6):
    return float(round(float(x), d))


def gmm_case():
    w0 = r(rng.uniform(0.05, 0.95))
    return {
        "kind": "mixture",
        "weights": [w0, r(1 - w0)],
        "means": [r(rng.uniform(-0.2, 1.2)), r(rng.uniform(-0.2, 1.2))],
        "stds": [r(10 ** rng.uniform(-1.7, -0.3)), r(10 ** rng.uniform(-1.7, -0.3))],
    }


def ll_mix(c, x):
    x = mpf(x)
    dens = sum(
        mpf(w) / (mpf(s) * sqrt(2 * pi)) * exp(-((x - mpf(m)) ** 2) / (2 * mpf(s) ** 2))
        for w, m, s in zip(c["weights"], c["means"], c["stds"])
    )
    return log(dens)


def masses(c):
    raw = []
    for b in range(N_BINS):
        lo, hi = mpf(b) / N_BINS, mpf(b + 1) / N_BINS
        raw.append(
            sum(
                mpf(w) * (ncdf((hi - mpf(m)) / mpf(s)) - ncdf((lo - mpf(m)) / mpf(s)))
                for w, m, s in zip(c["weights"], c["means"], c["stds"])
            )
        )
    t = sum(raw)
    return [x / t for x in raw]


cases = []
for k in range(100):
    xs = [r(x) for x in rng.uniform(0, 1, size=3)]
    if k % 4 == 3:
        p = r(rng.uniform(0.01, 0.99))
        c = {"kind": "bernoulli", "p": p}
        c["x"] = [0.0, 1.0]
        c["log_likelihood"] = [float(log(1 - mpf(p))), float(log(mpf(p)))]
        c["entropy"] = float(-(mpf(p) * log(mpf(p)) + (1 - mpf(p)) * log(1 - mpf(p))))
    else:
        c = gmm_case()
        c["x"] = xs
        c["log_likelihood"] = [float(ll_mix(c, x)) for x in xs]
        m = masses(c)
        c["masses"] = [float(v) for v in m]
        c["entropy"] = float(-sum(v * log(v) for v in m if v > 0))
    cases.append(c)

with open("dist_oracle.json", "w") as f:
    json.dump({"n_bins": N_BINS, "cases": cases}, f, indent=1)
