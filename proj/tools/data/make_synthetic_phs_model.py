#!/usr/bin/env python3
"""Builds the bundled synthetic PHS model.

The betas, allele frequencies and survival table are made up. They only have
to be plausible in sign and scale so the pipeline can be exercised end to
end. Replace the file with a real model for any clinical use.
"""
import json
import math
import random

# rsid, beta (synthetic), effect-allele frequency (synthetic), chrom, GRCh38 pos (APOE only)
VARIANTS = [
    ("rs429358", 1.03, 0.14, "19", 44908684),
    ("rs7412", -0.47, 0.08, "19", 44908822),
    ("rs6733839", 0.15, 0.39, None, None),
    ("rs9331896", -0.13, 0.38, None, None),
    ("rs3851179", -0.12, 0.36, None, None),
    ("rs11218343", -0.21, 0.04, None, None),
    ("rs10948363", 0.09, 0.27, None, None),
    ("rs11771145", -0.10, 0.34, None, None),
    ("rs4147929", 0.13, 0.19, None, None),
    ("rs17125944", 0.12, 0.09, None, None),
    ("rs10498633", -0.09, 0.22, None, None),
    ("rs983392", -0.10, 0.40, None, None),
]

rng = random.Random(1234)
scores = []
for _ in range(1000):
    s = 0.0
    for _, beta, freq, _, _ in VARIANTS:
        dosage = (rng.random() < freq) + (rng.random() < freq)
        s += beta * dosage
    scores.append(round(s, 4))
mu = sum(scores) / len(scores)

survival = []
for age in range(60, 100, 5):
    # Weibull-like baseline survival, monotone non-increasing
    s0 = math.exp(-((age - 50) / 45.0) ** 4)
    survival.append({"age": age, "s0": round(s0, 6)})

model = {
    "version": "synthetic-phs-1",
    "synthetic": True,
    "note": "Synthetic fixture. Not the published hazard model; do not use for clinical decisions.",
    "variants": [
        dict({"rsid": r, "beta": b}, **({"chrom": c, "pos": p} if c else {}))
        for r, b, _, c, p in VARIANTS
    ],
    "mu": round(mu, 6),
    "reference_scores": scores,
    "baseline_survival": survival,
}
print(json.dumps(model, indent=1))
