"""Evaluates the Adam and NAdam update rules step by step at 50 digits and
writes the parameter trajectory to optimizer_transcript.json."""

import json
from mpmath import mp, mpf, sqrt

mp.dps = 50
B1, B2, EPS = mpf("0.9"), mpf("0.999"), mpf("1e-8")
LR = mpf("0.001")

theta0 = ["0.5", "-1.25", "0.0"]
grads = [
    ["1.0", "1.0", "1.0"],
    ["0.3", "-2.0", "0.0"],
    ["-0.7", "0.25", "1e-3"],
    ["0.0", "4.0", "-0.5"],
    ["2.5", "-0.125", "0.75"],
]


def run(kind):
    theta = [mpf(x) for x in theta0]
    m = [mpf(0)] * 3
    v = [mpf(0)] * 3
    out = []
    for t, g_row in enumerate(grads, start=1):
        for j, gs in enumerate(g_row):
            g = mpf(gs)
            m[j] = B1 * m[j] + (1 - B1) * g
            v[j] = B2 * v[j] + (1 - B2) * g * g
            mh = m[j] / (1 - B1**t)
            vh = v[j] / (1 - B2**t)
            if kind == "adam":
                num = mh
            else:
                num = B1 * mh + (1 - B1) * g / (1 - B1**t)
            theta[j] = theta[j] - LR * num / (sqrt(vh) + EPS)
        out.append([float(x) for x in theta])
    return out


doc = {
    "learning_rate": float(LR),
    "theta0": [float(x) for x in theta0],
    "grads": [[float(x) for x in r] for r in grads],
    "adam": run("adam"),
    "nadam": run("nadam"),
}
with open(__file__.replace(".py", ".json"), "w") as f:
    json.dump(doc, f, indent=2)
