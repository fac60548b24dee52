#!/usr/bin/env python3
"""Running weighted averages without storing the iterate history.

Feeds one noisy iterate stream through the four tracked schemes (last,
uniform, linear, quadratic) plus the shifted quadratic average that the
convergence bound is stated for, and checks each recursion against a
direct weighted sum of the whole stream.
"""

import numpy as np

from localsgd import (
    SCHEMES,
    RunningAverage,
    ShiftedQuadraticAverage,
    sum_of_weights,
)

rng = np.random.default_rng(1)
T, d = 500, 4

# a decaying random walk, loosely SGD-shaped
xs = np.cumsum(rng.standard_normal((T, d)) / np.arange(1, T + 1)[:, None], axis=0)

running = {kind: RunningAverage(kind) for kind in SCHEMES}
shifted = ShiftedQuadraticAverage(shift=33.0)
for t, x in enumerate(xs):
    for kind in SCHEMES:
        running[kind].update(x, t)
    shifted.update(x, t)

t_idx = np.arange(T, dtype=np.float64)
direct_weights = {
    "uniform": np.ones(T),
    "linear": t_idx + 1.0,
    "quadratic": (t_idx + 1.0) ** 2,
}

print(f"{'scheme':>10} {'recursive[0]':>14} {'direct[0]':>14} {'rel err':>10}")
for kind in SCHEMES:
    if kind == "last":
        direct = xs[-1]
    else:
        w = direct_weights[kind]
        direct = (w[:, None] * xs).sum(axis=0) / w.sum()
    rel = np.linalg.norm(running[kind].value - direct) / np.linalg.norm(direct)
    print(f"{kind:>10} {running[kind].value[0]:>14.8f} {direct[0]:>14.8f} {rel:>10.1e}")

w = (33.0 + t_idx) ** 2
direct = (w[:, None] * xs).sum(axis=0) / w.sum()
rel = np.linalg.norm(shifted.value - direct) / np.linalg.norm(direct)
print(f"{'shift-33':>10} {shifted.value[0]:>14.8f} {direct[0]:>14.8f} {rel:>10.1e}")

print("\nweight-sum closed form vs direct summation:")
for a, T in ((1.0, 3), (33.0, 500), (65.0, 10_000)):
    direct = float(np.sum((a + np.arange(T)) ** 2))
    closed = sum_of_weights(a, T)
    print(f"  a={a:<6} T={T:<7} closed={closed:.6e}  |diff|={abs(closed - direct):.1e}")
