"""Direct-definition feature oracle in exact rational arithmetic.

Shares no code with the package: plain loops over ``fractions.Fraction``.
"""

import math
from fractions import Fraction

import numpy as np

NAMES = (
    "mean", "std", "min", "max", "slope", "median",
    "iqr", "q1", "q3", "avg_crossings", "skewness", "kurtosis",
)


def _quantile(sorted_vals, p):
    h = Fraction(p) * (len(sorted_vals) - 1)
    lo = math.floor(h)
    hi = min(lo + 1, len(sorted_vals) - 1)
    return sorted_vals[lo] + (h - lo) * (sorted_vals[hi] - sorted_vals[lo])


def features(series):
    xs = [Fraction(float(v)) for v in series]
    n = len(xs)
    mean = sum(xs) / n
    dev = [x - mean for x in xs]
    m2 = sum(d * d for d in dev) / n
    m3 = sum(d ** 3 for d in dev) / n
    m4 = sum(d ** 4 for d in dev) / n
    s = sorted(xs)
    q1, med, q3 = (_quantile(s, p) for p in ("0.25", "0.5", "0.75"))

    crossings = 0
    prev = None
    for d in dev:
        sign = (d > 0) - (d < 0)
        if sign == 0:
            sign = prev if prev is not None else 1
        if prev is not None and sign != prev:
            crossings += 1
        prev = sign

    if m2 < Fraction(1, 10**12):
        skew = kurt = 0.0
    else:
        skew = float(m3) / float(m2) ** 1.5
        kurt = float(m4) / float(m2) ** 2 - 3.0
    return {
        "mean": float(mean),
        "std": math.sqrt(float(m2)),
        "min": float(s[0]),
        "max": float(s[-1]),
        "slope": float(xs[-1] - xs[0]),
        "median": float(med),
        "iqr": float(q3 - q1),
        "q1": float(q1),
        "q3": float(q3),
        "avg_crossings": float(crossings),
        "skewness": skew,
        "kurtosis": kurt,
    }


def random_series(rng, count):
    """Mixed lengths (1 to 300), scales, offsets and quantized/constant cases."""
    out = []
    for k in range(count):
        n = int(rng.integers(1, 301))
        scale = 10.0 ** rng.uniform(-3, 3)
        loc = scale * rng.uniform(-50, 50)
        kind = k % 5
        if kind == 0:
            x = loc + scale * rng.normal(size=n)
        elif kind == 1:
            x = loc + scale * rng.exponential(size=n)
        elif kind == 2:
            x = np.round(rng.normal(size=n) * 3)  # integer-valued, many ties with the mean
        elif kind == 3:
            x = np.full(n, loc)
            x[rng.random(n) < 0.5] += scale
        else:
            x = loc + scale * rng.uniform(-1, 1, size=n) ** 3
        out.append(x)
    return out

