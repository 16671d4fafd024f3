"""Cohort statistics: Welch's t-test, nearest-neighbor copy metric, rankings.

The t-distribution tail is computed from a self-contained regularized
incomplete beta function (continued fraction, modified Lentz), so no
statistics dependency is needed; the test suite validates it against a
numerical-quadrature oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .growth import GrowthSeries

_MAX_CF_ITER = 300
_CF_EPS = 3e-16
_FPMIN = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_CF_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf(t: float, df: float) -> float:
    """Upper-tail probability of Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    if t == 0.0:
        return 0.5
    p_two = betainc_reg(0.5 * df, 0.5, df / (df + t * t))
    return 0.5 * p_two if t > 0 else 1.0 - 0.5 * p_two


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    degrees_of_freedom: float
    p_value: float
    mean_a: float
    mean_b: float
    var_a: float
    var_b: float
    n_a: int
    n_b: int


def welch_ttest(a, b, equal_var: bool = False) -> TTestResult:
    """Two-sided two-sample t-test; Welch (unequal variance) by default.

    ``equal_var`` switches to the pooled-variance variant.  Degrees of
    freedom follow Welch-Satterthwaite, p-values come from the
    incomplete-beta tail above.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("both groups need at least two observations")
    var_a = float(a.var(ddof=1))
    var_b = float(b.var(ddof=1))
    if var_a == 0.0 and var_b == 0.0 and float(a.mean()) == float(b.mean()):
        # identical degenerate groups: no evidence of a difference
        return TTestResult(0.0, float(len(a) + len(b) - 2), 1.0,
                           float(a.mean()), float(b.mean()),
                           var_a, var_b, len(a), len(b))
    if var_a == 0.0 and var_b == 0.0:
        raise ValueError("both groups have zero variance")
    na, nb = len(a), len(b)
    diff = float(a.mean() - b.mean())
    if equal_var:
        pooled = ((na - 1) * var_a + (nb - 1) * var_b) / (na + nb - 2)
        se = math.sqrt(pooled * (1.0 / na + 1.0 / nb))
        df = float(na + nb - 2)
    else:
        sa, sb = var_a / na, var_b / nb
        se = math.sqrt(sa + sb)
        df = (sa + sb) ** 2 / (sa * sa / (na - 1) + sb * sb / (nb - 1))
    t = diff / se
    p = 2.0 * t_sf(abs(t), df)
    return TTestResult(t, df, min(p, 1.0), float(a.mean()), float(b.mean()),
                       var_a, var_b, na, nb)


@dataclass(frozen=True)
class CopyMetricConfig:
    """Copy-detection metric parameters: scale factor and neighborhood size."""

    alpha: float = 0.5
    n_neighbors: int = 50

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.n_neighbors < 1:
            raise ValueError("n_neighbors must be >= 1")


def copy_metric(x_hat, x, train: Dataset, cfg: CopyMetricConfig,
                   include_target: bool = False) -> float:
    """Distance of a generated point to a candidate, normalized by the
    scaled mean distance to its nearest training neighbors.

    Small values flag near-copies.  The candidate ``x`` is excluded from
    the neighbor set when it appears in the training data, unless
    ``include_target`` is set.  A zero denominator means the generated
    point exactly duplicates its entire neighborhood.
    """
    x_hat = np.asarray(x_hat, dtype=np.float64).reshape(-1)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    Y = train.samples.astype(np.float64)
    dists = np.linalg.norm(Y - x_hat, axis=1)
    if not include_target:
        keep = ~np.all(train.samples == x.astype(np.float32), axis=1)
        dists = dists[keep]
    if len(dists) < cfg.n_neighbors:
        raise ValueError(
            f"need at least {cfg.n_neighbors} training samples, have {len(dists)}"
        )
    nearest = np.sort(dists)[:cfg.n_neighbors]
    denom = cfg.alpha * float(nearest.mean())
    if denom == 0.0:
        raise ValueError("exact duplicate: generated point coincides with its neighborhood")
    return float(np.linalg.norm(x_hat - x)) / denom


def rank_topk(report: list[GrowthSeries], k: int, at_step: int):
    """Ids with the k largest and k smallest growth values at a step.

    ``at_step`` is the 1-based step number.  Sorting is descending with
    deterministic tie-breaks by id; returns (top_ids, bottom_ids) as the
    first and last k of that order.
    """
    if not 1 <= k <= len(report):
        raise ValueError(f"k must be in [1, {len(report)}]")
    keyed = sorted(report, key=lambda s: (-s.at_step(at_step), s.target_id))
    ids = [s.target_id for s in keyed]
    return ids[:k], ids[-k:]


def histogram(values, bins: int):
    """Equal-width histogram over [min, max]; counts always sum to n."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot histogram empty input")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    counts, edges = np.histogram(values, bins=bins)
    return edges, counts
