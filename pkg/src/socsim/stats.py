"""Two-sample and factorial test statistics for sweep analysis.

Welch's t is paired with a normal-approximation two-sided p-value
(erfc-based), which is what downstream significance filtering expects; at
the group sizes produced by sweeps the difference from the t-distribution
is negligible, and the approximation keeps the dependency surface at the
stdlib. Degenerate inputs (tiny groups, zero variance) are flagged rather
than raised so callers can skip those cells.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

from .errors import InvalidInputError


def _mean(xs: Sequence[float]) -> float:
    if not xs:
        raise InvalidInputError("mean of an empty sample")
    return math.fsum(xs) / len(xs)


def _sample_var(xs: Sequence[float]) -> float:
    """Unbiased (n-1) variance; 0.0 for singletons."""
    n = len(xs)
    if n < 2:
        return 0.0
    m = _mean(xs)
    return math.fsum((x - m) ** 2 for x in xs) / (n - 1)


def normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    degenerate: bool = False


def welch_t(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Welch's unequal-variance t with a two-sided normal p-value.

    degenerate=True marks results that should not be trusted: a group
    smaller than 2 or a zero standard error (then t is 0 or +/-inf).
    """
    if not a or not b:
        raise InvalidInputError("both samples must be non-empty")
    ma, mb = _mean(a), _mean(b)
    se2 = _sample_var(a) / len(a) + _sample_var(b) / len(b)
    degenerate = len(a) < 2 or len(b) < 2 or se2 == 0.0
    if se2 == 0.0:
        if ma == mb:
            return TTestResult(t=0.0, p=1.0, degenerate=True)
        return TTestResult(t=math.copysign(math.inf, ma - mb), p=0.0, degenerate=True)
    t = (ma - mb) / math.sqrt(se2)
    p = math.erfc(abs(t) / math.sqrt(2.0))  # == 2 * (1 - normal_cdf(|t|))
    return TTestResult(t=t, p=p, degenerate=degenerate)


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float | None:
    """Standardized mean difference with the pooled (n-2) denominator.

    None when the pooled variance is zero or either group is a singleton.
    """
    if not a or not b:
        raise InvalidInputError("both samples must be non-empty")
    na, nb = len(a), len(b)
    if na + nb < 3:
        return None
    pooled = ((na - 1) * _sample_var(a) + (nb - 1) * _sample_var(b)) / (na + nb - 2)
    if pooled == 0.0:
        return None
    return (_mean(a) - _mean(b)) / math.sqrt(pooled)


def eta_squared(groups: Sequence[Sequence[float]]) -> float | None:
    """Between-group share of total variance, SS_between / SS_total.

    None when every observation is identical (SS_total == 0).
    """
    cells = [g for g in groups if len(g)]
    if len(cells) < 2:
        raise InvalidInputError("need at least two non-empty groups")
    all_xs = [x for g in cells for x in g]
    grand = _mean(all_xs)
    ss_total = math.fsum((x - grand) ** 2 for x in all_xs)
    if ss_total == 0.0:
        return None
    ss_between = math.fsum(len(g) * (_mean(g) - grand) ** 2 for g in cells)
    return ss_between / ss_total


def interaction_contrast(m00: float, m01: float, m10: float, m11: float) -> float:
    """Two-factor interaction on 2x2 cell means: (m11 - m10) - (m01 - m00).

    Zero means the factors act additively on the outcome. m01 is the cell
    with only the second factor on, m10 with only the first.
    """
    return (m11 - m10) - (m01 - m00)


def quantile(xs: Sequence[float], q: float) -> float:
    """Linear-interpolation quantile of a sample (rank h = (n-1) q)."""
    if not xs:
        raise InvalidInputError("quantile of an empty sample")
    if not 0.0 <= q <= 1.0:
        raise InvalidInputError(f"quantile level {q} outside [0, 1]")
    ys = sorted(xs)
    h = (len(ys) - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, len(ys) - 1)
    return ys[lo] + (h - lo) * (ys[hi] - ys[lo])


def empirical_ci(xs: Sequence[float], level: float = 0.95) -> tuple[float, float]:
    """Central percentile interval of the sample at the given coverage."""
    if not 0.0 < level < 1.0:
        raise InvalidInputError(f"coverage {level} outside (0, 1)")
    if len(xs) == 1:
        warnings.warn("confidence interval from a single observation", stacklevel=2)
    alpha = (1.0 - level) / 2.0
    return quantile(xs, alpha), quantile(xs, 1.0 - alpha)
