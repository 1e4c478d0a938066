"""Two-tailed Fisher exact p-values for class association rules.

A rule ``X => c`` is a 2x2 table with fixed margins ``n`` (records),
``n_c`` (records of class ``c``) and ``sx`` (coverage, records containing
``X``).  Its support ``k`` follows the hypergeometric distribution on
``[L, U]`` with ``L = max(0, n_c + sx - n)`` and ``U = min(n_c, sx)``.

For one coverage value every attainable p-value is computed at once into a
:class:`PValueBuffer` by sweeping the pmf from both ends toward the mode,
adding the smaller end to a running sum.  Buffers are cached per coverage
in a :class:`BufferCache` with a static region (coverages up to
``max_sup``, never evicted) and a single dynamic slot for larger ones.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field

import numpy as np

#: pmfs whose logs differ by less than this (relative to ln n!) are tied
TIE_RTOL = 1e-12
DEFAULT_STATIC_BYTES = 16 * 1024 * 1024
_SLOT_BYTES = 8
_TINY = sys.float_info.min


@dataclass(frozen=True)
class LogFactorialTable:
    values: np.ndarray

    @property
    def n(self) -> int:
        return len(self.values) - 1

    def __getitem__(self, i):
        return self.values[i]


def build_log_factorials(n: int) -> LogFactorialTable:
    """Table of ``ln(i!)`` for ``i = 0..n``, built incrementally.

    The running sum is Kahan-compensated so the relative error stays near
    machine precision even for large ``n``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    out = np.empty(n + 1)
    out[0] = 0.0
    total = 0.0
    comp = 0.0
    for i in range(1, n + 1):
        y = math.log(i) - comp
        t = total + y
        comp = (t - total) - y
        total = t
        out[i] = total
    out.setflags(write=False)
    return LogFactorialTable(out)


def support_bounds(n: int, n_c: int, sx: int) -> tuple[int, int]:
    return max(0, n_c + sx - n), min(n_c, sx)


def _check_margins(n, n_c, sx):
    if not (0 <= n_c <= n and 0 <= sx <= n):
        raise ValueError(f"invalid margins n={n}, n_c={n_c}, sx={sx}")


def _log_pmf(n, n_c, sx, lf, ks):
    return (
        lf[n_c] - lf[ks] - lf[n_c - ks]
        + lf[n - n_c] - lf[sx - ks] - lf[n - n_c - sx + ks]
        - (lf[n] - lf[sx] - lf[n - sx])
    )


def hypergeom_pmf(k: int, n: int, n_c: int, sx: int, table: LogFactorialTable | None = None) -> float:
    """``C(n_c, k) C(n - n_c, sx - k) / C(n, sx)`` evaluated through log-factorials."""
    _check_margins(n, n_c, sx)
    lo, hi = support_bounds(n, n_c, sx)
    if not lo <= k <= hi:
        raise ValueError(f"k={k} outside [{lo}, {hi}]")
    if table is None or table.n < n:
        table = build_log_factorials(n)
    return math.exp(_log_pmf(n, n_c, sx, table.values, k))


@dataclass(frozen=True)
class PValueBuffer:
    """All attainable two-tailed p-values for one coverage value.

    ``pvals[k - lower]`` is the p-value of a rule with support ``k``;
    ``pmf`` holds the hypergeometric probabilities in the same layout.
    """

    coverage: int
    lower: int
    upper: int
    pvals: np.ndarray
    pmf: np.ndarray

    def __len__(self):
        return self.upper - self.lower + 1

    def p(self, k: int) -> float:
        if not self.lower <= k <= self.upper:
            raise ValueError(f"support {k} outside [{self.lower}, {self.upper}]")
        return float(self.pvals[k - self.lower])


def _sweep(logp, pmf, tol, stop=None):
    """Two-ended cumulative sweep; returns the p-value list (or one entry if ``stop``)."""
    size = len(pmf)
    out = [0.0] * size
    lo, hi = 0, size - 1
    p = 0.0
    while lo <= hi:
        if lo == hi:
            p += pmf[lo]
            out[lo] = p
            break
        d = logp[lo] - logp[hi]
        if d < -tol:
            p += pmf[lo]
            out[lo] = p
            lo += 1
        elif d > tol:
            p += pmf[hi]
            out[hi] = p
            hi -= 1
        else:
            # equally extreme outcomes share one running sum
            p = p + pmf[lo] + pmf[hi]
            out[lo] = out[hi] = p
            lo += 1
            hi -= 1
        if stop is not None and out[stop] != 0.0:
            return out
    return out


def _prepare(n, n_c, sx, table):
    _check_margins(n, n_c, sx)
    if table.n < n:
        raise ValueError(f"log-factorial table covers {table.n} < n={n}")
    lo, hi = support_bounds(n, n_c, sx)
    ks = np.arange(lo, hi + 1)
    logp = _log_pmf(n, n_c, sx, table.values, ks)
    pmf = np.exp(logp)
    tol = TIE_RTOL * max(1.0, float(table.values[n]))
    return lo, hi, logp, pmf, tol


def build_pvalue_buffer(n: int, n_c: int, sx: int, table: LogFactorialTable) -> PValueBuffer:
    """Compute every two-tailed p-value attainable at coverage ``sx``.

    An entry receives the running sum at the moment its end of the buffer is
    consumed, which equals the total pmf of all outcomes no more likely than
    it.  Tied ends are consumed together and get the same value.
    """
    if sx < 1:
        raise ValueError(f"coverage must be >= 1, got {sx}")
    lo, hi, logp, pmf, tol = _prepare(n, n_c, sx, table)
    out = _sweep(logp.tolist(), pmf.tolist(), tol)
    pvals = np.clip(np.array(out), _TINY, 1.0)
    pvals.setflags(write=False)
    pmf.setflags(write=False)
    return PValueBuffer(sx, lo, hi, pvals, pmf)


def fisher_p_direct(k: int, n: int, n_c: int, sx: int, table: LogFactorialTable) -> float:
    """Single p-value without any buffering (sweep stops once ``k`` is reached).

    Bit-identical to ``build_pvalue_buffer(...).p(k)``.
    """
    lo, hi, logp, pmf, tol = _prepare(n, n_c, sx, table)
    if not lo <= k <= hi:
        raise ValueError(f"support {k} outside [{lo}, {hi}]")
    out = _sweep(logp.tolist(), pmf.tolist(), tol, stop=k - lo)
    return min(max(out[k - lo], _TINY), 1.0)


def max_static_support(n: int, n_c: int, min_sup: int, budget_bytes: int) -> int:
    """Largest coverage whose buffers for ``min_sup..max_sup`` fit the budget.

    Returns ``min_sup - 1`` when not even the first buffer fits.
    """
    used = 0
    sx = max(min_sup, 0)
    while sx <= n:
        lo, hi = support_bounds(n, n_c, sx)
        used += (hi - lo + 1) * _SLOT_BYTES
        if used > budget_bytes:
            break
        sx += 1
    return sx - 1


@dataclass
class BufferCache:
    """Static + dynamic p-value buffer store for fixed ``n`` and ``n_c``.

    Parameters
    ----------
    static_bytes : int
        Byte budget of the static region; 0 disables it.
    dynamic : bool
        Whether the single dynamic slot is used.  With neither region enabled
        every query recomputes its p-value from the log-factorials.
    """

    n: int
    n_c: int
    table: LogFactorialTable
    min_sup: int = 1
    static_bytes: int = DEFAULT_STATIC_BYTES
    dynamic: bool = True
    max_sup: int = field(init=False)
    static_buffers: dict = field(init=False, default_factory=dict)
    dynamic_buffer: PValueBuffer | None = field(init=False, default=None)
    sup_d: int = field(init=False, default=-1)
    builds: int = field(init=False, default=0)

    def __post_init__(self):
        if self.static_bytes > 0:
            self.max_sup = max_static_support(self.n, self.n_c, self.min_sup, self.static_bytes)
        else:
            self.max_sup = self.min_sup - 1

    def _build(self, sx):
        self.builds += 1
        return build_pvalue_buffer(self.n, self.n_c, sx, self.table)

    def buffer(self, sx: int) -> PValueBuffer:
        if self.min_sup <= sx <= self.max_sup:
            buf = self.static_buffers.get(sx)
            if buf is None:
                buf = self.static_buffers[sx] = self._build(sx)
            return buf
        if self.dynamic:
            if sx != self.sup_d:
                self.dynamic_buffer = self._build(sx)
                self.sup_d = sx
            return self.dynamic_buffer
        return self._build(sx)

    @property
    def buffered(self) -> bool:
        return self.dynamic or self.max_sup >= self.min_sup

    def fisher_p(self, supp_r: int, sx: int) -> float:
        if not self.buffered:
            return fisher_p_direct(supp_r, self.n, self.n_c, sx, self.table)
        return self.buffer(sx).p(supp_r)

    def fisher_p_many(self, supports: np.ndarray, sx: int) -> np.ndarray:
        """p-values for an array of supports sharing coverage ``sx``."""
        supports = np.asarray(supports)
        if not self.buffered:
            return np.array([fisher_p_direct(int(k), self.n, self.n_c, sx, self.table) for k in supports])
        buf = self.buffer(sx)
        idx = supports - buf.lower
        if idx.size and (idx.min() < 0 or idx.max() >= len(buf)):
            raise ValueError(f"support outside [{buf.lower}, {buf.upper}] for coverage {sx}")
        return buf.pvals[idx]


def fisher_p(
    supp_r: int,
    sx: int,
    n: int,
    n_c: int,
    cache: BufferCache | None = None,
) -> float:
    """Two-tailed Fisher p-value of a rule with support ``supp_r`` and coverage ``sx``."""
    if cache is None:
        return fisher_p_direct(supp_r, n, n_c, sx, build_log_factorials(n))
    if (cache.n, cache.n_c) != (n, n_c):
        raise ValueError("cache was built for different margins")
    return cache.fisher_p(supp_r, sx)


class RuleScorer:
    """p-values for every class of one dataset, sharing one log-factorial table.

    With two classes ``X => c`` and ``X => not c`` are the same test, so all
    queries go through class 0's buffers; this keeps p-values bit-identical
    whichever class a rule is reported for.
    """

    def __init__(self, n, class_counts, min_sup=1, static_bytes=DEFAULT_STATIC_BYTES,
                 dynamic=True, table=None):
        self.n = int(n)
        self.class_counts = [int(c) for c in class_counts]
        self.table = table if table is not None and table.n >= n else build_log_factorials(self.n)
        m = len(self.class_counts)
        n_caches = 1 if m <= 2 else m
        per_cache = static_bytes // n_caches
        self.caches = [
            BufferCache(self.n, self.class_counts[c], self.table, max(min_sup, 1), per_cache, dynamic)
            for c in range(n_caches)
        ]

    @property
    def binary(self) -> bool:
        return len(self.class_counts) <= 2

    def p_value(self, class_index: int, supp_r: int, sx: int) -> float:
        if sx == 0:
            return 1.0
        if self.binary and class_index != 0:
            return self.caches[0].fisher_p(sx - supp_r, sx)
        return self.caches[class_index].fisher_p(supp_r, sx)

    def p_values(self, class_index: int, supports: np.ndarray, sx: int) -> np.ndarray:
        if self.binary and class_index != 0:
            return self.caches[0].fisher_p_many(sx - np.asarray(supports), sx)
        return self.caches[class_index].fisher_p_many(supports, sx)

    @property
    def builds(self) -> int:
        return sum(c.builds for c in self.caches)
