"""Sampling of imaginary times, continuous or restricted to a uniform grid.

All methods return log *densities* with respect to Lebesgue measure.  On a
grid of spacing ``dt`` a discrete probability ``p`` is reported as ``p / dt``,
so acceptance ratios are written once for both cases.
"""
from __future__ import annotations

import math
from typing import Optional, Tuple

_EPS = 1e-9


def signed_offset(t: float, t_ref: float, beta: float) -> float:
    """Periodic difference ``t - t_ref`` mapped into [-beta/2, beta/2)."""
    d = (t - t_ref) % beta
    if d >= 0.5 * beta:
        d -= beta
    return d


class TimeAxis:
    def __init__(self, beta: float, grid: Optional[int] = None):
        self.beta = float(beta)
        self.grid = grid
        if grid is not None:
            if grid < 2:
                raise ValueError("time grid needs at least 2 points")
            self.dt = self.beta / grid
            self._log_dt = math.log(self.dt)
        self._length_cache = {}
        self._offset_cache = {}

    # -- grid helpers
    def index(self, t: float) -> int:
        return int(round(t / self.dt)) % self.grid

    def at(self, k: int) -> float:
        return (k % self.grid) * self.dt

    def _strict_range(self, lo: float, hi: float) -> Tuple[int, int]:
        m_min = math.floor(lo / self.dt + _EPS) + 1
        m_max = math.ceil(hi / self.dt - _EPS) - 1
        return m_min, m_max

    # -- uniform time on the circle
    def uniform_time(self, rng) -> float:
        if self.grid is None:
            return rng.random() * self.beta
        return self.at(pick(rng, self.grid))

    @property
    def log_uniform_density(self) -> float:
        return -math.log(self.beta)

    # -- uniform offset in the open window (lo, hi) around t0
    def window(self, rng, t0: float, lo: float, hi: float):
        """Returns (new_time, offset, log_density) or None for an empty window."""
        if self.grid is None:
            width = hi - lo
            if width <= 0.0:
                return None
            u = lo + rng.random() * width
            if u == lo:
                return None
            t = (t0 + u) % self.beta
            if t >= self.beta:
                t = 0.0
            return t, u, -math.log(width)
        m_min, m_max = self._strict_range(lo, hi)
        count = m_max - m_min + 1
        if count <= 0:
            return None
        m = m_min + pick(rng, count)
        return self.at(self.index(t0) + m), m * self.dt, -math.log(count) - self._log_dt

    def window_log_density(self, lo: float, hi: float) -> float:
        if self.grid is None:
            width = hi - lo
            return -math.log(width) if width > 0 else math.inf
        m_min, m_max = self._strict_range(lo, hi)
        count = m_max - m_min + 1
        return -math.log(count) - self._log_dt if count > 0 else math.inf

    # -- worm arc length on (0, beta), truncated exponential
    def _length_table(self, scale: float):
        tab = self._length_cache.get(scale)
        if tab is None:
            ws = [math.exp(-m * self.dt / scale) for m in range(1, self.grid)]
            z = sum(ws)
            cum, acc = [], 0.0
            for x in ws:
                acc += x / z
                cum.append(acc)
            tab = ([math.log(x / z) - self._log_dt for x in ws], cum)
            self._length_cache[scale] = tab
        return tab

    def length(self, rng, scale: float):
        """Returns (length, log_density) or None."""
        if self.grid is None:
            if math.isinf(scale):
                ell = rng.random() * self.beta
                return (ell, -math.log(self.beta)) if ell > 0.0 else None
            norm = -math.expm1(-self.beta / scale)
            ell = -scale * math.log1p(-rng.random() * norm)
            if not 0.0 < ell < self.beta:
                return None
            return ell, -ell / scale - math.log(scale * norm)
        logs, cum = self._length_table(scale)
        m = _bisect_cum(cum, rng.random())
        return (m + 1) * self.dt, logs[m]

    def length_log_density(self, ell: float, scale: float) -> float:
        if self.grid is None:
            if math.isinf(scale):
                return -math.log(self.beta)
            return -ell / scale - math.log(scale * -math.expm1(-self.beta / scale))
        m = int(round(ell / self.dt)) - 1
        return self._length_table(scale)[0][m]

    # -- signed offset with a periodic Laplace profile, in [-beta/2, beta/2)
    def _offset_table(self, scale: float):
        tab = self._offset_cache.get(scale)
        if tab is None:
            ms = list(range(-(self.grid // 2), self.grid - self.grid // 2))
            ws = [math.exp(-abs(m) * self.dt / scale) for m in ms]
            z = sum(ws)
            cum, acc = [], 0.0
            for x in ws:
                acc += x / z
                cum.append(acc)
            tab = (ms, {m: math.log(x / z) - self._log_dt for m, x in zip(ms, ws)}, cum)
            self._offset_cache[scale] = tab
        return tab

    def offset(self, rng, scale: float):
        """Returns (offset, log_density)."""
        half = 0.5 * self.beta
        if self.grid is None:
            if math.isinf(scale):
                return rng.random() * self.beta - half, -math.log(self.beta)
            norm = -math.expm1(-half / scale)
            r = -scale * math.log1p(-rng.random() * norm)
            eps = r if rng.random() < 0.5 else -r
            if eps >= half:
                eps -= self.beta
            return eps, -r / scale - math.log(2.0 * scale * norm)
        ms, logs, cum = self._offset_table(scale)
        m = ms[_bisect_cum(cum, rng.random())]
        return m * self.dt, logs[m]

    def offset_log_density(self, eps: float, scale: float) -> float:
        half = 0.5 * self.beta
        if self.grid is None:
            if math.isinf(scale):
                return -math.log(self.beta)
            return -abs(eps) / scale - math.log(2.0 * scale * -math.expm1(-half / scale))
        m = int(round(eps / self.dt))
        return self._offset_table(scale)[1][m]


def pick(rng, n: int) -> int:
    """Uniform integer in [0, n) from one uniform double."""
    k = int(rng.random() * n)
    return k if k < n else n - 1


def _bisect_cum(cum, x):
    lo, hi = 0, len(cum) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid] > x:
            hi = mid
        else:
            lo = mid + 1
    return lo
