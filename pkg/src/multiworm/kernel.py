"""Compiled sampler with the same random-number consumption as :class:`ChainState`.

The kernel replays the Python engine decision by decision: identical draws,
identical floating-point expressions, identical event ordering.  Given the
same seed and configuration both produce the same trajectory, which the test
suite checks step by step.  Worldlines live in flat arrays:

* an event pool (time, site, kind, partner, species) with a free-list;
* per site, time-sorted rows of event ids, times and segment occupations.

Row capacity and pool size grow between steps; the kernel returns control to
Python when a high-water mark gets close to either limit.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np
from numba import njit

from .engine import ANY_SPECIES, MOVE_NAMES, ChainState
from .records import MeasurementChunk
from .worldlines import HEAD, KINK_IN, KINK_OUT, TAIL, Event, Worldlines

# state tuple slots
_EV_T, _EV_S, _EV_K, _EV_P, _EV_SP, _FREE = 0, 1, 2, 3, 4, 5
_ST_T, _ST_E, _ST_O, _ST_N, _FLAT = 6, 7, 8, 9, 10
_WTAIL, _WHEAD, _IST, _FST, _ATT, _ACC = 11, 12, 13, 14, 15, 16

# integer state slots
_I_KINKS, _I_WORMS, _I_FREE, _I_STEPS, _I_HIGH, _I_INSWEEP, _I_ERR = 0, 1, 2, 3, 4, 5, 6

# table tuple slots
_T_E, _T_VPTR, _T_VIDX, _T_NCNT, _T_NSITE, _T_NAMP = 0, 1, 2, 3, 4, 5
_T_SLO, _T_SCNT, _T_WQ, _T_WSP, _T_CLOGP, _T_CCUM, _T_DIST = 6, 7, 8, 9, 10, 11, 12
_T_LLOG, _T_LCUM, _T_OMS, _T_OLOG, _T_OCUM, _T_BONDS, _T_F, _T_I = (
    13, 14, 15, 16, 17, 18, 19, 20)

# float parameter slots
(_F_BETA, _F_V, _F_LG2, _F_LABEL, _F_PWORM, _F_LPWORM, _F_CUM0, _F_CUM1,
 _F_LOGM, _F_WIN, _F_XI, _F_XIT, _F_WLEN, _F_DT, _F_LOGDT) = range(15)
# int parameter slots
_P_NS, _P_L, _P_M, _P_NMAX, _P_NW, _P_MAXK, _P_GRID = range(7)

_M_CREATE, _M_ANNIHILATE, _M_SHIFT, _M_KINS, _M_KREM = 0, 1, 2, 3, 4
_LOG_HALF = math.log(0.5)
_EPS = 1e-9
_INF = math.inf
_ERR_ALONE = 1


# ------------------------------------------------------------------ helpers
@njit(cache=True)
def _jump(kind):
    return 1 if kind & 1 else -1


@njit(cache=True)
def _wrap(t, beta):
    t = t % beta
    if t >= beta:
        t = 0.0
    return t


@njit(cache=True)
def _arc(t_from, t_to, beta):
    d = t_to - t_from
    if d < 0:
        d += beta
    return d


@njit(cache=True)
def _arc_overlap(a0, la, b0, lb, beta):
    total = 0.0
    for k in range(3):
        shift = (-beta, 0.0, beta)[k]
        lo = max(a0, b0 + shift)
        hi = min(a0 + la, b0 + shift + lb)
        if hi > lo:
            total += hi - lo
    return total


@njit(cache=True)
def _pick(rng, n):
    k = int(rng.random() * n)
    return k if k < n else n - 1


@njit(cache=True)
def _pick_cum(rng, cum):
    u = rng.random()
    for k in range(len(cum)):
        if u < cum[k]:
            return k
    return len(cum) - 1


@njit(cache=True)
def _bisect_cum(cum, x):
    lo, hi = 0, len(cum) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid] > x:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True)
def _bl(ts, n, t):
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) >> 1
        if ts[mid] < t:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def _br(ts, n, t):
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) >> 1
        if t < ts[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


# ---------------------------------------------------------------- time axis
@njit(cache=True)
def _grid_index(t, fp, ip):
    return int(np.rint(t / fp[_F_DT])) % ip[_P_GRID]


@njit(cache=True)
def _grid_at(k, fp, ip):
    return (k % ip[_P_GRID]) * fp[_F_DT]


@njit(cache=True)
def _strict_range(lo, hi, dt):
    return math.floor(lo / dt + _EPS) + 1, math.ceil(hi / dt - _EPS) - 1


@njit(cache=True)
def _uniform_time(rng, fp, ip):
    if ip[_P_GRID] == 0:
        return rng.random() * fp[_F_BETA]
    return _grid_at(_pick(rng, ip[_P_GRID]), fp, ip)


@njit(cache=True)
def _window(rng, t0, lo, hi, fp, ip):
    """(ok, new_time, offset, log_density)"""
    beta = fp[_F_BETA]
    if ip[_P_GRID] == 0:
        width = hi - lo
        if width <= 0.0:
            return False, 0.0, 0.0, 0.0
        u = lo + rng.random() * width
        if u == lo:
            return False, 0.0, 0.0, 0.0
        t = (t0 + u) % beta
        if t >= beta:
            t = 0.0
        return True, t, u, -math.log(width)
    dt = fp[_F_DT]
    m_min, m_max = _strict_range(lo, hi, dt)
    count = m_max - m_min + 1
    if count <= 0:
        return False, 0.0, 0.0, 0.0
    m = m_min + _pick(rng, count)
    return (True, _grid_at(_grid_index(t0, fp, ip) + m, fp, ip), m * dt,
            -math.log(count) - fp[_F_LOGDT])


@njit(cache=True)
def _window_log_density(lo, hi, fp, ip):
    if ip[_P_GRID] == 0:
        width = hi - lo
        return -math.log(width) if width > 0 else _INF
    m_min, m_max = _strict_range(lo, hi, fp[_F_DT])
    count = m_max - m_min + 1
    return -math.log(count) - fp[_F_LOGDT] if count > 0 else _INF


@njit(cache=True)
def _length(rng, T):
    fp = T[_T_F]
    ip = T[_T_I]
    beta = fp[_F_BETA]
    scale = fp[_F_WLEN]
    if ip[_P_GRID] == 0:
        if scale == _INF:
            ell = rng.random() * beta
            if ell > 0.0:
                return True, ell, -math.log(beta)
            return False, 0.0, 0.0
        norm = -math.expm1(-beta / scale)
        ell = -scale * math.log1p(-rng.random() * norm)
        if not (0.0 < ell < beta):
            return False, 0.0, 0.0
        return True, ell, -ell / scale - math.log(scale * norm)
    m = _bisect_cum(T[_T_LCUM], rng.random())
    return True, (m + 1) * fp[_F_DT], T[_T_LLOG][m]


@njit(cache=True)
def _length_log_density(ell, T):
    fp = T[_T_F]
    ip = T[_T_I]
    scale = fp[_F_WLEN]
    if ip[_P_GRID] == 0:
        if scale == _INF:
            return -math.log(fp[_F_BETA])
        return -ell / scale - math.log(scale * -math.expm1(-fp[_F_BETA] / scale))
    m = int(np.rint(ell / fp[_F_DT])) - 1
    return T[_T_LLOG][m]


@njit(cache=True)
def _offset(rng, T):
    fp = T[_T_F]
    ip = T[_T_I]
    beta = fp[_F_BETA]
    half = 0.5 * beta
    scale = fp[_F_XIT]
    if ip[_P_GRID] == 0:
        if scale == _INF:
            return rng.random() * beta - half, -math.log(beta)
        norm = -math.expm1(-half / scale)
        r = -scale * math.log1p(-rng.random() * norm)
        eps = r if rng.random() < 0.5 else -r
        if eps >= half:
            eps -= beta
        return eps, -r / scale - math.log(2.0 * scale * norm)
    k = _bisect_cum(T[_T_OCUM], rng.random())
    m = T[_T_OMS][k]
    return m * fp[_F_DT], T[_T_OLOG][k]


@njit(cache=True)
def _offset_log_density(eps, T):
    fp = T[_T_F]
    ip = T[_T_I]
    half = 0.5 * fp[_F_BETA]
    scale = fp[_F_XIT]
    if ip[_P_GRID] == 0:
        if scale == _INF:
            return -math.log(fp[_F_BETA])
        return -abs(eps) / scale - math.log(2.0 * scale * -math.expm1(-half / scale))
    m = int(np.rint(eps / fp[_F_DT]))
    return T[_T_OLOG][m - T[_T_OMS][0]]


@njit(cache=True)
def _shifted(t0, eps, fp, ip):
    if ip[_P_GRID] == 0:
        return _wrap(t0 + eps, fp[_F_BETA])
    return _grid_at(_grid_index(t0, fp, ip) + int(np.rint(eps / fp[_F_DT])), fp, ip)


@njit(cache=True)
def _signed_offset(t, t_ref, beta):
    d = (t - t_ref) % beta
    if d >= 0.5 * beta:
        d -= beta
    return d


# ------------------------------------------------------------- site queries
@njit(cache=True)
def _occ_at(S, s, t):
    n = S[_ST_N][s]
    if n == 0:
        return S[_FLAT][s]
    k = _br(S[_ST_T][s], n, t) - 1
    if k < 0:
        k = n - 1
    return S[_ST_O][s, k]


@njit(cache=True)
def _occ_before(S, s, t):
    n = S[_ST_N][s]
    if n == 0:
        return S[_FLAT][s]
    k = _bl(S[_ST_T][s], n, t) - 1
    if k < 0:
        k = n - 1
    return S[_ST_O][s, k]


@njit(cache=True)
def _prev_event(S, s, t):
    n = S[_ST_N][s]
    if n == 0:
        return -1
    k = _bl(S[_ST_T][s], n, t) - 1
    if k < 0:
        k = n - 1
    return S[_ST_E][s, k]


@njit(cache=True)
def _next_event(S, s, t):
    n = S[_ST_N][s]
    if n == 0:
        return -1
    k = _br(S[_ST_T][s], n, t)
    if k >= n:
        k = 0
    return S[_ST_E][s, k]


@njit(cache=True)
def _has_event_at(S, s, t):
    n = S[_ST_N][s]
    ts = S[_ST_T][s]
    k = _bl(ts, n, t)
    return k < n and ts[k] == t


@njit(cache=True)
def _events_between(S, s, ta, tb):
    n = S[_ST_N][s]
    if n == 0:
        return 0
    ts = S[_ST_T][s]
    if ta < tb:
        return _bl(ts, n, tb) - _br(ts, n, ta)
    if ta > tb:
        return (n - _br(ts, n, ta)) + _bl(ts, n, tb)
    return n - (1 if _has_event_at(S, s, ta) else 0)


@njit(cache=True)
def _free(S, s, ta, tb):
    return _events_between(S, s, ta, tb) == 0


@njit(cache=True)
def _occupation_integral(S, s, t_from, length, beta):
    nev = S[_ST_N][s]
    if nev == 0:
        return S[_FLAT][s] * length
    ts = S[_ST_T][s]
    occ = S[_ST_O][s]
    k = _br(ts, nev, t_from)
    n = occ[k - 1] if k > 0 else occ[nev - 1]
    t = t_from
    t_end = t_from + length
    total = 0.0
    for m in range(nev):
        idx = k + m
        tn = ts[idx] if idx < nev else ts[idx - nev] + beta
        if tn >= t_end:
            break
        total += n * (tn - t)
        t = tn
        n = occ[idx if idx < nev else idx - nev]
    return total + n * (t_end - t)


@njit(cache=True)
def _vsum(S, T, s, t0, length):
    vptr = T[_T_VPTR]
    vidx = T[_T_VIDX]
    beta = T[_T_F][_F_BETA]
    acc = 0.0
    for q in range(vptr[s], vptr[s + 1]):
        acc += _occupation_integral(S, vidx[q], t0, length, beta)
    return acc


@njit(cache=True)
def _is_vertical(T, a, b):
    vptr = T[_T_VPTR]
    vidx = T[_T_VIDX]
    for q in range(vptr[a], vptr[a + 1]):
        if vidx[q] == b:
            return True
    return False


# ---------------------------------------------------------------- mutations
@njit(cache=True)
def _alloc(S, t, s, kind, species):
    ist = S[_IST]
    ist[_I_FREE] -= 1
    e = S[_FREE][ist[_I_FREE]]
    S[_EV_T][e] = t
    S[_EV_S][e] = s
    S[_EV_K][e] = kind
    S[_EV_P][e] = -1
    S[_EV_SP][e] = species
    return e


@njit(cache=True)
def _release(S, e):
    ist = S[_IST]
    S[_FREE][ist[_I_FREE]] = e
    ist[_I_FREE] += 1


@njit(cache=True)
def _insert(S, e):
    s = S[_EV_S][e]
    t = S[_EV_T][e]
    n = S[_ST_N][s]
    ts = S[_ST_T][s]
    es = S[_ST_E][s]
    os_ = S[_ST_O][s]
    k = _bl(ts, n, t)
    for m in range(n, k, -1):
        ts[m] = ts[m - 1]
        es[m] = es[m - 1]
        os_[m] = os_[m - 1]
    ts[k] = t
    es[k] = e
    os_[k] = 0
    S[_ST_N][s] = n + 1
    ist = S[_IST]
    if n + 1 > ist[_I_HIGH]:
        ist[_I_HIGH] = n + 1


@njit(cache=True)
def _remove(S, e):
    s = S[_EV_S][e]
    n = S[_ST_N][s]
    ts = S[_ST_T][s]
    es = S[_ST_E][s]
    os_ = S[_ST_O][s]
    k = _bl(ts, n, S[_EV_T][e])
    for m in range(k, n - 1):
        ts[m] = ts[m + 1]
        es[m] = es[m + 1]
        os_[m] = os_[m + 1]
    S[_ST_N][s] = n - 1


@njit(cache=True)
def _reflow(S, s, t_from, t_to, n_out, beta):
    nev = S[_ST_N][s]
    if nev == 0:
        S[_FLAT][s] = n_out
        return
    ts = S[_ST_T][s]
    es = S[_ST_E][s]
    occ = S[_ST_O][s]
    kinds = S[_EV_K]
    span = _arc(t_from, t_to, beta)
    k = _bl(ts, nev, t_from)
    n = n_out
    for m in range(nev):
        idx = (k + m) % nev
        if _arc(t_from, ts[idx], beta) > span:
            break
        n += _jump(kinds[es[idx]])
        occ[idx] = n


@njit(cache=True)
def _place_worm(S, s, start, length, raise_, species, label, beta):
    start = _wrap(start, beta)
    end = _wrap(start + length, beta)
    n_out = _occ_at(S, s, start)
    first = _alloc(S, start, s, TAIL if raise_ else HEAD, species)
    second = _alloc(S, end, s, HEAD if raise_ else TAIL, species)
    _insert(S, first)
    _insert(S, second)
    _reflow(S, s, start, end, n_out, beta)
    if raise_:
        S[_WTAIL][label] = first
        S[_WHEAD][label] = second
    else:
        S[_WTAIL][label] = second
        S[_WHEAD][label] = first


@njit(cache=True)
def _remove_worm(S, label, raise_):
    tail = S[_WTAIL][label]
    head = S[_WHEAD][label]
    first = tail if raise_ else head
    s = S[_EV_S][first]
    n_out = _occ_before(S, s, S[_EV_T][first])
    _remove(S, tail)
    _remove(S, head)
    if S[_ST_N][s] == 0:
        S[_FLAT][s] = n_out
    _release(S, tail)
    _release(S, head)


@njit(cache=True)
def _shift_end(S, e, new_time):
    s = S[_EV_S][e]
    n = S[_ST_N][s]
    ts = S[_ST_T][s]
    k = _bl(ts, n, S[_EV_T][e])
    n_after = S[_ST_O][s, k]
    _remove(S, e)
    S[_EV_T][e] = new_time
    _insert(S, e)
    S[_ST_O][s, _bl(ts, n, new_time)] = n_after


@njit(cache=True)
def _hop_end(S, e, j, tk, before, species, beta):
    i = S[_EV_S][e]
    te = S[_EV_T][e]
    if before:
        t_from, t_to = tk, te
    else:
        t_from, t_to = te, tk
    n_out_i = _occ_before(S, i, t_from)
    n_out_j = _occ_before(S, j, t_from)
    if S[_EV_K][e] == HEAD:
        src, dst = i, j
    else:
        src, dst = j, i
    out = _alloc(S, tk, src, KINK_OUT, species)
    inn = _alloc(S, tk, dst, KINK_IN, species)
    S[_EV_P][out] = inn
    S[_EV_P][inn] = out
    _remove(S, e)
    S[_EV_S][e] = j
    _insert(S, out)
    _insert(S, inn)
    _insert(S, e)
    _reflow(S, i, t_from, t_to, n_out_i, beta)
    _reflow(S, j, t_from, t_to, n_out_j, beta)
    S[_IST][_I_KINKS] += 1


@njit(cache=True)
def _unhop_end(S, out, e, before, beta):
    inn = S[_EV_P][out]
    j = S[_EV_S][e]
    i = S[_EV_S][inn] if S[_EV_S][out] == j else S[_EV_S][out]
    tk = S[_EV_T][out]
    te = S[_EV_T][e]
    if before:
        t_from, t_to = tk, te
    else:
        t_from, t_to = te, tk
    n_out_i = _occ_before(S, i, t_from)
    n_out_j = _occ_before(S, j, t_from)
    _remove(S, out)
    _remove(S, inn)
    _remove(S, e)
    S[_EV_S][e] = i
    _insert(S, e)
    _reflow(S, i, t_from, t_to, n_out_i, beta)
    _reflow(S, j, t_from, t_to, n_out_j, beta)
    S[_IST][_I_KINKS] -= 1
    _release(S, out)
    _release(S, inn)


# ------------------------------------------------------------------ tether
@njit(cache=True)
def _pair_penalty(sites, times, T):
    fp = T[_T_F]
    dist = T[_T_DIST]
    beta = fp[_F_BETA]
    xi = fp[_F_XI]
    xi_t = fp[_F_XIT]
    total = 0.0
    n = len(sites)
    for a in range(n):
        for b in range(a + 1, n):
            if xi != _INF:
                total += dist[sites[a], sites[b]] / xi
            if xi_t != _INF:
                dt = abs(times[a] - times[b])
                total += min(dt, beta - dt) / xi_t
    return total


@njit(cache=True)
def _tether_moved(S, T, moved, msite, mtime):
    nw = T[_T_I][_P_NW]
    hs = np.empty(nw, np.int64)
    ht = np.empty(nw)
    tsi = np.empty(nw, np.int64)
    tti = np.empty(nw)
    for k in range(nw):
        tail = S[_WTAIL][k]
        head = S[_WHEAD][k]
        if tail == moved:
            tsi[k] = msite
            tti[k] = mtime
        else:
            tsi[k] = S[_EV_S][tail]
            tti[k] = S[_EV_T][tail]
        if head == moved:
            hs[k] = msite
            ht[k] = mtime
        else:
            hs[k] = S[_EV_S][head]
            ht[k] = S[_EV_T][head]
    return -(_pair_penalty(hs, ht, T) + _pair_penalty(tsi, tti, T))


# ----------------------------------------------------------------- proposals
@njit(cache=True)
def _accept(rng, lr):
    if lr < 0.0 and not rng.random() < math.exp(lr):
        return False
    return True


@njit(cache=True)
def _geometry_delta(S, T, ws, wa0, wl, wd, present):
    fp = T[_T_F]
    E = T[_T_E]
    V = fp[_F_V]
    beta = fp[_F_BETA]
    nmax = T[_T_I][_P_NMAX]
    vptr = T[_T_VPTR]
    vidx = T[_T_VIDX]
    total = 0.0
    nw = len(ws)
    for k in range(nw):
        s, a0, ell, d = ws[k], wa0[k], wl[k], wd[k]
        n = _occ_at(S, s, a0) - (d if present else 0)
        nn = n + d
        if nn < 0 or nn > nmax:
            return False, 0.0
        total -= (E[s, nn] - E[s, n]) * ell
        total += fp[_F_LG2] + math.log(nn if d > 0 else n)
        if V:
            acc = 0.0
            for q in range(vptr[s], vptr[s + 1]):
                b = vidx[q]
                acc += _occupation_integral(S, b, a0, ell, beta)
                for k2 in range(nw):
                    if ws[k2] != b:
                        continue
                    if present:
                        acc -= wd[k2] * _arc_overlap(a0, ell, wa0[k2], wl[k2], beta)
                    if k2 < k:
                        acc += wd[k2] * _arc_overlap(a0, ell, wa0[k2], wl[k2], beta)
            total += V * d * acc
    return True, total


@njit(cache=True)
def _create(S, T, rng):
    fp = T[_T_F]
    ip = T[_T_I]
    beta = fp[_F_BETA]
    L = ip[_P_L]
    nw = ip[_P_NW]
    wq = T[_T_WQ]
    wsp = T[_T_WSP]
    ws = np.empty(nw, np.int64)
    wa0 = np.empty(nw)
    wl = np.empty(nw)
    wd = np.empty(nw, np.int64)
    lq = 0.0
    col0 = 0
    t0 = 0.0
    for k in range(nw):
        q = wq[k]
        a = wsp[k]
        if k == 0:
            cnt = T[_T_SCNT][q]
            s = T[_T_SLO][q] + _pick(rng, cnt)
            t0 = _uniform_time(rng, fp, ip)
            lq += -math.log(cnt) + -math.log(beta)
            col0 = s % L
            start = t0
        else:
            col = _pick_cum(rng, T[_T_CCUM][col0])
            lq += T[_T_CLOGP][col0, col]
            if a == ANY_SPECIES:
                layer = _pick(rng, ip[_P_M])
                lq -= fp[_F_LOGM]
            else:
                layer = a
            s = layer * L + col
            eps, l_eps = _offset(rng, T)
            lq += l_eps
            start = _shifted(t0, eps, fp, ip)
        ok, ell, l_len = _length(rng, T)
        raise_ = rng.random() < 0.5
        lq += _LOG_HALF
        if not ok:
            return False
        lq += l_len
        ws[k] = s
        wa0[k] = start
        wl[k] = ell
        wd[k] = 1 if raise_ else -1
    for k in range(nw):
        s, a0, ell = ws[k], wa0[k], wl[k]
        a1 = _wrap(a0 + ell, beta)
        if a1 == a0 or _has_event_at(S, s, a0) or _has_event_at(S, s, a1) \
                or not _free(S, s, a0, a1):
            return False
        for k2 in range(k):
            if ws[k2] != s:
                continue
            b0, l2 = wa0[k2], wl[k2]
            b1 = _wrap(b0 + l2, beta)
            if _arc_overlap(a0, ell, b0, l2, beta) > 0.0 or a0 == b0 or a1 == b1 \
                    or a0 == b1 or a1 == b0:
                return False
    ok, dlog = _geometry_delta(S, T, ws, wa0, wl, wd, False)
    if not ok:
        return False
    hs = np.empty(nw, np.int64)
    ht = np.empty(nw)
    tsi = np.empty(nw, np.int64)
    tti = np.empty(nw)
    for k in range(nw):
        a1 = _wrap(wa0[k] + wl[k], beta)
        hs[k] = ws[k]
        tsi[k] = ws[k]
        if wd[k] > 0:
            tti[k] = wa0[k]
            ht[k] = a1
        else:
            ht[k] = wa0[k]
            tti[k] = a1
    log_tether = -(_pair_penalty(hs, ht, T) + _pair_penalty(tsi, tti, T))
    log_q_rev = fp[_F_LPWORM] + nw * _LOG_HALF
    lr = (dlog - fp[_F_LABEL]) + log_tether + log_q_rev - lq
    if not _accept(rng, lr):
        return False
    for k in range(nw):
        _place_worm(S, ws[k], wa0[k], wl[k], wd[k] > 0, wsp[k], k, beta)
    S[_IST][_I_WORMS] = nw
    S[_FST][0] = log_tether
    return True


@njit(cache=True)
def _annihilate(S, T, rng):
    fp = T[_T_F]
    ip = T[_T_I]
    beta = fp[_F_BETA]
    L = ip[_P_L]
    nw = ip[_P_NW]
    wq = T[_T_WQ]
    wsp = T[_T_WSP]
    types = np.empty(nw, np.bool_)
    for k in range(nw):
        types[k] = rng.random() < 0.5
    ws = np.empty(nw, np.int64)
    wa0 = np.empty(nw)
    wl = np.empty(nw)
    wd = np.empty(nw, np.int64)
    lq = 0.0
    t0 = 0.0
    col0 = 0
    for k in range(nw):
        tail = S[_WTAIL][k]
        head = S[_WHEAD][k]
        raise_ = types[k]
        s = S[_EV_S][tail]
        if S[_EV_S][head] != s:
            return False
        if raise_:
            first, second = tail, head
        else:
            first, second = head, tail
        if not _free(S, s, S[_EV_T][first], S[_EV_T][second]):
            return False
        a = wsp[k]
        start = S[_EV_T][first]
        ell = _arc(start, S[_EV_T][second], beta)
        if k == 0:
            lq += -math.log(T[_T_SCNT][wq[k]]) + -math.log(beta)
            t0 = start
            col0 = s % L
        else:
            if a != ANY_SPECIES and s // L != a:
                return False
            lq += T[_T_CLOGP][col0, s % L]
            if a == ANY_SPECIES:
                lq -= fp[_F_LOGM]
            lq += _offset_log_density(_signed_offset(start, t0, beta), T)
        lq += _length_log_density(ell, T) + _LOG_HALF
        ws[k] = s
        wa0[k] = start
        wl[k] = ell
        wd[k] = 1 if raise_ else -1
    ok, dlog = _geometry_delta(S, T, ws, wa0, wl, wd, True)
    if not ok:
        return False
    log_q_fwd = fp[_F_LPWORM] + nw * _LOG_HALF
    lr = -(dlog - fp[_F_LABEL]) + -S[_FST][0] + lq - log_q_fwd
    if not _accept(rng, lr):
        return False
    for k in range(nw - 1, -1, -1):
        _remove_worm(S, k, types[k])
    S[_IST][_I_WORMS] = 0
    S[_FST][0] = 0.0
    return True


@njit(cache=True)
def _end_id(S, k):
    return S[_WTAIL][k // 2] if k % 2 == 0 else S[_WHEAD][k // 2]


@njit(cache=True)
def _shift(S, T, rng):
    fp = T[_T_F]
    ip = T[_T_I]
    beta = fp[_F_BETA]
    e = _end_id(S, _pick(rng, 2 * ip[_P_NW]))
    s = S[_EV_S][e]
    t = S[_EV_T][e]
    prev = _prev_event(S, s, t)
    nxt = _next_event(S, s, t)
    if prev == e or nxt == e:
        S[_IST][_I_ERR] = _ERR_ALONE
        return False
    evt = S[_EV_T]
    half = 0.5 * fp[_F_WIN]
    lo = max(-_arc(evt[prev], t, beta), -half)
    hi = min(_arc(t, evt[nxt], beta), half)
    ok, t_new, u, lq_fwd = _window(rng, t, lo, hi, fp, ip)
    if not ok:
        return False
    if t_new == t:
        return True
    if _has_event_at(S, s, t_new):
        return False
    if prev != nxt and not (_arc(evt[prev], t_new, beta) < _arc(evt[prev], evt[nxt], beta)):
        return False
    lo_r = max(-_arc(evt[prev], t_new, beta), -half)
    hi_r = min(_arc(t_new, evt[nxt], beta), half)
    lq_rev = _window_log_density(lo_r, hi_r, fp, ip)
    kind = S[_EV_K][e]
    if u > 0:
        a0, ell = t, u
        n_old = _occ_at(S, s, t)
        d = -_jump(kind)
    else:
        a0, ell = t_new, -u
        n_old = _occ_before(S, s, t)
        d = _jump(kind)
    n_new = n_old + d
    if n_new < 0 or n_new > ip[_P_NMAX]:
        return False
    dlog = 0.0
    if ell > 0.0:
        E = T[_T_E]
        dlog = -(E[s, n_new] - E[s, n_old]) * ell
        if fp[_F_V]:
            dlog += fp[_F_V] * d * _vsum(S, T, s, a0, ell)
    log_tether = _tether_moved(S, T, e, s, t_new)
    lr = dlog + (log_tether - S[_FST][0]) + lq_rev - lq_fwd
    if not _accept(rng, lr):
        return False
    _shift_end(S, e, t_new)
    S[_FST][0] = log_tether
    return True


@njit(cache=True)
def _hop_log_weight(T, kind, before, i, j, n_i, n_j, ell, vi, vj, amp):
    jump = _jump(kind)
    d_i = jump if before else -jump
    d_j = -d_i
    ni2 = n_i + d_i
    nj2 = n_j + d_j
    nmax = T[_T_I][_P_NMAX]
    if ni2 < 0 or ni2 > nmax or nj2 < 0 or nj2 > nmax:
        return False, 0.0
    E = T[_T_E]
    dlog = -(E[i, ni2] - E[i, n_i] + E[j, nj2] - E[j, n_j]) * ell
    V = T[_T_F][_F_V]
    if V:
        corr = d_i * ell if _is_vertical(T, j, i) else 0.0
        dlog += V * (d_i * vi + d_j * (vj + corr))
    if kind == HEAD:
        old_end = n_i if before else n_i - jump
        new_end = nj2 if before else n_j
        src_n, dst_n = n_i, n_j
        d_src, d_dst = d_i, d_j
    else:
        old_end = n_i + jump if before else n_i
        new_end = n_j if before else nj2
        src_n, dst_n = n_j, n_i
        d_src, d_dst = d_j, d_i
    if before:
        nb_src, na_dst = src_n, dst_n + d_dst
    else:
        nb_src, na_dst = src_n + d_src, dst_n
    if old_end <= 0 or new_end <= 0 or nb_src <= 0 or na_dst <= 0:
        return False, 0.0
    dlog += math.log(amp) + 0.5 * (math.log(nb_src) + math.log(na_dst)
                                   + math.log(new_end) - math.log(old_end))
    return True, dlog


@njit(cache=True)
def _species_row(T, e_species):
    # worm_q lookup by species value
    wsp = T[_T_WSP]
    wq = T[_T_WQ]
    for k in range(len(wsp)):
        if wsp[k] == e_species:
            return wq[k]
    return 0


@njit(cache=True)
def _kink_insert(S, T, rng, e, before):
    fp = T[_T_F]
    ip = T[_T_I]
    beta = fp[_F_BETA]
    evt = S[_EV_T]
    i = S[_EV_S][e]
    t = evt[e]
    q = _species_row(T, S[_EV_SP][e])
    z = T[_T_NCNT][q, i]
    if z == 0:
        return False
    c = _pick(rng, z)
    j = T[_T_NSITE][q, i, c]
    amp = T[_T_NAMP][q, i, c]
    mk = ip[_P_MAXK]
    if mk >= 0 and S[_IST][_I_KINKS] >= mk:
        return False
    if _has_event_at(S, j, t):
        return False
    W = fp[_F_WIN]
    if before:
        pi = _prev_event(S, i, t)
        pj = _prev_event(S, j, t)
        lo = max(-_arc(evt[pi], t, beta),
                 -_arc(evt[pj], t, beta) if pj >= 0 else -beta, -W)
        ok, tk, u, lq_win = _window(rng, t, lo, 0.0, fp, ip)
    else:
        ni_ = _next_event(S, i, t)
        nj_ = _next_event(S, j, t)
        hi = min(_arc(t, evt[ni_], beta),
                 _arc(t, evt[nj_], beta) if nj_ >= 0 else beta, W)
        ok, tk, u, lq_win = _window(rng, t, 0.0, hi, fp, ip)
    if not ok:
        return False
    if tk == t or _has_event_at(S, i, tk) or _has_event_at(S, j, tk):
        return False
    if before:
        if not (_free(S, i, tk, t) and _free(S, j, tk, t)):
            return False
    elif not (_free(S, i, t, tk) and _free(S, j, t, tk)):
        return False
    ell = -u if before else u
    a0 = tk if before else t
    n_i = _occ_before(S, i, t) if before else _occ_at(S, i, t)
    n_j = _occ_at(S, j, a0)
    vi = 0.0
    vj = 0.0
    if fp[_F_V]:
        vi = _vsum(S, T, i, a0, ell)
        vj = _vsum(S, T, j, a0, ell)
    ok, dlog = _hop_log_weight(T, S[_EV_K][e], before, i, j, n_i, n_j, ell, vi, vj, amp)
    if not ok:
        return False
    log_tether = _tether_moved(S, T, e, j, t)
    lr = dlog + (log_tether - S[_FST][0]) + 0.0 - (lq_win - math.log(z))
    if not _accept(rng, lr):
        return False
    _hop_end(S, e, j, tk, before, S[_EV_SP][e], beta)
    S[_FST][0] = log_tether
    return True


@njit(cache=True)
def _kink_remove(S, T, rng, e, before):
    fp = T[_T_F]
    ip = T[_T_I]
    beta = fp[_F_BETA]
    evt = S[_EV_T]
    s = S[_EV_S][e]
    t = evt[e]
    kind = S[_EV_K][e]
    cand = _prev_event(S, s, t) if before else _next_event(S, s, t)
    want = KINK_IN if kind == HEAD else KINK_OUT
    if cand < 0 or cand == e or S[_EV_K][cand] != want:
        return False
    partner = S[_EV_P][cand]
    r = S[_EV_S][partner]
    tk = evt[cand]
    q = _species_row(T, S[_EV_SP][e])
    z = T[_T_NCNT][q, r]
    amp = 0.0
    for c in range(z):
        if T[_T_NSITE][q, r, c] == s:
            amp = T[_T_NAMP][q, r, c]
            break
    if amp == 0.0:
        return False
    ell = _arc(tk, t, beta) if before else _arc(t, tk, beta)
    W = fp[_F_WIN]
    if not ell < W:
        return False
    if _has_event_at(S, r, t):
        return False
    if before:
        if not _free(S, r, tk, t):
            return False
        pr = _prev_event(S, r, tk)
        ps = _prev_event(S, s, tk)
        lo = max(-_arc(evt[pr], t, beta) if pr != partner else -beta,
                 -_arc(evt[ps], t, beta) if ps != e else -beta, -W)
        lq_win = _window_log_density(lo, 0.0, fp, ip)
        a0 = tk
    else:
        if not _free(S, r, t, tk):
            return False
        nr = _next_event(S, r, tk)
        ns = _next_event(S, s, tk)
        hi = min(_arc(t, evt[nr], beta) if nr != partner else beta,
                 _arc(t, evt[ns], beta) if ns != e else beta, W)
        lq_win = _window_log_density(0.0, hi, fp, ip)
        a0 = t
    jump = _jump(kind)
    d_r = jump if before else -jump
    d_s = -d_r
    n_r = _occ_at(S, r, a0) - d_r
    n_s = _occ_at(S, s, a0) - d_s
    vr = 0.0
    vs = 0.0
    if fp[_F_V]:
        vr = _vsum(S, T, r, a0, ell) - (d_s * ell if _is_vertical(T, r, s) else 0.0)
        vs = _vsum(S, T, s, a0, ell) - (d_r * ell if _is_vertical(T, s, r) else 0.0)
    ok, dlog = _hop_log_weight(T, kind, before, r, s, n_r, n_s, ell, vr, vs, amp)
    if not ok:
        return False
    log_tether = _tether_moved(S, T, e, r, t)
    lr = -dlog + (log_tether - S[_FST][0]) + (lq_win - math.log(z)) - 0.0
    if not _accept(rng, lr):
        return False
    out = cand if S[_EV_K][cand] == KINK_OUT else partner
    _unhop_end(S, out, e, before, beta)
    S[_FST][0] = log_tether
    return True


@njit(cache=True)
def _step(S, T, rng):
    fp = T[_T_F]
    ist = S[_IST]
    if ist[_I_WORMS] == 0:
        move = _M_CREATE
    else:
        u = rng.random()
        if u < fp[_F_CUM0]:
            move = _M_ANNIHILATE
        elif u < fp[_F_CUM1]:
            move = _M_SHIFT
        else:
            move = -1
    if move == _M_CREATE:
        ok = _create(S, T, rng)
    elif move == _M_ANNIHILATE:
        ok = _annihilate(S, T, rng)
    elif move == _M_SHIFT:
        ok = _shift(S, T, rng)
    else:
        e = _end_id(S, _pick(rng, 2 * T[_T_I][_P_NW]))
        insert = rng.random() < 0.5
        before = rng.random() < 0.5
        if insert:
            move = _M_KINS
            ok = _kink_insert(S, T, rng, e, before)
        else:
            move = _M_KREM
            ok = _kink_remove(S, T, rng, e, before)
    ist[_I_STEPS] += 1
    S[_ATT][move] += 1
    if ok:
        S[_ACC][move] += 1
    return ok


# -------------------------------------------------------------- measurement
@njit(cache=True)
def _segment(S, s, idx, beta):
    """(start, end, occupation) of segment ``idx`` as listed by Worldlines.segments."""
    n = S[_ST_N][s]
    if n == 0:
        return 0.0, beta, S[_FLAT][s]
    ts = S[_ST_T][s]
    occ = S[_ST_O][s]
    if ts[0] > 0.0:
        if idx == 0:
            return 0.0, ts[0], occ[n - 1]
        idx -= 1
    end = ts[idx + 1] if idx + 1 < n else beta
    return ts[idx], end, occ[idx]


@njit(cache=True)
def _n_segments(S, s):
    n = S[_ST_N][s]
    if n == 0:
        return 1
    return n + (1 if S[_ST_T][s, 0] > 0.0 else 0)


@njit(cache=True)
def _diagonal_action(S, T):
    fp = T[_T_F]
    beta = fp[_F_BETA]
    E = T[_T_E]
    ns = T[_T_I][_P_NS]
    total = 0.0
    for s in range(ns):
        for idx in range(_n_segments(S, s)):
            t0, t1, n = _segment(S, s, idx, beta)
            total += E[s, n] * (t1 - t0)
    V = fp[_F_V]
    if V:
        bonds = T[_T_BONDS]
        for b in range(bonds.shape[0]):
            a, c = bonds[b, 0], bonds[b, 1]
            na_seg = _n_segments(S, a)
            nc_seg = _n_segments(S, c)
            ia = 0
            ic = 0
            acc = 0.0
            while ia < na_seg and ic < nc_seg:
                a0, a1, na = _segment(S, a, ia, beta)
                c0, c1, nc = _segment(S, c, ic, beta)
                lo = max(a0, c0)
                hi = min(a1, c1)
                if hi > lo and na and nc:
                    acc += na * nc * (hi - lo)
                if a1 <= c1:
                    ia += 1
                else:
                    ic += 1
            total -= V * acc
    return total


@njit(cache=True)
def _measure(S, T, row, sector, n_part, layer_counts, e_diag, n_kinks,
             end_sites, end_times, log_w):
    ip = T[_T_I]
    L = ip[_P_L]
    in_g = S[_IST][_I_WORMS] > 0
    sector[row] = 1 if in_g else 0
    total = 0
    for s in range(ip[_P_NS]):
        n = _occ_at(S, s, 0.0)
        total += n
        layer_counts[row, s // L] += n
    n_part[row] = total
    e_diag[row] = _diagonal_action(S, T) / T[_T_F][_F_BETA]
    n_kinks[row] = S[_IST][_I_KINKS]
    if in_g:
        for k in range(2 * ip[_P_NW]):
            e = _end_id(S, k)
            end_sites[row, k] = S[_EV_S][e]
            end_times[row, k] = S[_EV_T][e]
        log_w[row] = S[_FST][0]


@njit(cache=True)
def _run(S, T, rng, n_sweeps, steps, record, row0, sector, n_part, layer_counts,
         e_diag, n_kinks, end_sites, end_times, log_w):
    """Returns the number of completed sweeps; stops early when storage runs low."""
    ist = S[_IST]
    nw = T[_T_I][_P_NW]
    cap = S[_ST_T].shape[1]
    margin = 2 * nw + 3
    done = 0
    while done < n_sweeps:
        while ist[_I_INSWEEP] < steps:
            if ist[_I_HIGH] + margin > cap or ist[_I_FREE] < margin:
                return done
            _step(S, T, rng)
            if ist[_I_ERR]:
                return done
            ist[_I_INSWEEP] += 1
        ist[_I_INSWEEP] = 0
        if record:
            _measure(S, T, row0 + done, sector, n_part, layer_counts, e_diag, n_kinks,
                     end_sites, end_times, log_w)
        done += 1
    return done


# ------------------------------------------------------------------ wrapper
class KernelChain(ChainState):
    """ChainState whose sweeps run in the compiled kernel.

    ``worldlines``, counters and the RNG stay authoritative on the Python side
    between calls, so checkpoints, hooks and debug tools work unchanged.
    """

    def __init__(self, *args, capacity: int = 16, **kwargs):
        super().__init__(*args, **kwargs)
        self._capacity = max(8, int(capacity))
        self._tables = self._build_tables()

    def _build_tables(self):
        g, m, p = self.graph, self.model, self.params
        ns, L, M = g.n_sites, g.sites_per_layer, g.n_layers
        vptr = np.zeros(ns + 1, dtype=np.int64)
        vidx = []
        for s in range(ns):
            vidx.extend(self.vertical[s])
            vptr[s + 1] = len(vidx)
        keys = sorted(self.allowed_nbrs)
        qmap = {a: k for k, a in enumerate(keys)}
        deg = max([len(lst) for a in keys for lst in self.allowed_nbrs[a]] + [1])
        ncnt = np.zeros((len(keys), ns), dtype=np.int64)
        nsite = np.zeros((len(keys), ns, deg), dtype=np.int64)
        namp = np.zeros((len(keys), ns, deg))
        slo = np.zeros(len(keys), dtype=np.int64)
        scnt = np.zeros(len(keys), dtype=np.int64)
        for a, q in qmap.items():
            sites = self.allowed_sites[a]
            slo[q] = sites[0]
            scnt[q] = len(sites)
            for s, lst in enumerate(self.allowed_nbrs[a]):
                ncnt[q, s] = len(lst)
                for c, (t, amp) in enumerate(lst):
                    nsite[q, s, c] = t
                    namp[q, s, c] = amp
        wq = np.array([qmap[a] for a in self.species], dtype=np.int64)
        wsp = np.array(self.species, dtype=np.int64)
        dist = np.array([[g.distance(a, b) for b in range(ns)] for a in range(ns)],
                        dtype=np.int64)
        axis = self.axis
        if axis.grid is not None:
            llog, lcum = (np.array(x) for x in axis._length_table(p.worm_length))
            ms, logs, ocum = axis._offset_table(p.xi_time)
            oms = np.array(ms, dtype=np.int64)
            olog = np.array([logs[x] for x in ms])
            ocum = np.array(ocum)
            dt, log_dt = axis.dt, axis._log_dt
        else:
            llog = lcum = olog = ocum = np.zeros(1)
            oms = np.zeros(1, dtype=np.int64)
            dt = log_dt = 0.0
        fpar = np.array([
            self.beta, self.V, self.log_gamma2, self.log_label_factor, self.p_worm,
            self.log_p_worm, self.cum_g[0], self.cum_g[1], self.log_M, self.window,
            p.xi_space, p.xi_time, p.worm_length, dt, log_dt])
        ipar = np.array([ns, L, M, m.n_max, self.n_worms,
                         -1 if p.max_kinks is None else p.max_kinks,
                         0 if axis.grid is None else axis.grid], dtype=np.int64)
        bonds = np.array(g.inter_bonds, dtype=np.int64).reshape(-1, 2)
        col_logp = np.array(self.col_logp)
        col_cum = np.array(self.col_cum)
        return (np.array(self.energy), vptr, np.array(vidx, dtype=np.int64), ncnt, nsite,
                namp, slo, scnt, wq, wsp, col_logp, col_cum, dist, llog, lcum, oms, olog,
                ocum, bonds, fpar, ipar)

    # -- conversion between the Python worldlines and the flat arrays
    def _export(self):
        w = self.worldlines
        ns = self.graph.n_sites
        nw = self.n_worms
        n_events = sum(len(x) for x in w.events)
        high = max([len(x) for x in w.events] + [0])
        margin = 2 * nw + 3
        while self._capacity < high + 2 * margin:
            self._capacity *= 2
        cap = self._capacity
        pool = max(64, 2 * (n_events + ns * margin))
        ev_t = np.zeros(pool)
        ev_s = np.zeros(pool, dtype=np.int64)
        ev_k = np.zeros(pool, dtype=np.int64)
        ev_p = np.full(pool, -1, dtype=np.int64)
        ev_sp = np.zeros(pool, dtype=np.int64)
        st_t = np.zeros((ns, cap))
        st_e = np.zeros((ns, cap), dtype=np.int64)
        st_o = np.zeros((ns, cap), dtype=np.int64)
        st_n = np.zeros(ns, dtype=np.int64)
        ids = {}
        nxt = 0
        for s in range(ns):
            st_n[s] = len(w.events[s])
            for k, e in enumerate(w.events[s]):
                ids[id(e)] = nxt
                ev_t[nxt] = e.time
                ev_s[nxt] = s
                ev_k[nxt] = e.kind
                ev_sp[nxt] = e.species
                st_t[s, k] = e.time
                st_e[s, k] = nxt
                st_o[s, k] = w.occ[s][k]
                nxt += 1
        for s in range(ns):
            for e in w.events[s]:
                if e.partner is not None:
                    ev_p[ids[id(e)]] = ids[id(e.partner)]
        free = np.arange(pool - 1, nxt - 1, -1, dtype=np.int64)
        free = np.concatenate([free, np.zeros(nxt, dtype=np.int64)])
        wtail = np.full(nw, -1, dtype=np.int64)
        whead = np.full(nw, -1, dtype=np.int64)
        for k, (tail, head) in enumerate(w.worms):
            wtail[k] = ids[id(tail)]
            whead[k] = ids[id(head)]
        ist = np.zeros(8, dtype=np.int64)
        ist[_I_KINKS] = w.n_kinks
        ist[_I_WORMS] = len(w.worms)
        ist[_I_FREE] = pool - nxt
        ist[_I_STEPS] = self.step_counter
        ist[_I_HIGH] = high
        fst = np.array([self.log_tether, 0.0])
        att = np.array([self.attempts[k] for k in MOVE_NAMES], dtype=np.int64)
        acc = np.array([self.accepts[k] for k in MOVE_NAMES], dtype=np.int64)
        return (ev_t, ev_s, ev_k, ev_p, ev_sp, free, st_t, st_e, st_o, st_n,
                np.array(w.flat, dtype=np.int64), wtail, whead, ist, fst, att, acc)

    def _import(self, S):
        (ev_t, ev_s, ev_k, ev_p, ev_sp, _, st_t, st_e, st_o, st_n, flat,
         wtail, whead, ist, fst, att, acc) = S
        w = Worldlines(self.graph, self.beta, self.model.n_max)
        objs = {}
        for s in range(self.graph.n_sites):
            n = int(st_n[s])
            for k in range(n):
                eid = int(st_e[s, k])
                e = Event(float(st_t[s, k]), s, int(ev_k[eid]), species=int(ev_sp[eid]))
                objs[eid] = e
                w.times[s].append(e.time)
                w.events[s].append(e)
                w.occ[s].append(int(st_o[s, k]))
            w.flat[s] = int(flat[s])
        for eid, e in objs.items():
            if e.kind <= KINK_IN:
                e.partner = objs[int(ev_p[eid])]
        for k in range(int(ist[_I_WORMS])):
            tail, head = objs[int(wtail[k])], objs[int(whead[k])]
            tail.worm = head.worm = k
            w.worms.append([tail, head])
        w.n_kinks = int(ist[_I_KINKS])
        self.worldlines = w
        self.log_tether = float(fst[0])
        self.step_counter = int(ist[_I_STEPS])
        self.attempts = {k: int(att[i]) for i, k in enumerate(MOVE_NAMES)}
        self.accepts = {k: int(acc[i]) for i, k in enumerate(MOVE_NAMES)}

    def _drive(self, n_sweeps: int, steps: int, chunk: Optional[MeasurementChunk],
               partial: int = 0) -> None:
        if self.params.debug:
            raise ValueError("debug mode needs the Python engine")
        S = self._export()
        S[_IST][_I_INSWEEP] = partial
        record = chunk is not None
        if chunk is None:
            chunk = MeasurementChunk.empty(0, self.graph.n_layers, self.n_worms)
        done = 0
        while done < n_sweeps:
            got = _run(S, self._tables, self.rng, n_sweeps - done, steps, record, done,
                       chunk.sector, chunk.n_particles, chunk.layer_counts, chunk.e_diag,
                       chunk.n_kinks, chunk.end_sites, chunk.end_times, chunk.log_w)
            done += got
            if S[_IST][_I_ERR]:
                self._import(S)
                raise RuntimeError("worm end alone on its site")
            if done < n_sweeps:
                partial = int(S[_IST][_I_INSWEEP])
                self._import(S)
                self._capacity *= 2
                S = self._export()
                S[_IST][_I_INSWEEP] = partial
        self._import(S)

    def run_steps(self, n_steps: int) -> None:
        """Exactly ``n_steps`` Metropolis steps, no measurements."""
        if n_steps > 0:
            self._drive(1, n_steps, None)

    def sample(self, n_sweeps: int, every: int = 1) -> MeasurementChunk:
        chunk = MeasurementChunk.empty(n_sweeps, self.graph.n_layers, self.n_worms)
        if n_sweeps > 0:
            self._drive(n_sweeps, self.steps_per_sweep * every, chunk)
        return chunk

    def run_sweeps(self, n_sweeps: int, measure_hook=None) -> None:
        if measure_hook is None:
            if n_sweeps > 0:
                self._drive(n_sweeps, self.steps_per_sweep, None)
            return
        for _ in range(n_sweeps):
            self._drive(1, self.steps_per_sweep, None)
            measure_hook(self, self.sector)
