"""Compiled event loop behind :mod:`stress_sched.simulator`.

Everything here works on plain arrays; the Python side owns validation,
random streams and result packaging.
"""
import math

import numpy as np
from numba import njit

INF = 1e300

# counts[0..3] rows
DELAY, CANCEL, SERVED, IN_SERVICE = 0, 1, 2, 3

# trace event codes
EV_ARRIVE, EV_START, EV_COMPLETE, EV_CANCEL = 0, 1, 2, 3


@njit(cache=True)
def perf_value(u, q, s1, w, s2, mu, t):
    if t < mu:
        x = (t - mu) / s1
        return u * math.exp(-0.5 * x * x)
    if t <= mu + w:
        return u
    x = (t - mu - w) / s2
    return u * math.exp(-0.5 * x * x)


@njit(cache=True)
def derive_into(curves, i, k, skill, emo, base):
    dep, act, anx, con, end = emo[0], emo[1], emo[2], emo[3], emo[4]
    u = skill * (6.0 - dep) / 5.0
    q = math.sqrt(act / 6.0)
    if q > 1.0:
        q = 1.0
    s1 = base[0] * ((11.0 - act) / 5.0) ** (1.0 + anx / 5.0)
    w = base[1] * (1.0 + con / 5.0) * ((6.0 - anx) / 5.0)
    s2 = base[2] * (1.0 + end / 5.0) ** ((7.0 - anx) / 2.0)
    mu = 0.0
    if q < 1.0:
        mu = s1 * math.sqrt(2.0 * math.log(1.0 / q))
    curves[i, k, 0] = u
    curves[i, k, 1] = q
    curves[i, k, 2] = s1
    curves[i, k, 3] = w
    curves[i, k, 4] = s2
    curves[i, k, 5] = mu


@njit(cache=True)
def _window(hours_day, i, d, width, init, worked_today):
    # pre-horizon history fades out linearly as the window slides into the horizon
    pre = width - d
    if pre < 0:
        pre = 0
    tot = init * pre / width + worked_today
    lo = d - width + 1
    if lo < 0:
        lo = 0
    for dd in range(lo, d):
        tot += hours_day[i, dd]
    return tot


@njit(cache=True)
def _days_window(hours_day, i, d, width, init, today):
    pre = width - d
    if pre < 0:
        pre = 0
    tot = init * pre / width + today
    lo = d - width + 1
    if lo < 0:
        lo = 0
    for dd in range(lo, d):
        if hours_day[i, dd] > 0:
            tot += 1.0
    return tot


@njit(cache=True)
def dynamic_factors(out, sched, hours_day, hard_day, cls, dyn_init, i, d, h):
    """Raw values of the 11 schedule-driven factors at the start of hour h of day d."""
    hd = 0.0
    hdh = 0.0
    for hh in range(h):
        c = sched[i, d, hh]
        if c >= 0:
            hd += 1.0
            if cls[c] == 1:
                hdh += 1.0
    today = 1.0 if hd > 0 else 0.0
    run = 0.0
    dd = d - 1
    while dd >= 0 and hours_day[i, dd] > 0:
        run += 1.0
        dd -= 1
    if dd < 0:
        run += dyn_init[i, 0]
    out[0] = run + today
    out[1] = _days_window(hours_day, i, d, 30, dyn_init[i, 1], today)
    out[2] = _days_window(hours_day, i, d, 90, dyn_init[i, 2], today)
    out[3] = hd
    out[4] = _window(hours_day, i, d, 7, dyn_init[i, 4], hd)
    out[5] = _window(hours_day, i, d, 30, dyn_init[i, 5], hd)
    out[6] = _window(hours_day, i, d, 90, dyn_init[i, 6], hd)
    out[7] = hdh
    out[8] = _window(hard_day, i, d, 7, dyn_init[i, 8], hdh)
    out[9] = _window(hard_day, i, d, 30, dyn_init[i, 9], hdh)
    out[10] = _window(hard_day, i, d, 90, dyn_init[i, 10], hdh)


@njit(cache=True)
def assess(emo_out, z, i, st_expo, st_lin, c_dyn, inv_dyn, k_dyn):
    """Emotion NFN with the static inputs' contributions precomputed per employee."""
    n_rules = c_dyn.shape[1]
    nq = z.shape[0]
    for s in range(5):
        num = 0.0
        den = 0.0
        lin_sum = 0.0
        for r in range(n_rules):
            e = st_expo[i, s, r]
            lin = st_lin[i, s, r]
            for q in range(nq):
                dz = z[q] - c_dyn[s, r, q]
                e += dz * dz * inv_dyn[s, r, q]
                lin += k_dyn[s, r, q] * z[q]
            f = math.exp(-e)
            num += f * lin
            den += f
            lin_sum += lin
        if den > 0.0:
            v = num / den
        else:
            v = lin_sum / n_rules
        if v < 1.0:
            v = 1.0
        elif v > 5.0:
            v = 5.0
        emo_out[s] = v


@njit(cache=True)
def impairment_raw(emo, ic, iinv, icoef):
    n_rules = ic.shape[0]
    num = 0.0
    den = 0.0
    lin_sum = 0.0
    for r in range(n_rules):
        e = 0.0
        lin = icoef[r, 0]
        for q in range(5):
            x = (emo[q] - 1.0) / 4.0
            dz = x - ic[r, q]
            e += dz * dz * iinv[r, q]
            lin += icoef[r, q + 1] * x
        f = math.exp(-e)
        num += f * lin
        den += f
        lin_sum += lin
    v = num / den if den > 0.0 else lin_sum / n_rules
    if v < 0.0:
        v = 0.0
    elif v > 1.0:
        v = 1.0
    return v


@njit(cache=True)
def _less(k1, i1, k2, i2):
    return k1 < k2 or (k1 == k2 and i1 < i2)


@njit(cache=True)
def _heap_push(hkey, hidx, size, key, idx):
    j = size
    hkey[j] = key
    hidx[j] = idx
    while j > 0:
        p = (j - 1) // 2
        if _less(hkey[j], hidx[j], hkey[p], hidx[p]):
            hkey[j], hkey[p] = hkey[p], hkey[j]
            hidx[j], hidx[p] = hidx[p], hidx[j]
            j = p
        else:
            break
    return size + 1


@njit(cache=True)
def _heap_pop(hkey, hidx, size):
    size -= 1
    hkey[0] = hkey[size]
    hidx[0] = hidx[size]
    j = 0
    while True:
        c = 2 * j + 1
        if c >= size:
            break
        if c + 1 < size and _less(hkey[c + 1], hidx[c + 1], hkey[c], hidx[c]):
            c += 1
        if _less(hkey[c], hidx[c], hkey[j], hidx[j]):
            hkey[j], hkey[c] = hkey[c], hkey[j]
            hidx[j], hidx[c] = hidx[c], hidx[j]
            j = c
        else:
            break
    return size


@njit(cache=True)
def _day_yield(codes, val, pos_perf):
    tot = 0.0
    p = 0
    for h in range(24):
        c = codes[h]
        if c >= 0:
            tot += val[h] * pos_perf[c, p]
            p += 1
        else:
            p = 0
    return tot


@njit(cache=True)
def hour_gains(codes, val, pos_perf, k, cand_val, allowed):
    """Change in performance-weighted coverage from putting job ``k`` on each
    allowed free hour of one employee-day. ``pos_perf[k, p]`` is the
    performance in the p-th hour of a stint."""
    base = _day_yield(codes, val, pos_perf)
    out = np.zeros(24)
    for h in range(24):
        if allowed[h] and codes[h] < 0:
            codes[h] = k
            old = val[h]
            val[h] = cand_val[h]
            out[h] = _day_yield(codes, val, pos_perf) - base
            codes[h] = -1
            val[h] = old
    return out


@njit(cache=True)
def simulate_kernel(sched, arr_time, arr_type, arr_cancel, arr_slot, type_ptr, type_list,
                    day_first, dtau, thr, cls, skills, base, curves0,
                    st_expo, st_lin, c_dyn, inv_dyn, k_dyn, dyn_lo, dyn_hi, dyn_init,
                    ic, iinv, icoef, severe,
                    mode, service_mode, cap_factor, start_day,
                    busy_until, impaired_at, q_head, q_tail, counts,
                    record, snap_busy, snap_imp, snap_head, snap_tail, snap_counts,
                    stats, trace):
    """Advance the simulation from ``start_day`` to the horizon end.

    State arrays (busy_until, impaired_at, q_head, q_tail, counts) are
    updated in place. ``stats`` receives [curve derivations, trace rows, requests still
    queued at the horizon end].
    """
    m = sched.shape[0]
    D = sched.shape[1]
    K = dtau.shape[0]
    n = arr_time.shape[0]
    horizon_end = D * 1440.0
    trace_on = trace.shape[0] > 1

    hours_day = np.zeros((m, D))
    hard_day = np.zeros((m, D))
    for i in range(m):
        for d in range(D):
            for h in range(24):
                c = sched[i, d, h]
                if c >= 0:
                    hours_day[i, d] += 1.0
                    if cls[c] == 1:
                        hard_day[i, d] += 1.0

    stint = np.empty((m, D * 24))
    for i in range(m):
        cur = -1.0
        prev = -1
        for H in range(D * 24):
            c = sched[i, H // 24, H % 24]
            if c >= 0:
                if prev < 0:
                    cur = H * 60.0
                stint[i, H] = cur
            else:
                stint[i, H] = -1.0
            prev = c

    curves = curves0.copy()
    emo = np.zeros(5)
    raw = np.zeros(11)
    z = np.zeros(11)
    on_duty = np.zeros(m, dtype=np.bool_)
    pending = np.zeros(m, dtype=np.bool_)
    hkey = np.empty(m)
    hidx = np.empty(m, dtype=np.int64)
    duty = np.empty((K, m), dtype=np.int64)
    duty_n = np.zeros(K, dtype=np.int64)
    n_trace = 0
    n_deriv = 0

    ptr = day_first[start_day]
    for H in range(start_day * 24, D * 24):
        d = H // 24
        h = H % 24
        T0 = H * 60.0
        T1 = T0 + 60.0

        if h == 0 and record:
            for i in range(m):
                snap_busy[d, i] = busy_until[i]
                snap_imp[d, i] = impaired_at[i]
            for k in range(K):
                snap_head[d, k] = q_head[k]
                snap_tail[d, k] = q_tail[k]
            snap_counts[d] = counts

        # hourly re-assessment; factors only move after a worked hour or at day start
        if mode == 0:
            for i in range(m):
                if impaired_at[i] >= 0:
                    continue
                if h > 0 and sched[i, d, h - 1] < 0:
                    continue
                dynamic_factors(raw, sched, hours_day, hard_day, cls, dyn_init, i, d, h)
                for q in range(11):
                    v = (raw[q] - dyn_lo[q]) / (dyn_hi[q] - dyn_lo[q])
                    z[q] = min(max(v, 0.0), 1.0)
                assess(emo, z, i, st_expo, st_lin, c_dyn, inv_dyn, k_dyn)
                if impairment_raw(emo, ic, iinv, icoef) >= severe:
                    impaired_at[i] = H
                    continue
                for k in range(K):
                    derive_into(curves, i, k, skills[i, k], emo, base[cls[k]])
                if H > 0:
                    n_deriv += 1

        # employees waiting for their next free moment sit in a heap keyed on it
        hsize = 0
        for k in range(K):
            duty_n[k] = 0
        for i in range(m):
            c = sched[i, d, h]
            on_duty[i] = c >= 0 and impaired_at[i] < 0
            pending[i] = on_duty[i]
            if on_duty[i]:
                duty[c, duty_n[c]] = i
                duty_n[c] += 1
                ft = busy_until[i] if busy_until[i] > T0 else T0
                hsize = _heap_push(hkey, hidx, hsize, ft, i)

        while True:
            ta = INF
            if ptr < n and arr_time[ptr] < T1:
                ta = arr_time[ptr]
            fi = -1
            tf = INF
            if hsize > 0 and hkey[0] < T1:
                tf = hkey[0]
                fi = hidx[0]
            if fi < 0 and ta == INF:
                break
            chosen = -1
            s = 0.0
            if fi >= 0 and tf <= ta:
                hsize = _heap_pop(hkey, hidx, hsize)
                chosen = fi
                s = tf
            else:
                r = ptr
                ptr += 1
                k = arr_type[r]
                q_tail[k] += 1
                if trace_on and n_trace < trace.shape[0]:
                    trace[n_trace, 0] = ta
                    trace[n_trace, 1] = EV_ARRIVE
                    trace[n_trace, 2] = -1
                    trace[n_trace, 3] = k
                    trace[n_trace, 4] = 0.0
                    n_trace += 1
                best_t = INF
                for jj in range(duty_n[k]):
                    i = duty[k, jj]
                    if not pending[i]:
                        if chosen < 0 or busy_until[i] < best_t:
                            chosen = i
                            best_t = busy_until[i]
                s = ta
                if chosen < 0:
                    continue

            # employee `chosen` is free at time s: take the head of its queue
            k = sched[chosen, d, h]
            base_k = type_ptr[k]
            while q_head[k] < q_tail[k]:
                r = type_list[base_k + q_head[k]]
                if arr_cancel[r] <= s:
                    slot = arr_slot[r]
                    counts[CANCEL, k, slot] += 1
                    counts[DELAY, k, slot] += 1
                    q_head[k] += 1
                    if trace_on and n_trace < trace.shape[0]:
                        trace[n_trace, 0] = arr_cancel[r]
                        trace[n_trace, 1] = EV_CANCEL
                        trace[n_trace, 2] = -1
                        trace[n_trace, 3] = k
                        trace[n_trace, 4] = arr_cancel[r] - arr_time[r]
                        n_trace += 1
                else:
                    break
            if q_head[k] < q_tail[k]:
                r = type_list[base_k + q_head[k]]
                q_head[k] += 1
                slot = arr_slot[r]
                wait = s - arr_time[r]
                if wait > thr[k]:
                    counts[DELAY, k, slot] += 1
                if mode == 1:
                    pf = curves0[chosen, k, 0] * curves0[chosen, k, 1]
                else:
                    pf = perf_value(curves[chosen, k, 0], curves[chosen, k, 1], curves[chosen, k, 2],
                                    curves[chosen, k, 3], curves[chosen, k, 4], curves[chosen, k, 5],
                                    s - stint[chosen, H])
                if pf < 1.0 / cap_factor:
                    pf = 1.0 / cap_factor
                if service_mode == 0:
                    dur = dtau[k] / pf
                else:
                    dur = dtau[k] * pf
                done = s + dur
                busy_until[chosen] = done
                pending[chosen] = True
                hsize = _heap_push(hkey, hidx, hsize, done, chosen)
                if done <= horizon_end:
                    counts[SERVED, k, slot] += 1
                else:
                    counts[IN_SERVICE, k, slot] += 1
                if trace_on and n_trace + 1 < trace.shape[0]:
                    trace[n_trace, 0] = s
                    trace[n_trace, 1] = EV_START
                    trace[n_trace, 2] = chosen
                    trace[n_trace, 3] = k
                    trace[n_trace, 4] = wait
                    trace[n_trace + 1, 0] = done
                    trace[n_trace + 1, 1] = EV_COMPLETE
                    trace[n_trace + 1, 2] = chosen
                    trace[n_trace + 1, 3] = k
                    trace[n_trace + 1, 4] = wait
                    n_trace += 2
            else:
                pending[chosen] = False

    # whatever still waits at the horizon end received no service
    n_left = 0
    for k in range(K):
        while q_head[k] < q_tail[k]:
            r = type_list[type_ptr[k] + q_head[k]]
            slot = arr_slot[r]
            counts[CANCEL, k, slot] += 1
            counts[DELAY, k, slot] += 1
            q_head[k] += 1
            if arr_cancel[r] > horizon_end:
                n_left += 1
            elif trace_on and n_trace < trace.shape[0]:
                trace[n_trace, 0] = arr_cancel[r]
                trace[n_trace, 1] = EV_CANCEL
                trace[n_trace, 2] = -1
                trace[n_trace, 3] = k
                trace[n_trace, 4] = arr_cancel[r] - arr_time[r]
                n_trace += 1
    stats[0] = n_deriv
    stats[1] = n_trace
    stats[2] = n_left
