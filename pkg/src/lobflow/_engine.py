"""Compiled event loop for the order-book chain.

Channel layout (shared with the pure-Python ``step``):
limit buys by distance, limit sells by distance, buy cancels by tick,
sell cancels by tick, market buy, market sell.  Two uniforms per event:
the first gives the holding time by inverse CDF, the second picks the channel.
"""

import numpy as np
from numba import njit

LB, LS, CB, CS, MB, MS = 0, 1, 2, 3, 4, 5

OK = 0
DEAD = 1
OVERFLOW = 2

_MAX_QUEUE = 2**62


@njit(cache=True)
def fw_build(tree, w):
    n = w.size - 1
    tree[:] = w
    for i in range(1, n + 1):
        j = i + (i & -i)
        if j <= n:
            tree[j] += tree[i]


@njit(cache=True)
def fw_add(tree, i, v):
    n = tree.size - 1
    while i <= n:
        tree[i] += v
        i += i & -i


@njit(cache=True)
def fw_prefix(tree, i):
    s = 0.0
    while i > 0:
        s += tree[i]
        i -= i & -i
    return s


@njit(cache=True)
def fw_find(tree, w, r):
    """Smallest index whose prefix sum exceeds ``r``; falls back to the last
    positive weight when rounding pushes ``r`` past the total."""
    n = tree.size - 1
    pos = 0
    step = 1
    while step * 2 <= n:
        step *= 2
    while step > 0:
        nxt = pos + step
        if nxt <= n and tree[nxt] <= r:
            pos = nxt
            r -= tree[nxt]
        step //= 2
    idx = pos + 1
    if idx > n or w[idx] <= 0.0:
        for k in range(n, 0, -1):
            if w[k] > 0.0:
                return k
    return idx


@njit(cache=True)
def sell_weights(x, bb, th_a, w):
    n = x.size - 1
    w[0] = 0.0
    for k in range(1, n + 1):
        if x[k] > 0:
            w[k] = th_a[k - bb] * x[k]
        else:
            w[k] = 0.0


@njit(cache=True)
def buy_weights(x, ba, th_b, w):
    n = x.size - 1
    w[0] = 0.0
    for k in range(1, n + 1):
        if x[k] < 0:
            w[k] = th_b[ba - k] * (-x[k])
        else:
            w[k] = 0.0


@njit(cache=True)
def _grow(a, size):
    out = np.empty(size, dtype=a.dtype)
    out[: a.size] = a
    return out


@njit(cache=True, nogil=True)
def run(
    x,
    ba,
    bb,
    cum_lam_a,
    cum_lam_b,
    th_a,
    th_b,
    rate_mb,
    rate_ms,
    t_end,
    snap_times,
    rng,
    record_log,
    rebuild_every,
    check_every,
):
    """Advance the 1-based depth vector ``x`` (length n+1, slot 0 unused)
    in place until the physical clock passes ``t_end``.

    ``cum_lam_*[m]`` is the summed limit intensity over distances 1..m and
    ``th_*[d]`` the per-order cancel rate at distance d (index 0 unused).
    """
    n = x.size - 1
    w_s = np.zeros(n + 1)
    w_b = np.zeros(n + 1)
    tree_s = np.zeros(n + 1)
    tree_b = np.zeros(n + 1)
    sell_weights(x, bb, th_a, w_s)
    buy_weights(x, ba, th_b, w_b)
    fw_build(tree_s, w_s)
    fw_build(tree_b, w_b)

    n_snap = snap_times.size
    snaps = np.zeros((n_snap, n), dtype=np.int64)
    counts = np.zeros(6, dtype=np.int64)
    noops = 0
    cap = 1024 if record_log else 1
    log_t = np.empty(cap)
    log_k = np.empty(cap, dtype=np.int8)
    log_tick = np.empty(cap, dtype=np.int32)
    # min ask, max ask, min bid, max bid
    extremes = np.array([ba, ba, bb, bb], dtype=np.int64)
    max_drift = 0.0

    t = 0.0
    j = 0
    n_events = 0
    status = OK
    while True:
        lb = cum_lam_b[ba - 1]
        ls = cum_lam_a[n - bb]
        cb = fw_prefix(tree_b, n)
        cs = fw_prefix(tree_s, n)
        total = lb + ls + cb + cs + rate_mb + rate_ms
        if total <= 0.0:
            status = DEAD
            break
        u = rng.random()
        t_new = t - np.log(1.0 - u) / total
        while j < n_snap and snap_times[j] < t_new:
            snaps[j, :] = x[1:]
            j += 1
        if t_new > t_end:
            break
        r = rng.random() * total

        if r < lb:
            kind = LB
            d = np.searchsorted(cum_lam_b[: ba], r, side="right")
            if d > ba - 1:
                d = ba - 1
            tick = ba - d
        else:
            r -= lb
            if r < ls:
                kind = LS
                d = np.searchsorted(cum_lam_a[: n - bb + 1], r, side="right")
                if d > n - bb:
                    d = n - bb
                tick = bb + d
            else:
                r -= ls
                if r < cb:
                    kind = CB
                    tick = fw_find(tree_b, w_b, r)
                else:
                    r -= cb
                    if r < cs:
                        kind = CS
                        tick = fw_find(tree_s, w_s, r)
                    else:
                        r -= cs
                        if r < rate_mb or rate_ms <= 0.0:
                            kind = MB
                            tick = ba
                        else:
                            kind = MS
                            tick = bb

        counts[kind] += 1
        if record_log:
            if n_events >= log_t.size:
                log_t = _grow(log_t, 2 * log_t.size)
                log_k = _grow(log_k, 2 * log_k.size)
                log_tick = _grow(log_tick, 2 * log_tick.size)
            log_t[n_events] = t_new
            log_k[n_events] = kind
            log_tick[n_events] = tick
        n_events += 1
        t = t_new

        if tick == 0 or tick == n + 1:
            noops += 1
        else:
            if kind == LS or kind == MS or kind == CB:
                new = x[tick] + 1
            else:
                new = x[tick] - 1
            if new > _MAX_QUEUE or new < -_MAX_QUEUE:
                status = OVERFLOW
                break
            x[tick] = new
            old_ba = ba
            old_bb = bb
            if kind == LS or kind == MB or kind == CS:
                # sell side touched: weight at tick uses the bid, ask may move
                wk = th_a[tick - bb] * new if new > 0 else 0.0
                fw_add(tree_s, tick, wk - w_s[tick])
                w_s[tick] = wk
                if new == 1 and tick < ba:
                    ba = tick
                elif new == 0 and tick == ba:
                    k = tick + 1
                    while k <= n and x[k] <= 0:
                        k += 1
                    ba = k
            else:
                wk = th_b[ba - tick] * (-new) if new < 0 else 0.0
                fw_add(tree_b, tick, wk - w_b[tick])
                w_b[tick] = wk
                if new == -1 and tick > bb:
                    bb = tick
                elif new == 0 and tick == bb:
                    k = tick - 1
                    while k >= 1 and x[k] >= 0:
                        k -= 1
                    bb = k
            if bb != old_bb:
                sell_weights(x, bb, th_a, w_s)
                fw_build(tree_s, w_s)
            if ba != old_ba:
                buy_weights(x, ba, th_b, w_b)
                fw_build(tree_b, w_b)
            if ba < extremes[0]:
                extremes[0] = ba
            if ba > extremes[1]:
                extremes[1] = ba
            if bb < extremes[2]:
                extremes[2] = bb
            if bb > extremes[3]:
                extremes[3] = bb

        if rebuild_every > 0 and n_events % rebuild_every == 0:
            sell_weights(x, bb, th_a, w_s)
            buy_weights(x, ba, th_b, w_b)
            fw_build(tree_s, w_s)
            fw_build(tree_b, w_b)
        if check_every > 0 and n_events % check_every == 0:
            for tree, w in ((tree_s, w_s), (tree_b, w_b)):
                exact = 0.0
                for k in range(1, n + 1):
                    exact += w[k]
                got = fw_prefix(tree, n)
                if exact > 0.0:
                    rel = abs(got - exact) / exact
                else:
                    rel = abs(got)
                if rel > max_drift:
                    max_drift = rel
            # weights themselves against a from-scratch recomputation
            ref_s = np.zeros(n + 1)
            ref_b = np.zeros(n + 1)
            sell_weights(x, bb, th_a, ref_s)
            buy_weights(x, ba, th_b, ref_b)
            for k in range(1, n + 1):
                for a, b in ((w_s[k], ref_s[k]), (w_b[k], ref_b[k])):
                    scale = abs(b) if b != 0.0 else 1.0
                    rel = abs(a - b) / scale
                    if rel > max_drift:
                        max_drift = rel

    while status == OK and j < n_snap:
        snaps[j, :] = x[1:]
        j += 1
    return (
        status,
        t,
        ba,
        bb,
        snaps,
        counts,
        noops,
        n_events,
        log_t[: n_events if record_log else 0],
        log_k[: n_events if record_log else 0],
        log_tick[: n_events if record_log else 0],
        extremes,
        max_drift,
    )
