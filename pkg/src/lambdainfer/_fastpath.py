"""Compiled per-particle simulation + peeling for mixture measures.

The event rates per block count come from the same (python) engine the
reference path uses; only event sampling and the pruning DP run inside
numba. Covers measures without beta-density components and mutation models
that factorize per locus or have a real generator eigendecomposition; the
reference path handles everything else.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_FAST = True
except ImportError:  # pragma: no cover
    HAVE_FAST = False

    def njit(*args, **kwargs):  # pragma: no cover
        def wrap(f):
            return f

        return wrap


KIND_KINGMAN = 0
KIND_ATOM = 1
KIND_KERNEL = 2


@njit(cache=True, inline="always")
def _visible(p, r):
    """r^-2 P(Binom(p, r) >= 2), evaluated without cancellation."""
    l1p = math.log1p(-r)
    one_minus_pow = -math.expm1(p * l1p)  # 1 - (1-r)^p
    tail = p * r * math.exp((p - 1) * l1p)
    return (one_minus_pow - tail) / (r * r)


@njit(cache=True)
def _draw_merger_size(p, r):
    """Binomial(p, r) conditioned on >= 2, by inverse CDF in log space."""
    if r >= 1.0 - 1e-15:
        return p
    logit = math.log(r) - math.log1p(-r)
    # logterm_k for k = 2, then multiplicative ratios
    logterm = math.log(p * (p - 1) / 2.0) + 2.0 * math.log(r) + (p - 2) * math.log1p(-r)
    mx = logterm
    lt = logterm
    for k in range(2, p):
        lt += math.log((p - k) / (k + 1.0)) + logit
        if lt > mx:
            mx = lt
    total = 0.0
    lt = logterm
    total += math.exp(lt - mx)
    for k in range(2, p):
        lt += math.log((p - k) / (k + 1.0)) + logit
        total += math.exp(lt - mx)
    u = np.random.random() * total
    lt = logterm
    acc = math.exp(lt - mx)
    k = 2
    while acc < u and k < p:
        lt += math.log((p - k) / (k + 1.0)) + logit
        acc += math.exp(lt - mx)
        k += 1
    return k


@njit(cache=True)
def _simulate_topology_fast(
    seed,
    insert_times,
    batch_sizes,
    rates_cum,
    kinds,
    params,
    eta,
    times,
    child_flat,
    child_off_scratch,
):
    """Fill times/children arrays; returns (n_nodes, ok_flag).

    ``rates_cum[p]`` holds cumulative per-source merger rates for p blocks.
    ``params`` rows: atom -> (location, _, _); kernel -> (loc, sigma, env_lo).
    """
    np.random.seed(seed)
    n_total = 0
    for i in range(batch_sizes.shape[0]):
        n_total += batch_sizes[i]
    n_sources = kinds.shape[0]
    active = np.empty(2 * n_total, dtype=np.int64)
    count = 0
    next_leaf = 0
    next_id = n_total
    n_children = 0
    b = 0.0
    pi = 0
    n_batches = batch_sizes.shape[0]
    # leaves get ids in schedule order; batches arrive in backward-time order
    leaf_start = np.empty(n_batches, dtype=np.int64)
    acc = 0
    for i in range(n_batches):
        leaf_start[i] = acc
        acc += batch_sizes[i]
    order = np.argsort(insert_times)

    while True:
        p = count
        if p <= 1 and pi >= n_batches:
            break
        total = rates_cum[p, n_sources - 1] if p >= 2 else 0.0
        if total <= 0.0:
            if pi < n_batches:
                bi = order[pi]
                b = insert_times[bi]
                for j in range(batch_sizes[bi]):
                    lid = leaf_start[bi] + j
                    times[lid] = b
                    active[count] = lid
                    count += 1
                pi += 1
                continue
            return next_id, False
        dt = -math.log(np.random.random()) / total
        if pi < n_batches and insert_times[order[pi]] <= b + dt:
            bi = order[pi]
            b = insert_times[bi]
            for j in range(batch_sizes[bi]):
                lid = leaf_start[bi] + j
                times[lid] = b
                active[count] = lid
                count += 1
            pi += 1
            continue
        b += dt
        u = np.random.random() * total
        src = 0
        while rates_cum[p, src] < u and src < n_sources - 1:
            src += 1
        kind = kinds[src]
        if kind == KIND_KINGMAN:
            k = 2
        elif kind == KIND_ATOM:
            k = _draw_merger_size(p, params[src, 0])
        else:
            loc = params[src, 0]
            sig = params[src, 1]
            env = _visible(p, params[src, 2])
            r = 0.0
            while True:
                z = loc + sig * np.random.standard_normal()
                if z < eta or z > 1.0:
                    continue
                if np.random.random() * env <= _visible(p, z):
                    r = z
                    break
            k = _draw_merger_size(p, r)
        # choose k distinct active blocks (partial Fisher-Yates)
        for j in range(k):
            pick = j + int(np.random.random() * (count - j))
            tmp = active[j]
            active[j] = active[pick]
            active[pick] = tmp
        times[next_id] = b
        off = child_off_scratch[next_id]
        for j in range(k):
            child_flat[n_children] = active[j]
            n_children += 1
        child_off_scratch[next_id + 1] = n_children
        # replace merged blocks by the new one
        for t in range(k, count):
            active[t - k + 1] = active[t]
        active[0] = next_id
        count = count - k + 1
        next_id += 1
        child_off_scratch[next_id] = n_children

    return next_id, True


@njit(cache=True)
def _peel_loci_fast(n_nodes, times, child_flat, child_off, leaf_bits, rate2):
    n_leaves = leaf_bits.shape[0]
    loci = leaf_bits.shape[1]
    state = np.empty((n_nodes, loci, 2))
    logscale = np.zeros(n_nodes)
    for node in range(n_nodes):
        lo, hi = child_off[node], child_off[node + 1]
        if lo == hi:
            for l in range(loci):
                bbit = leaf_bits[node, l]
                state[node, l, bbit] = 1.0
                state[node, l, 1 - bbit] = 0.0
            continue
        for l in range(loci):
            state[node, l, 0] = 1.0
            state[node, l, 1] = 1.0
        sc = 0.0
        for ci in range(lo, hi):
            c = child_flat[ci]
            decay = math.exp(-rate2 * (times[node] - times[c]))
            ps = 0.5 * (1.0 + decay)
            pd = 0.5 * (1.0 - decay)
            sc += logscale[c]
            for l in range(loci):
                a0 = state[c, l, 0]
                a1 = state[c, l, 1]
                state[node, l, 0] *= ps * a0 + pd * a1
                state[node, l, 1] *= ps * a1 + pd * a0
        for l in range(loci):
            m = state[node, l, 0]
            if state[node, l, 1] > m:
                m = state[node, l, 1]
            if m <= 0.0:
                return -math.inf
            state[node, l, 0] /= m
            state[node, l, 1] /= m
            sc += math.log(m)
        logscale[node] = sc
    root = n_nodes - 1
    total = logscale[root]
    for l in range(loci):
        total += math.log(0.5 * (state[root, l, 0] + state[root, l, 1]))
    return total


@njit(cache=True)
def _peel_general_fast(
    n_nodes, times, child_flat, child_off, leaf_types, vals, vecs, inv, theta, stationary
):
    d = vals.shape[0]
    state = np.zeros((n_nodes, d))
    logscale = np.zeros(n_nodes)
    tmp = np.empty(d)
    for node in range(n_nodes):
        lo, hi = child_off[node], child_off[node + 1]
        if lo == hi:
            state[node, leaf_types[node]] = 1.0
            continue
        for i in range(d):
            state[node, i] = 1.0
        sc = 0.0
        for ci in range(lo, hi):
            c = child_flat[ci]
            t = times[node] - times[c]
            sc += logscale[c]
            for i in range(d):
                s = 0.0
                for j in range(d):
                    s += inv[i, j] * state[c, j]
                tmp[i] = s * math.exp(theta * t * vals[i])
            for i in range(d):
                s = 0.0
                for j in range(d):
                    s += vecs[i, j] * tmp[j]
                if s < 0.0:
                    s = 0.0
                state[node, i] *= s
        m = 0.0
        for i in range(d):
            if state[node, i] > m:
                m = state[node, i]
        if m <= 0.0:
            return -math.inf
        for i in range(d):
            state[node, i] /= m
        logscale[node] = sc + math.log(m)
    root = n_nodes - 1
    val = 0.0
    for i in range(d):
        val += stationary[i] * state[root, i]
    if val <= 0.0:
        return -math.inf
    return math.log(val) + logscale[root]


@njit(cache=True)
def _particles_loci(
    seeds, insert_times, batch_sizes, rates_cum, kinds, params, eta, leaf_bits, rate2
):
    n_total = leaf_bits.shape[0]
    max_nodes = 2 * n_total
    logs = np.empty(seeds.shape[0])
    times = np.empty(max_nodes)
    child_flat = np.empty(max_nodes, dtype=np.int64)
    child_off = np.zeros(max_nodes + 1, dtype=np.int64)
    for i in range(seeds.shape[0]):
        for j in range(max_nodes + 1):
            child_off[j] = 0
        n_nodes, ok = _simulate_topology_fast(
            seeds[i], insert_times, batch_sizes, rates_cum, kinds, params, eta,
            times, child_flat, child_off,
        )
        if not ok:
            logs[i] = np.nan
            continue
        logs[i] = _peel_loci_fast(n_nodes, times, child_flat, child_off, leaf_bits, rate2)
    return logs


@njit(cache=True)
def _particles_general(
    seeds, insert_times, batch_sizes, rates_cum, kinds, params, eta,
    leaf_types, vals, vecs, inv, theta, stationary,
):
    n_total = leaf_types.shape[0]
    max_nodes = 2 * n_total
    logs = np.empty(seeds.shape[0])
    times = np.empty(max_nodes)
    child_flat = np.empty(max_nodes, dtype=np.int64)
    child_off = np.zeros(max_nodes + 1, dtype=np.int64)
    for i in range(seeds.shape[0]):
        for j in range(max_nodes + 1):
            child_off[j] = 0
        n_nodes, ok = _simulate_topology_fast(
            seeds[i], insert_times, batch_sizes, rates_cum, kinds, params, eta,
            times, child_flat, child_off,
        )
        if not ok:
            logs[i] = np.nan
            continue
        logs[i] = _peel_general_fast(
            n_nodes, times, child_flat, child_off, leaf_types, vals, vecs, inv, theta, stationary
        )
    return logs
