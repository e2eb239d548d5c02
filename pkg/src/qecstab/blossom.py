"""Exact maximum-weight matching on dense graphs (Edmonds' blossom algorithm, O(n^3)).

Vertices are 1..n, index 0 means "none", and blossoms take the slots n+1..2n.
Edge weights are positive even int64 values (0 means no edge), so every dual
value stays an integer and tightness tests are exact. Edge "g[a, b]" between
two top-level vertices or blossoms is stored as the triple (gu, gv, gw): the
original endpoints and weight of the best edge joining them.

`min_weight_perfect_matching` wraps this for float costs by reversing and
scaling weights so that every maximum-weight matching has maximum cardinality.
"""

from __future__ import annotations

import numba
import numpy as np

_INF = np.int64(1) << np.int64(62)


@numba.njit(cache=True)
def _e_delta(lab, gu, gv, gw, a, b):
    return lab[gu[a, b]] + lab[gv[a, b]] - gw[a, b] * 2


@numba.njit(cache=True)
def _update_slack(lab, gu, gv, gw, slack, u, x):
    if slack[x] == 0 or _e_delta(lab, gu, gv, gw, u, x) < _e_delta(lab, gu, gv, gw, slack[x], x):
        slack[x] = u


@numba.njit(cache=True)
def _set_slack(n, lab, gu, gv, gw, slack, st, S, x):
    slack[x] = 0
    for u in range(1, n + 1):
        if gw[u, x] > 0 and st[u] != x and S[st[u]] == 0:
            _update_slack(lab, gu, gv, gw, slack, u, x)


@numba.njit(cache=True)
def _q_push(n, flower, flen, queue, meta, x):
    stack = [x]
    while stack:
        y = stack.pop()
        if y <= n:
            queue[meta[3]] = y
            meta[3] += 1
        else:
            for i in range(flen[y] - 1, -1, -1):
                stack.append(flower[y, i])


@numba.njit(cache=True)
def _set_st(n, flower, flen, st, x, b):
    stack = [x]
    while stack:
        y = stack.pop()
        st[y] = b
        if y > n:
            for i in range(flen[y]):
                stack.append(flower[y, i])


@numba.njit(cache=True)
def _get_pr(flower, flen, b, xr):
    m = flen[b]
    pr = 0
    while flower[b, pr] != xr:
        pr += 1
    if pr % 2 == 1:
        i, j = 1, m - 1
        while i < j:
            flower[b, i], flower[b, j] = flower[b, j], flower[b, i]
            i += 1
            j -= 1
        return m - pr
    return pr


@numba.njit(cache=True)
def _set_match(n, gu, gv, match, flower, flen, ffrom, u0, v0):
    su = [u0]
    sv = [v0]
    while su:
        u = su.pop()
        v = sv.pop()
        match[u] = gv[u, v]
        if u > n:
            xr = ffrom[u, gu[u, v]]
            pr = _get_pr(flower, flen, u, xr)
            for i in range(pr):
                su.append(flower[u, i])
                sv.append(flower[u, i ^ 1])
            su.append(xr)
            sv.append(v)
            m = flen[u]
            rotated = np.empty(m, np.int64)
            for i in range(m):
                rotated[i] = flower[u, (i + pr) % m]
            for i in range(m):
                flower[u, i] = rotated[i]


@numba.njit(cache=True)
def _augment(n, gu, gv, match, st, pa, flower, flen, ffrom, u, v):
    while True:
        xnv = st[match[u]]
        _set_match(n, gu, gv, match, flower, flen, ffrom, u, v)
        if xnv == 0:
            return
        _set_match(n, gu, gv, match, flower, flen, ffrom, xnv, st[pa[xnv]])
        u = st[pa[xnv]]
        v = xnv


@numba.njit(cache=True)
def _get_lca(match, st, pa, vis, meta, u, v):
    meta[2] += 1
    t = meta[2]
    while u != 0 or v != 0:
        if u != 0:
            if vis[u] == t:
                return u
            vis[u] = t
            u = st[match[u]]
            if u != 0:
                u = st[pa[u]]
        u, v = v, u
    return 0


@numba.njit(cache=True)
def _add_blossom(n, lab, gu, gv, gw, match, slack, st, pa, S, flower, flen, ffrom, queue, meta, u, lca, v):
    b = n + 1
    while b <= meta[1] and st[b] != 0:
        b += 1
    if b > meta[1]:
        meta[1] += 1
    n_x = meta[1]
    lab[b] = 0
    S[b] = 0
    match[b] = match[lca]
    flen[b] = 0
    flower[b, flen[b]] = lca
    flen[b] += 1
    x = u
    while x != lca:
        flower[b, flen[b]] = x
        flen[b] += 1
        y = st[match[x]]
        flower[b, flen[b]] = y
        flen[b] += 1
        _q_push(n, flower, flen, queue, meta, y)
        x = st[pa[y]]
    i, j = 1, flen[b] - 1
    while i < j:
        flower[b, i], flower[b, j] = flower[b, j], flower[b, i]
        i += 1
        j -= 1
    x = v
    while x != lca:
        flower[b, flen[b]] = x
        flen[b] += 1
        y = st[match[x]]
        flower[b, flen[b]] = y
        flen[b] += 1
        _q_push(n, flower, flen, queue, meta, y)
        x = st[pa[y]]
    _set_st(n, flower, flen, st, b, b)
    for x in range(1, n_x + 1):
        gw[b, x] = 0
        gw[x, b] = 0
    for x in range(1, n + 1):
        ffrom[b, x] = 0
    for i in range(flen[b]):
        xs = flower[b, i]
        for x in range(1, n_x + 1):
            if gw[b, x] == 0 or _e_delta(lab, gu, gv, gw, xs, x) < _e_delta(lab, gu, gv, gw, b, x):
                gu[b, x] = gu[xs, x]
                gv[b, x] = gv[xs, x]
                gw[b, x] = gw[xs, x]
                gu[x, b] = gu[x, xs]
                gv[x, b] = gv[x, xs]
                gw[x, b] = gw[x, xs]
        for x in range(1, n + 1):
            if ffrom[xs, x] != 0:
                ffrom[b, x] = xs
    _set_slack(n, lab, gu, gv, gw, slack, st, S, b)


@numba.njit(cache=True)
def _expand_blossom(n, lab, gu, gv, gw, slack, st, pa, S, flower, flen, ffrom, queue, meta, b):
    for i in range(flen[b]):
        _set_st(n, flower, flen, st, flower[b, i], flower[b, i])
    xr = ffrom[b, gu[b, pa[b]]]
    pr = _get_pr(flower, flen, b, xr)
    for i in range(0, pr, 2):
        xs = flower[b, i]
        xns = flower[b, i + 1]
        pa[xs] = gu[xns, xs]
        S[xs] = 1
        S[xns] = 0
        slack[xs] = 0
        _set_slack(n, lab, gu, gv, gw, slack, st, S, xns)
        _q_push(n, flower, flen, queue, meta, xns)
    S[xr] = 1
    pa[xr] = pa[b]
    for i in range(pr + 1, flen[b]):
        xs = flower[b, i]
        S[xs] = -1
        _set_slack(n, lab, gu, gv, gw, slack, st, S, xs)
    st[b] = 0


@numba.njit(cache=True)
def _on_found_edge(n, lab, gu, gv, gw, match, slack, st, pa, S, vis, flower, flen, ffrom, queue, meta, eu, ev):
    u = st[eu]
    v = st[ev]
    if S[v] == -1:
        pa[v] = eu
        S[v] = 1
        nu = st[match[v]]
        slack[v] = 0
        slack[nu] = 0
        S[nu] = 0
        _q_push(n, flower, flen, queue, meta, nu)
    elif S[v] == 0:
        lca = _get_lca(match, st, pa, vis, meta, u, v)
        if lca == 0:
            _augment(n, gu, gv, match, st, pa, flower, flen, ffrom, u, v)
            _augment(n, gu, gv, match, st, pa, flower, flen, ffrom, v, u)
            return True
        _add_blossom(n, lab, gu, gv, gw, match, slack, st, pa, S, flower, flen, ffrom, queue, meta, u, lca, v)
    return False


@numba.njit(cache=True)
def _stage(n, lab, gu, gv, gw, match, slack, st, pa, S, vis, flower, flen, ffrom, queue, meta):
    """One augmentation. Returns False when the matching can no longer grow in weight."""
    n_x = meta[1]
    for x in range(1, n_x + 1):
        S[x] = -1
        slack[x] = 0
    meta[3] = 0
    meta[4] = 0
    for x in range(1, n_x + 1):
        if st[x] == x and match[x] == 0:
            pa[x] = 0
            S[x] = 0
            _q_push(n, flower, flen, queue, meta, x)
    if meta[3] == 0:
        return False
    while True:
        while meta[4] < meta[3]:
            u = queue[meta[4]]
            meta[4] += 1
            if S[st[u]] == 1:
                continue
            for v in range(1, n + 1):
                if gw[u, v] > 0 and st[u] != st[v]:
                    if _e_delta(lab, gu, gv, gw, u, v) == 0:
                        if _on_found_edge(n, lab, gu, gv, gw, match, slack, st, pa, S, vis,
                                          flower, flen, ffrom, queue, meta, gu[u, v], gv[u, v]):
                            return True
                    else:
                        _update_slack(lab, gu, gv, gw, slack, u, st[v])
        n_x = meta[1]
        d = _INF
        for b in range(n + 1, n_x + 1):
            if st[b] == b and S[b] == 1:
                d = min(d, lab[b] // 2)
        for x in range(1, n_x + 1):
            if st[x] == x and slack[x] != 0:
                if S[x] == -1:
                    d = min(d, _e_delta(lab, gu, gv, gw, slack[x], x))
                elif S[x] == 0:
                    d = min(d, _e_delta(lab, gu, gv, gw, slack[x], x) // 2)
        for u in range(1, n + 1):
            if S[st[u]] == 0:
                if lab[u] <= d:
                    return False
                lab[u] -= d
            elif S[st[u]] == 1:
                lab[u] += d
        for b in range(n + 1, n_x + 1):
            if st[b] == b:
                if S[st[b]] == 0:
                    lab[b] += d * 2
                elif S[st[b]] == 1:
                    lab[b] -= d * 2
        meta[3] = 0
        meta[4] = 0
        for x in range(1, n_x + 1):
            if (st[x] == x and slack[x] != 0 and st[slack[x]] != x
                    and _e_delta(lab, gu, gv, gw, slack[x], x) == 0):
                if _on_found_edge(n, lab, gu, gv, gw, match, slack, st, pa, S, vis,
                                  flower, flen, ffrom, queue, meta, gu[slack[x], x], gv[slack[x], x]):
                    return True
        for b in range(n + 1, meta[1] + 1):
            if st[b] == b and S[b] == 1 and lab[b] == 0:
                _expand_blossom(n, lab, gu, gv, gw, slack, st, pa, S, flower, flen, ffrom, queue, meta, b)


@numba.njit(cache=True)
def max_weight_matching_int(weights):
    """Maximum-weight matching of a graph on vertices 1..n.

    `weights` is a symmetric (n+1, n+1) int64 array of even positive weights
    (0 = no edge; row and column 0 unused). Returns mate[0..n], 0 = unmatched.
    """
    n = weights.shape[0] - 1
    size = 2 * n + 1
    gu = np.zeros((size, size), np.int64)
    gv = np.zeros((size, size), np.int64)
    gw = np.zeros((size, size), np.int64)
    w_max = np.int64(0)
    for u in range(1, n + 1):
        for v in range(1, n + 1):
            gu[u, v] = u
            gv[u, v] = v
            gw[u, v] = weights[u, v]
            w_max = max(w_max, weights[u, v])
    lab = np.zeros(size, np.int64)
    match = np.zeros(size, np.int64)
    slack = np.zeros(size, np.int64)
    st = np.zeros(size, np.int64)
    pa = np.zeros(size, np.int64)
    S = np.zeros(size, np.int64)
    vis = np.zeros(size, np.int64)
    flower = np.zeros((size, n + 1), np.int64)
    flen = np.zeros(size, np.int64)
    ffrom = np.zeros((size, n + 1), np.int64)
    # Each vertex enters the queue at most once per stage.
    queue = np.zeros(4 * size + 4, np.int64)
    # n, number of used slots n_x, visit stamp, queue tail, queue head.
    meta = np.zeros(5, np.int64)
    meta[0] = n
    meta[1] = n
    for u in range(n + 1):
        st[u] = u
    for u in range(1, n + 1):
        ffrom[u, u] = u
        lab[u] = w_max
    while _stage(n, lab, gu, gv, gw, match, slack, st, pa, S, vis, flower, flen, ffrom, queue, meta):
        pass
    return match[:n + 1].copy()


def min_weight_perfect_matching(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost perfect matching of a graph given by a dense cost matrix.

    `cost` is a symmetric (n, n) array of non-negative costs, with np.inf for
    missing edges (the diagonal is ignored). Returns mate[i] for each vertex,
    or -1 where no perfect matching could cover the vertex.

    Costs are reversed into weights C - cost with C large enough that a
    maximum-weight matching always has maximum cardinality, then scaled to
    even integers with a resolution far below 1e-9 of the largest cost.
    """
    cost = np.asarray(cost, float)
    n = cost.shape[0]
    if n == 0:
        return np.zeros(0, np.intp)
    edge = np.isfinite(cost)
    np.fill_diagonal(edge, False)
    if np.any(cost[edge] < 0):
        raise ValueError('costs must be non-negative')
    top = float(cost[edge].max()) if edge.any() else 0.0
    big = top * (n + 1) + 1.0
    scale = float(2 ** 56) / big
    weights = np.zeros((n + 1, n + 1), np.int64)
    reversed_ = np.where(edge, big - np.where(edge, cost, 0.0), 0.0)
    weights[1:, 1:] = 2 * np.round(reversed_ * scale).astype(np.int64)
    mate = max_weight_matching_int(weights)[1:] - 1
    return mate.astype(np.intp)


@numba.njit(cache=True)
def _component_dp(comp, m, pair, useful, bnd, mate):
    """Optimal matching of a small component by dynamic programming over subsets."""
    full = (1 << m) - 1
    best = np.full(full + 1, np.inf)
    choice = np.full(full + 1, -2, np.int64)
    best[0] = 0.0
    for mask in range(1, full + 1):
        i = 0
        while not (mask >> i) & 1:
            i += 1
        rest = mask & ~(1 << i)
        a = comp[i]
        if np.isfinite(bnd[a]) and bnd[a] + best[rest] < best[mask]:
            best[mask] = bnd[a] + best[rest]
            choice[mask] = -1
        for j in range(i + 1, m):
            if (rest >> j) & 1 and useful[a, comp[j]]:
                c = pair[a, comp[j]] + best[rest & ~(1 << j)]
                if c < best[mask]:
                    best[mask] = c
                    choice[mask] = j
    total = best[full]
    mask = full
    while mask and np.isfinite(total):
        i = 0
        while not (mask >> i) & 1:
            i += 1
        j = choice[mask]
        if j == -1:
            mate[comp[i]] = -1
            mask &= ~(1 << i)
        else:
            mate[comp[i]] = comp[j]
            mate[comp[j]] = comp[i]
            mask &= ~(1 << i) & ~(1 << j)
    return total


@numba.njit(cache=True)
def _component_blossom(comp, m, pair, useful, bnd, mate):
    """Optimal matching of a component via the boundary-twin graph."""
    top = 0.0
    for i in range(m):
        a = comp[i]
        if np.isfinite(bnd[a]):
            top = max(top, bnd[a])
        for j in range(m):
            if useful[a, comp[j]]:
                top = max(top, pair[a, comp[j]])
    n = 2 * m
    big = top * (n + 1) + 1.0
    scale = float(2 ** 56) / big
    w = np.zeros((n + 1, n + 1), np.int64)
    for i in range(m):
        a = comp[i]
        if np.isfinite(bnd[a]):
            w[1 + i, 1 + m + i] = w[1 + m + i, 1 + i] = 2 * np.int64(np.round((big - bnd[a]) * scale))
        for j in range(i + 1, m):
            b = comp[j]
            if useful[a, b]:
                w[1 + i, 1 + j] = w[1 + j, 1 + i] = 2 * np.int64(np.round((big - pair[a, b]) * scale))
                w[1 + m + i, 1 + m + j] = w[1 + m + j, 1 + m + i] = 2 * np.int64(np.round(big * scale))
    match = max_weight_matching_int(w)
    total = 0.0
    for i in range(m):
        k = match[1 + i] - 1
        if k < 0:
            return np.inf
        if k == m + i:
            mate[comp[i]] = -1
            total += bnd[comp[i]]
        elif k < m:
            mate[comp[i]] = comp[k]
            if i < k:
                total += pair[comp[i], comp[k]]
        else:
            return np.inf
    return total


@numba.njit(cache=True)
def match_with_boundary(pair, bnd, dp_limit):
    """Minimum-weight matching of k nodes, each either paired or sent to the boundary.

    `pair` is the (k, k) distance matrix and `bnd` the boundary distances (inf =
    unreachable). Returns (mate, total) with mate[i] = -1 for boundary matches;
    total is inf when no valid matching exists.
    """
    k = len(bnd)
    mate = np.full(k, -2, np.int64)
    useful = np.zeros((k, k), np.bool_)
    parent = np.arange(k)
    for i in range(k):
        for j in range(i + 1, k):
            if pair[i, j] < bnd[i] + bnd[j]:
                useful[i, j] = useful[j, i] = True
                ri = i
                while parent[ri] != ri:
                    ri = parent[ri]
                rj = j
                while parent[rj] != rj:
                    rj = parent[rj]
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    root = np.empty(k, np.int64)
    for i in range(k):
        r = i
        while parent[r] != r:
            r = parent[r]
        root[i] = r
    total = 0.0
    comp = np.empty(k, np.int64)
    for r in range(k):
        if root[r] != r:
            continue
        m = 0
        for i in range(r, k):
            if root[i] == r:
                comp[m] = i
                m += 1
        if m == 1:
            if not np.isfinite(bnd[r]):
                return mate, np.inf
            mate[r] = -1
            total += bnd[r]
        elif m <= dp_limit:
            total += _component_dp(comp[:m].copy(), m, pair, useful, bnd, mate)
        else:
            total += _component_blossom(comp[:m].copy(), m, pair, useful, bnd, mate)
        if not np.isfinite(total):
            return mate, np.inf
    return mate, total
