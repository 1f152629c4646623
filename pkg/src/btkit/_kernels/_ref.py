"""Pure-Python kernels.

Reference implementations of the hot inner loops. btkit._kernels._fast is a
Cython mirror of this module; both must produce bit-identical results (same
loop order, same accumulation order), which tests/test_kernels.py enforces.
"""

import math

BACKEND = "python"


def argmax_tie(p):
    """Index of the largest entry; ties resolved to the lowest index."""
    best = 0
    best_p = p[0]
    for i in range(1, len(p)):
        v = p[i]
        if v > best_p:
            best_p = v
            best = i
    return best


def topk_tie(p, k):
    """Indices of the k largest entries, ordered by (value desc, index asc)."""
    n = len(p)
    if k > n:
        k = n
    out = []
    taken = [False] * n
    for _ in range(k):
        best = -1
        best_p = -1.0
        for i in range(n):
            if not taken[i] and p[i] > best_p:
                best_p = p[i]
                best = i
        taken[best] = True
        out.append(best)
    return out


def sample_cdf(p, total, u):
    """Inverse-CDF draw from an unnormalized vector; u is uniform on [0,1)."""
    target = u * total
    c = 0.0
    last = -1
    for i in range(len(p)):
        v = p[i]
        if v > 0.0:
            c += v
            last = i
            if c > target:
                return i
    return last


def mix2(out, a, b, wa, wb):
    """out = wa*a + wb*b elementwise; returns the sum of out."""
    total = 0.0
    for i in range(len(out)):
        v = wa * a[i] + wb * b[i]
        out[i] = v
        total += v
    return total


def scale_sparse_add(vec, gamma, idx, val):
    """vec = gamma*vec, then vec[idx[j]] += val[j]. One backoff-chain level."""
    for i in range(len(vec)):
        vec[i] *= gamma
    for j in range(len(idx)):
        vec[idx[j]] += val[j]


def add_sparse(vec, idx, val, scale):
    """vec[idx[j]] += scale * val[j]."""
    for j in range(len(idx)):
        vec[idx[j]] += scale * val[j]


def beam_step(scores, dists, totals, k):
    """One beam expansion: rank all (hypothesis, token) candidates.

    Candidate score = scores[i] + log(dists[i,j]/totals[i]); zero-probability
    tokens are skipped. Returns (parents, tokens, cand_scores) for the top-k
    candidates ordered by (score desc, parent asc, token asc).
    """
    rows = len(scores)
    cols = dists.shape[1]
    logtot = [math.log(totals[i]) for i in range(rows)]
    parents = []
    tokens = []
    out_scores = []
    taken = [[False] * cols for _ in range(rows)]
    for _ in range(k):
        best_i = -1
        best_j = -1
        best_s = -math.inf
        for i in range(rows):
            row = dists[i]
            for j in range(cols):
                if taken[i][j]:
                    continue
                v = row[j]
                if v <= 0.0:
                    continue
                s = scores[i] + (math.log(v) - logtot[i])
                if s > best_s:
                    best_s = s
                    best_i = i
                    best_j = j
        if best_i < 0:
            break
        taken[best_i][best_j] = True
        parents.append(best_i)
        tokens.append(best_j)
        out_scores.append(best_s)
    return parents, tokens, out_scores


def em_estep(ev_off, ev_pairs, ev_weight, t, counts):
    """One IBM-1 E-step over flattened alignment events.

    Event e covers ev_pairs[ev_off[e]:ev_off[e+1]], the lexical-pair indices
    of one target token against every source token (incl. NULL). Accumulates
    fractional counts into `counts` and returns the weighted corpus
    log-likelihood under the current table `t` (including the uniform
    alignment prior 1/len per event).
    """
    ll = 0.0
    n_events = len(ev_off) - 1
    for e in range(n_events):
        lo = ev_off[e]
        hi = ev_off[e + 1]
        denom = 0.0
        for q in range(lo, hi):
            denom += t[ev_pairs[q]]
        w = ev_weight[e]
        if denom <= 0.0:
            ll = -math.inf
            continue
        ll += w * (math.log(denom) - math.log(hi - lo))
        for q in range(lo, hi):
            pidx = ev_pairs[q]
            counts[pidx] += w * t[pidx] / denom
    return ll


def group_normalize(counts, group, n_groups, out):
    """out[p] = counts[p] / sum of counts within group[p] (0 if group empty)."""
    sums = [0.0] * n_groups
    for p in range(len(counts)):
        sums[group[p]] += counts[p]
    for p in range(len(counts)):
        s = sums[group[p]]
        out[p] = counts[p] / s if s > 0.0 else 0.0
