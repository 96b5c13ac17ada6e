"""Compiled inner loop for quadratic games on box/ball strategy sets.

Mirrors ``dynamics._run_python`` step for step; the two paths are tested
against each other.  Each phase of an iteration is its own jitted function:
one monolithic loop nest optimised markedly worse.
"""
import numpy as np
from numba import njit

_SCALE = 2.0 ** -32


@njit(cache=True)
def _thresholds(p):
    # u < p  <=>  w32 < ceil(p 2^32) for the integer w32 behind u = w32 2^-32
    out = np.empty(p.shape, dtype=np.uint64)
    flat_p = p.ravel()
    flat_o = out.ravel()
    for m in range(flat_p.shape[0]):
        flat_o[m] = np.uint64(np.ceil(flat_p[m] * 4294967296.0))
    return out


@njit(cache=True)
def _participation(u32, N, pthresh, P):
    present = 0
    nU = N * N
    for j in range(N):
        P[j] = np.uint64(u32[nU + j]) < pthresh[j]
        present += np.uint64(u32[nU + j]) < pthresh[j]
    return present


@njit(cache=True)
def _aggregate_bernoulli(u32, N, thresh, P, s, crow, z):
    # branch-free: the comparisons are coin flips and mispredict badly
    n = s.shape[1]
    for i in range(N):
        base = i * N
        for j in range(N):
            crow[j] = P[j] * (np.uint64(u32[base + j]) < thresh[i, j])
        for d in range(n):
            acc = 0.0
            for j in range(N):
                acc += crow[j] * s[j, d]
            z[i, d] = acc / N


@njit(cache=True)
def _aggregate_general(u32, N, ekind, p1, p2, thresh, P, s, crow, z):
    n = s.shape[1]
    for i in range(N):
        base = i * N
        for j in range(N):
            h = np.uint64(u32[base + j])
            kd = ekind[i, j]
            if kd == 0:
                gij = 1.0 if h < thresh[i, j] else 0.0
            elif kd == 1:
                gij = p1[i, j] + (p2[i, j] - p1[i, j]) * (float(h) * _SCALE)
            else:
                gij = p1[i, j]
            crow[j] = gij * P[j]
        for d in range(n):
            acc = 0.0
            for j in range(N):
                acc += crow[j] * s[j, d]
            z[i, d] = acc / N


@njit(cache=True)
def _project_rows(y, set_kind, lo, hi, center, radius, out, mask):
    """Project row ``i`` of ``y`` into ``out`` wherever ``mask[i] != 0``."""
    N, n = y.shape
    for i in range(N):
        if mask[i] == 0.0:
            continue
        if set_kind[i] == 0:
            for d in range(n):
                v = y[i, d]
                if v < lo[i, d]:
                    v = lo[i, d]
                elif v > hi[i, d]:
                    v = hi[i, d]
                out[i, d] = v
        else:
            nrm = 0.0
            for d in range(n):
                t = y[i, d] - center[i, d]
                nrm += t * t
            nrm = np.sqrt(nrm)
            if nrm <= radius[i]:
                for d in range(n):
                    out[i, d] = y[i, d]
            else:
                f = radius[i] / nrm
                for d in range(n):
                    out[i, d] = center[i, d] + (y[i, d] - center[i, d]) * f


@njit(cache=True)
def _regret(s, z, q, a, b, set_kind, lo, hi, center, radius, ones, u, br, out):
    N, n = s.shape
    for i in range(N):
        for d in range(n):
            u[i, d] = -(a[i] * z[i, d] + b[i, d]) / q[i]
    _project_rows(u, set_kind, lo, hi, center, radius, br, ones)
    for i in range(N):
        r = 0.0
        for d in range(n):
            r += (s[i, d] - br[i, d]) * (s[i, d] + br[i, d] - 2.0 * u[i, d])
        r = 0.5 * q[i] * r
        out[i] = r if r > 0.0 else 0.0


@njit(cache=True)
def _noise_sq(s, g, P, q, a, b, pbar, wbar):
    N, n = s.shape
    nsq = 0.0
    for i in range(N):
        for d in range(n):
            acc = 0.0
            for j in range(N):
                acc += wbar[i, j] * s[j, d]
            ft = q[i] * s[i, d] + a[i] * (acc / N) + b[i, d]
            wv = (P[i] / pbar[i]) * g[i, d] - ft
            nsq += wv * wv
    return nsq


@njit(cache=True)
def simulate_chunk(s, sbar, words, k0, last_k, taus,
                   q, a, b, set_kind, lo, hi, center, radius,
                   ekind, p1, p2, pbar, wbar, record_noise, store_regret,
                   out_dist, out_wdist, out_np, out_maxr, out_meanr, out_noise, out_regret):
    """Advance ``s`` in place over ``words.shape[0]`` iterations starting at ``k0``.

    Row ``t`` of the outputs describes iteration ``k0 + t`` *before* its
    update; no update is applied at ``last_k``.
    """
    N, n = s.shape
    z = np.empty((N, n))
    g = np.empty((N, n))
    y = np.empty((N, n))
    u = np.empty((N, n))
    br = np.empty((N, n))
    P = np.empty(N)
    crow = np.empty(N)
    r = np.empty(N)
    ones = np.ones(N)
    thresh = _thresholds(p1)
    pthresh = _thresholds(pbar)
    all_bernoulli = True
    for i in range(N):
        for j in range(N):
            if i != j and ekind[i, j] != 0:
                all_bernoulli = False
    inv_pbar = 1.0 / pbar

    for t in range(words.shape[0]):
        k = k0 + t
        # little-endian view: low half of each word first, as in words_to_uniforms
        row = words[t].view(np.uint32)
        out_np[t] = _participation(row, N, pthresh, P)
        # diagonal entries of p1 (hence thresh) are zero, so G_ii == 0
        if all_bernoulli:
            _aggregate_bernoulli(row, N, thresh, P, s, crow, z)
        else:
            _aggregate_general(row, N, ekind, p1, p2, thresh, P, s, crow, z)
        for i in range(N):
            for d in range(n):
                g[i, d] = q[i] * s[i, d] + a[i] * z[i, d] + b[i, d]

        dsq = 0.0
        wsq = 0.0
        for i in range(N):
            acc = 0.0
            for d in range(n):
                e = s[i, d] - sbar[i, d]
                acc += e * e
            dsq += acc
            wsq += acc * inv_pbar[i]
        out_dist[t] = np.sqrt(dsq)
        out_wdist[t] = np.sqrt(wsq)

        _regret(s, z, q, a, b, set_kind, lo, hi, center, radius, ones, u, br, r)
        rmax = 0.0
        rsum = 0.0
        for i in range(N):
            rsum += r[i]
            if r[i] > rmax:
                rmax = r[i]
            if store_regret:
                out_regret[t, i] = r[i]
        out_maxr[t] = rmax
        out_meanr[t] = rsum / N

        if record_noise:
            out_noise[t] = _noise_sq(s, g, P, q, a, b, pbar, wbar)

        if k < last_k:
            tau = taus[t]
            for i in range(N):
                for d in range(n):
                    y[i, d] = s[i, d] - tau * g[i, d]
            _project_rows(y, set_kind, lo, hi, center, radius, s, P)
