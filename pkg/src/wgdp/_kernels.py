"""Hot loops for affine-risk objectives, JIT-compiled with numba.

These kernels are pure float64 recurrences; all randomness is pre-drawn by
the callers so replay semantics live entirely in the Python layer.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def sc_sc_affine(A, c, mu_w, mu_lam, anchor, center, radius, w0, max_iters, target_gap):
    """Best-response saddle solver for risks r_i(w) = <A[i], w> + c[i].

    Runs projected gradient steps eta_t = 1/(mu_w t) against the exact
    softmax best response, accumulating uniform averages and the online
    regret certificate sum ||g_t||^2 / (2 mu_w t).  Stops early once the
    certificate divided by t reaches ``target_gap`` (ignored when <= 0).

    Returns (w_avg, lam_avg, rounds_done, certificate_bound).
    """
    p, d = A.shape
    w = w0.copy()
    w_sum = np.zeros(d)
    lam_sum = np.zeros(p)
    r = np.empty(p)
    lam = np.empty(p)
    g = np.empty(d)
    cert = 0.0
    t_done = max_iters
    for t in range(1, max_iters + 1):
        for i in range(p):
            s = c[i]
            for j in range(d):
                s += A[i, j] * w[j]
            r[i] = s
        m = r[0]
        for i in range(1, p):
            if r[i] > m:
                m = r[i]
        z = 0.0
        for i in range(p):
            e = np.exp((r[i] - m) / mu_lam)
            lam[i] = e
            z += e
        for i in range(p):
            lam[i] /= z
        gn2 = 0.0
        for j in range(d):
            s = mu_w * (w[j] - anchor[j])
            for i in range(p):
                s += lam[i] * A[i, j]
            g[j] = s
            gn2 += s * s
        cert += gn2 / (2.0 * mu_w * t)
        for j in range(d):
            w_sum[j] += w[j]
        for i in range(p):
            lam_sum[i] += lam[i]
        if target_gap > 0.0 and cert / t <= target_gap:
            t_done = t
            break
        if t < max_iters:
            eta = 1.0 / (mu_w * t)
            nrm2 = 0.0
            for j in range(d):
                w[j] -= eta * g[j]
                dv = w[j] - center[j]
                nrm2 += dv * dv
            nrm = np.sqrt(nrm2)
            if nrm > radius:
                scale = radius / nrm
                for j in range(d):
                    w[j] = center[j] + (w[j] - center[j]) * scale
    return w_sum / t_done, lam_sum / t_done, t_done, cert / t_done


@njit(cache=True)
def noisy_sgd_chunk(
    X_all,
    a_bar,
    c_bar,
    center,
    radius,
    w,
    lam,
    w_sum,
    lam_sum,
    sel_counts,
    eta_w,
    eta_lam,
    u_group,
    batch_idx,
    gauss,
    lap,
    mode,
    n_update_rounds,
):
    """One chunk of noisy SGD rounds with group reweighting or selection.

    mode 0: sample the group from lam (multiplicative-weights player);
    mode 1: pick the group by noisy argmax of the risks.

    Mutates w, lam, w_sum, lam_sum, sel_counts in place; gauss and lap come
    pre-scaled (zeros when the corresponding noise is off).  Returns the
    count of weight-floor events.
    """
    rounds = batch_idx.shape[0]
    p, n, d = X_all.shape
    m = batch_idx.shape[1]
    floor_count = 0
    r = np.empty(p)
    g = np.empty(d)
    for t in range(rounds):
        for i in range(p):
            s = c_bar[i]
            for j in range(d):
                s += a_bar[i, j] * w[j]
            r[i] = s
        if mode == 0:
            if p == 1:
                it = 0
            else:
                u = u_group[t]
                acc = 0.0
                it = p - 1
                for i in range(p):
                    acc += lam[i]
                    if u < acc:
                        it = i
                        break
        else:
            best = r[0] + lap[t, 0]
            it = 0
            for i in range(1, p):
                v = r[i] + lap[t, i]
                if v > best:
                    best = v
                    it = i
        sel_counts[it] += 1
        for j in range(d):
            w_sum[j] += w[j]
        for i in range(p):
            lam_sum[i] += lam[i]
        if t < n_update_rounds:
            for j in range(d):
                g[j] = 0.0
            for b in range(m):
                k = batch_idx[t, b]
                for j in range(d):
                    g[j] += X_all[it, k, j]
            nrm2 = 0.0
            for j in range(d):
                w[j] -= eta_w * (g[j] / m + gauss[t, j])
                dv = w[j] - center[j]
                nrm2 += dv * dv
            nrm = np.sqrt(nrm2)
            if nrm > radius:
                scale = radius / nrm
                for j in range(d):
                    w[j] = center[j] + (w[j] - center[j]) * scale
            if mode == 0 and eta_lam > 0.0:
                zmax = eta_lam * (r[0] - lap[t, 0])
                for i in range(1, p):
                    zi = eta_lam * (r[i] - lap[t, i])
                    if zi > zmax:
                        zmax = zi
                z = 0.0
                for i in range(p):
                    v = lam[i] * np.exp(eta_lam * (r[i] - lap[t, i]) - zmax)
                    if v <= 0.0:
                        v = 1e-300
                        floor_count += 1
                    lam[i] = v
                    z += v
                for i in range(p):
                    lam[i] /= z
    return floor_count
