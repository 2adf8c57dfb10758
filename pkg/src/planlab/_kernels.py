"""Optional numba-compiled replay kernels.

These mirror the numpy implementations in fitting.py exactly (same formulas,
loop order chosen to match within float tolerance); tests assert agreement.
When numba is unavailable the package silently falls back to numpy.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except Exception:  # pragma: no cover - environment without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def deco(fn):
            return fn

        return deco if not (args and callable(args[0])) else args[0]


@njit(cache=True)
def reinforce_loglik(
    F, n_ops, taken, rewards, term_ev, starts, ends, w0, mask, alpha, gamma, tau, rtg, term_expected
):  # pragma: no cover - exercised via tests through the dispatcher
    n_feat = F.shape[2]
    w = np.zeros(n_feat)
    for j in range(n_feat):
        if mask[j]:
            w[j] = w0[j]
    total = 0.0
    for trial in range(starts.shape[0]):
        a, b = starts[trial], ends[trial]
        T = b - a
        probs = np.zeros((T, F.shape[1]))
        lp_taken = np.zeros(T)
        for s in range(T):
            m = n_ops[a + s]
            q = np.zeros(m)
            for o in range(m):
                acc = 0.0
                for j in range(n_feat):
                    acc += F[a + s, o, j] * w[j]
                q[o] = acc / tau
            qmax = q[0]
            for o in range(1, m):
                if q[o] > qmax:
                    qmax = q[o]
            zsum = 0.0
            for o in range(m):
                probs[s, o] = np.exp(q[o] - qmax)
                zsum += probs[s, o]
            for o in range(m):
                probs[s, o] /= zsum
            lp_taken[s] = np.log(probs[s, taken[a + s]])
            total += lp_taken[s]
        if alpha != 0.0:
            credit = np.zeros(T)
            if rtg:
                acc = 0.0
                for s in range(T - 1, -1, -1):
                    r = rewards[a + s]
                    if term_expected and s == T - 1:
                        r = term_ev[a + s]
                    acc = r + gamma * acc
                    credit[s] = acc
            else:
                for s in range(T):
                    credit[s] = rewards[a + s]
                if term_expected:
                    credit[T - 1] = term_ev[b - 1]
            for s in range(T):
                coef = gamma**s * credit[s]
                if coef == 0.0:
                    continue
                m = n_ops[a + s]
                tk = taken[a + s]
                for j in range(n_feat):
                    if not mask[j]:
                        continue
                    fbar = 0.0
                    for o in range(m):
                        fbar += probs[s, o] * F[a + s, o, j]
                    w[j] += alpha * coef * (F[a + s, tk, j] - fbar) / tau
    return total


@njit(cache=True)
def rssl_loglik(
    strat_p, inv_nops, step_mask, trial_scores, z, prior_mean, prior_variance, noise_variance, lapse
):  # pragma: no cover - exercised via tests through the dispatcher
    T, S, L = strat_p.shape
    n_draws = z.shape[0]
    means = np.full(S, prior_mean)
    variances = np.full(S, prior_variance)
    total = 0.0
    counts = np.zeros(S)
    for t in range(T):
        for s in range(S):
            counts[s] = 0.0
        sd = np.sqrt(variances)
        for d in range(n_draws):
            best_s = 0
            best_v = means[0] + sd[0] * z[d, 0]
            for s in range(1, S):
                v = means[s] + sd[s] * z[d, s]
                if v > best_v:
                    best_v = v
                    best_s = s
            counts[best_s] += 1.0
        lik = 0.0
        resp = np.zeros(S)
        for s in range(S):
            sel = counts[s] / n_draws
            lt = 1.0
            for j in range(L):
                if step_mask[t, j]:
                    lt *= (1.0 - lapse) * strat_p[t, s, j] + lapse * inv_nops[t, j]
            resp[s] = sel * lt
            lik += resp[s]
        if lik <= 0.0:
            return -np.inf
        total += np.log(lik)
        for s in range(S):
            r = resp[s] / lik
            prec = 1.0 / variances[s] + r / noise_variance
            means[s] = (means[s] / variances[s] + r * trial_scores[t] / noise_variance) / prec
            variances[s] = 1.0 / prec
    return total
