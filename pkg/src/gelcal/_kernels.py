"""Hot inner loops: GEL criterion accumulation and logistic log-likelihood.

Each kernel has a compiled numba version and a pure-numpy version with the
same signature. The numba path is used when numba imports cleanly unless
``GELCAL_DISABLE_NUMBA=1`` is set in the environment before import.
"""

import os

import numpy as np

_DISABLED = os.environ.get("GELCAL_DISABLE_NUMBA", "0").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError("disabled by GELCAL_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# numpy reference versions
# ---------------------------------------------------------------------------

def _rho_derivs_np(v, code, theta):
    if code == 0:
        return -0.5 * (v + 1.0) ** 2, -(v + 1.0), -np.ones_like(v)
    if code == 1:
        s = 1.0 - v
        return np.log(s), -1.0 / s, -1.0 / (s * s)
    if code == 2:
        e = -np.exp(v)
        return e, e, e
    s = 1.0 + theta * v
    return (-(s ** ((theta + 1.0) / theta)) / (theta + 1.0), -(s ** (1.0 / theta)), -(s ** (1.0 / theta - 1.0)))


def gel_accumulate_np(a, w, lam, code, theta, lo, hi):
    """Weighted GEL criterion sum(w rho(a lam)) with gradient and Hessian.

    Returns ``(ok, f, g, H)``; ``ok`` is False (and the rest zeros) when some
    ``v = a @ lam`` falls outside ``(lo, hi)``.
    """
    v = a @ lam
    q = a.shape[1]
    if np.any(v <= lo) or np.any(v >= hi):
        return False, 0.0, np.zeros(q), np.zeros((q, q))
    r0, r1, r2 = _rho_derivs_np(v, code, theta)
    f = float(w @ r0)
    g = a.T @ (w * r1)
    H = (a * (w * r2)[:, None]).T @ a
    return True, f, g, H


def logistic_accumulate_np(f, r, beta):
    """Bernoulli log-likelihood of ``r`` under logit(pi) = f @ beta.

    Returns ``(loglik, score, hessian, pi)``.
    """
    eta = f @ beta
    # log(1 + exp(eta)) without overflow
    log1pexp = np.logaddexp(0.0, eta)
    ll = float(r @ eta - log1pexp.sum())
    pi = 0.5 * (1.0 + np.tanh(0.5 * eta))
    score = f.T @ (r - pi)
    H = -(f * (pi * (1.0 - pi))[:, None]).T @ f
    return ll, score, H, pi


# ---------------------------------------------------------------------------
# numba versions
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True, fastmath=False)
    def gel_accumulate_nb(a, w, lam, code, theta, lo, hi):
        n, q = a.shape
        g = np.zeros(q)
        H = np.zeros((q, q))
        f = 0.0
        for i in range(n):
            v = 0.0
            for k in range(q):
                v += a[i, k] * lam[k]
            if v <= lo or v >= hi:
                return False, 0.0, np.zeros(q), np.zeros((q, q))
            if code == 0:
                r0 = -0.5 * (v + 1.0) * (v + 1.0)
                r1 = -(v + 1.0)
                r2 = -1.0
            elif code == 1:
                s = 1.0 - v
                r0 = np.log(s)
                r1 = -1.0 / s
                r2 = -1.0 / (s * s)
            elif code == 2:
                r0 = -np.exp(v)
                r1 = r0
                r2 = r0
            else:
                s = 1.0 + theta * v
                r0 = -(s ** ((theta + 1.0) / theta)) / (theta + 1.0)
                r1 = -(s ** (1.0 / theta))
                r2 = -(s ** (1.0 / theta - 1.0))
            wi = w[i]
            f += wi * r0
            c1 = wi * r1
            c2 = wi * r2
            for k in range(q):
                aik = a[i, k]
                g[k] += c1 * aik
                t = c2 * aik
                for l in range(k + 1):
                    H[k, l] += t * a[i, l]
        for k in range(q):
            for l in range(k):
                H[l, k] = H[k, l]
        return True, f, g, H

    @njit(cache=True, fastmath=False)
    def logistic_accumulate_nb(f, r, beta):
        n, p = f.shape
        score = np.zeros(p)
        H = np.zeros((p, p))
        pi = np.empty(n)
        ll = 0.0
        for i in range(n):
            eta = 0.0
            for k in range(p):
                eta += f[i, k] * beta[k]
            if eta > 0:
                l1pe = eta + np.log1p(np.exp(-eta))
            else:
                l1pe = np.log1p(np.exp(eta))
            ll += r[i] * eta - l1pe
            p_i = 0.5 * (1.0 + np.tanh(0.5 * eta))
            pi[i] = p_i
            res = r[i] - p_i
            wgt = p_i * (1.0 - p_i)
            for k in range(p):
                fik = f[i, k]
                score[k] += fik * res
                t = wgt * fik
                for l in range(k + 1):
                    H[k, l] -= t * f[i, l]
        for k in range(p):
            for l in range(k):
                H[l, k] = H[k, l]
        return ll, score, H, pi

    gel_accumulate = gel_accumulate_nb
    logistic_accumulate = logistic_accumulate_nb
else:
    gel_accumulate = gel_accumulate_np
    logistic_accumulate = logistic_accumulate_np

BACKEND = "numba" if HAVE_NUMBA else "numpy"
