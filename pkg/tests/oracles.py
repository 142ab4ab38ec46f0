"""Reference computations written independently of the package.

Nothing here imports ``miprune``; each function takes plain arrays and uses
a different numerical route than the library (LU determinants, explicit
loops, grid integration) so agreement is meaningful.
"""

import itertools
import math

import numpy as np


def random_pd(rng, n, cond_floor=0.05):
    """A random dense SPD matrix with eigenvalues bounded away from zero."""
    a = rng.standard_normal((n, n))
    q, _ = np.linalg.qr(a)
    eig = rng.uniform(cond_floor, 3.0, n)
    return (q * eig) @ q.T


def lu_logdet(m):
    """log det via LU (``np.linalg.det``), no Cholesky."""
    return math.log(np.linalg.det(np.asarray(m, dtype=np.float64)))


def sub(cov, idx):
    idx = list(idx)
    return cov[np.ix_(idx, idx)]


def gaussian_mi(cov, a, b):
    """I(A;B) from LU determinants."""
    a, b = list(a), list(b)
    return 0.5 * (lu_logdet(sub(cov, a)) + lu_logdet(sub(cov, b)) - lu_logdet(sub(cov, a + b)))


def gaussian_cmi(cov, a, b, z):
    a, b, z = list(a), list(b), list(z)
    if not z:
        return gaussian_mi(cov, a, b)
    return 0.5 * (
        lu_logdet(sub(cov, a + z)) + lu_logdet(sub(cov, b + z))
        - lu_logdet(sub(cov, z)) - lu_logdet(sub(cov, a + b + z))
    )


def enumerate_best(cov, upper, candidates, k):
    """Best size-k subset by plain enumeration; first strict improvement wins."""
    best, best_val = None, -math.inf
    for combo in itertools.combinations(candidates, k):
        val = gaussian_mi(cov, upper, combo)
        if val > best_val + 1e-12:
            best, best_val = list(combo), val
    return best, best_val


def mrmr_reference(cov, upper, candidates, k, alpha, beta):
    """Score-by-score loop: I(U;d) - alpha I(d;S) + beta I(d;S|U)."""
    upper = list(upper)
    chosen = []
    remaining = list(candidates)
    for _ in range(k):
        best, best_score = None, -math.inf
        for d in remaining:
            score = gaussian_mi(cov, upper, [d])
            if chosen:
                score -= alpha * gaussian_mi(cov, [d], chosen)
                score += beta * gaussian_cmi(cov, [d], chosen, upper)
            if score > best_score + 1e-12:
                best, best_score = d, score
        chosen.append(best)
        remaining.remove(best)
    return chosen


def bivariate_mi_grid(rho, half_width=8.0, n=1601):
    """I(X;Y) of a unit bivariate normal by trapezoid integration on a grid."""
    x = np.linspace(-half_width, half_width, n)
    xx, yy = np.meshgrid(x, x, indexing="ij")
    det = 1.0 - rho * rho
    joint = np.exp(-(xx**2 - 2 * rho * xx * yy + yy**2) / (2 * det)) / (2 * np.pi * np.sqrt(det))
    marg = np.exp(-(x**2) / 2) / np.sqrt(2 * np.pi)
    prod = marg[:, None] * marg[None, :]
    integrand = np.where(joint > 1e-300, joint * np.log(joint / prod), 0.0)
    return float(np.trapezoid(np.trapezoid(integrand, x, axis=1), x))


def masked_forward_loop(weights, biases, activations, residual, masks, x):
    """Row-by-row, element-by-element masked forward pass."""
    acts = {"relu": lambda v: max(v, 0.0), "tanh": math.tanh, "identity": lambda v: v}
    out = np.zeros((x.shape[0], weights[-1].shape[0]))
    for r in range(x.shape[0]):
        h = list(x[r])
        for l, (w, b) in enumerate(zip(weights, biases)):
            h = [h[j] if masks[l][j] else 0.0 for j in range(len(h))]
            nxt = []
            for i in range(w.shape[0]):
                z = b[i] + sum(w[i, j] * h[j] for j in range(len(h)))
                v = acts[activations[l]](z)
                nxt.append(v + h[i] if residual[l] else v)
            h = nxt
        out[r] = h
    return out
