"""Independent reference computations used to freeze expected values."""

import numpy as np
from scipy.linalg import expm


def ascent_max_F(M, starts=50, iters=400, seed=0):
    """Best value of tr(M^T R) over SO(3) by multistart Riemannian gradient ascent."""
    rng = np.random.default_rng(seed)
    M = np.asarray(M, dtype=float)
    scale = max(np.linalg.norm(M), 1e-300)
    best, best_R = -np.inf, None
    for _ in range(starts):
        A = rng.standard_normal((3, 3))
        R = expm(A - A.T)
        for _ in range(iters):
            G = R.T @ M
            S = 0.5 * (G - G.T)
            if np.linalg.norm(S) < 1e-14 * scale:
                break
            R = R @ expm(0.5 * S / scale)
        val = float(np.sum(M * R))
        if val > best:
            best, best_R = val, R
    return best, best_R


def qbar_by_minimization(lam, mu, A):
    """min over a in R^3 of Q(A_hat + sym(a (x) e3)), brute-forced by a linear solve in coordinates."""
    A = np.asarray(A, dtype=float)

    def Q(F):
        S = 0.5 * (F + F.T)
        return lam * np.trace(S) ** 2 + 2 * mu * np.sum(S * S)

    Ahat = np.zeros((3, 3))
    Ahat[:2, :2] = A
    # Q is quadratic in a: assemble its Hessian and linear term by finite polarization
    E = []
    for i in range(3):
        B = np.zeros((3, 3))
        B[i, 2] += 1.0
        B[2, i] += 1.0
        E.append(B)
    H = np.array([[Q(E[i] + E[j]) - Q(E[i] - E[j]) for j in range(3)] for i in range(3)]) / 4
    g = np.array([(Q(Ahat + E[i]) - Q(Ahat - E[i])) / 2 for i in range(3)])
    a = np.linalg.solve(2 * H, -g)
    return Q(Ahat + sum(a[i] * E[i] for i in range(3)))
