"""Reference computations that share no code with the package.

Everything here works from function values or plain numpy algebra, so a
test comparing the package against it checks two independent routes.
"""

import itertools
import math

import numpy as np


def net_forward(weights, biases, x, beta=None):
    """Dense net on one input vector; softplus(beta) hidden units, ReLU when beta is None."""
    a = np.asarray(x, dtype=np.float64)
    for layer, (W, b) in enumerate(zip(weights, biases)):
        z = np.asarray(W) @ a + np.asarray(b)
        if layer < len(weights) - 1:
            a = np.maximum(z, 0.0) if beta is None else np.logaddexp(0.0, beta * z) / beta
        else:
            a = z
    return a


def fd_gradient(f, x, h=1e-4):
    x = np.asarray(x, dtype=np.float64)
    g = np.empty(len(x))
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_hessian(f, x, h=1e-3):
    """Second-order central differences from function values only."""
    x = np.asarray(x, dtype=np.float64)
    d = len(x)
    H = np.empty((d, d))
    f0 = f(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h**2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h * h)
    return H


def rel_err(a, b):
    """Largest entrywise error relative to the reference magnitude (floored at 1)."""
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def lstsq_r2(X, y):
    A = np.column_stack([X, np.ones(len(X))])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return 1.0 - float(resid @ resid) / float(((y - y.mean()) ** 2).sum())


def gd_least_squares(X, y, lam, steps=20000):
    """Ridge by plain gradient descent on centred data."""
    xm, ym = X.mean(axis=0), y.mean()
    Xc, yc = X - xm, y - ym
    lr = 1.0 / (np.linalg.norm(Xc, 2) ** 2 + lam)
    w = np.zeros(X.shape[1])
    for _ in range(steps):
        w -= lr * (Xc.T @ (Xc @ w - yc) + lam * w)
    return w, ym - xm @ w


def exact_shapley(f, x, baseline):
    """Shapley values by enumerating every ordering."""
    d = len(x)
    phi = np.zeros(d)
    perms = list(itertools.permutations(range(d)))
    for order in perms:
        z = np.array(baseline, dtype=np.float64)
        prev = f(z)
        for i in order:
            z[i] = x[i]
            cur = f(z)
            phi[i] += cur - prev
            prev = cur
    return phi / math.factorial(d)


def pearson(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    da, db = a - a.mean(), b - b.mean()
    return float((da * db).sum() / math.sqrt((da * da).sum() * (db * db).sum()))
