"""Pure numpy derivative kernels for dense networks.

Reference implementation of the compiled kernels in ``_kernels.pyx``. Both
compute, for a batch of inputs, the selected output coordinate of an MLP
together with its input gradient and either the Hessian diagonal or the full
input Hessian. Second-order terms use forward-over-reverse propagation: the
reverse (adjoint) sweep is differentiated along each basis direction.
"""

import numpy as np

RELU = 0
SOFTPLUS = 1

ORDER_GRADIENT = 0
ORDER_DIAGONAL = 1
ORDER_FULL = 2

# samples per block; bounds the (n, width, d) tangent tensors
_CHUNK = 256


def _sigmoid(t):
    return np.exp(-np.logaddexp(0.0, -t))


def activation(z, act, beta):
    if act == RELU:
        return np.maximum(z, 0.0)
    return np.logaddexp(0.0, beta * z) / beta


def activation_derivs(z, act, beta):
    """First and second derivative of the hidden activation at ``z``."""
    if act == RELU:
        return (z > 0).astype(np.float64), np.zeros_like(z)
    s = _sigmoid(beta * z)
    return s, beta * s * (1.0 - s)


def forward(weights, biases, act, beta, X):
    a = X
    last = len(weights) - 1
    for l, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W.T + b
        a = z if l == last else activation(z, act, beta)
    return a


def _block(weights, biases, act, beta, X, out_index, order):
    n, d = X.shape
    L = len(weights)
    # forward sweep, keeping hidden pre-activations
    a = X
    zs = []
    for l in range(L - 1):
        z = a @ weights[l].T + biases[l]
        zs.append(z)
        a = activation(z, act, beta)
    out = a @ weights[-1].T + biases[-1]
    score = out[np.arange(n), out_index]

    # reverse sweep seeded with the one-hot selector of the scored output
    abar = weights[-1][out_index, :]
    s1, s2, abars = [], [], []
    for l in range(L - 1, 0, -1):
        d1, d2 = activation_derivs(zs[l - 1], act, beta)
        s1.append(d1)
        s2.append(d2)
        abars.append(abar)
        zbar = abar * d1
        abar = zbar @ weights[l - 1]
    grad = abar
    s1.reverse()
    s2.reverse()
    abars.reverse()

    if order == ORDER_GRADIENT:
        return score, grad, None
    if L == 1:
        if order == ORDER_DIAGONAL:
            return score, grad, np.zeros((n, d))
        return score, grad, np.zeros((n, d, d))

    # forward tangents along every basis direction: zdots[l] has shape (n, h_l, d)
    W0 = weights[0]
    zdots = [np.broadcast_to(W0, (n,) + W0.shape)]
    for l in range(1, L - 1):
        adot = s1[l - 1][:, :, None] * zdots[-1]
        zdots.append(np.matmul(weights[l], adot))

    # tangent of the reverse sweep; the output adjoint is constant, so the
    # top hidden layer starts from the curvature term alone
    top = L - 2
    zbardot = (abars[top] * s2[top])[:, :, None] * zdots[top]
    for l in range(top, 0, -1):
        abardot = np.matmul(weights[l].T, zbardot)
        zbardot = abardot * s1[l - 1][:, :, None] + (abars[l - 1] * s2[l - 1])[:, :, None] * zdots[l - 1]

    if order == ORDER_DIAGONAL:
        return score, grad, np.einsum("hd,nhd->nd", W0, zbardot)
    return score, grad, np.matmul(W0.T, zbardot)


def derivatives(weights, biases, act, beta, X, out_index, order):
    """Score, input gradient and (optionally) second derivatives for a batch.

    Parameters
    ----------
    weights, biases : list of ndarray
        Layer parameters; ``weights[l]`` has shape ``(out, in)``.
    act : int
        ``RELU`` or ``SOFTPLUS`` for every hidden layer.
    beta : float
        Softplus temperature (ignored for ReLU).
    X : ndarray, shape (n, d)
    out_index : ndarray of int, shape (n,)
        Output coordinate to differentiate for each sample.
    order : int
        ``ORDER_GRADIENT``, ``ORDER_DIAGONAL`` or ``ORDER_FULL``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    out_index = np.asarray(out_index, dtype=np.intp)
    n, d = X.shape
    if n <= _CHUNK:
        return _block(weights, biases, act, beta, X, out_index, order)
    parts = [
        _block(weights, biases, act, beta, X[i:i + _CHUNK], out_index[i:i + _CHUNK], order)
        for i in range(0, n, _CHUNK)
    ]
    score = np.concatenate([p[0] for p in parts])
    grad = np.concatenate([p[1] for p in parts])
    second = None if order == ORDER_GRADIENT else np.concatenate([p[2] for p in parts])
    return score, grad, second
