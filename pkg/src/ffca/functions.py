"""Closed-form differentiable functions usable wherever a model is analysed.

Any object with ``n_features`` and the methods ``score``, ``gradients``,
``hessian_diagonals`` and ``hessians`` (see :class:`ffca.model.ModelFunction`)
can be passed to the signature code. Other derivative engines can be plugged
in the same way.
"""

from __future__ import annotations

from typing import Protocol

import numpy as np

from .errors import DimensionMismatchError


class DifferentiableFunction(Protocol):
    n_features: int

    def score(self, X) -> np.ndarray: ...

    def gradients(self, X) -> np.ndarray: ...

    def hessian_diagonals(self, X) -> tuple[np.ndarray, np.ndarray]: ...

    def hessians(self, X) -> tuple[np.ndarray, np.ndarray]: ...


class Polynomial:
    """Sum of monomials ``coef * prod(v[i] ** p)`` over features and context variables.

    Variables ``0 .. n_features-1`` are the inputs; variables from
    ``n_features`` on are latent context values that are supplied per sample
    via :meth:`bind` and are never differentiated.

    >>> f = Polynomial(2, [(1.0, {0: 1, 1: 1})])   # f = x0 * x1
    >>> f.hessians(np.zeros((1, 2)))[1][0].tolist()
    [[0.0, 1.0], [1.0, 0.0]]
    """

    def __init__(self, n_features: int, terms, n_context: int = 0, context=None):
        self.n_features = int(n_features)
        self.n_context = int(n_context)
        self.terms = [(float(c), {int(k): int(p) for k, p in powers.items()}) for c, powers in terms]
        for _, powers in self.terms:
            for k, p in powers.items():
                if not 0 <= k < self.n_features + self.n_context or p < 0:
                    raise ValueError(f"bad monomial variable {k} or power {p}")
        self.context = None if context is None else np.asarray(context, dtype=np.float64).reshape(-1, self.n_context)

    def bind(self, context) -> "Polynomial":
        """Copy of this function whose context values are fixed per sample row."""
        return Polynomial(self.n_features, self.terms, self.n_context, context)

    def coefficient(self, powers: dict) -> float:
        """Coefficient of the monomial with exactly these powers (0 if absent)."""
        key = {int(k): int(p) for k, p in powers.items() if p}
        return sum(c for c, pw in self.terms if {k: p for k, p in pw.items() if p} == key)

    def _vars(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise DimensionMismatchError(f"function expects {self.n_features} features, got {X.shape[1]}")
        if not self.n_context:
            return X
        if self.context is None or len(self.context) != len(X):
            raise DimensionMismatchError("bind() a context array with one row per sample before evaluating")
        return np.hstack([X, self.context])

    @staticmethod
    def _monomial(V, powers, drop=()):
        out = np.ones(len(V))
        for k, p in powers.items():
            p -= drop.count(k)
            if p < 0:
                return None, 0.0
            if p:
                out = out * V[:, k] ** p
        factor = 1.0
        for k in set(drop):
            m = drop.count(k)
            for j in range(m):
                factor *= powers.get(k, 0) - j
        return out, factor

    def score(self, X) -> np.ndarray:
        V = self._vars(X)
        out = np.zeros(len(V))
        for c, powers in self.terms:
            out = out + c * self._monomial(V, powers)[0]
        return out

    def gradients(self, X) -> np.ndarray:
        V = self._vars(X)
        G = np.zeros((len(V), self.n_features))
        for c, powers in self.terms:
            for i in powers:
                if i >= self.n_features:
                    continue
                m, f = self._monomial(V, powers, (i,))
                if m is not None and f:
                    G[:, i] += c * f * m
        return G

    def hessians(self, X):
        V = self._vars(X)
        H = np.zeros((len(V), self.n_features, self.n_features))
        for c, powers in self.terms:
            idx = [i for i in powers if i < self.n_features]
            for a in idx:
                for b in idx:
                    m, f = self._monomial(V, powers, (a, b))
                    if m is not None and f:
                        H[:, a, b] += c * f * m
        return self.gradients(X), H

    def hessian_diagonals(self, X):
        g, H = self.hessians(X)
        return g, np.diagonal(H, axis1=1, axis2=2).copy()
