"""Convex regularization functions on the simplex.

Three families are supported: negative entropy, KL divergence to a
reference policy, and squared Euclidean distance to a reference policy.
Each one exposes its value, gradient, Legendre-Fenchel conjugate and
conjugate gradient, together with curvature certificates and the
reduction to a context-free core plus a linear shift.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .simplex import check_simplex, project_to_simplex, uniform

#: Marker for regularizers whose Hessian blows up on the simplex boundary.
UNBOUNDED_ON_BOUNDARY = "unbounded-on-boundary"

#: Floor imposed on reference-policy components (keeps -log q bounded).
REFERENCE_FLOOR = 1e-6


def _logsumexp(y):
    m = np.max(y)
    return m + np.log(np.sum(np.exp(y - m)))


def _softmax(y):
    m = np.max(y)
    e = np.exp(y - m)
    return e / e.sum()


def _xlogx(p):
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log(p[pos])
    return out


class Regularizer:
    """Base class: a convex penalty on the simplex, possibly context-dependent."""

    kind: str
    zeta: float
    smoothness: object  # float or UNBOUNDED_ON_BOUNDARY

    def value(self, p, x=None) -> float:
        raise NotImplementedError

    def grad(self, p, x=None) -> np.ndarray:
        raise NotImplementedError

    def conjugate(self, y, x=None) -> float:
        raise NotImplementedError

    def conjugate_grad(self, y, x=None) -> np.ndarray:
        raise NotImplementedError

    def reduce_to_standard(self) -> "ReducedRegularizer":
        raise NotImplementedError


class Entropy(Regularizer):
    """Negative entropy sum_i p_i log p_i, with the 0 log 0 = 0 convention."""

    kind = "entropy"
    zeta = 1.0
    smoothness = UNBOUNDED_ON_BOUNDARY

    def value(self, p, x=None):
        p = check_simplex(p)
        return float(_xlogx(p).sum())

    def grad(self, p, x=None):
        p = check_simplex(p)
        if np.any(p <= 0):
            raise ValueError("entropy gradient undefined on the simplex boundary")
        return 1.0 + np.log(p)

    def conjugate(self, y, x=None):
        return float(_logsumexp(np.asarray(y, dtype=float)))

    def conjugate_grad(self, y, x=None):
        return _softmax(np.asarray(y, dtype=float))

    def reduce_to_standard(self):
        return ReducedRegularizer(core=self,
                                  shift=lambda x: np.zeros(0),
                                  offset=lambda x: 0.0,
                                  identity=True)


def _eval_reference(reference, x, floor_check=True):
    q = np.asarray(reference(x), dtype=float)
    q = check_simplex(q)
    if floor_check and np.any(q < REFERENCE_FLOOR):
        raise ValueError(
            f"reference policy component below {REFERENCE_FLOOR}: {q}")
    return q


class KLDivergence(Regularizer):
    """KL divergence to a strictly positive reference policy q(x)."""

    kind = "kl"
    zeta = 1.0
    smoothness = UNBOUNDED_ON_BOUNDARY

    def __init__(self, reference: Callable):
        self.reference = reference

    def value(self, p, x=None):
        p = check_simplex(p)
        q = _eval_reference(self.reference, x)
        return float(_xlogx(p).sum() - np.sum(p * np.log(q)))

    def grad(self, p, x=None):
        p = check_simplex(p)
        if np.any(p <= 0):
            raise ValueError("KL gradient undefined on the simplex boundary")
        q = _eval_reference(self.reference, x)
        return 1.0 + np.log(p) - np.log(q)

    def conjugate(self, y, x=None):
        # sup_p <p,y> - KL(p||q) = log sum_i q_i exp(y_i)
        y = np.asarray(y, dtype=float)
        q = _eval_reference(self.reference, x)
        return float(_logsumexp(y + np.log(q)))

    def conjugate_grad(self, y, x=None):
        y = np.asarray(y, dtype=float)
        q = _eval_reference(self.reference, x)
        return _softmax(y + np.log(q))

    def reduce_to_standard(self):
        ref = self.reference

        def shift(x):
            return -np.log(_eval_reference(ref, x))

        return ReducedRegularizer(core=Entropy(), shift=shift,
                                  offset=lambda x: 0.0)


class SquaredNorm(Regularizer):
    """||p||^2, the context-free core of the squared-distance penalty."""

    kind = "squared_norm"
    zeta = 2.0
    smoothness = 2.0

    def value(self, p, x=None):
        p = check_simplex(p)
        return float(np.dot(p, p))

    def grad(self, p, x=None):
        return 2.0 * check_simplex(p)

    def conjugate(self, y, x=None):
        y = np.asarray(y, dtype=float)
        p = project_to_simplex(y / 2.0)
        return float(np.dot(p, y) - np.dot(p, p))

    def conjugate_grad(self, y, x=None):
        y = np.asarray(y, dtype=float)
        return project_to_simplex(y / 2.0)


class SquaredDistance(Regularizer):
    """Squared Euclidean distance ||p - q(x)||^2 to a reference policy."""

    kind = "l2"
    zeta = 2.0
    smoothness = 2.0

    def __init__(self, reference: Callable):
        self.reference = reference

    def value(self, p, x=None):
        p = check_simplex(p)
        q = _eval_reference(self.reference, x, floor_check=False)
        d = p - q
        return float(np.dot(d, d))

    def grad(self, p, x=None):
        p = check_simplex(p)
        q = _eval_reference(self.reference, x, floor_check=False)
        return 2.0 * (p - q)

    def conjugate(self, y, x=None):
        y = np.asarray(y, dtype=float)
        q = _eval_reference(self.reference, x, floor_check=False)
        p = project_to_simplex(q + y / 2.0)
        d = p - q
        return float(np.dot(p, y) - np.dot(d, d))

    def conjugate_grad(self, y, x=None):
        y = np.asarray(y, dtype=float)
        q = _eval_reference(self.reference, x, floor_check=False)
        return project_to_simplex(q + y / 2.0)

    def reduce_to_standard(self):
        ref = self.reference

        def shift(x):
            return -2.0 * _eval_reference(ref, x, floor_check=False)

        def offset(x):
            q = _eval_reference(ref, x, floor_check=False)
            return float(np.dot(q, q))

        return ReducedRegularizer(core=SquaredNorm(), shift=shift,
                                  offset=offset)


@dataclass
class ReducedRegularizer:
    """Decomposition rho(p, x) = core(p) + <p, shift(x)> + offset(x)."""

    core: Regularizer
    shift: Callable
    offset: Callable
    identity: bool = False

    def value(self, p, x=None):
        if self.identity:
            return self.core.value(p)
        return self.core.value(p) + float(np.dot(p, self.shift(x))) \
            + self.offset(x)


def _make_reference(name: str, k: int) -> Callable:
    if name == "uniform":
        q = uniform(k)
        return lambda x: q
    raise ValueError(f"unknown reference policy '{name}'")


def from_spec(spec: str, k: int) -> Regularizer:
    """Build a regularizer from a config string.

    Accepted forms: "entropy", "kl:<reference>", "l2:<reference>" where
    <reference> names a built-in reference policy (currently "uniform").
    """
    if spec == "entropy":
        return Entropy()
    if ":" in spec:
        family, ref = spec.split(":", 1)
        if family == "kl":
            return KLDivergence(_make_reference(ref, k))
        if family == "l2":
            return SquaredDistance(_make_reference(ref, k))
    raise ValueError(f"unknown regularizer spec '{spec}'")
