"""Synthetic contextual environment.

Contexts are uniform on the unit cube, mean losses are Hölder-smooth
distance-to-anchor functions, and per-arm losses are drawn from one of
three [0,1]-bounded families whose parameters are inverted so that the
stated mean is the exact truncated mean.
"""

import math
import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

#: Truncation level for the Poisson family: losses are min(N, m)/m.
POISSON_TRUNCATION = 3

#: Resolution of the cached parameter-inversion table per noise family.
_INVERSION_GRID = 4097


def rng_stream(master_seed, *tags):
    """Deterministic random generator keyed by (master_seed, tags).

    Tags may be strings or integers; the derived stream is independent of
    scheduling, so parallel sweeps reproduce exactly.
    """
    key = [t if isinstance(t, int) else zlib.crc32(str(t).encode())
           for t in tags]
    return np.random.default_rng(np.random.SeedSequence(master_seed,
                                                        spawn_key=tuple(key)))


@dataclass(frozen=True)
class HolderMeanFunction:
    """mu(x) = clamp(offset + slope * ||x - anchor||^beta, lo, hi).

    The Hölder constant is exactly |slope| by construction, which makes
    the regularity property testable without slack.
    """

    beta: float
    offset: float
    slope: float
    anchor: np.ndarray
    lo: float = 0.05
    hi: float = 0.95

    def __post_init__(self):
        if not 0 < self.beta <= 1:
            raise ValueError("beta must be in (0, 1]")
        if not 0 < self.lo < self.hi < 1:
            raise ValueError("clamp range must satisfy 0 < lo < hi < 1")
        object.__setattr__(self, "anchor",
                           np.atleast_1d(np.asarray(self.anchor, dtype=float)))

    @property
    def holder_constant(self):
        return abs(self.slope)

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        r = np.linalg.norm(x - self.anchor)
        return float(np.clip(self.offset + self.slope * r ** self.beta,
                             self.lo, self.hi))

    def batch(self, xs):
        xs = np.asarray(xs, dtype=float)
        r = np.linalg.norm(xs - self.anchor, axis=-1)
        return np.clip(self.offset + self.slope * r ** self.beta,
                       self.lo, self.hi)


def truncated_exponential_mean(theta):
    """Mean of min(1, X) with X ~ Exp(rate theta)."""
    if theta <= 0:
        return 1.0
    return (1.0 - np.exp(-theta)) / theta


def truncated_poisson_mean(nu, m=POISSON_TRUNCATION):
    """Mean of min(N, m)/m with N ~ Poisson(nu)."""
    if nu <= 0:
        return 0.0
    probs = [np.exp(-nu) * nu ** n / math.factorial(n) for n in range(m)]
    tail = 1.0 - sum(probs)
    return (sum(n * p for n, p in enumerate(probs)) + m * tail) / m


def invert_family_mean(family, target, tol=1e-10):
    """Solve for the family parameter whose truncated mean equals ``target``.

    Plain bisection; the truncated means are strictly monotone in the
    parameter on the bracketing interval.
    """
    if family == "bernoulli":
        if not 0 <= target <= 1:
            raise ValueError(f"bernoulli mean {target} outside [0, 1]")
        return target
    if family == "truncated_exponential":
        fn, increasing = truncated_exponential_mean, False
        lo, hi = 1e-9, 500.0
    elif family == "truncated_poisson":
        fn, increasing = truncated_poisson_mean, True
        lo, hi = 1e-9, 500.0
    else:
        raise ValueError(f"unknown noise family '{family}'")
    f_lo, f_hi = fn(lo), fn(hi)
    lo_val, hi_val = (f_lo, f_hi) if increasing else (f_hi, f_lo)
    if not lo_val - 1e-9 <= target <= hi_val + 1e-9:
        raise ValueError(
            f"target mean {target} unattainable for family '{family}'")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (fn(mid) < target) == increasing:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


class ArmModel:
    """One arm: a Hölder mean function plus a bounded noise family."""

    FAMILIES = ("bernoulli", "truncated_exponential", "truncated_poisson")

    def __init__(self, mean: HolderMeanFunction, noise_family: str):
        if noise_family not in self.FAMILIES:
            raise ValueError(f"unknown noise family '{noise_family}'")
        self.mean = mean
        self.noise_family = noise_family
        if noise_family != "bernoulli":
            # Cache the parameter inversion on the attainable mean range;
            # per-draw lookups interpolate this table.
            mus = np.linspace(mean.lo, mean.hi, _INVERSION_GRID)
            self._grid_mus = mus
            self._grid_params = np.array(
                [invert_family_mean(noise_family, m) for m in mus])

    def mean_loss(self, x):
        return self.mean(x)

    def _param(self, mu):
        return np.interp(mu, self._grid_mus, self._grid_params)

    def sample(self, x, rng):
        return self.draw(self.mean(x), rng)

    def draw(self, mu, rng):
        """One loss draw at a precomputed mean (hot-loop path)."""
        u = rng.random()
        if self.noise_family == "bernoulli":
            return 1.0 if u < mu else 0.0
        if self.noise_family == "truncated_exponential":
            theta = float(np.interp(mu, self._grid_mus, self._grid_params))
            return min(1.0, -math.log1p(-u) / theta)
        nu = float(np.interp(mu, self._grid_mus, self._grid_params))
        m = POISSON_TRUNCATION
        term = math.exp(-nu)
        cdf = term
        for k in range(m):
            if u < cdf:
                return k / m
            term *= nu / (k + 1)
            cdf += term
        return 1.0

    def sample_batch(self, x, n, rng):
        mu = self.mean(x)
        u = rng.random(n)
        if self.noise_family == "bernoulli":
            return (u < mu).astype(float)
        if self.noise_family == "truncated_exponential":
            theta = self._param(mu)
            return np.minimum(1.0, -np.log1p(-u) / theta)
        # truncated_poisson: exact inverse-CDF of min(N, m)/m
        nu = self._param(mu)
        m = POISSON_TRUNCATION
        p0 = np.exp(-nu)
        cdf = np.cumsum([p0 * nu ** k / math.factorial(k)
                         for k in range(m)])
        counts = np.searchsorted(cdf, u)  # m means "tail", i.e. N >= m
        return counts / m


class LambdaFunction:
    """Regularization weight field lambda(x).

    Kinds: "const:c", "linear:a,b" (a + b*x_1) and
    "cosfield:amplitude,offset" (offset + amplitude*cos(2 pi x_1)).
    """

    def __init__(self, kind, params):
        self.kind = kind
        self.params = tuple(float(p) for p in params)
        if kind == "const":
            (c,) = self.params
            if c < 0:
                raise ValueError("constant lambda must be nonnegative")
            self.grad_bound = 0.0
        elif kind == "linear":
            a, b = self.params
            self.grad_bound = abs(b)
        elif kind == "cosfield":
            amp, off = self.params
            if off - abs(amp) <= 0:
                raise ValueError("cosfield lambda must stay positive")
            self.grad_bound = 2 * np.pi * abs(amp)
        else:
            raise ValueError(f"unknown lambda kind '{kind}'")

    @classmethod
    def from_spec(cls, spec: str):
        kind, _, rest = spec.partition(":")
        params = [p for p in rest.split(",") if p]
        return cls(kind, params)

    @property
    def is_constant(self):
        return self.kind == "const"

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == "const":
            return self.params[0]
        if self.kind == "linear":
            a, b = self.params
            return a + b * x[0]
        amp, off = self.params
        return off + amp * np.cos(2 * np.pi * x[0])

    def batch(self, xs):
        xs = np.asarray(xs, dtype=float)
        if self.kind == "const":
            return np.full(xs.shape[0], self.params[0])
        return np.array([self(x) for x in xs])


class Environment:
    """Immutable synthetic world: context distribution, arms, lambda field."""

    def __init__(self, d: int, arms: Sequence[ArmModel], lam: LambdaFunction):
        if d < 1:
            raise ValueError("dimension must be >= 1")
        if not arms:
            raise ValueError("need at least one arm")
        self.d = d
        self.arms = list(arms)
        self.lam = lam

    @property
    def K(self):
        return len(self.arms)

    def sample_context(self, rng):
        return rng.random(self.d)

    def sample_contexts(self, n, rng):
        return rng.random((n, self.d))

    def mean_vector(self, x):
        return np.array([arm.mean_loss(x) for arm in self.arms])

    def mean_matrix(self, xs):
        return np.column_stack([arm.mean.batch(xs) for arm in self.arms])


def make_environment(d, beta, arm_specs, lambda_spec):
    """Build an Environment from plain config data.

    ``arm_specs`` is a list of dicts with keys family, offset, slope,
    anchor and optionally lo/hi; ``lambda_spec`` is a string like
    "const:0.1".
    """
    arms = []
    for spec in arm_specs:
        mean = HolderMeanFunction(
            beta=beta,
            offset=float(spec["offset"]),
            slope=float(spec["slope"]),
            anchor=np.asarray(spec["anchor"], dtype=float),
            lo=float(spec.get("lo", 0.05)),
            hi=float(spec.get("hi", 0.95)),
        )
        arms.append(ArmModel(mean, spec["family"]))
    return Environment(d, arms, LambdaFunction.from_spec(lambda_spec))


def default_arm_specs(K, d):
    """Deterministic default arm layout used when a config omits arms."""
    families = ["bernoulli", "truncated_exponential", "truncated_poisson"]
    specs = []
    for k in range(K):
        anchor = np.full(d, (k + 0.5) / K)
        specs.append({
            "family": families[k % len(families)],
            "offset": 0.30 + 0.15 * (k % 3),
            "slope": 0.35 if k % 2 == 0 else -0.35,
            "anchor": anchor.tolist(),
        })
    return specs
