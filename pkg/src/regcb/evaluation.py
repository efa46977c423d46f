"""Ground-truth evaluation: oracle policies, exact loss, regret reports.

Everything here is deterministic given its inputs; expectation over
algorithm randomness is handled by replication averaging at the sweep
level.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .environment import Environment
from .partition import BinGrid, bin_average_lambda, bin_average_means
from .regularizers import Entropy, KLDivergence, Regularizer, SquaredDistance, _softmax
from .simplex import check_simplex, project_to_simplex, uniform

DEFAULT_QUAD_NODES = {1: 512, 2: 64, 3: 16}
MONTE_CARLO_NODES = 10 ** 6


def simplex_minimize(value_fn, grad_fn, K, max_iter=5000, tol=1e-12,
                     polish=True):
    """Minimize a convex differentiable function over the unit simplex.

    Entropic mirror descent (step 1/sqrt(t), early stop on iterate
    movement) followed by an SLSQP polish; the mirror-descent schedule
    alone stalls around 1e-4, far short of the certification tolerances.
    """
    p = uniform(K)
    for t in range(1, max_iter + 1):
        g = np.asarray(grad_fn(p), dtype=float)
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient in simplex_minimize")
        step = 1.0 / math.sqrt(t)
        z = np.log(p) - step * (g - g.min())
        z -= z.max()
        nxt = np.exp(z)
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - p)) < 1e-10:
            p = nxt
            break
        p = nxt
    if not polish:
        return p

    def objective(q):
        q = np.maximum(q, 0.0)
        q = q / q.sum()
        return value_fn(q)

    res = optimize.minimize(
        objective, p, jac=None, method="SLSQP",
        bounds=[(0.0, 1.0)] * K,
        constraints=[{"type": "eq", "fun": lambda q: q.sum() - 1.0}],
        options={"maxiter": 300, "ftol": 1e-14},
    )
    cand = np.maximum(res.x, 0.0)
    cand /= cand.sum()
    val_c, val_p = value_fn(cand), value_fn(p)
    if not math.isfinite(val_c):
        return p
    return cand if val_c <= val_p else p


def oracle_pstar(mu, lam, reg: Regularizer, x=None):
    """Closed-form minimizer of p -> <mu, p> + lam * rho(p, x)."""
    mu = np.asarray(mu, dtype=float)
    if lam <= 0:
        raise ValueError("oracle optimum requires lambda > 0")
    if isinstance(reg, Entropy):
        return _softmax(-mu / lam)
    if isinstance(reg, KLDivergence):
        return reg.conjugate_grad(-mu / lam, x)
    if isinstance(reg, SquaredDistance):
        q = np.asarray(reg.reference(x), dtype=float)
        return project_to_simplex(q - mu / (2.0 * lam))
    raise ValueError(f"no oracle for regularizer kind '{reg.kind}'")


def oracle_policy(env: Environment, reg: Regularizer):
    """Pointwise-optimal policy x -> p*(x)."""

    def policy(x):
        return oracle_pstar(env.mean_vector(x), env.lam(x), reg, x)

    return policy


def piecewise_policy(grid: BinGrid, proportions):
    """Piecewise-constant policy from per-bin proportion vectors."""
    proportions = np.asarray(proportions, dtype=float)

    def policy(x):
        return proportions[grid.index(x)]

    return policy


def eta(x, env: Environment, reg: Regularizer):
    """Distance of the pointwise optimum to the simplex boundary.

    Uses the sqrt(K/(K-1)) * min_i p*_i identity for interior distance.
    """
    p = oracle_pstar(env.mean_vector(x), env.lam(x), reg, x)
    K = p.size
    return math.sqrt(K / (K - 1.0)) * float(np.min(p))


def _midpoint_nodes(d, G):
    offsets = (np.arange(G) + 0.5) / G
    mesh = np.meshgrid(*([offsets] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def loss_functional(policy, env: Environment, reg: Regularizer,
                    grid: Optional[BinGrid] = None, nodes=None,
                    monte_carlo=False, rng=None):
    """Integral of <mu(x), p(x)> + lambda(x) * rho(p(x), x) over the cube.

    Midpoint quadrature, bin-aligned when a grid is supplied so that
    piecewise-constant policies are integrated without boundary smearing.
    For d > 3 tensor quadrature is refused; pass monte_carlo=True for a
    uniform-sampling estimate instead.
    """
    d = env.d
    if monte_carlo:
        if rng is None:
            raise ValueError("monte_carlo mode needs an rng")
        pts = env.sample_contexts(MONTE_CARLO_NODES, rng)
        vals = np.array([_pointwise_loss(policy, env, reg, x) for x in pts])
        return float(vals.mean()), float(vals.std() / math.sqrt(vals.size))
    if d > 3:
        raise ValueError("tensor quadrature refused for d > 3; "
                         "use monte_carlo=True")
    if grid is not None:
        per_bin = max(1, round((nodes or DEFAULT_QUAD_NODES[d]) / grid.B))
        total = 0.0
        for b in range(grid.n_bins):
            pts = grid.quad_nodes(b, per_bin)
            total += sum(_pointwise_loss(policy, env, reg, x) for x in pts) \
                / (per_bin ** d)
        return total * grid.cell_volume
    G = nodes or DEFAULT_QUAD_NODES[d]
    pts = _midpoint_nodes(d, G)
    return float(np.mean([_pointwise_loss(policy, env, reg, x) for x in pts]))


def _pointwise_loss(policy, env, reg, x):
    p = policy(x)
    val = float(np.dot(env.mean_vector(x), p))
    lam = env.lam(x)
    if lam != 0.0:
        val += lam * reg.value(p, x)
    return val


def approximation_error(env: Environment, reg: Regularizer, B,
                        nodes_total=2048):
    """Gap of the best piecewise-constant policy, via conjugates.

    Integrates lambda(x) rho*(-mu(x)/lambda(x)) minus the per-bin value
    lambda_bar rho*(-mu_bar/lambda_bar); this is the dual route,
    independent of the primal oracle-policy evaluation.
    """
    grid = BinGrid(B, env.d)
    per_bin = max(1, round(nodes_total / B)) if env.d == 1 else 8
    total = 0.0
    for b in range(grid.n_bins):
        pts = grid.quad_nodes(b, per_bin)
        lam_bar = bin_average_lambda(grid, b, env.lam, per_bin)
        mu_bar = bin_average_means(grid, b, env, per_bin)
        xc = grid.center(b)
        inner = 0.0
        for x in pts:
            lam = env.lam(x)
            inner += lam * reg.conjugate(-env.mean_vector(x) / lam, x)
        inner /= pts.shape[0]
        inner -= lam_bar * reg.conjugate(-mu_bar / lam_bar, xc)
        total += inner
    return total * grid.cell_volume


@dataclass
class RegretReport:
    """Regret and its estimation/approximation decomposition."""

    regret: float
    estimation_error: float
    approximation_error: float
    normalized_regret: float
    quad_nodes: int
    empty_bin_count: int = 0

    def check_identity(self, tol=1e-8):
        return abs(self.regret
                   - self.estimation_error - self.approximation_error) <= tol


def fast_rate_normalizer(T, beta, d):
    """Theoretical fast-rate envelope (T / log^2 T)^(-2 beta / (2 beta + d))."""
    return (T / math.log(T) ** 2) ** (-2.0 * beta / (2.0 * beta + d))


def slow_rate_normalizer(T, beta, d):
    return (T / math.log(T)) ** (-beta / (2.0 * beta + d))


def regret_report(policy_result, env: Environment, reg: Regularizer, T,
                  beta, nodes=None) -> RegretReport:
    """Exact-quadrature regret of a finished run against its environment."""
    grid = BinGrid(policy_result.B, env.d)
    nodes = nodes or DEFAULT_QUAD_NODES[env.d] if env.d <= 3 else None
    learned = piecewise_policy(grid, policy_result.proportions)
    lam_positive = _lambda_positive(env, grid)
    l_learned = loss_functional(learned, env, reg, grid=grid, nodes=nodes)
    if lam_positive:
        pw_star = np.array([
            oracle_pstar(policy_result.mu_bars[b]
                         if policy_result.mu_bars is not None
                         else bin_average_means(grid, b, env),
                         policy_result.lam_bars[b], reg, grid.center(b))
            for b in range(grid.n_bins)])
        best_pw = piecewise_policy(grid, pw_star)
        l_best_pw = loss_functional(best_pw, env, reg, grid=grid, nodes=nodes)
        l_star = loss_functional(oracle_policy(env, reg), env, reg,
                                 grid=grid, nodes=nodes)
    else:
        # lambda == 0: plain bandit loss, optimum is the best-arm policy.
        def best_arm(x):
            mu = env.mean_vector(x)
            p = np.zeros(mu.size)
            p[int(np.argmin(mu))] = 1.0
            return p

        pw_star = np.array([_vertex(np.argmin(bin_average_means(grid, b, env)),
                                    env.K) for b in range(grid.n_bins)])
        l_best_pw = loss_functional(piecewise_policy(grid, pw_star), env, reg,
                                    grid=grid, nodes=nodes)
        l_star = loss_functional(best_arm, env, reg, grid=grid, nodes=nodes)
    est = l_learned - l_best_pw
    approx = l_best_pw - l_star
    regret = l_learned - l_star
    return RegretReport(
        regret=regret,
        estimation_error=est,
        approximation_error=approx,
        normalized_regret=regret / fast_rate_normalizer(T, beta, env.d),
        quad_nodes=nodes,
        empty_bin_count=int(np.sum(policy_result.empty_flags)),
    )


def _vertex(i, K):
    p = np.zeros(K)
    p[int(i)] = 1.0
    return p


def _lambda_positive(env, grid):
    if env.lam.is_constant:
        return env.lam.params[0] > 0
    return all(env.lam(grid.center(b)) > 0 for b in range(grid.n_bins))


@dataclass
class MarginProbe:
    """Monte-Carlo tails of lambda(x) and eta(x) with a fitted exponent."""

    deltas: np.ndarray
    lambda_tail: np.ndarray
    eta_tail: np.ndarray
    lambda_exponent: Optional[float]
    eta_exponent: Optional[float]


def _fit_tail_exponent(deltas, probs):
    mask = (probs >= 1e-3) & (probs <= 1e-1)
    if mask.sum() < 2:
        return None
    slope = np.polyfit(np.log(deltas[mask]), np.log(probs[mask]), 1)[0]
    return float(slope)


def margin_probe(env: Environment, reg: Regularizer, deltas, n_samples,
                 rng) -> MarginProbe:
    """Empirical margin-condition tails over uniform contexts."""
    if n_samples < 10 ** 4:
        raise ValueError("margin probe needs at least 1e4 samples")
    deltas = np.sort(np.asarray(deltas, dtype=float))
    xs = env.sample_contexts(n_samples, rng)
    lam_vals = env.lam.batch(xs)
    eta_vals = np.array([eta(x, env, reg) for x in xs]) \
        if np.all(lam_vals > 0) else np.full(n_samples, np.nan)
    lam_tail = np.array([(lam_vals < d).mean() for d in deltas])
    eta_tail = np.array([(eta_vals < d).mean() for d in deltas])
    return MarginProbe(
        deltas=deltas,
        lambda_tail=lam_tail,
        eta_tail=eta_tail,
        lambda_exponent=_fit_tail_exponent(deltas, lam_tail),
        eta_exponent=_fit_tail_exponent(deltas, eta_tail),
    )
