"""End-to-end run of the binned bandit algorithm, plus sweep harness."""

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import regularizers
from .environment import (Environment, default_arm_specs, make_environment,
                          rng_stream)
from .partition import BinGrid, bin_average_lambda, select_bin_count
from .ucfw import (DEFAULT_CONFIDENCE_CONSTANT, DEFAULT_PRESAMPLE_CAP,
                   UcfwState, final_proportion, make_presample_schedule,
                   ucfw_step)


@dataclass
class RunConfig:
    """Everything one run needs; immutable by convention."""

    T: int
    K: int
    d: int
    regime: str
    regularizer: str
    lambda_spec: str
    beta: float
    seed: int
    arm_specs: Optional[Sequence[dict]] = None
    bins_override: Optional[int] = None
    theta_constant: float = 1.0
    quad_nodes: int = 32
    confidence_constant: float = DEFAULT_CONFIDENCE_CONSTANT
    presample_cap: float = DEFAULT_PRESAMPLE_CAP
    margin_exponent: float = 1.0 / 3.0
    margin_constant: float = 1.0
    margin_alpha: float = 0.5
    keep_context_log: bool = False

    def build_environment(self) -> Environment:
        specs = self.arm_specs or default_arm_specs(self.K, self.d)
        return make_environment(self.d, self.beta, specs, self.lambda_spec)

    def build_regularizer(self):
        return regularizers.from_spec(self.regularizer, self.K)

    def bin_count(self):
        if self.bins_override is not None:
            return self.bins_override
        return select_bin_count(self.T, self.beta, self.d, self.regime,
                                self.theta_constant)


class SizingError(ValueError):
    """Horizon too small for the selected grid."""


@dataclass
class PolicyResult:
    """Output of one run: per-bin proportions and pull logs."""

    B: int
    proportions: np.ndarray     # (n_bins, K)
    pull_counts: np.ndarray     # (n_bins, K), post-presample pulls
    presample_counts: np.ndarray  # (n_bins, K)
    means: np.ndarray           # (n_bins, K) empirical means
    t_b: np.ndarray             # contexts routed to each bin
    lam_bars: np.ndarray        # per-bin averaged lambda
    empty_flags: np.ndarray     # bool per bin
    min_floor: float            # smallest effective component over all steps
    elapsed: float
    mu_bars: Optional[np.ndarray] = None
    contexts: Optional[np.ndarray] = None


def run_algorithm(config: RunConfig, env: Optional[Environment] = None
                  ) -> PolicyResult:
    """Presample every bin, stream T contexts, return the learned policy.

    Deterministic given the config seed: contexts, presample draws and
    per-bin loss draws each use their own derived stream, so per-bin
    processing order cannot change the result.
    """
    start = time.perf_counter()
    if env is None:
        env = config.build_environment()
    reg = config.build_regularizer()
    B = config.bin_count()
    grid = BinGrid(B, config.d)
    n_bins = grid.n_bins
    if config.T < config.K * n_bins:
        raise SizingError(
            f"T={config.T} cannot afford one pull per arm on {n_bins} bins")

    lam_bars = np.array([bin_average_lambda(grid, b, env.lam,
                                            config.quad_nodes)
                         for b in range(n_bins)])
    # Ranks by ascending averaged lambda (1-based), used by the
    # intermediate presampling rule; the weight field is known to the agent.
    order = np.argsort(lam_bars, kind="stable")
    ranks = np.empty(n_bins, dtype=int)
    ranks[order] = np.arange(1, n_bins + 1)
    ill_cutoff = 0
    if config.regime == "intermediate":
        ill_cutoff = math.floor(
            n_bins * B ** (-config.margin_alpha * config.beta))

    t_b_est = max(1, config.T // n_bins)
    contexts = env.sample_contexts(config.T,
                                   rng_stream(config.seed, "context"))
    bin_of = grid.indices(contexts)

    states = []
    for b in range(n_bins):
        schedule = make_presample_schedule(
            config.regime, reg, lam_bars[b], t_b_est, config.K,
            bin_rank=int(ranks[b]), n_bins=n_bins, ill_bin_cutoff=ill_cutoff,
            cap=config.presample_cap,
            margin_exponent=config.margin_exponent,
            margin_constant=config.margin_constant)
        state = UcfwState.fresh(config.K, schedule, x_ref=grid.center(b))
        if schedule.total > 0:
            ps_rng = rng_stream(config.seed, "presample", b)
            center = grid.center(b)
            for k, count in enumerate(schedule.per_arm_counts):
                if count > 0:
                    state.record_presample(
                        k, env.arms[k].sample_batch(center, int(count), ps_rng))
        states.append(state)

    cc = config.confidence_constant
    for b in range(n_bins):
        mask = bin_of == b
        if not np.any(mask):
            continue
        xs = contexts[mask]
        loss_rng = rng_stream(config.seed, "loss", b)
        state = states[b]
        lam_bar = lam_bars[b]
        arms = env.arms
        mus = env.mean_matrix(xs)
        for row in mus:
            ucfw_step(state, lam_bar, reg,
                      lambda k: arms[k].draw(row[k], loss_rng),
                      confidence_constant=cc)

    props = np.empty((n_bins, config.K))
    flags = np.zeros(n_bins, dtype=bool)
    for b, state in enumerate(states):
        props[b], flags[b] = final_proportion(state)
    floors = [s.min_floor for s in states if math.isfinite(s.min_floor)]
    return PolicyResult(
        B=B,
        proportions=props,
        pull_counts=np.stack([s.pull_counts for s in states]),
        presample_counts=np.stack([s.schedule.per_arm_counts for s in states]),
        means=np.stack([s.means for s in states]),
        t_b=np.array([s.t for s in states]),
        lam_bars=lam_bars,
        empty_flags=flags,
        min_floor=min(floors) if floors else math.inf,
        elapsed=time.perf_counter() - start,
        contexts=contexts if config.keep_context_log else None,
    )


def _run_one(item):
    config_id, config = item
    try:
        return config_id, run_algorithm(config), None
    except Exception as exc:  # isolated per row by contract
        return config_id, None, f"{type(exc).__name__}: {exc}"


def run_sweep(configs, parallelism=1):
    """Run many configs; failures are recorded per row, never fatal.

    ``configs`` maps config ids to RunConfig (or is a sequence, in which
    case positions are the ids). Output rows are ordered by config id and
    independent of worker scheduling.
    """
    if isinstance(configs, dict):
        items = sorted(configs.items())
    else:
        items = list(enumerate(configs))
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_run_one, items))
    else:
        results = [_run_one(item) for item in items]
    return results


def sweep_parallelism(default=1):
    """Worker count from the environment, the only env-var knob."""
    try:
        return max(1, int(os.environ.get("REGCB_WORKERS", default)))
    except ValueError:
        return default
