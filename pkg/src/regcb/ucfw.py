"""Per-bin Upper-Confidence Frank-Wolfe learner.

Presampling is implemented as a fixed mixture with a base point: the
learner optimizes the inner proportion q while the effective proportion
alpha * p_o + (1 - alpha) * q keeps a time-invariant floor away from the
simplex boundary.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .regularizers import Regularizer
from .simplex import uniform

log = logging.getLogger(__name__)

DEFAULT_CONFIDENCE_CONSTANT = 2.0
DEFAULT_PRESAMPLE_CAP = 0.49


@dataclass(frozen=True)
class PresampleSchedule:
    """Mixture weight, base point and per-arm presample pull counts."""

    alpha: float
    base_point: np.ndarray
    per_arm_counts: np.ndarray

    @classmethod
    def empty(cls, K):
        return cls(0.0, uniform(K), np.zeros(K, dtype=int))

    @property
    def total(self):
        return int(self.per_arm_counts.sum())


def make_presample_schedule(regime, reg: Regularizer, lam_bar, t_b_est, K,
                            bin_rank=1, n_bins=1, ill_bin_cutoff=0,
                            cap=DEFAULT_PRESAMPLE_CAP,
                            margin_exponent=1.0 / 3.0, margin_constant=1.0):
    """Presampling schedule for one bin.

    Fast regime with a boundary-singular regularizer uses the
    exp(-1/lambda) mixture; the slow regime forces sqrt-horizon pulls per
    arm; smooth regularizers need no presampling; the intermediate regime
    applies the sqrt rule on the low-lambda bins (rank below the cutoff)
    and a rank-dependent linear rule elsewhere.
    """
    if t_b_est < 1:
        raise ValueError("expected bin occupancy must be >= 1")
    smooth = not isinstance(reg.smoothness, str)
    p0 = uniform(K)
    if lam_bar <= 0:
        return PresampleSchedule.empty(K)

    if regime == "fast" and smooth:
        return PresampleSchedule.empty(K)
    if regime == "fast":
        alpha = math.exp(-1.0 / lam_bar)
        count = math.ceil(t_b_est * alpha / K)
    elif regime == "slow":
        if smooth:
            return PresampleSchedule.empty(K)
        count = math.ceil(lam_bar * math.sqrt(t_b_est))
        alpha = K * count / t_b_est
    elif regime == "intermediate":
        if bin_rank <= ill_bin_cutoff:
            count = math.ceil(lam_bar * math.sqrt(t_b_est))
        else:
            gamma = margin_constant * (bin_rank / n_bins) ** margin_exponent
            count = math.ceil(t_b_est * gamma / 2.0)
        alpha = K * count / t_b_est
    else:
        raise ValueError(f"unknown regime '{regime}'")

    if alpha >= 0.5:
        log.warning("presample weight %.3f >= 1/2 (lambda too large); "
                    "capping at %.2f", alpha, cap)
        alpha = cap
        count = math.ceil(t_b_est * alpha / K)
    return PresampleSchedule(alpha, p0, np.full(K, count, dtype=int))


@dataclass
class UcfwState:
    """Mutable learner state for one bin."""

    schedule: PresampleSchedule
    pull_counts: np.ndarray       # post-presample pulls, defines q_t
    obs_counts: np.ndarray        # all observations, incl. presample draws
    means: np.ndarray             # running empirical means
    t: int = 0                    # post-presample step counter
    x_ref: Optional[np.ndarray] = None  # context at which reg references apply
    min_floor: float = math.inf   # smallest effective component seen so far

    @classmethod
    def fresh(cls, K, schedule=None, x_ref=None):
        if schedule is None:
            schedule = PresampleSchedule.empty(K)
        return cls(schedule=schedule,
                   pull_counts=np.zeros(K, dtype=int),
                   obs_counts=np.zeros(K, dtype=int),
                   means=np.zeros(K),
                   x_ref=x_ref)

    @property
    def K(self):
        return self.means.size

    def record_presample(self, arm, draws):
        """Fold presample draws for one arm into the mean estimates."""
        draws = np.asarray(draws, dtype=float)
        if draws.size == 0:
            return
        if np.any(draws < 0) or np.any(draws > 1):
            raise ValueError("loss outside [0, 1]")
        n0 = self.obs_counts[arm]
        n1 = n0 + draws.size
        self.means[arm] = (self.means[arm] * n0 + draws.sum()) / n1
        self.obs_counts[arm] = n1

    def inner_proportion(self):
        """q_t, the empirical pull-frequency vector (base point before any pull)."""
        if self.t == 0:
            return self.schedule.base_point.copy()
        return self.pull_counts / self.t

    def effective_proportion(self):
        a = self.schedule.alpha
        return a * self.schedule.base_point + (1.0 - a) * self.inner_proportion()


def lcb_gradient(state: UcfwState, lam_bar, reg: Regularizer, arm=None,
                 confidence_constant=DEFAULT_CONFIDENCE_CONSTANT):
    """Lower-confidence estimate of the per-arm gradient of the bin loss.

    Arms without any observation return -inf so they are pulled first.
    Returns the full K-vector when ``arm`` is None.
    """
    vec = _lcb_vector(state, lam_bar, reg, confidence_constant)
    return vec if arm is None else float(vec[arm])


def _lcb_vector(state, lam_bar, reg, confidence_constant):
    obs = state.obs_counts
    t_tot = int(obs.sum())
    lcb = np.full(state.K, -np.inf)
    seen = obs > 0
    if not np.any(seen):
        return lcb
    log_t = math.log(max(t_tot, 2))
    radius = np.sqrt(confidence_constant * log_t / obs[seen])
    lcb[seen] = state.means[seen] - radius
    if lam_bar != 0.0 and np.all(seen):
        a = state.schedule.alpha
        p_eff = state.effective_proportion()
        if reg.kind == "entropy":
            grad = 1.0 + np.log(p_eff)
        else:
            grad = reg.grad(p_eff, state.x_ref)
        lcb += lam_bar * (1.0 - a) * grad
    return lcb


def ucfw_step(state: UcfwState, lam_bar, reg: Regularizer, loss_fn,
              confidence_constant=DEFAULT_CONFIDENCE_CONSTANT):
    """One Frank-Wolfe step with bandit feedback: pick, pull, update.

    Ties break toward the lowest arm index. The 1/(t+1) step toward the
    chosen vertex is realized by the integer pull bookkeeping.
    """
    lcb = _lcb_vector(state, lam_bar, reg, confidence_constant)
    k = int(np.argmin(lcb))
    y = float(loss_fn(k))
    if not 0.0 <= y <= 1.0:
        raise ValueError(f"loss {y} outside [0, 1]")
    state.obs_counts[k] += 1
    state.means[k] += (y - state.means[k]) / state.obs_counts[k]
    state.pull_counts[k] += 1
    state.t += 1
    if state.schedule.alpha > 0:
        floor = float(np.min(state.effective_proportion()))
        if floor < state.min_floor:
            state.min_floor = floor
    return k


def final_proportion(state: UcfwState):
    """Effective proportion vector and an empty-bin flag.

    A bin that received no contexts and no presampling reports the
    uniform point, flagged so downstream reports can surface it.
    """
    if state.t == 0 and state.schedule.total == 0:
        return uniform(state.K), True
    return state.effective_proportion(), False
