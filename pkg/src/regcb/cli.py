"""Command-line front end: config parsing, sweeps, CSV emission."""

import argparse
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .environment import make_environment, rng_stream
from .evaluation import (fast_rate_normalizer, margin_probe, regret_report,
                         slow_rate_normalizer)
from .orchestrator import (RunConfig, run_sweep, sweep_parallelism)
from . import regularizers

CSV_HEADER = ("beta,T,rep,seed,bins,regret,regret_times_T,normalized_regret,"
              "estimation_error,approximation_error,empty_bin_count")

_ALLOWED_KEYS = {
    "beta", "T", "reps", "regime", "seed", "out", "K", "d", "regularizer",
    "lambda", "arms", "bins", "theta_constant", "quad_nodes",
    "confidence_constant", "presample_cap", "margin_exponent",
    "margin_constant", "margin_alpha",
}


class ConfigError(ValueError):
    """Invalid sweep configuration; message names the offending key."""


@dataclass
class SweepSpec:
    """Validated description of one experiment sweep."""

    betas: Sequence[float]
    Ts: Sequence[int]
    reps: int
    regime: str
    seed: int
    out: str
    K: int = 3
    d: int = 1
    regularizer: str = "entropy"
    lambda_spec: str = "const:0.1"
    arms: Optional[Sequence[dict]] = None
    bins: Optional[int] = None
    theta_constant: float = 1.0
    quad_nodes: int = 32
    confidence_constant: float = 2.0
    presample_cap: float = 0.49
    margin_exponent: float = 1.0 / 3.0
    margin_constant: float = 1.0
    margin_alpha: float = 0.5
    overridden: Sequence[str] = field(default_factory=list)


def parse_config(path=None, overrides=None) -> SweepSpec:
    """Merge a JSON config file with flag overrides and validate.

    Flags win over file values; every violation reports the offending key
    and the constraint.
    """
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}")
    unknown = set(data) - _ALLOWED_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    overridden = []
    for key, value in (overrides or {}).items():
        if value is not None:
            if key in data:
                overridden.append(key)
            data[key] = value

    def need(key):
        if key not in data:
            raise ConfigError(f"missing required key '{key}'")
        return data[key]

    betas = [float(b) for b in _as_list(need("beta"))]
    if not betas:
        raise ConfigError("beta: list must be nonempty")
    for b in betas:
        if not 0 < b <= 1:
            raise ConfigError(f"beta must be in (0,1], got {b}")
    Ts = [int(t) for t in _as_list(need("T"))]
    if not Ts:
        raise ConfigError("T: list must be nonempty")
    for t in Ts:
        if t < 3:
            raise ConfigError(f"T must be >= 3, got {t}")
    reps = int(data.get("reps", 1))
    if reps < 1:
        raise ConfigError(f"reps must be >= 1, got {reps}")
    regime = data.get("regime", "fast")
    if regime not in ("slow", "fast", "intermediate"):
        raise ConfigError(f"regime must be slow|fast|intermediate, got '{regime}'")
    K = int(data.get("K", 3))
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    d = int(data.get("d", 1))
    if d < 1:
        raise ConfigError(f"d must be >= 1, got {d}")
    reg_spec = data.get("regularizer", "entropy")
    try:
        regularizers.from_spec(reg_spec, K)
    except ValueError as exc:
        raise ConfigError(f"regularizer: {exc}")
    return SweepSpec(
        betas=betas, Ts=Ts, reps=reps, regime=regime,
        seed=int(data.get("seed", 0)),
        out=str(data.get("out", "results.csv")),
        K=K, d=d, regularizer=reg_spec,
        lambda_spec=str(data.get("lambda", "const:0.1")),
        arms=data.get("arms"),
        bins=data.get("bins"),
        theta_constant=float(data.get("theta_constant", 1.0)),
        quad_nodes=int(data.get("quad_nodes", 32)),
        confidence_constant=float(data.get("confidence_constant", 2.0)),
        presample_cap=float(data.get("presample_cap", 0.49)),
        margin_exponent=float(data.get("margin_exponent", 1.0 / 3.0)),
        margin_constant=float(data.get("margin_constant", 1.0)),
        margin_alpha=float(data.get("margin_alpha", 0.5)),
        overridden=overridden,
    )


def _as_list(value):
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def _run_seed(master_seed, i_beta, i_T, rep):
    ss = np.random.SeedSequence(master_seed, spawn_key=(i_beta, i_T, rep))
    return int(ss.generate_state(1)[0])


def sweep_grid(spec: SweepSpec):
    """Ordered (config_id, RunConfig) pairs for the full sweep grid."""
    grid = {}
    for i, beta in enumerate(spec.betas):
        for j, T in enumerate(spec.Ts):
            for r in range(spec.reps):
                grid[(i, j, r)] = RunConfig(
                    T=T, K=spec.K, d=spec.d, regime=spec.regime,
                    regularizer=spec.regularizer,
                    lambda_spec=spec.lambda_spec,
                    beta=beta, seed=_run_seed(spec.seed, i, j, r),
                    arm_specs=spec.arms, bins_override=spec.bins,
                    theta_constant=spec.theta_constant,
                    quad_nodes=spec.quad_nodes,
                    confidence_constant=spec.confidence_constant,
                    presample_cap=spec.presample_cap,
                    margin_exponent=spec.margin_exponent,
                    margin_constant=spec.margin_constant,
                    margin_alpha=spec.margin_alpha,
                )
    return grid


def fit_rate_slope(Ts, mean_regrets):
    """Least-squares slope of log mean-regret against log T.

    Nonpositive means are dropped with a warning; fewer than three
    surviving points is an error. Returns (slope, stderr).
    """
    Ts = np.asarray(Ts, dtype=float)
    means = np.asarray(mean_regrets, dtype=float)
    keep = means > 0
    if not np.all(keep):
        warnings.warn(f"dropping {int((~keep).sum())} nonpositive mean-regret "
                      "points from the slope fit")
    Ts, means = Ts[keep], means[keep]
    if len(np.unique(Ts)) < 3:
        raise ValueError("slope fit needs at least 3 distinct T values")
    x, y = np.log(Ts), np.log(means)
    n = x.size
    xm = x - x.mean()
    slope = float(np.dot(xm, y) / np.dot(xm, xm))
    intercept = y.mean() - slope * x.mean()
    resid = y - (intercept + slope * x)
    dof = max(n - 2, 1)
    stderr = math.sqrt(float(resid @ resid) / dof / float(xm @ xm))
    return slope, stderr


def _fmt(value):
    return repr(float(value))


def run_and_emit(spec: SweepSpec, parallelism=None):
    """Execute the sweep, write the CSV, print the summary.

    Returns the process exit code: 0 on success, 2 if any run failed.
    """
    grid = sweep_grid(spec)
    parallelism = parallelism or sweep_parallelism()
    results = run_sweep(grid, parallelism=parallelism)

    rows = []
    failures = []
    env_cache = {}
    for (i, j, r), result, error in results:
        beta, T = spec.betas[i], spec.Ts[j]
        seed = _run_seed(spec.seed, i, j, r)
        if error is not None:
            failures.append(((beta, T, r), error))
            continue
        key = beta
        if key not in env_cache:
            cfg = grid[(i, j, r)]
            env_cache[key] = (cfg.build_environment(),
                              cfg.build_regularizer())
        env, reg = env_cache[key]
        report = regret_report(result, env, reg, T, beta)
        rows.append({
            "beta": beta, "T": T, "rep": r, "seed": seed, "bins": result.B,
            "regret": report.regret,
            "regret_times_T": report.regret * T,
            "normalized_regret": report.normalized_regret,
            "estimation_error": report.estimation_error,
            "approximation_error": report.approximation_error,
            "empty_bin_count": report.empty_bin_count,
        })

    comments = [f"# seed={spec.seed}"
                + (" (flag override)" if "seed" in spec.overridden else "")]
    for (beta, T, r), error in failures:
        comments.append(f"# error beta={beta} T={T} rep={r}: {error}")
    write_csv(spec.out, rows, comments)
    print(summarize(spec, rows))
    for (beta, T, r), error in failures:
        print(f"FAILED beta={beta} T={T} rep={r}: {error}", file=sys.stderr)
    return 2 if failures else 0


def write_csv(path, rows, comments=()):
    """UTF-8, LF, '.' decimal, round-trip float precision."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in comments:
            fh.write(line + "\n")
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(",".join([
                _fmt(row["beta"]), str(row["T"]), str(row["rep"]),
                str(row["seed"]), str(row["bins"]), _fmt(row["regret"]),
                _fmt(row["regret_times_T"]), _fmt(row["normalized_regret"]),
                _fmt(row["estimation_error"]),
                _fmt(row["approximation_error"]),
                str(row["empty_bin_count"]),
            ]) + "\n")


def summarize(spec: SweepSpec, rows):
    """Per-beta normalized-regret statistics and rate-slope fits."""
    lines = ["summary:"]
    for beta in spec.betas:
        sub = [r for r in rows if r["beta"] == beta]
        if not sub:
            continue
        fast_norm = [r["normalized_regret"] for r in sub]
        slow_norm = [r["regret"] / slow_rate_normalizer(r["T"], beta, spec.d)
                     for r in sub]
        mean_by_T = {}
        for r in sub:
            mean_by_T.setdefault(r["T"], []).append(r["regret"])
        Ts = sorted(mean_by_T)
        means = [float(np.mean(mean_by_T[t])) for t in Ts]
        lines.append(
            f"  beta={beta}: fast-normalized regret "
            f"{np.mean(fast_norm):.6g} +/- {_stderr(fast_norm):.2g}, "
            f"slow-normalized {np.mean(slow_norm):.6g} "
            f"+/- {_stderr(slow_norm):.2g}")
        if len(Ts) >= 3:
            try:
                slope, err = fit_rate_slope(
                    Ts, means)
                lines.append(f"    rate slope {slope:.4f} +/- {err:.4f} "
                             f"(fast theory {-2 * beta / (2 * beta + spec.d):.4f})")
            except ValueError as exc:
                lines.append(f"    rate slope unavailable: {exc}")
    return "\n".join(lines)


def _stderr(values):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(values.size))


def cmd_run(args):
    spec = parse_config(args.config, {
        "T": args.T, "beta": args.beta, "reps": args.reps, "seed": args.seed,
        "regime": args.regime, "out": args.out,
    })
    return run_and_emit(spec)


def cmd_probe_margin(args):
    spec = parse_config(args.config, {"out": args.out, "seed": args.seed})
    beta = spec.betas[0]
    from .environment import default_arm_specs
    env = make_environment(spec.d, beta,
                           spec.arms or default_arm_specs(spec.K, spec.d),
                           spec.lambda_spec)
    reg = regularizers.from_spec(spec.regularizer, spec.K)
    deltas = np.logspace(-3, 0, 25)
    probe = margin_probe(env, reg, deltas, 10 ** 4,
                         rng_stream(spec.seed, "margin"))
    with open(spec.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# lambda_exponent={probe.lambda_exponent}\n")
        fh.write(f"# eta_exponent={probe.eta_exponent}\n")
        fh.write("delta,p_lambda_below,p_eta_below\n")
        for dlt, pl, pe in zip(probe.deltas, probe.lambda_tail,
                               probe.eta_tail):
            fh.write(f"{_fmt(dlt)},{_fmt(pl)},{_fmt(pe)}\n")
    print(f"margin probe written to {spec.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="regcb",
        description="Regularized contextual bandit simulation sweeps")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a sweep and write a CSV")
    p_run.add_argument("--config", help="JSON config file")
    p_run.add_argument("--T", type=int, nargs="+", default=None)
    p_run.add_argument("--beta", type=float, nargs="+", default=None)
    p_run.add_argument("--reps", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--regime",
                       choices=["slow", "fast", "intermediate"], default=None)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=cmd_run)

    p_probe = sub.add_parser("probe-margin",
                             help="estimate margin-condition tails")
    p_probe.add_argument("--config", required=True)
    p_probe.add_argument("--seed", type=int, default=None)
    p_probe.add_argument("--out", default=None)
    p_probe.set_defaults(func=cmd_probe_margin)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
