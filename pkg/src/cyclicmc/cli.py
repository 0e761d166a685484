"""Experiment harness: fixed-length and termination-rule studies with replication.

Subcommands:
  run-fixed   replicate a fixed-length run; report ESS/TESS and region coverage
  run-stop    replicate a sequential-stopping run; report stop times and coverage
  truth       estimate the long-run mean with batch-means standard errors
  regen-demo  split-chain demonstration: Kac and tour-mean identity checks

Configuration comes from an optional JSON (or, on Python 3.11+, TOML) file
plus flag overrides. Replication i of a run with seed S draws from the
stream (S, i), so results do not depend on the worker count.

Exit codes: 0 success, 2 configuration error, 3 numerical degeneracy.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import estimators, regen, stopping
from .chain import CyclicSampler, run_chain
from .estimators import TooFewBatches
from .numkit import DegenerateDof, NotPositiveDefinite
from .samplers import (
    FlipChainSpec,
    THREE_STATE_P,
    exp_curve_spec,
    flip_block_fsum,
    flip_block_minorized,
    load_orthodont,
    make_curve_sampler,
    make_flip_chain,
    make_lmm_sampler,
    orthodont_path,
    three_state_stationary,
)

SAMPLERS = ("curve", "lmm", "flip")

_DEGENERACY_ERRORS = (NotPositiveDefinite, DegenerateDof, TooFewBatches,
                      regen.NoRegeneration, regen.InsufficientTours)


class ConfigError(Exception):
    """Invalid experiment configuration; message names the offending field."""


@dataclass
class ExperimentConfig:
    sampler: str = "curve"
    mode: str = "fixed"
    k1: int = 3
    flip_a: float = 0.25
    flip_b: float = 0.5
    data: Optional[str] = None
    n: int = 30000
    reps: int = 100
    seed: int = 1
    kappa: float = 0.51
    alpha: float = 0.10
    epsilon: float = 0.05
    n0: int = 1000
    n_start: Optional[int] = None
    check_growth: float = 1.2
    scaling: str = "det_psi"
    max_n: Optional[int] = None
    truth: object = None  # list of floats, "long-run", or None
    truth_n: int = 3_000_000
    workers: int = 1
    out: Optional[str] = None
    plot: bool = False

    def validate(self) -> None:
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"sampler: must be one of {SAMPLERS}, got {self.sampler!r}")
        if self.mode not in ("fixed", "stop"):
            raise ConfigError(f"mode: must be 'fixed' or 'stop', got {self.mode!r}")
        if self.k1 < 1:
            raise ConfigError(f"k1: must be >= 1, got {self.k1}")
        if not 0.0 < self.flip_a < 1.0 or not 0.0 < self.flip_b < 1.0:
            raise ConfigError("flip_a/flip_b: must lie in (0, 1)")
        if self.n < 2:
            raise ConfigError(f"n: must be >= 2, got {self.n}")
        if self.reps < 1:
            raise ConfigError(f"reps: must be >= 1, got {self.reps}")
        if not 0.0 < self.kappa < 1.0:
            raise ConfigError(f"kappa: must lie in (0, 1), got {self.kappa}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha: must lie in (0, 1), got {self.alpha}")
        if self.epsilon <= 0.0:
            raise ConfigError(f"epsilon: must be > 0, got {self.epsilon}")
        if self.workers < 1:
            raise ConfigError(f"workers: must be >= 1, got {self.workers}")
        if self.truth_n < 100:
            raise ConfigError(f"truth_n: must be >= 100, got {self.truth_n}")
        if self.truth is not None and self.truth != "long-run":
            try:
                vec = [float(v) for v in self.truth]
            except (TypeError, ValueError):
                raise ConfigError(
                    f"truth: must be a number list or 'long-run', got {self.truth!r}"
                ) from None
            self.truth = vec

    def stop_config(self) -> stopping.StopConfig:
        try:
            return stopping.StopConfig(
                epsilon=self.epsilon,
                alpha=self.alpha,
                n0=self.n0,
                scaling=self.scaling,
                check_growth=self.check_growth,
                n_start=self.n_start,
                kappa=self.kappa,
                max_n=self.max_n,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def build_sampler(cfg: ExperimentConfig) -> CyclicSampler:
    if cfg.sampler == "curve":
        return make_curve_sampler(exp_curve_spec(k1=cfg.k1))
    if cfg.sampler == "lmm":
        path = cfg.data or orthodont_path()
        return make_lmm_sampler(load_orthodont(path, k1=cfg.k1))
    return make_flip_chain(FlipChainSpec(cfg.flip_a, cfg.flip_b))


def rep_rng(seed: int, rep: int) -> np.random.Generator:
    """Stream (seed, rep): replication streams are independent of scheduling."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep,)))


def _phase_count_columns(cfg: ExperimentConfig, counts: dict[int, int]) -> dict:
    k = max(counts)
    last = counts[k]
    rest = sum(counts.values()) - last
    if cfg.sampler == "curve":
        return {"iter_x_axis": last, "iter_y_axis": rest}
    if cfg.sampler == "lmm":
        return {"iter_beta_gamma": last, "iter_lambda": rest}
    return {"iter_phase2": last, "iter_phase1": rest}


# ---------------------------------------------------------------------------
# Per-replication work (top level so worker processes can import them).
# ---------------------------------------------------------------------------


def _fixed_rep(cfg: ExperimentConfig, rep: int, truth) -> dict:
    rng = rep_rng(cfg.seed, rep)
    sampler = build_sampler(cfg)
    t0 = time.perf_counter()
    s = run_chain(sampler, cfg.n, rng)
    elapsed = time.perf_counter() - t0
    plan = estimators.BatchPlan.from_n(s.n, cfg.kappa)
    mean, psi = estimators.sample_mean_cov(s)
    sigma = estimators.batch_means_cov(s, plan)
    ess_val = estimators.ess(s.n, psi, sigma)
    row = {
        "rep": rep,
        "time_s": elapsed,
        "ess": ess_val,
        "esspm": ess_val / (elapsed / 60.0),
    }
    if cfg.sampler == "lmm":
        tess_val = estimators.tess(s.n, psi, sigma)
        row["tess"] = tess_val
        row["tesspm"] = tess_val / (elapsed / 60.0)
    for d_i, v in enumerate(mean):
        row[f"mean_{d_i + 1}"] = float(v)
    if truth is not None:
        region = estimators.confidence_region(s, plan, alpha=cfg.alpha)
        row["covered"] = int(region.contains(truth))
    return row


def _stop_rep(cfg: ExperimentConfig, rep: int, truth) -> dict:
    rng = rep_rng(cfg.seed, rep)
    sampler = build_sampler(cfg)
    t0 = time.perf_counter()
    report = stopping.run_until_stop(sampler, cfg.stop_config(), rng)
    elapsed = time.perf_counter() - t0
    row = {"rep": rep, "time_s": elapsed, "n_stop": report.n_stop}
    row.update(_phase_count_columns(cfg, report.phase_counts(sampler.k)))
    row["volume"] = report.volume
    row["ess_at_stop"] = report.ess_at_stop
    for d_i, v in enumerate(report.estimate):
        row[f"mean_{d_i + 1}"] = float(v)
    if truth is not None and report.region is not None:
        row["covered"] = int(report.region.contains(truth))
    return row


def _run_reps(cfg: ExperimentConfig, worker, truth) -> list[dict]:
    if cfg.workers == 1:
        return [worker(cfg, i, truth) for i in range(cfg.reps)]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(worker, cfg, i, truth) for i in range(cfg.reps)]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# Truth estimation with caching.
# ---------------------------------------------------------------------------


def _truth_cache_key(cfg: ExperimentConfig) -> str:
    payload = {
        "sampler": cfg.sampler,
        "k1": cfg.k1,
        "flip_a": cfg.flip_a,
        "flip_b": cfg.flip_b,
        "data": cfg.data,
        "truth_n": cfg.truth_n,
        "seed": cfg.seed,
        "kappa": cfg.kappa,
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def compute_truth(cfg: ExperimentConfig, cache_dir: Optional[str] = None) -> dict:
    """Long-run mean with batch-means SEs, cached under a config-hash key."""
    cache = None
    if cache_dir is not None:
        cache = Path(cache_dir) / f"truth-{_truth_cache_key(cfg)}.json"
        if cache.exists():
            return json.loads(cache.read_text())
    sampler = build_sampler(cfg)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    s = run_chain(sampler, cfg.truth_n, rng)
    plan = estimators.BatchPlan.from_n(s.n, cfg.kappa)
    mean = s.values[: plan.a_n * plan.b_n].mean(axis=0)
    sigma = estimators.batch_means_cov(s, plan)
    se = np.sqrt(np.diagonal(sigma.array) / s.n)
    result = {
        "mean": mean.tolist(),
        "se": se.tolist(),
        "n": s.n,
        "sampler": cfg.sampler,
        "k1": cfg.k1,
        "seed": cfg.seed,
    }
    if cache is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        cache.write_text(json.dumps(result, indent=1))
    return result


def resolve_truth(cfg: ExperimentConfig) -> Optional[np.ndarray]:
    if cfg.truth is None:
        return None
    if cfg.truth == "long-run":
        cache_dir = str(Path(cfg.out) / "truth_cache") if cfg.out else None
        return np.array(compute_truth(cfg, cache_dir)["mean"])
    return np.array(cfg.truth, dtype=float)


# ---------------------------------------------------------------------------
# Table emission.
# ---------------------------------------------------------------------------


def aggregate_rows(rows: list[dict]) -> tuple[dict, dict]:
    """Column means and standard errors over replications."""
    cols = [c for c in rows[0] if c != "rep"]
    means, ses = {}, {}
    for c in cols:
        vals = np.array([float(r[c]) for r in rows if r.get(c) is not None])
        if vals.size == 0:
            means[c], ses[c] = math.nan, math.nan
            continue
        means[c] = float(np.mean(vals))
        ses[c] = float(np.std(vals, ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
    return means, ses


def write_csv(rows: list[dict], path) -> None:
    cols = list(rows[0].keys())
    means, ses = aggregate_rows(rows)
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(_cell(r.get(c)) for c in cols) + "\n")
        fh.write("# mean," + ",".join(_cell(means.get(c)) for c in cols[1:]) + "\n")
        fh.write("# se," + ",".join(_cell(ses.get(c)) for c in cols[1:]) + "\n")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def read_csv_rows(path) -> list[dict]:
    """Re-parse a table written by write_csv (aggregate footer lines skipped)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = []
        for line in fh:
            if line.startswith("#"):
                continue
            parts = line.strip().split(",")
            row = {}
            for c, v in zip(header, parts):
                if v == "":
                    row[c] = None
                elif c == "rep" or c.startswith("iter_") or c == "n_stop" or c == "covered":
                    row[c] = int(v)
                else:
                    row[c] = float(v)
            rows.append(row)
    return rows


def _format_table(rows: list[dict], title: str) -> str:
    means, ses = aggregate_rows(rows)
    lines = [title]
    for c in means:
        if math.isnan(means[c]):
            continue
        lines.append(f"  {c:>14}: {means[c]:.6g} ({ses[c]:.3g})")
    lines.append(f"  {'replications':>14}: {len(rows)}")
    return "\n".join(lines)


def _emit(cfg: ExperimentConfig, rows: list[dict], name: str,
          extra: Optional[dict] = None) -> None:
    print(_format_table(rows, f"{name}: sampler={cfg.sampler} k1={cfg.k1} seed={cfg.seed}"))
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(rows, out / f"{name}.csv")
        means, ses = aggregate_rows(rows)
        summary = {
            "config": dataclasses.asdict(cfg),
            "aggregate_mean": means,
            "aggregate_se": ses,
            "rows_file": f"{name}.csv",
        }
        if extra:
            summary.update(extra)
        (out / f"{name}.json").write_text(json.dumps(summary, indent=1))


def _plot_stop_trace(cfg: ExperimentConfig, report: stopping.StopReport) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ns = [c.n for c in report.checks]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(ns, [c.lhs for c in report.checks], marker="o", label="volume^(1/d) + pad")
    ax.plot(ns, [c.rhs for c in report.checks], marker="s", label="epsilon * scale")
    ax.set_xlabel("n")
    ax.set_xscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(Path(cfg.out) / "stop_trace.svg")
    plt.close(fig)


def _plot_ess_growth(cfg: ExperimentConfig) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rng = rep_rng(cfg.seed, 0)
    s = run_chain(build_sampler(cfg), cfg.n, rng)
    ns, esss = [], []
    n = max(200, 4 * int(cfg.n**cfg.kappa))
    while n <= cfg.n:
        head = s.head(n)
        try:
            mean, psi = estimators.sample_mean_cov(head)
            sigma = estimators.batch_means_cov(head, kappa=cfg.kappa)
            esss.append(estimators.ess(n, psi, sigma))
            ns.append(n)
        except _DEGENERACY_ERRORS:
            pass
        n = math.ceil(1.5 * n)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(ns, esss, marker="o")
    ax.set_xlabel("n")
    ax.set_ylabel("ESS")
    fig.tight_layout()
    fig.savefig(Path(cfg.out) / "ess_growth.svg")
    plt.close(fig)


# ---------------------------------------------------------------------------
# Subcommands.
# ---------------------------------------------------------------------------


def cmd_run_fixed(cfg: ExperimentConfig) -> int:
    cfg.mode = "fixed"
    cfg.validate()
    truth = resolve_truth(cfg)
    rows = _run_reps(cfg, _fixed_rep, truth)
    extra = {"truth": None if truth is None else truth.tolist()}
    _emit(cfg, rows, "run_fixed", extra)
    if cfg.plot and cfg.out:
        _plot_ess_growth(cfg)
    return 0


def cmd_run_stop(cfg: ExperimentConfig) -> int:
    cfg.mode = "stop"
    cfg.validate()
    cfg.stop_config()
    truth = resolve_truth(cfg)
    rows = _run_reps(cfg, _stop_rep, truth)
    extra = {"truth": None if truth is None else truth.tolist()}
    _emit(cfg, rows, "run_stop", extra)
    if cfg.plot and cfg.out:
        report = stopping.run_until_stop(build_sampler(cfg), cfg.stop_config(),
                                         rep_rng(cfg.seed, 0))
        _plot_stop_trace(cfg, report)
    return 0


def cmd_truth(cfg: ExperimentConfig) -> int:
    cfg.validate()
    cache_dir = str(Path(cfg.out) / "truth_cache") if cfg.out else None
    result = compute_truth(cfg, cache_dir)
    mean, se = result["mean"], result["se"]
    print(f"truth: sampler={cfg.sampler} k1={cfg.k1} n={result['n']}")
    for j, (m, s) in enumerate(zip(mean, se), start=1):
        print(f"  component {j}: {m:.8g} (se {s:.3g})")
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "truth.json").write_text(json.dumps(result, indent=1))
    return 0


def cmd_regen_demo(args, cfg: ExperimentConfig) -> int:
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    n = cfg.n
    if args.chain == "three-state":
        kernel = regen.matrix_minorized_kernel(THREE_STATE_P)
        pi = three_state_stationary()
        theta = pi[0]
        f_block = lambda u, v: float(v == 0)
        k, init = 1, 0
    elif args.chain == "iid":
        # identical rows: the chain regenerates at every step
        P = np.tile(three_state_stationary(), (3, 1))
        kernel = regen.matrix_minorized_kernel(P)
        theta = three_state_stationary()[0]
        f_block = lambda u, v: float(v == 0)
        k, init = 1, 0
    elif args.chain == "flip":
        spec = FlipChainSpec(cfg.flip_a, cfg.flip_b)
        kernel = flip_block_minorized(spec)
        theta = 0.0
        f_block = flip_block_fsum
        k, init = 2, (1.0, 1.0)
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"chain: unknown demo chain {args.chain!r}")

    states, bells = regen.run_split_chain(kernel, init, n, rng)
    kac = regen.kac_check(states, bells, kernel.h)
    print(f"regen-demo: chain={args.chain} transitions={n} bells={int(bells.sum())}")
    print(f"  Kac: mean tour {kac.mean_tour:.5f} vs 1/pi(h) {kac.inv_pi_h:.5f} "
          f"(se {kac.se:.2g}) -> {'ok' if kac.ok else 'FLAG'}")
    records = regen.tours(states, bells, f_block, k=k, theta=theta)
    report = regen.tour_identity_check(records, k=k, theta=theta)
    print(f"  tours: {report.n_tours}; tour-mean identity "
          f"theta_hat={np.array2string(report.theta_hat, precision=5)} vs "
          f"theta={np.array2string(report.theta, precision=5)} "
          f"max|z|={float(np.max(np.abs(report.z))):.2f} -> "
          f"{'ok' if report.ok else 'FLAG'}")
    print(f"  lag-2 correlation of centered tours: "
          f"{np.array2string(report.lag2_corr, precision=4)}")
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        regen.tours_to_csv(records, out / "tours.csv")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing.
# ---------------------------------------------------------------------------


def load_config_file(path: str) -> dict:
    text = Path(path).read_text()
    if path.endswith(".toml"):
        try:
            import tomllib
        except ImportError:
            raise ConfigError("config: TOML requires Python >= 3.11; use JSON") from None
        return tomllib.loads(text)
    return json.loads(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cyclicmc",
        description="Output analysis and termination-rule experiments for "
                    "cyclic MCMC samplers",
    )
    parser.add_argument("--config", help="JSON (or TOML) config file")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, stop=False):
        p.add_argument("--sampler", choices=SAMPLERS)
        p.add_argument("--k1", type=int)
        p.add_argument("--flip-a", dest="flip_a", type=float)
        p.add_argument("--flip-b", dest="flip_b", type=float)
        p.add_argument("--data", help="Orthodont-style CSV (default: packaged)")
        p.add_argument("--n", type=int)
        p.add_argument("--reps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--kappa", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--truth", help="comma-separated values or 'long-run'")
        p.add_argument("--truth-n", dest="truth_n", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out", help="output directory for CSV/JSON/SVG")
        p.add_argument("--plot", action="store_true", default=None)
        if stop:
            p.add_argument("--epsilon", type=float)
            p.add_argument("--n0", type=int)
            p.add_argument("--n-start", dest="n_start", type=int)
            p.add_argument("--growth", dest="check_growth", type=float)
            p.add_argument("--scaling", choices=stopping.SCALINGS)
            p.add_argument("--max-n", dest="max_n", type=int)

    common(sub.add_parser("run-fixed", help="fixed-length replication study"))
    common(sub.add_parser("run-stop", help="termination-rule replication study"),
           stop=True)
    common(sub.add_parser("truth", help="long-run mean with standard errors"))
    demo = sub.add_parser("regen-demo", help="split-chain identity checks")
    demo.add_argument("--chain", choices=("three-state", "iid", "flip"),
                      default="three-state")
    common(demo)
    return parser


def config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        doc = load_config_file(args.config)
        unknown = set(doc) - {f.name for f in dataclasses.fields(ExperimentConfig)}
        if unknown:
            raise ConfigError(f"config: unknown keys {sorted(unknown)}")
        for key, val in doc.items():
            setattr(cfg, key, val)
    for f in dataclasses.fields(ExperimentConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            setattr(cfg, f.name, val)
    if isinstance(cfg.truth, str) and cfg.truth != "long-run":
        try:
            cfg.truth = [float(v) for v in cfg.truth.split(",")]
        except ValueError:
            raise ConfigError(f"truth: cannot parse {cfg.truth!r}") from None
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.command == "run-fixed":
            return cmd_run_fixed(cfg)
        if args.command == "run-stop":
            return cmd_run_stop(cfg)
        if args.command == "truth":
            if args.n is not None:
                cfg.truth_n = args.n
            return cmd_truth(cfg)
        return cmd_regen_demo(args, cfg)
    except (ConfigError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _DEGENERACY_ERRORS as exc:
        print(f"numerical degeneracy: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
