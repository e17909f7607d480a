"""Command-line interface.

Subcommands: ``schedules``, ``sample``, ``sweep``, ``info``, ``snrspace``,
``verify``.  Every command is a pure function of its arguments, config
file, and seed: reruns produce byte-identical files.  Floats are written
with 17 significant digits.

Exit codes: 0 success, 1 verification failure, 2 invalid configuration,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericalError
from .gmm import GmmSpec, gmm_from_dict, oracle_score_model, sample_data
from .infotheory import (
    InfoCurvePoint,
    dmi_dlambda,
    kong_point,
    mi_gaussian_closed,
    mmse_gaussian,
    mmse_mc,
)
from .metrics import energy_distance, gaussian_kl_fit, moment_report
from .samplers import SamplerConfig, sample, sampler_config_from_dict
from .schedule import Schedule, make_schedule, schedule_from_dict
from .snr_space import tilde_eval
from .verify import run_verify

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return cfg


def _resolve_schedule(args, cfg: dict) -> Schedule:
    if getattr(args, "schedule", None):
        return make_schedule(args.schedule)
    if "schedule" in cfg:
        return schedule_from_dict(cfg["schedule"])
    raise ConfigError("no schedule given (use --schedule or a config file)")


def _resolve_gmm(cfg: dict) -> GmmSpec:
    if "gmm" not in cfg:
        raise ConfigError("config file must define a 'gmm' distribution")
    return gmm_from_dict(cfg["gmm"])


def _resolve_sampler(args, cfg: dict) -> SamplerConfig:
    spec = dict(cfg.get("sampler", {}))
    if args.seed is not None:
        spec["seed"] = args.seed
    if "seed" not in spec:
        raise ConfigError("a seed is required (config 'sampler.seed' or --seed)")
    return sampler_config_from_dict(spec)


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("SNRDIFF_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"bad SNRDIFF_THREADS value {env!r}") from exc
    return 1


def _parse_grid(text: str, what: str) -> list[float]:
    """Parse 'lo:hi:count' (inclusive linspace) or a comma list of values."""
    try:
        if ":" in text:
            lo, hi, count = text.split(":")
            return [float(v) for v in
                    np.linspace(float(lo), float(hi), int(count))]
        return [float(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise ConfigError(f"cannot parse {what} grid {text!r}") from exc


def cmd_schedules(args) -> int:
    cfg = _load_config(args.config)
    sched = _resolve_schedule(args, cfg)
    ts = np.linspace(sched.t_min, sched.t_max, args.grid)
    rows = [
        (float(t), float(sched.alpha(t)), float(sched.sigma(t)),
         float(sched.lam(t)), float(sched.dalpha_dt(t)),
         float(sched.dlambda_dt(t)))
        for t in ts
    ]
    out = Path(args.out) / "schedules.csv"
    _write_csv(out, ["t", "alpha", "sigma", "lambda", "dalpha_dt",
                     "dlambda_dt"], rows)
    print(f"wrote {out}")
    return EXIT_OK


def _run_sample(sched, gmm, sampler_cfg, n, threads, trajectories=False):
    model = oracle_score_model(gmm, sched)
    return sample(sched, model, sampler_cfg, n=n, d=gmm.dim, threads=threads,
                  return_trajectories=trajectories)


def _quality_report(x, gmm, seed):
    report = moment_report(x, gmm)
    reference = sample_data(gmm, x.shape[0], seed)
    report.energy_distance = energy_distance(x, reference)
    if gmm.n_components == 1:
        report.gaussian_kl = gaussian_kl_fit(x, gmm.means[0], gmm.covs[0])
    return report


def cmd_sample(args) -> int:
    cfg = _load_config(args.config)
    sched = _resolve_schedule(args, cfg)
    gmm = _resolve_gmm(cfg)
    sampler_cfg = _resolve_sampler(args, cfg)
    threads = _threads(args)

    if args.trajectories:
        x, trajs = _run_sample(sched, gmm, sampler_cfg, args.n, threads, True)
    else:
        x = _run_sample(sched, gmm, sampler_cfg, args.n, threads)
        trajs = None

    out_dir = Path(args.out)
    _write_csv(out_dir / "samples.csv",
               ["sample_id"] + [f"x_{j}" for j in range(gmm.dim)],
               ((i, *map(float, x[i])) for i in range(x.shape[0])))
    report = _quality_report(x, gmm, sampler_cfg.seed)
    _write_json(out_dir / "report.json", report.to_dict())
    if trajs is not None:
        rows = []
        for i, tr in enumerate(trajs):
            for k, t in enumerate(tr.times):
                rows.append((i, k, float(t), *map(float, tr.states[k])))
        _write_csv(out_dir / "trajectories.csv",
                   ["sample_id", "step", "t"] +
                   [f"z_{j}" for j in range(gmm.dim)], rows)
    print(f"wrote {out_dir / 'samples.csv'} and {out_dir / 'report.json'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    sched = _resolve_schedule(args, cfg)
    gmm = _resolve_gmm(cfg)
    base = _resolve_sampler(args, cfg)
    threads = _threads(args)
    gammas = _parse_grid(args.gammas, "gamma")
    deltas = _parse_grid(args.deltas, "delta")
    rhos = _parse_grid(args.rhos, "rho")

    model = oracle_score_model(gmm, sched)
    reference = sample_data(gmm, args.n, base.seed)
    cells = [(g, d, r) for g in gammas for d in deltas for r in rhos]

    def run_cell(cell):
        g, d, r = cell
        cell_cfg = SamplerConfig(
            kind="generalized", rho=r, gamma=g, delta=d, eta=base.eta,
            steps=base.steps, grid_kind=base.grid_kind, t_start=base.t_start,
            t_end=base.t_end, seed=base.seed, substeps=base.substeps,
        )
        x = sample(sched, model, cell_cfg, n=args.n, d=gmm.dim)
        rep = moment_report(x, gmm)
        ed = energy_distance(x, reference)
        return (g, d, r, rep.mean_error_l2, rep.cov_frobenius_error, ed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(c) for c in cells]

    out_dir = Path(args.out)
    header = ["gamma", "delta", "rho", "mean_error_l2",
              "cov_frobenius_error", "energy_distance"]
    _write_csv(out_dir / "sweep.csv", header, rows)
    best = min(rows, key=lambda row: row[5])
    _write_json(out_dir / "sweep_best.json", dict(zip(header, best)))
    print(f"wrote {out_dir / 'sweep.csv'} ({len(rows)} cells); "
          f"best energy distance {best[5]:.6g} at gamma={best[0]:g}, "
          f"delta={best[1]:g}, rho={best[2]:g}")
    return EXIT_OK


def cmd_info(args) -> int:
    cfg = _load_config(args.config)
    gmm = _resolve_gmm(cfg)
    seed = args.seed if args.seed is not None else cfg.get("sampler", {}).get("seed")
    lams = _parse_grid(args.lambdas, "lambda")
    single = gmm.n_components == 1
    if not single and seed is None:
        raise ConfigError("mixtures need a seed for Monte Carlo estimates")

    if args.kong:
        if not single:
            raise ConfigError("--kong needs a single-Gaussian gmm "
                              "(closed forms only)")
        if min(lams) <= 0.0:
            raise ConfigError("--kong needs a lambda grid with lambda > 0")
        points = [kong_point(lam) for lam in lams]
        sched = None
    else:
        sched = _resolve_schedule(args, cfg)
        points = [tilde_eval(sched, lam) for lam in lams]

    curve = []
    for p in points:
        if single:
            m = mmse_gaussian(gmm.covs[0], p)
            mi = mi_gaussian_closed(gmm.covs[0], p)
        else:
            m = mmse_mc(gmm, sched, p.lam, args.mc_n, seed).value
            mi = None
        curve.append(InfoCurvePoint(lam=p.lam, mmse=m,
                                    dmi_dlambda=dmi_dlambda(p, gmm.dim, m),
                                    mi_closed=mi))

    header = ["lambda", "mmse", "dmi_dlambda"]
    if single:
        header.append("mi_closed")
    rows = [(c.lam, c.mmse, c.dmi_dlambda) + ((c.mi_closed,) if single else ())
            for c in curve]
    out = Path(args.out) / "info.csv"
    _write_csv(out, header, rows)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_snrspace(args) -> int:
    cfg = _load_config(args.config)
    sched = _resolve_schedule(args, cfg)
    lo, hi = sched.lambda_range()
    rows = []
    for lam in np.linspace(lo, hi, args.grid):
        p = tilde_eval(sched, float(lam))
        rows.append((p.lam, p.tilde_alpha, p.tilde_sigma))
    out = Path(args.out) / "snrspace.csv"
    _write_csv(out, ["lambda", "tilde_alpha", "tilde_sigma"], rows)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_verify(args.level)
    failed = [r for r in results if not r.ok]
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'} {r.name}: {r.detail}")
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_VERIFY_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snrdiff",
        description="Signal-to-noise diffusion schedules, samplers, and "
                    "information curves with closed-form oracles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, schedule_flag=True):
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int,
                       help="worker threads (default: SNRDIFF_THREADS or 1)")
        if schedule_flag:
            p.add_argument("--schedule",
                           help="built-in schedule name (overrides config)")

    p = sub.add_parser("schedules", help="dump schedule curves to CSV")
    common(p)
    p.add_argument("--grid", type=int, default=100)
    p.set_defaults(func=cmd_schedules)

    p = sub.add_parser("sample", help="run a backward pass and report quality")
    common(p)
    p.add_argument("-n", type=int, default=1000, help="number of samples")
    p.add_argument("--trajectories", action="store_true",
                   help="also dump full trajectories")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("sweep", help="grid-sweep (gamma, delta, rho)")
    common(p)
    p.add_argument("-n", type=int, default=1000)
    p.add_argument("--gammas", default="0.5:1.5:11",
                   help="'lo:hi:count' or comma list")
    p.add_argument("--deltas", default="0.8:1.2:5")
    p.add_argument("--rhos", default="1")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("info", help="information curve over lambda")
    common(p)
    p.add_argument("--lambdas", default="-6:6:49",
                   help="'lo:hi:count' or comma list")
    p.add_argument("--mc-n", type=int, default=4000,
                   help="Monte Carlo draws for mixture MMSE")
    p.add_argument("--kong", action="store_true",
                   help="use the square-root channel instead of a schedule")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("snrspace", help="dump lambda-space curves to CSV")
    common(p)
    p.add_argument("--grid", type=int, default=100)
    p.set_defaults(func=cmd_snrspace)

    p = sub.add_parser("verify", help="run the invariant check suite")
    p.add_argument("--level", choices=("fast", "full"), default="fast")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
