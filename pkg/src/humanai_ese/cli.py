"""Command line: simulate, estimate, diag, benchmark, sweep.

Exit codes: 0 success, 2 configuration error, 3 identifiability failure in strict mode.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from . import io
from .baselines import run_all
from .core import ConfigError, Stream, substream
from .estimator import IdentifiabilityError, check_identifiability, estimate_tte_h
from .harness import DEFAULT_SWEEP, BenchmarkConfig, make_worlds, run_benchmark, sweep_priors
from .subpop import construct_subpopulations, read_batch_manifest, summarize, write_batch_manifest

EXIT_OK, EXIT_CONFIG, EXIT_IDENT = 0, 2, 3


def parse_seeds(tokens: list[str]) -> list[int]:
    """'3', '0-9' (inclusive) or comma lists."""
    out = []
    for tok in tokens:
        for part in tok.split(","):
            if "-" in part.strip("-"):
                lo, hi = part.split("-", 1)
                out += range(int(lo), int(hi) + 1)
            elif part:
                out.append(int(part))
    return out


def parse_prior(text: str) -> tuple[float, float]:
    try:
        a, s = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"prior must look like 0.8,0.15, got {text!r}") from None
    return a, s


def load_config(args) -> BenchmarkConfig:
    data = io.read_json(args.config) if getattr(args, "config", None) else {}
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    over = {}
    if getattr(args, "engine", None):
        over["engine"] = args.engine
    if getattr(args, "seed", None):
        over["seeds"] = parse_seeds(args.seed)
    if getattr(args, "prior", None):
        over["prior_sweep"] = args.prior
    if getattr(args, "kernel", None):
        over["kernel"] = args.kernel
    if getattr(args, "workers", None):
        over["workers"] = args.workers
    est = dict(data.get("estimator", {}))
    for flag in ("strict", "post_warmup_only", "human_memory"):
        if getattr(args, flag, False):
            est[flag] = True
    if est:
        over["estimator"] = est
    return BenchmarkConfig.from_dict({**data, **over})


def _panel_and_batches(args):
    panel = io.read_panel(args.panel, args.scenario, args.t_warmup)
    if args.batches:
        batches = read_batch_manifest(args.batches)
    else:
        batches = construct_subpopulations(panel.q, panel.w, substream(args.seed, Stream.BATCHES),
                                           n_strata=args.strata, t_warmup=panel.t_warmup)
    return panel, batches


def cmd_simulate(args) -> int:
    cfg = load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        worlds = make_worlds(cfg, seed, cfg.prior_sweep[0])
        d = out / f"{cfg.engine}_seed{seed}"
        d.mkdir(exist_ok=True)
        io.write_panels(worlds.panels(), d / "panels.csv")
        io.write_rows(d / "types.csv", ["unit_id", "u", "q"],
                      ([i, int(u), q] for i, (u, q) in enumerate(zip(worlds.types.u, worlds.types.q))))
        io.write_json({"engine": cfg.engine, "seed": seed, "config": cfg.to_dict(),
                       "config_hash": io.content_hash(cfg.to_dict())}, d / "manifest.json")
        print(d / "panels.csv")
    return EXIT_OK


def cmd_estimate(args) -> int:
    panel, batches = _panel_and_batches(args)
    est = estimate_tte_h(panel, batches, post_warmup_only=args.post_warmup_only,
                         strict=args.strict, human_memory=args.human_memory)
    series = {"tte_hat": est.effect}
    if args.baselines:
        series.update({b.name: b.effect for b in run_all(panel, batches)})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_effects(series, out / "effects.csv")
    est.fit.to_json(out / "fit.json")
    write_batch_manifest(batches, panel, out / "batches.json")
    print(" ".join(f"{v:.4f}" for v in est.effect.values))
    return EXIT_OK


def cmd_diag(args) -> int:
    panel, batches = _panel_and_batches(args)
    summaries, pop = summarize(panel, batches)
    rep = check_identifiability(summaries, pop)
    text = json.dumps(rep, indent=1, default=io._default)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    if args.strict and not rep["passed"]:
        print("identifiability check failed", file=sys.stderr)
        return EXIT_IDENT
    return EXIT_OK


def _print_summary(res) -> None:
    print(f"prior a={res.prior[0]:g} sd={res.prior[1]:g}  seeds={len(res.seeds)}  "
          f"Alg1 wins={res.alg1_wins}  failures={len(res.failures)}")
    for row in res.summary():
        print(f"  {row['estimator']:<13} mae {row['mae_mean']:8.3f}  final {row['final_err_mean']:8.3f}"
              f"  est {row['est_tte_mean']:8.3f}")


def cmd_benchmark(args) -> int:
    cfg = load_config(args).replace(out_dir=args.out)
    _print_summary(run_benchmark(cfg))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args).replace(out_dir=args.out)
    if not args.prior and "prior_sweep" not in (io.read_json(args.config) if args.config else {}):
        cfg = cfg.replace(prior_sweep=DEFAULT_SWEEP)
    results, _ = sweep_priors(cfg)
    for r in results:
        _print_summary(r)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="humanai-ese", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def run_opts(p, required):
        p.add_argument("--config", help="JSON config; flags override it")
        p.add_argument("--engine", choices=("synthetic", "agentsim"), required=required)
        p.add_argument("--seed", nargs="+", required=required, help="seeds, e.g. 0-9 or 1 2 5")
        p.add_argument("--out", required=True)
        p.add_argument("--prior", type=parse_prior, action="append", help="accuracy,noise_sd")
        p.add_argument("--kernel", help="behaviour kernel JSON for agentsim")
        p.add_argument("--workers", type=int)
        p.add_argument("--strict", action="store_true")
        p.add_argument("--post-warmup-only", action="store_true")
        p.add_argument("--human-memory", action="store_true")

    p = sub.add_parser("simulate", help="emit panels for each seed")
    run_opts(p, required=False)
    p.set_defaults(func=cmd_simulate)

    def panel_opts(p):
        p.add_argument("--panel", required=True)
        p.add_argument("--scenario", default="experiment")
        p.add_argument("--t-warmup", type=int)
        p.add_argument("--batches", help="batch manifest JSON; built from the panel if absent")
        p.add_argument("--seed", type=int, default=0, help="seed for batch construction")
        p.add_argument("--strata", type=int, default=3)
        p.add_argument("--strict", action="store_true")

    p = sub.add_parser("estimate", help="panel -> effect series")
    panel_opts(p)
    p.add_argument("--out", required=True)
    p.add_argument("--baselines", action="store_true")
    p.add_argument("--post-warmup-only", action="store_true")
    p.add_argument("--human-memory", action="store_true")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("diag", help="identifiability report")
    panel_opts(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_diag)

    p = sub.add_parser("benchmark", help="full pipeline over seeds")
    run_opts(p, required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("sweep", help="benchmark over prior-quality settings")
    run_opts(p, required=True)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    try:
        return args.func(args)
    except IdentifiabilityError as exc:
        print(f"identifiability failure: {exc}", file=sys.stderr)
        return EXIT_IDENT
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
