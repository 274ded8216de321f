"""Command-line entry point: ``xlate {generate,fit,summarize,check}``."""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from . import config as cfgmod
from . import diagnostics as dg
from .data import DataError, StudyPair, load_dataset, write_dataset
from .sampler import GibbsConfig, Trace, run_chain
from .summarize import export_plot_data, summarize_trace
from .synth import generate

log = logging.getLogger("xlate")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def n_workers(n_tasks: int) -> int:
    cap = os.environ.get("XLATE_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            raise cfgmod.ConfigError(f"XLATE_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(n_tasks, limit))


# ---------------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    if args.config is None:
        raise cfgmod.ConfigError("generate needs --config")
    sc = cfgmod.synth_config(cfgmod.read(args.config), seed=args.seed)
    pair, truth = generate(sc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(pair.dataset_x, out / "x_values.csv", out / "x_meta.csv")
    write_dataset(pair.dataset_y, out / "y_values.csv", out / "y_meta.csv")
    truth.write(out / "ground_truth.json")
    print(f"wrote {pair.dataset_x.n_samples} x {pair.dataset_x.n_variables} (X) and "
          f"{pair.dataset_y.n_samples} x {pair.dataset_y.n_variables} (Y) samples to {out}")
    return 0


def _fit_one(pair: StudyPair, config: GibbsConfig, out_dir: str) -> list:
    def progress(it, total, lj, state):
        if it % 500 == 0 or it == total:
            log.info("seed %d: sweep %d/%d log joint %.2f links %d", config.seed, it, total, lj,
                     state.matching.n_links)

    trace = run_chain(pair, config, progress=progress)
    trace.save(out_dir)
    return [lj for lj, ph in zip(trace.log_joints, trace.phases) if ph == "sample"]


def cmd_fit(args) -> int:
    start = time.time()
    cp = cfgmod.read(args.config) if args.config else None
    gc = cfgmod.gibbs_config(cp, seed=args.seed) if cp is not None else dataclasses.replace(
        GibbsConfig(), **({} if args.seed is None else {"seed": args.seed})).validate()
    files = [args.x_values, args.x_meta, args.y_values, args.y_meta]
    digests = {str(f): sha256(f) for f in files}
    pair = StudyPair(load_dataset(args.x_values, args.x_meta, log1p=gc.log1p),
                     load_dataset(args.y_values, args.y_meta, log1p=gc.log1p))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.chains < 1:
        raise cfgmod.ConfigError("--chains must be >= 1")
    if args.chains == 1:
        configs, dirs = [gc], [out / "trace"]
    else:
        configs = [dataclasses.replace(gc, seed=gc.seed + c) for c in range(args.chains)]
        dirs = [out / f"chain_{c + 1}" for c in range(args.chains)]
    workers = n_workers(len(configs))
    if workers == 1:
        results = [_fit_one(pair, c, str(d)) for c, d in zip(configs, dirs)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_fit_one, [pair] * len(configs), configs, [str(d) for d in dirs]))
    manifest = {
        "version": __version__, "command": "fit", "seed": gc.seed, "seeds": [c.seed for c in configs],
        "config": gc.to_dict(), "inputs": digests, "chains": [str(d.relative_to(out)) for d in dirs],
        "duration_seconds": round(time.time() - start, 3),
    }
    if len(results) > 1 and min(len(r) for r in results) >= 2:
        n = min(len(r) for r in results)
        rhat = dg.gelman_rubin([r[:n] for r in results])
        manifest["gelman_rubin_log_joint"] = rhat
        (out / "gelman_rubin.txt").write_text(f"statistic = log_joint\nchains = {len(results)}\n"
                                              f"draws_per_chain = {n}\nrhat = {rhat!r}\n")
        print(f"Gelman-Rubin R-hat (log joint) = {rhat:.4f}")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    for d in dirs:
        print(f"trace written to {d}")
    return 0


def cmd_summarize(args) -> int:
    opts = cfgmod.summary_options(cfgmod.read(args.config)) if args.config else {"level": 0.9, "epsilon": 0.1}
    trace_dir = Path(args.trace_dir)
    if not (trace_dir / "scalars.csv").exists() and (trace_dir / "trace" / "scalars.csv").exists():
        trace_dir = trace_dir / "trace"
    if not (trace_dir / "scalars.csv").exists():
        raise DataError(f"{args.trace_dir}: not a trace directory (no scalars.csv)")
    trace = Trace.load(trace_dir)
    summary = summarize_trace(trace, **opts)
    export_plot_data(summary, args.out)
    print(f"{len(trace)} snapshots summarized into {args.out}")
    top = summary.pairing.top_pairs(min(3, summary.pairing.link_freq.size))
    for i, j in top:
        print(f"  x{i + 1}-y{j + 1}: {summary.pairing.link_freq[i, j]:.3f}")
    return 0


def cmd_check(args) -> int:
    seed = 0 if args.seed is None else args.seed
    if args.mode == "geweke":
        rounds = args.rounds or 20_000
        res = dg.geweke_check(n_rounds=rounds, seed=seed)
        print(res.table())
        ok = res.max_abs_z() < 4.0
        print(f"max |z| = {res.max_abs_z():.3f} ({'ok' if ok else 'FAIL'}, threshold 4)")
    elif args.mode == "hmm-oracle":
        res = dg.hmm_oracle(n_sweeps=args.rounds or 100_000, seed=seed)
        tv = float(res.tv.max())
        ok = tv <= 0.02
        print(f"max per-site TV distance = {tv:.5f} ({'ok' if ok else 'FAIL'}, threshold 0.02)")
    else:
        res = dg.matching_oracle(n_moves=args.rounds or 100_000, seed=seed)
        ok = res.error <= 0.02
        print(f"log ratio = {res.delta:.4f}; exact link probability = {res.exact:.5f}; "
              f"empirical = {res.empirical:.5f}; |error| = {res.error:.5f} ({'ok' if ok else 'FAIL'}, threshold 0.02)")
    return 0 if ok else 1


# ---------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xlate", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log sampler progress")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic study pair")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="run the Gibbs sampler on two datasets")
    f.add_argument("x_values")
    f.add_argument("x_meta")
    f.add_argument("y_values")
    f.add_argument("y_meta")
    f.add_argument("--config")
    f.add_argument("--out", required=True)
    f.add_argument("--seed", type=int)
    f.add_argument("--chains", type=int, default=1)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("summarize", help="pairing table, effect verdicts and plot data from a trace")
    s.add_argument("trace_dir")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_summarize)

    c = sub.add_parser("check", help="sampler-correctness diagnostics")
    c.add_argument("mode", choices=("geweke", "hmm-oracle", "matching-oracle"))
    c.add_argument("--seed", type=int)
    c.add_argument("--rounds", type=int, help="rounds, sweeps or moves (mode-specific default)")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (DataError, cfgmod.ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
