"""Command-line interface: ``lsirm {fit,summarize,map,synth}``.

Exit codes: 0 success, 1 data or runtime error, 2 usage error.
Progress and log messages go to stderr; artifacts go to files.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import datagen, io, postprocess
from .model import (Family, GammaMode, Hyperparameters, ItemParams, JumpingRules, MissingMode,
                    ModelSpec)
from .sampler import McmcConfig, run_chain

log = logging.getLogger("lsirm")

OUT_ENV = "LSIRM_OUTPUT_DIR"
_FAMILIES = {"binary": Family.BINARY, "normal": Family.CONTINUOUS, "continuous": Family.CONTINUOUS}


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_fit_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("data", help="CSV response matrix, one row per respondent")
    p.add_argument("--model", choices=["1pl", "2pl"], default="1pl")
    p.add_argument("--family", choices=["binary", "normal"], default="binary")
    p.add_argument("--fixed-gamma", action="store_true", help="fix the distance weight at 1")
    p.add_argument("--spikenslab", action="store_true", help="spike-and-slab prior on gamma")
    p.add_argument("--missing", choices=["complete", "mcar", "mar"], default="complete")
    p.add_argument("--missing-code", default="NA", help="cell text (or number) marking a missing response")
    p.add_argument("--header", action="store_true", help="skip the first line of the CSV")
    p.add_argument("--complete-cases", action="store_true",
                   help="drop respondents with any missing response before fitting")
    p.add_argument("--ndim", type=int, default=2)
    cfg = McmcConfig()
    for name in ("niter", "nburn", "nthin", "nprint"):
        p.add_argument(_flag(name), type=int, default=getattr(cfg, name))
    for f in fields(Hyperparameters):
        p.add_argument(_flag(f.name), type=float, default=f.default)
    for f in fields(JumpingRules):
        p.add_argument(_flag(f.name), type=float, default=f.default)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1, help="chains run in this many processes")
    p.add_argument("--out", default=os.environ.get(OUT_ENV, "lsirm_run"))
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsirm", description="Latent space item response models")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_fit_args(sub.add_parser("fit", help="fit a model by MCMC"))

    s = sub.add_parser("summarize", help="summary tables of a fitted run")
    s.add_argument("run")
    s.add_argument("--chain", type=int, default=1)
    s.add_argument("--probs", type=float, nargs="+", default=[0.025, 0.25, 0.5, 0.75, 0.975])

    m = sub.add_parser("map", help="export interaction map coordinates")
    m.add_argument("run")
    m.add_argument("--chain", type=int, default=1)
    m.add_argument("--rotate", choices=["none", "oblimin"], default="none")
    m.add_argument("--output", help="CSV path (default: <chain dir>/map[_oblimin].csv)")

    g = sub.add_parser("synth", help="simulate a response matrix with known parameters")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--p", type=int, required=True)
    g.add_argument("--model", choices=["1pl", "2pl"], default="1pl")
    g.add_argument("--family", choices=["binary", "normal"], default="binary")
    g.add_argument("--ndim", type=int, default=2)
    g.add_argument("--gamma", type=float, default=1.0)
    g.add_argument("--theta-sd", type=float, default=1.0)
    g.add_argument("--sigma-eps", type=float, default=1.0, help="residual sd (normal family)")
    g.add_argument("--missing-rate", type=float, default=0.0)
    g.add_argument("--missing-code", default="NA")
    g.add_argument("--layout", choices=["prior", "clustered"], default="prior")
    g.add_argument("--cluster-sd", type=float, default=0.25)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=os.environ.get(OUT_ENV, "lsirm_synth"))
    return parser


def _spec_from_args(args) -> ModelSpec:
    gamma_mode = GammaMode.FREE
    if args.fixed_gamma:
        gamma_mode = GammaMode.FIXED_AT_ONE
    elif args.spikenslab:
        gamma_mode = GammaMode.SPIKE_SLAB
    return ModelSpec(item_params=ItemParams(args.model), family=_FAMILIES[args.family],
                     gamma_mode=gamma_mode, missing_mode=MissingMode(args.missing),
                     latent_dim=args.ndim)


def _fit_one(job):
    data, spec, hp, jr, cfg, chain, chain_dir, quiet, extra = job
    samples = run_chain(data, spec, hp, jr, cfg, chain=chain,
                        progress=False if quiet else sys.stderr)
    aligned = postprocess.procrustes_align(samples)
    summary = postprocess.point_estimates(samples, aligned, spec)
    io.write_samples(samples, chain_dir, extra={**extra, "chain": chain,
                                               "reference_index": aligned.reference_index})
    with open(Path(chain_dir) / "summary.json", "w") as fh:
        json.dump(summary.to_dict(), fh, indent=2)
    return chain_dir


def cmd_fit(args, parser) -> int:
    if args.fixed_gamma and args.spikenslab:
        parser.error("--fixed-gamma and --spikenslab cannot be used at the same time")
    if args.ndim < 1 or args.chains < 1 or args.jobs < 1:
        parser.error("--ndim, --chains and --jobs must be positive")
    try:
        hp = Hyperparameters(**{f.name: getattr(args, f.name) for f in fields(Hyperparameters)})
        jr = JumpingRules(**{f.name: getattr(args, f.name) for f in fields(JumpingRules)})
        cfg = McmcConfig(niter=args.niter, nburn=args.nburn, nthin=args.nthin,
                         nprint=args.nprint, seed=args.seed)
    except ValueError as exc:
        parser.error(str(exc))
    spec = _spec_from_args(args)

    data = io.read_response_csv(args.data, args.missing_code, spec.family, header=args.header)
    if args.complete_cases:
        data = io.complete_cases(data)
    io.check_ingestible(data, spec.missing_mode)
    spec.check_data(data)
    log.info("fitting %s %s model to N=%d P=%d (%d missing)", spec.item_params.value,
             spec.family.value, data.n_respondents, data.n_items, data.n_missing)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_response_csv(out / "data.csv", data)
    extra = {"config": asdict(cfg), "seed": args.seed, "hyperparameters": asdict(hp),
             "jumping_rules": asdict(jr), "data_file": "data.csv"}
    jobs = [(data, spec, hp, jr, cfg, c, str(out / f"chain_{c + 1}"), args.quiet, extra)
            for c in range(args.chains)]
    if args.jobs > 1 and args.chains > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            dirs = list(pool.map(_fit_one, jobs))
    else:
        dirs = [_fit_one(job) for job in jobs]
    with open(out / "run.json", "w") as fh:
        json.dump({"chains": [Path(d).name for d in dirs], "spec": _spec_dict(spec),
                   "n_respondents": data.n_respondents, "n_items": data.n_items,
                   "n_missing": data.n_missing}, fh, indent=2)
    return 0


def _spec_dict(spec: ModelSpec) -> dict:
    return {k: (v.value if hasattr(v, "value") else v) for k, v in asdict(spec).items()}


def _chain_dir(run, chain) -> Path:
    d = Path(run) / f"chain_{chain}"
    if not (d / io.MANIFEST).exists():
        raise FileNotFoundError(f"no fitted chain at {d}")
    return d


def _quantile_rows(draws, probs, label):
    table = postprocess.draw_quantiles(draws, probs)
    return [{label: j + 1, **{f"q{p:g}": float(v) for p, v in zip(probs, row)}}
            for j, row in enumerate(table)]


def _write_rows(path, rows):
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def cmd_summarize(args, parser) -> int:
    chain_dir = _chain_dir(args.run, args.chain)
    try:
        postprocess.draw_quantiles(np.zeros((1, 1)), args.probs)
    except ValueError as exc:
        parser.error(str(exc))
    samples = io.read_samples(chain_dir)
    manifest = io.read_manifest(chain_dir)
    with open(chain_dir / "summary.json") as fh:
        summary = json.load(fh)
    data = io.read_response_csv(Path(args.run) / manifest.get("data_file", "data.csv"), "NA",
                                samples.spec.family)
    out = {"beta_quantiles": _quantile_rows(samples.beta, args.probs, "item")}
    if samples.alpha is not None:
        out["alpha_quantiles"] = _quantile_rows(samples.alpha, args.probs, "item")
    out["theta_by_score"] = postprocess.theta_by_score_summary(
        data, np.asarray(summary["theta_estimate"]))
    estimates = {"gamma_estimate": summary["gamma_estimate"],
                 "sigma_theta_estimate": summary["sigma_theta_estimate"]}
    for key in ("pi_estimate", "sigma_eps_estimate", "imp_estimate"):
        if key in summary:
            estimates[key] = summary[key]
    out["estimates"] = estimates
    out["acceptance"] = {
        "scope": samples.accept_scope,
        "accept_gamma": samples.accept_gamma,
        **{b: np.asarray(getattr(samples, b)).tolist()
           for b in ("accept_theta", "accept_beta", "accept_alpha", "accept_z", "accept_w")
           if getattr(samples, b) is not None},
    }
    sdir = chain_dir / "summary"
    sdir.mkdir(exist_ok=True)
    _write_rows(sdir / "beta_quantiles.csv", out["beta_quantiles"])
    _write_rows(sdir / "theta_by_score.csv", out["theta_by_score"])
    if "alpha_quantiles" in out:
        _write_rows(sdir / "alpha_quantiles.csv", out["alpha_quantiles"])
    with open(sdir / "estimates.json", "w") as fh:
        json.dump({**estimates, "acceptance": out["acceptance"]}, fh, indent=2)
    json.dump(out, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def cmd_map(args, parser) -> int:
    chain_dir = _chain_dir(args.run, args.chain)
    with open(chain_dir / "summary.json") as fh:
        summary = json.load(fh)
    z = np.asarray(summary["z_estimate"], dtype=float)
    w = np.asarray(summary["w_estimate"], dtype=float)
    side = {"rotation": args.rotate, "transform": np.eye(z.shape[1]).tolist()}
    if args.rotate == "oblimin":
        if z.shape[1] < 2:
            parser.error("--rotate needs a latent space of at least two dimensions")
        res = postprocess.oblimin_rotate(z, w)
        if not res.converged:
            log.warning("oblimin rotation did not converge after %d iterations", res.n_iter)
        z, w = res.z, res.w
        side.update(transform=res.transform.tolist(), converged=res.converged,
                    n_iter=res.n_iter, criterion_start=res.criterion[0],
                    criterion_end=res.criterion[-1])
    suffix = "" if args.rotate == "none" else f"_{args.rotate}"
    path = Path(args.output) if args.output else chain_dir / f"map{suffix}.csv"
    io.write_map_csv(path, z, w)
    with open(path.with_suffix(".json"), "w") as fh:
        json.dump(side, fh, indent=2)
    print(path)
    return 0


def cmd_synth(args, parser) -> int:
    if args.n < 2 or args.p < 2 or args.ndim < 1:
        parser.error("--n and --p must be at least 2 and --ndim positive")
    if not 0 <= args.missing_rate < 1 or args.gamma < 0 or args.theta_sd <= 0 or args.sigma_eps < 0:
        parser.error("invalid simulation parameters")
    spec = ModelSpec(item_params=ItemParams(args.model), family=_FAMILIES[args.family],
                     latent_dim=args.ndim)
    gen = datagen.GenSpec(spec=spec, n=args.n, p=args.p, gamma=args.gamma,
                          sigma_sq=args.theta_sd ** 2, sigma_eps_sq=args.sigma_eps ** 2,
                          layout=args.layout, cluster_sd=args.cluster_sd,
                          missing_rate=args.missing_rate)
    data, truth = datagen.generate(gen, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_response_csv(out / "data.csv", data, args.missing_code)
    datagen.write_truth(out / "truth.json", gen, truth)
    log.info("wrote %s (%dx%d, %d missing)", out / "data.csv", args.n, args.p, data.n_missing)
    return 0


_COMMANDS = {"fit": cmd_fit, "summarize": cmd_summarize, "map": cmd_map, "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return _COMMANDS[args.command](args, parser)
    except (ValueError, OSError) as exc:
        print(f"lsirm: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
