"""Command-line entry point: ``probrobust <command> [--config FILE] ...``.

Exit codes: 0 success, 1 configuration/input error, 2 numeric fault,
3 event too rare for the estimator configuration.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from importlib import resources

import numpy as np
from pydantic import ValidationError

from . import config as C
from ._parallel import set_threads
from .attack import TrainConfig, train
from .bench import format_table, mc_slopes, run_bench
from .data import make_blobs, make_circles, make_moons, read_csv, write_csv
from .errors import ConfigError, InvalidInputError, ProbRobustError
from .estimators import (AmlsConfig, amls_estimate, last_particle_estimate, mc_estimate,
                         seq_estimate)
from .global_metrics import LipschitzConfig, lipschitz_estimate, load_partition, tsr_estimate
from .model import init_network, load_model, save_model
from .oracle import grid_pr, linear_net_weights, linear_pr_analytic
from .perturb import PerturbSpec
from .risk import risk_measure, sample_margins

SCHEMA_VERSION = "1.0"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def resolve_path(path: str, base_dir: str) -> str:
    """``builtin:NAME`` resolves to a bundled fixture; relative paths to the config's directory."""
    if path.startswith("builtin:"):
        return str(resources.files("probrobust") / "fixtures" / (path[len("builtin:"):] + ".json"))
    if os.path.isabs(path):
        return path
    return os.path.join(base_dir, path)


def _load_config(args, schema):
    doc = {}
    base_dir = os.getcwd()
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        base_dir = os.path.dirname(os.path.abspath(args.config))
    if not isinstance(doc, dict):
        raise ConfigError("config document must be an object")
    if args.seed is not None and "seed" in schema.model_fields:
        doc["seed"] = args.seed
    if args.out is not None:
        doc["out"] = args.out
    try:
        cfg = schema.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(f"invalid config:\n{exc}") from exc
    return cfg, base_dir


_summary: list = []


def _say(msg: str) -> None:
    _summary.append(msg)


def _flush_summary(stream) -> None:
    for line in _summary:
        print(line, file=stream)
    _summary.clear()


def _require_files(base_dir, *paths):
    for p in paths:
        if p is None:
            continue
        full = resolve_path(p, base_dir)
        if not os.path.isfile(full):
            raise ConfigError(f"file not found: {p}")


def _report(command, cfg, results, seeds, t0):
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": cfg.model_dump(mode="json"),
        "results": results,
        "seeds": seeds,
        "runtime_ms": int((time.perf_counter() - t0) * 1000),
    }


def write_report(report, out):
    text = json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"
    if out:
        os.makedirs(os.path.dirname(os.path.abspath(out)) or ".", exist_ok=True)
        with open(out, "w") as fh:
            fh.write(text)
    return text


def _spec_from(pcfg: C.PerturbCfg, center) -> PerturbSpec:
    return PerturbSpec(center, pcfg.radius, pcfg.norm, pcfg.distribution, pcfg.sigma, pcfg.domain_box)


def _centers(cfg, base_dir):
    """Centers to evaluate: explicit, one data row, or every data row."""
    p = cfg.perturb
    if p.center is not None:
        return [np.asarray(p.center, dtype=float)]
    X = read_csv(resolve_path(cfg.data, base_dir)).X
    if p.center_ref is not None:
        if p.center_ref >= X.shape[0]:
            raise ConfigError(f"center_ref {p.center_ref} out of range ({X.shape[0]} rows)")
        return [X[p.center_ref]]
    return list(X)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen_data(args):
    if args.n < 2:
        raise ConfigError("n must be >= 2")
    seed = 0 if args.seed is None else args.seed
    if args.kind == "moons":
        ds = make_moons(args.n, args.noise if args.noise is not None else 0.1, seed)
    elif args.kind == "circles":
        ds = make_circles(args.n, args.factor, args.noise if args.noise is not None else 0.05, seed)
    else:
        ds = make_blobs(args.n, [[-1.0, -1.0], [1.0, 1.0]], args.noise if args.noise is not None else 0.2, seed)
    out = args.out or f"{args.kind}.csv"
    write_csv(ds, out)
    _say(f"wrote {len(ds)} {args.kind} points to {out}")
    return None


def cmd_train(args):
    t0 = time.perf_counter()
    cfg, base = _load_config(args, C.TrainRunConfig)
    if args.seed is not None:
        cfg.train.seed = args.seed
    _require_files(base, cfg.data, cfg.model, cfg.probe)
    tcfg = TrainConfig(**cfg.train.model_dump())
    ds = read_csv(resolve_path(cfg.data, base))
    if cfg.model:
        net = load_model(resolve_path(cfg.model, base))
    else:
        net = init_network([ds.dim] + list(cfg.hidden) + [max(ds.class_count, 2)], seed=cfg.init_seed)
    probe = None
    if cfg.probe:
        probe = read_csv(resolve_path(cfg.probe, base)).X[: cfg.probe_points]
    log_path = resolve_path(cfg.log_out, base) if cfg.log_out else None
    log_fh = open(log_path, "w") if log_path else None
    try:
        def on_epoch(rec):
            if log_fh:
                log_fh.write(json.dumps(rec, sort_keys=True) + "\n")
                log_fh.flush()

        res = train(net, ds, tcfg, probe=probe, probe_n=cfg.probe_n, on_epoch=on_epoch)
    finally:
        if log_fh:
            log_fh.close()
    save_model(res.net, resolve_path(cfg.model_out, base))
    last = res.log[-1]
    _say(f"trained {tcfg.mode} for {tcfg.epochs} epochs: loss {last['loss']:.4f}, "
          f"clean acc {last['clean_acc']:.3f}" + (f", mean PR {last['mean_pr']:.4f}" if "mean_pr" in last else ""))
    summary = {"final": last, "epochs": len(res.log), "model_out": cfg.model_out,
               "train_config": tcfg.to_dict()}
    return _report("train", cfg, summary, {"train": tcfg.seed, "init": cfg.init_seed}, t0), cfg.out


def cmd_eval_pr(args):
    t0 = time.perf_counter()
    cfg, base = _load_config(args, C.EvalPrConfig)
    _require_files(base, cfg.model, cfg.data)
    net = load_model(resolve_path(cfg.model, base))
    centers = _centers(cfg, base)
    est = cfg.estimator
    results, seeds = [], []
    for i, center in enumerate(centers):
        spec = _spec_from(cfg.perturb, center)
        seed = cfg.seed + i
        if est.kind == "mc":
            r = mc_estimate(net, spec, est.n, cfg.confidence, est.bound, seed).to_dict()
        elif est.kind == "seq":
            r = seq_estimate(net, spec, est.threshold, cfg.confidence, est.max_samples, est.batch, seed).to_dict()
        elif est.kind == "amls":
            acfg = AmlsConfig(est.n_particles, est.level_fraction, est.mh_steps, est.proposal_scale, est.max_levels)
            r = amls_estimate(net, spec, acfg, cfg.confidence, seed).to_dict()
        else:
            r = last_particle_estimate(net, spec, est.n_particles, est.mh_steps, est.max_iters,
                                       cfg.confidence, seed, est.proposal_scale).to_dict()
        r["center"] = list(map(float, center))
        results.append(r)
        seeds.append(seed)
        pr = r["estimate"]["pr_point"] if est.kind == "seq" else r["pr_point"]
        extra = f" verdict {r['verdict']}" if est.kind == "seq" else ""
        _say(f"[{i}] PR {pr:.6g}{extra}")
    return _report("eval-pr", cfg, results, seeds, t0), cfg.out


def cmd_eval_risk(args):
    t0 = time.perf_counter()
    cfg, base = _load_config(args, C.EvalRiskConfig)
    _require_files(base, cfg.model, cfg.data)
    net = load_model(resolve_path(cfg.model, base))
    center = _centers(cfg, base)[0]
    sample = sample_margins(net, _spec_from(cfg.perturb, center), cfg.n, cfg.seed)
    results = []
    for item in cfg.measures:
        rr = risk_measure(sample, item.measure, item.level)
        results.append(rr.to_dict())
        _say(f"{item.measure}@{item.level:g} = {rr.value:.6g}")
    return _report("eval-risk", cfg, results, [cfg.seed], t0), cfg.out


def cmd_tsr(args):
    t0 = time.perf_counter()
    cfg, base = _load_config(args, C.TsrConfig)
    _require_files(base, cfg.model, cfg.partition)
    net = load_model(resolve_path(cfg.model, base))
    part = load_partition(resolve_path(cfg.partition, base))
    tmpl = cfg.perturb.model_dump(exclude_none=True)
    est = tsr_estimate(net, part, tmpl, cfg.n, cfg.confidence, cfg.bound, cfg.seed)
    _say(f"TSR {est.pr_point:.6g} [{est.ci_low:.6g}, {est.ci_high:.6g}]")
    return _report("tsr", cfg, est.to_dict(), [cfg.seed], t0), cfg.out


def cmd_lipschitz(args):
    t0 = time.perf_counter()
    cfg, base = _load_config(args, C.LipschitzCfg)
    _require_files(base, cfg.model, cfg.partition)
    net = load_model(resolve_path(cfg.model, base))
    part = load_partition(resolve_path(cfg.partition, base))
    lcfg = LipschitzConfig(cfg.gamma, cfg.k, cfg.eps_target, cfg.pair_budget, cfg.input_norm)
    res = lipschitz_estimate(net, part, lcfg, cfg.confidence, cfg.seed)
    e = res.estimate
    _say(f"P(Lipschitz) {e.pr_point:.6g} [{e.ci_low:.6g}, {e.ci_high:.6g}] -> {res.verdict}")
    return _report("lipschitz", cfg, res.to_dict(), [cfg.seed], t0), cfg.out


def cmd_oracle(args):
    t0 = time.perf_counter()
    cfg, base = _load_config(args, C.OracleCfg)
    _require_files(base, cfg.model)
    net = load_model(resolve_path(cfg.model, base))
    spec = _spec_from(cfg.perturb, cfg.perturb.center)
    if cfg.method == "grid":
        res = grid_pr(net, spec, cfg.points_per_dim)
    else:
        if spec.norm != "linf" or spec.distribution != "uniform":
            raise ConfigError("linear_analytic oracle needs uniform Linf perturbations")
        w, b = linear_net_weights(net)
        res = linear_pr_analytic(w, b, spec.center, spec.radius, cfg.grid_size)
    _say(f"PR exact ({res.method}) = {res.pr_exact:.6g}")
    return _report("oracle", cfg, res.to_dict(), [], t0), cfg.out


def cmd_bench(args):
    t0 = time.perf_counter()
    cfg, _ = _load_config(args, C.BenchConfig)
    rows, oracle = run_bench(cfg.decades, cfg.mc_budgets, cfg.reps, cfg.amls_particles,
                             cfg.amls_level_fraction, cfg.lp_particles, cfg.mh_steps, cfg.lp_reps, cfg.seed)
    _say(format_table(rows))
    slopes = mc_slopes(rows)
    results = {"table": rows, "oracle": oracle, "mc_error_slopes": {str(k): v for k, v in slopes.items()}}
    return _report("bench", cfg, results, [cfg.seed], t0), cfg.out


COMMANDS = {
    "train": cmd_train,
    "eval-pr": cmd_eval_pr,
    "eval-risk": cmd_eval_risk,
    "tsr": cmd_tsr,
    "lipschitz": cmd_lipschitz,
    "oracle": cmd_oracle,
    "bench": cmd_bench,
}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would collide with the numeric-fault code
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="probrobust", description="Probabilistic robustness toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output path")
        p.add_argument("--threads", type=int, default=1, help="worker thread cap")

    g = sub.add_parser("gen-data", help="write a synthetic dataset CSV")
    g.add_argument("kind", choices=["moons", "blobs", "circles"])
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--noise", type=float, default=None)
    g.add_argument("--factor", type=float, default=0.5)
    common(g)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config document")
        common(p)
    return parser


def main(argv=None) -> int:
    _summary.clear()
    try:
        args = build_parser().parse_args(argv)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        set_threads(args.threads)
        if args.command == "gen-data":
            cmd_gen_data(args)
            _flush_summary(sys.stdout)
            return 0
        if args.command != "bench" and not args.config:
            raise ConfigError(f"{args.command} needs --config")
        report, out = COMMANDS[args.command](args)
        text = write_report(report, out)
        # the JSON report owns stdout when there is no output file
        _flush_summary(sys.stdout if out else sys.stderr)
        if not out:
            sys.stdout.write(text)
        return 0
    except ProbRobustError as exc:
        _flush_summary(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        _flush_summary(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        set_threads(1)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
