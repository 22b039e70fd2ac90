"""Command-line entry point: ``routenet <subcommand> [options]``.

Units: capacities and demands are bits per time unit, buffers are packets,
delays are time units. Every file written embeds a meta record with the tool
version, the argument vector and the seeds used.

Exit codes::

    0  success
    2  usage error (unknown flag, bad or missing argument value)
    3  input file not found
    4  input file does not match its schema
    5  run failed (training diverged, every scenario failed, ...)
    1  anything else

Failures print one JSON line to stderr: ``{"error": <kind>, "exit": <code>, "message": ...}``.
"""
from __future__ import annotations

import argparse
import json
import logging
import secrets
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, queueing, topologies
from .datasets import (GenConfig, SPLIT_MODES, default_jobs, fingerprint, generate_dataset, read_dataset,
                       sample_to_json, split, targets_from_stats, Sample, write_dataset)
from .evaluation import cdf_csv, evaluate, reports_json, table
from .graph import scenario_graph
from .model import HEADS, FeatureScaling, ModelParams, forward
from .netcore import (Link, Topology, generate_routing_variants, generate_traffic_matrix, routing_from_text,
                      routing_to_text, shortest_path_routing, tm_from_text, tm_to_text,
                      topology_from_text, topology_to_text, validate_routing)
from .optimizer import (BaselineProvider, CandidateFamily, ModelProvider, OptimizationPolicy,
                        plan_and_compare, run_routing_study, select_routing)
from .rng import ALGORITHM, derive_seed
from .simulator import SimConfig, simulate
from .training import TrainConfig, TrainingAborted, train

log = logging.getLogger("routenet")

EXIT_OK, EXIT_OTHER, EXIT_USAGE, EXIT_MISSING, EXIT_SCHEMA, EXIT_FAILED = 0, 1, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, kind: str, code: int, message: str):
        super().__init__(message)
        self.kind, self.code = kind, code


def usage(msg):
    return CliError("usage", EXIT_USAGE, msg)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise usage(message)


# --- helpers ---------------------------------------------------------------

def _meta(args, **seeds) -> dict:
    return {"tool": "routenet", "version": __version__, "argv": list(args.argv),
            "seeds": {k: v for k, v in seeds.items() if v is not None}, "rng": ALGORITHM}


def _seed(args) -> int:
    """The --seed value, or a fresh one (recorded in the output meta)."""
    if args.seed is None:
        args.seed = secrets.randbits(63)
    return args.seed


def _read(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise CliError("missing-file", EXIT_MISSING, f"no such file: {path}")
    return p.read_text(encoding="utf-8")


def _parse(path: str, loader):
    text = _read(path)
    try:
        return loader(text)
    except (ValueError, KeyError, TypeError, IndexError) as exc:
        raise CliError("schema", EXIT_SCHEMA, f"{path}: {exc}") from exc


def _topology(path: str):
    if path in topologies.BUILTIN and not Path(path).exists():
        return topologies.get(path)
    return _parse(path, topology_from_text)


def _dataset(path: str):
    try:
        return read_dataset(path)
    except FileNotFoundError as exc:
        raise CliError("missing-file", EXIT_MISSING, str(exc)) from exc
    except (ValueError, KeyError, TypeError, OSError, EOFError) as exc:
        raise CliError("schema", EXIT_SCHEMA, f"{path}: {exc}") from exc


def _checkpoints(paths) -> dict[str, ModelParams]:
    """Load checkpoints keyed by role ("delay" or "drops")."""
    out = {}
    for path in paths or []:
        params, _ = _parse(path, ModelParams.from_text)
        role = "drops" if params.config.head == "binomial-drops" else "delay"
        if role in out:
            raise usage(f"two {role} checkpoints given")
        out[role] = params
    return out


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) in (None, [], "")]
    if missing:
        raise usage("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _emit(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def _json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True) + "\n"


def _pair_records(kpis) -> list[dict]:
    return [{"src": a, "dst": b, "delay": d, "jitter": j, "loss": l}
            for (a, b), (d, j, l) in sorted(kpis.items())]


# --- subcommands -----------------------------------------------------------

def cmd_gen_topo(args):
    _need(args, "name")
    if args.name not in topologies.BUILTIN:
        raise usage(f"unknown topology {args.name!r}; choose from {sorted(topologies.BUILTIN)}")
    topo = topologies.get(args.name)
    if args.buffer is not None:
        topo = Topology(topo.node_count, [Link(l.id, l.src, l.dst, l.capacity, args.buffer)
                                          for l in topo.links], topo.name)
    _emit(topology_to_text(topo, _meta(args)), args.out)


def cmd_gen_tm(args):
    _need(args, "topo", "ti")
    topo = _topology(args.topo)
    seed = _seed(args)
    if args.ti <= 0:
        raise usage("--ti must be positive")
    _emit(tm_to_text(generate_traffic_matrix(topo, args.ti, seed), _meta(args, seed=seed)), args.out)


def cmd_gen_routings(args):
    _need(args, "topo", "out_dir")
    topo = _topology(args.topo)
    seed = _seed(args)
    if args.count < 1:
        raise usage("--count must be >= 1")
    k = args.perturbed_links or max(1, topo.n_links // 2)
    schemes = generate_routing_variants(topo, args.count, k, args.delta, seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, r in enumerate(schemes):
        (out / f"variant-{i:04d}.routing").write_text(
            routing_to_text(r, {**_meta(args, seed=seed), "variant": i}), encoding="utf-8")
    print(json.dumps({"written": len(schemes), "dir": str(out)}))


def _scenario(args):
    _need(args, "topo", "routing", "tm")
    topo = _topology(args.topo)
    routing = _parse(args.routing, routing_from_text)
    tm = _parse(args.tm, tm_from_text)
    rep = validate_routing(topo, routing, tm)
    if not rep.ok:
        raise CliError("schema", EXIT_SCHEMA, f"invalid routing for pair {rep.pair}: {rep.reason}")
    return topo, routing, tm


def cmd_simulate(args):
    topo, routing, tm = _scenario(args)
    seed = _seed(args)
    cfg = SimConfig(args.duration, args.warmup_fraction, seed, not args.buffer_excludes_in_service,
                    args.packet_sizes)
    stats = simulate(topo, routing, tm, cfg)
    meta = {**_meta(args, seed=seed), "duration": args.duration, "warmup_fraction": args.warmup_fraction}
    sample = Sample(topo, routing, tm, targets_from_stats(tm.active_pairs(), stats), 0, meta)
    _emit(sample_to_json(sample) + "\n", args.out)


def cmd_gen_dataset(args):
    _need(args, "out")
    names = [n for n in args.topologies.split(",") if n]
    topos = [_topology(n) for n in names]
    seed = _seed(args)
    cfg = GenConfig((args.ti_min, args.ti_max), args.schemes, args.tms, args.perturbed_links, args.delta,
                    args.duration, args.warmup_fraction, seed)
    jobs = args.jobs or default_jobs()
    samples, failures = generate_dataset(topos, cfg, jobs=jobs, progress=True)
    if not samples:
        raise CliError("failed", EXIT_FAILED, f"all {len(failures)} scenarios failed")
    paths = write_dataset(samples, args.out)
    meta = {**_meta(args, seed=seed), "config": asdict(cfg), "samples": len(samples),
            "failures": [list(f) for f in failures], "fingerprint": fingerprint(samples),
            "shards": [p.name for p in paths]}
    Path(f"{args.out}.meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({"samples": len(samples), "failures": len(failures), "shards": len(paths)}))


def cmd_split(args):
    _need(args, "data", "out_train", "out_test")
    samples = _dataset(args.data)
    seed = _seed(args)
    holdout = [h for h in (args.holdout or "").split(",") if h]
    try:
        tr, te = split(samples, args.test_fraction, args.mode, seed, holdout)
    except ValueError as exc:
        raise usage(str(exc)) from exc
    for prefix, part in ((args.out_train, tr), (args.out_test, te)):
        write_dataset(part, prefix)
        meta = {**_meta(args, seed=seed), "samples": len(part), "fingerprint": fingerprint(part)}
        Path(f"{prefix}.meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({"train": len(tr), "test": len(te)}))


def cmd_inspect(args):
    _need(args, "data")
    samples = _dataset(args.data)
    by_topo: dict[str, int] = {}
    for s in samples:
        by_topo[s.topology.name] = by_topo.get(s.topology.name, 0) + 1
    pairs = sum(len(s.pairs) for s in samples)
    print(json.dumps({"samples": len(samples), "pairs": pairs, "topologies": by_topo,
                      "fingerprint": fingerprint(samples)}, sort_keys=True))


def cmd_train(args):
    if args.preset == "paper":
        cfg = TrainConfig.paper(args.head, args.seed if args.seed is not None else 0)
        print("paper hyperparameters: " + json.dumps(asdict(cfg), sort_keys=True), flush=True)
    _need(args, "data", "out")
    seed = _seed(args)
    if args.preset == "paper":
        cfg = TrainConfig.paper(args.head, seed)
    else:
        cfg = TrainConfig(args.head, args.steps, args.batch_size, args.learning_rate, args.weight_decay,
                          args.dropout, args.hidden_dim, args.iterations, args.readout_hidden, seed,
                          args.val_every, args.patience if args.patience > 0 else None)
    samples = _dataset(args.data)
    val = _dataset(args.val_data) if args.val_data else []
    try:
        res = train(cfg, samples, val, nan_dump=f"{args.out}.nan.json")
    except TrainingAborted as exc:
        raise CliError("failed", EXIT_FAILED, str(exc)) from exc
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    text = res.params.to_text({"train": asdict(cfg), "best_step": res.best_step, "best_val": res.best_val,
                               "steps_run": res.steps_run, "dataset": fingerprint(samples),
                               "history": res.history, **_meta(args, seed=seed)})
    Path(args.out).write_text(text, encoding="utf-8")
    print(json.dumps({"steps_run": res.steps_run, "best_step": res.best_step, "best_val": res.best_val}))


def cmd_eval(args, force_baseline=False):
    _need(args, "checkpoint", "data")
    models = _checkpoints(args.checkpoint)
    if set(models) != {"delay", "drops"}:
        raise usage("eval needs one delay checkpoint and one binomial-drops checkpoint")
    samples = _dataset(args.data)
    reports = evaluate(models["delay"], models["drops"], samples, args.with_baseline or force_baseline)
    print(table(reports))
    if args.out:
        _emit(reports_json(reports, _meta(args)), args.out)
        for label, rep in reports.items():
            for kpi, errs in rep.errors.items():
                if errs.size:
                    Path(f"{args.out}.{label}.{kpi}.cdf.csv").write_text(cdf_csv(errs), encoding="utf-8")


def cmd_compare(args):
    cmd_eval(args, force_baseline=True)


def cmd_baseline(args):
    topo, routing, tm = _scenario(args)
    kpis = queueing.predict(topo, routing, tm)
    _emit(_json_line({"meta": _meta(args), "model": "QT", "pairs": _pair_records(kpis)}), args.out)


def cmd_predict(args):
    topo, routing, tm = _scenario(args)
    models = _checkpoints(args.checkpoint)
    if set(models) != {"delay", "drops"}:
        raise usage("predict needs one delay checkpoint and one binomial-drops checkpoint")
    kpis = ModelProvider(models["delay"], models["drops"])(topo, routing, tm)
    _emit(_json_line({"meta": _meta(args), "model": "RN", "pairs": _pair_records(kpis)}), args.out)


def _policy(args):
    try:
        return OptimizationPolicy(args.loss_threshold, args.jitter_threshold)
    except ValueError as exc:
        raise usage(str(exc)) from exc


def _provider(args):
    models = _checkpoints(args.checkpoint)
    if args.provider == "model":
        if set(models) != {"delay", "drops"}:
            raise usage("--provider model needs a delay and a binomial-drops checkpoint")
        return ModelProvider(models["delay"], models["drops"])
    return BaselineProvider()


def cmd_optimize_routing(args):
    _need(args, "topo", "out_dir")
    topo = _topology(args.topo)
    seed = _seed(args)
    policy = _policy(args)
    family = CandidateFamily(args.candidates, args.perturbed_links, args.delta)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.tm:
        tm = _parse(args.tm, tm_from_text)
        cands = family.generate(topo, derive_seed(seed, 0))
        routing, trace = select_routing(cands, topo, tm, _provider(args), policy)
        (out / "chosen.routing").write_text(routing_to_text(routing, {**_meta(args, seed=seed),
                                                                      "candidate": trace.chosen}), encoding="utf-8")
        rep = {"meta": _meta(args, seed=seed), "branch": trace.branch, "chosen": trace.chosen,
               "scores": {str(i): asdict(s) for i, s in trace.scores.items()}, "failures": trace.failures}
        (out / "report.json").write_text(json.dumps(rep, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        print(json.dumps({"branch": trace.branch, "chosen": trace.chosen}))
        return
    providers = {"RouteNet": _provider(args), "utilization": "utilization"}
    if args.provider != "model":
        providers = {"QT": providers.pop("RouteNet"), "utilization": "utilization"}
    sim = SimConfig(args.duration, args.warmup_fraction)
    ti_levels = [float(x) for x in args.ti_levels.split(",") if x]
    study = run_routing_study(topo, ti_levels, args.tms, providers, policy, seed, family, sim)
    for metric in ("delay", "loss", "jitter_delay"):
        (out / f"boxplot_{metric}.csv").write_text(study.boxplot_csv(metric), encoding="utf-8")
    summary = {name: {"mean_delay": study.mean(name, "delay"),
                      "mean_loss": study.mean(name, "loss"),
                      "mean_jitter_delay": study.mean(name, "jitter_delay"),
                      "loss_satisfaction": study.loss_satisfaction(name, policy.loss_threshold)}
               for name in study.strategies()}
    rep = {"meta": _meta(args, seed=seed), "summary": summary, "failures": study.failures}
    (out / "report.json").write_text(json.dumps(rep, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(summary, sort_keys=True))


def cmd_plan_link(args):
    _need(args, "topo", "tm", "out_dir")
    topo = _topology(args.topo)
    seed = _seed(args)
    tms = [_parse(p, tm_from_text) for p in args.tm]
    family = CandidateFamily(args.candidates, args.perturbed_links, args.delta)
    provider = _provider(args)
    sim = SimConfig(args.duration, args.warmup_fraction, derive_seed(seed, 9))
    try:
        rows = [plan_and_compare(topo, tm, args.capacity, family, provider, _policy(args), sim,
                                 args.cascade, seed).row(f"TM{i + 1}") for i, tm in enumerate(tms)]
    except ValueError as exc:
        raise usage(str(exc)) from exc
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cols = list(rows[0])
    lines = [",".join(cols)] + [",".join(str(r[c]) for c in cols) for r in rows]
    (out / "table.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "report.json").write_text(json.dumps({"meta": _meta(args, seed=seed), "rows": rows},
                                                sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print("\n".join(lines))


def cmd_bench(args):
    _need(args, "topo")
    topo = _topology(args.topo)
    seed = _seed(args)
    models = _checkpoints(args.checkpoint)
    params = models.get("delay") or ModelParams.init(TrainConfig().model_config(FeatureScaling()), seed)
    tm = generate_traffic_matrix(topo, args.ti, seed)
    graph = scenario_graph(topo, shortest_path_routing(topo), tm)
    sched = graph.schedule()
    forward(params, graph, schedule=sched)
    times = []
    for _ in range(args.repeats):
        t = time.perf_counter()
        forward(params, graph, schedule=sched)
        times.append(time.perf_counter() - t)
    print(json.dumps({"topology": topo.name, "paths": len(graph.paths), "repeats": args.repeats,
                      "median_ms": 1000 * float(np.median(times)), "min_ms": 1000 * float(np.min(times))}))


# --- parser ----------------------------------------------------------------

UNITS = "Units: capacity and demand in bits/time-unit, buffers in packets, delay in time units."


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="routenet", description=__doc__.split("\n")[0], epilog=UNITS)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", help="key = value file; keys are option names, command-line flags win")
    p.add_argument("--jobs", type=int, default=None,
                   help="worker processes (default: all cores for generation, 1 elsewhere)")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_ + " " + UNITS)
        sp.set_defaults(func=func)
        return sp

    def seed(sp):
        sp.add_argument("--seed", type=int, help="PRNG seed (auto-generated and recorded if omitted)")

    def scenario(sp):
        sp.add_argument("--topo", help=".topo file or built-in name (" + ", ".join(sorted(topologies.BUILTIN)) + ")")
        sp.add_argument("--routing", help=".routing file")
        sp.add_argument("--tm", help=".tm file (demands in bits/time-unit)")

    def sim_opts(sp, duration=16000.0):
        sp.add_argument("--duration", type=float, default=duration, help="simulated time units")
        sp.add_argument("--warmup-fraction", type=float, default=0.1, help="fraction of duration discarded")

    def optim_opts(sp):
        sp.add_argument("--checkpoint", action="append", help="model checkpoint (give delay and drops)")
        sp.add_argument("--provider", choices=("model", "baseline"), default="model")
        sp.add_argument("--candidates", type=int, default=40, help="routing variants per scenario")
        sp.add_argument("--perturbed-links", type=int, default=None, help="default: half the directed links")
        sp.add_argument("--delta", type=float, default=0.5, help="weight added per pick")
        sp.add_argument("--loss-threshold", type=float, default=1e-3, help="mean loss ratio bound")
        sp.add_argument("--jitter-threshold", type=float, default=0.2, help="mean jitter/delay bound (time units)")
        sim_opts(sp)
        seed(sp)
        sp.add_argument("--out-dir")

    sp = add("gen-topo", cmd_gen_topo, "Write a built-in topology as a .topo file.")
    sp.add_argument("--name", help="built-in topology name")
    sp.add_argument("--buffer", type=int, help="override every buffer size (packets)")
    sp.add_argument("--out")

    sp = add("gen-tm", cmd_gen_tm, "Draw a traffic matrix: demand = U(0.1,1) * TI / (N-1).")
    sp.add_argument("--topo")
    sp.add_argument("--ti", type=float, help="traffic intensity (bits/time-unit)")
    seed(sp)
    sp.add_argument("--out")

    sp = add("gen-routings", cmd_gen_routings, "Write shortest-path routing variants.")
    sp.add_argument("--topo")
    sp.add_argument("--count", type=int, default=40)
    sp.add_argument("--perturbed-links", type=int, default=None, help="default: half the directed links")
    sp.add_argument("--delta", type=float, default=0.5)
    seed(sp)
    sp.add_argument("--out-dir")

    sp = add("simulate", cmd_simulate, "Simulate one scenario; writes one sample record.")
    scenario(sp)
    sim_opts(sp)
    sp.add_argument("--packet-sizes", choices=("mixture", "exponential"), default="mixture",
                    help="mixture: 300/1700 bits; exponential: mean 1000 bits")
    sp.add_argument("--buffer-excludes-in-service", action="store_true",
                    help="buffer counts waiting packets only (default counts the one in service)")
    seed(sp)
    sp.add_argument("--out")

    sp = add("gen-dataset", cmd_gen_dataset, "Simulate topology x routing x TM scenarios into shards.")
    sp.add_argument("--topologies", default="toy5,toy6,toy8", help="comma-separated names or .topo files")
    sp.add_argument("--schemes", type=int, default=20, help="routing variants per topology")
    sp.add_argument("--tms", type=int, default=40, help="traffic matrices per routing")
    sp.add_argument("--ti-min", type=float, default=6000.0, help="bits/time-unit")
    sp.add_argument("--ti-max", type=float, default=24000.0, help="bits/time-unit")
    sp.add_argument("--perturbed-links", type=int, default=None)
    sp.add_argument("--delta", type=float, default=0.5)
    sim_opts(sp)
    seed(sp)
    sp.add_argument("--out", help="shard prefix")

    sp = add("split", cmd_split, "Split a dataset into train and test shards.")
    sp.add_argument("--data")
    sp.add_argument("--test-fraction", type=float, default=0.25)
    sp.add_argument("--mode", choices=SPLIT_MODES, default="hold-out-routing")
    sp.add_argument("--holdout", help="comma-separated topology names for hold-out-topology")
    seed(sp)
    sp.add_argument("--out-train")
    sp.add_argument("--out-test")

    sp = add("inspect", cmd_inspect, "Summarize a dataset.")
    sp.add_argument("--data")

    sp = add("train", cmd_train, "Train one head.")
    sp.add_argument("--data")
    sp.add_argument("--val-data")
    sp.add_argument("--head", choices=HEADS, default="normal-delay")
    sp.add_argument("--preset", choices=("desk", "paper"), default="desk",
                    help="paper: published hyperparameters, 260k steps, no early stopping")
    d = TrainConfig()
    sp.add_argument("--steps", type=int, default=d.steps)
    sp.add_argument("--batch-size", type=int, default=d.batch_size, help="samples per step")
    sp.add_argument("--learning-rate", type=float, default=d.learning_rate)
    sp.add_argument("--weight-decay", type=float, default=d.weight_decay)
    sp.add_argument("--dropout", type=float, default=d.dropout_rate)
    sp.add_argument("--hidden-dim", type=int, default=d.hidden_dim)
    sp.add_argument("--iterations", type=int, default=d.iterations, help="message-passing rounds")
    sp.add_argument("--readout-hidden", type=int, default=d.readout_hidden)
    sp.add_argument("--val-every", type=int, default=d.val_every)
    sp.add_argument("--patience", type=int, default=d.patience, help="0 disables early stopping")
    seed(sp)
    sp.add_argument("--out", help="checkpoint path")

    for name, func, help_ in (("eval", cmd_eval, "Score checkpoints on a dataset (MRE, loss correlation)."),
                              ("compare", cmd_compare, "Like eval, always including the queuing baseline.")):
        sp = add(name, func, help_)
        sp.add_argument("--checkpoint", action="append", help="give the delay and the drops checkpoint")
        sp.add_argument("--data")
        sp.add_argument("--with-baseline", action="store_true", help="add the QT column")
        sp.add_argument("--out", help="JSON report; CDF CSVs are written beside it")

    sp = add("baseline", cmd_baseline, "Queuing-theory per-pair predictions.")
    scenario(sp)
    sp.add_argument("--out")

    sp = add("predict", cmd_predict, "Model per-pair predictions.")
    scenario(sp)
    sp.add_argument("--checkpoint", action="append")
    sp.add_argument("--out")

    sp = add("optimize-routing", cmd_optimize_routing,
             "Pick a routing for --tm, or run the strategy study when --tm is omitted.")
    sp.add_argument("--topo")
    sp.add_argument("--tm")
    sp.add_argument("--ti-levels", default="8000,16000,24000", help="comma-separated, bits/time-unit")
    sp.add_argument("--tms", type=int, default=10, help="traffic matrices per TI level")
    optim_opts(sp)

    sp = add("plan-link", cmd_plan_link, "Choose where to add one bidirectional link.")
    sp.add_argument("--topo")
    sp.add_argument("--tm", action="append", help="repeatable .tm file")
    sp.add_argument("--capacity", type=float, default=40000.0, help="new link capacity (bits/time-unit)")
    sp.add_argument("--cascade", action="store_true", help="apply loss and jitter constraints first")
    optim_opts(sp)

    sp = add("bench", cmd_bench, "Time the model forward pass.")
    sp.add_argument("--topo", default="nsfnet")
    sp.add_argument("--checkpoint", action="append")
    sp.add_argument("--ti", type=float, default=10000.0)
    sp.add_argument("--repeats", type=int, default=20)
    seed(sp)
    return p


def load_config(path: str) -> dict[str, str]:
    values = {}
    for n, raw in enumerate(_read(path).splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError("schema", EXIT_SCHEMA, f"{path}:{n}: expected key = value")
        key, val = (x.strip() for x in line.split("=", 1))
        values[key.replace("-", "_")] = val
    return values


def _apply_config(parser, argv, values):
    """Re-parse with config values as defaults so explicit flags still win."""
    pre = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices.get(pre.command) if pre.command else None
    actions = {a.dest: a for a in (sub or parser)._actions}
    defaults = {}
    for key, val in values.items():
        if key not in actions:
            raise CliError("schema", EXIT_SCHEMA, f"unknown config key {key!r}")
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):
            defaults[key] = val.lower() in ("1", "true", "yes", "on")
        elif isinstance(act, argparse._AppendAction):
            defaults[key] = [v.strip() for v in val.split(",")]
        else:
            defaults[key] = act.type(val) if act.type else val
    (sub or parser).set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.config:
            args = _apply_config(parser, argv, load_config(args.config))
        if not args.command:
            raise usage("missing subcommand")
        args.argv = argv
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                            format="%(levelname)s %(message)s", stream=sys.stderr)
        args.func(args)
        return EXIT_OK
    except CliError as exc:
        err = exc
    except (ValueError, TypeError) as exc:
        err = CliError("usage", EXIT_USAGE, f"{type(exc).__name__}: {exc}")
    except Exception as exc:  # last resort: still one parseable line
        err = CliError("internal", EXIT_OTHER, f"{type(exc).__name__}: {exc}")
    sys.stderr.write(json.dumps({"error": err.kind, "exit": err.code, "message": str(err)}) + "\n")
    return err.code


if __name__ == "__main__":
    sys.exit(main())
