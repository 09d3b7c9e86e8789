"""Command-line interface: gen-data, train, tune, report.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime fault.
The default output root is ``$LATENT_TUNING_OUT`` (``./runs`` when unset).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as fio
from . import plotting
from .beamsim import generate_dataset, pca_shift_report
from .config import OUT_ENV, ConfigError, ExperimentConfig, load_config, output_root, save_config
from .net import TrainingDiverged, train
from .tuner import (
    HIDDEN_PAIRS,
    SCENARIO_NAMES,
    MeasurementChannel,
    TuningRun,
    adapt,
    dither_allowance,
    evaluate_hidden,
    make_scenario,
    make_stale_guess,
    no_shift_system,
)

log = logging.getLogger("latent_tuning")

EXIT_OK, EXIT_USAGE, EXIT_FAULT = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default(*parts) -> Path:
    return output_root().joinpath(*parts)


# ---------------------------------------------------------------------------
# gen-data


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config, {"n_samples": args.n, "seeds.data": args.seed})
    out = Path(args.out) if args.out else _default("data", "dataset.npz")
    warnings: list = []
    t0 = time.time()
    ds = generate_dataset(cfg.n_samples, cfg.seeds.data, cfg.generator, warnings=warnings)
    fio.save_dataset(ds, out)
    mass = ds.targets.sum(axis=(2, 3))  # (n, C)
    g = cfg.generator
    print(f"wrote {out}: n={len(ds)} seed={cfg.seeds.data} ({time.time() - t0:.1f} s)")
    print(f"  setting ranges lo={g.param_ranges.lo.tolist()} hi={g.param_ranges.hi.tolist()}")
    print(f"  beam knob ranges lo={g.knob_ranges.lo.tolist()} hi={g.knob_ranges.hi.tolist()}")
    for c, pair in enumerate(g.pairs):
        err = float(np.max(np.abs(mass[:, c] - 1.0)))
        print(f"  mass conservation {pair}: max |sum - 1| = {err:.1e} "
              f"{'pass' if err < 1e-9 else 'FAIL'}")
    print(f"  coverage warnings: {len(warnings)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _load_dataset_for(cfg: ExperimentConfig, path: Path):
    ds = fio.load_dataset(path)
    net = cfg.network
    if ds.inputs.shape[1:] != (net.input_size, net.input_size):
        raise fio.FormatError(f"dataset inputs are {ds.inputs.shape[1:]}, network expects "
                              f"{net.input_size}x{net.input_size}")
    if [p.key for p in ds.config.pairs] != list(net.pairs) or ds.targets.shape[-1] != net.output_size:
        raise fio.FormatError(f"dataset channels {[p.key for p in ds.config.pairs]} at "
                              f"{ds.targets.shape[-1]} px do not match network {list(net.pairs)} "
                              f"at {net.output_size} px")
    return ds


def cmd_train(args) -> int:
    cfg = load_config(args.config, {"seeds.train": args.seed})
    data = Path(args.data) if args.data else _default("data", "dataset.npz")
    out = Path(args.out) if args.out else _default("model", "weights.npz")
    ds = _load_dataset_for(cfg, data)
    out.parent.mkdir(parents=True, exist_ok=True)
    loss_csv = out.with_suffix(".losses.csv")
    t0 = time.time()
    try:
        res = train(ds, cfg.network, cfg.schedule, cfg.batch_size, cfg.seeds.train)
    except TrainingDiverged as exc:
        ckpt = out.with_suffix(".last_good.npz")
        fio.save_weights(exc.last_good, ckpt, {"diverged": str(exc)})
        print(f"training diverged: {exc}; last good weights in {ckpt}", file=sys.stderr)
        return EXIT_FAULT
    fio.save_weights(res.weights, out, {"train_seed": cfg.seeds.train,
                                        "final_loss": res.final_loss})
    with open(loss_csv, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["epoch", "learning_rate", "mean_batch_loss"])
        for e, lr, loss in res.epochs:
            wr.writerow([e, lr, repr(loss)])
    save_config(cfg, out.with_suffix(".config.json"))
    print(f"wrote {out} ({res.weights.n_weights()} weights, sha256 {res.weights.checksum()[:16]})")
    print(f"  loss {res.initial_loss:.4g} -> {res.final_loss:.4g} over {len(res.epochs)} epochs "
          f"({time.time() - t0:.1f} s); per-epoch losses in {loss_csv}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# tune


def _tune_dir(cfg: ExperimentConfig) -> Path:
    t = cfg.tune
    return _default("tune", f"{t.scenario}-s{cfg.seeds.scenario}-i{t.sample_index}")


def cmd_tune(args) -> int:
    cfg = load_config(args.config, {
        "tune.scenario": args.scenario, "seeds.scenario": args.seed,
        "tune.sample_index": args.sample, "tune.steps": args.steps,
        "es.alpha": args.alpha, "es.k": args.k, "tune.noise": args.noise,
    })
    wpath = Path(args.weights) if args.weights else _default("model", "weights.npz")
    dpath = Path(args.data) if args.data else _default("data", "dataset.npz")
    out = Path(args.out) if args.out else _tune_dir(cfg)
    w, _ = fio.load_weights(wpath)
    if w.spec != cfg.network:
        log.info("using the network spec stored with the weights")
        cfg = replace(cfg, network=w.spec).validate()
    ds = _load_dataset_for(cfg, dpath)
    out.mkdir(parents=True, exist_ok=True)
    (out / "images").mkdir(exist_ok=True)
    save_config(cfg, out / "config.json")

    t0 = time.time()
    guess = make_stale_guess(ds)
    es = cfg.es.build(w.spec.latent_dim)
    sc = cfg.scenarios
    scenario = make_scenario(ds.config, cfg.tune.scenario, sc.n, cfg.seeds.scenario,
                             sc.near, sc.far, sc.jitter)
    schedule = cfg.drift.build()
    if scenario.name == "none":
        system = no_shift_system(guess, ds.config, schedule)
    else:
        system = scenario.system(cfg.tune.sample_index, schedule)
    channel = MeasurementChannel(system, noise=cfg.tune.noise, seed=cfg.seeds.noise)
    before = w.checksum()
    run = TuningRun(w, guess, es, cfg.tune.steps, cfg.tune.snapshot_every)
    result = adapt(run, channel)
    after = w.checksum()
    ev = evaluate_hidden(result, system, HIDDEN_PAIRS, dt=es.dt)

    cover: list = []
    pca = pca_shift_report(ds.input_images(), scenario.input_images(cover), 15)
    if cover:
        log.warning("%d of %d scenario input images fall partly outside the input extent",
                    len(cover), len(scenario.knobs))
    summary = {
        "schema_version": fio.SCHEMA_VERSION,
        "scenario": scenario.name,
        "scenario_seed": cfg.seeds.scenario,
        "sample_index": cfg.tune.sample_index,
        "inputs": {"weights": str(wpath), "weights_sha256": before, "dataset": str(dpath)},
        "steps_requested": cfg.tune.steps,
        "steps_completed": int(len(result.cost)),
        "fault": result.fault,
        "weights_unchanged": before == after,
        "initial_cost": float(result.raw_cost[0]) if len(result.raw_cost) else None,
        "final_cost_ratio": result.tail_mean_cost(0.1) if len(result.cost) else None,
        "hidden": {},
        "pca_overlap": pca.overlap.tolist(),
        "pca_min_overlap": float(pca.overlap.min()),
    }
    for p in HIDDEN_PAIRS:
        tuned, base = ev.final(p)
        summary["hidden"][p.key] = {"untuned": base, "tuned": tuned, "improved": tuned < base}
    if scenario.name == "none" and len(result.raw_cost):
        allowance = dither_allowance(w, guess, channel.measure(0.0), es)
        tail_raw = float(np.mean(result.raw_cost[-max(1, len(result.raw_cost) // 10):]))
        summary["dither_allowance"] = allowance
        summary["baseline_within_dither_neighborhood"] = tail_raw <= max(allowance,
                                                                         result.raw_cost[0])

    _write_steps(out / "steps.csv", result, ev)
    pairs = list(w.spec.axis_pairs)
    truth = system.projections(result.snapshots[-1].t, pairs).stack() if result.snapshots else None
    stacks = {"before": result.baseline}
    if result.snapshots:
        stacks["after"] = result.final_prediction
        stacks["truth"] = truth
    for name, stack in stacks.items():
        np.save(out / "images" / f"{name}.npy", stack)
        for c, p in enumerate(pairs):
            fio.write_pgm(stack[c], out / "images" / f"{name}_{_slug(p)}.pgm")
    fio.write_json(summary, out / "summary.json")
    if result.snapshots:
        extents = [ds.config.output_extent(p) for p in pairs]
        plotting.projection_grid({"untuned": result.baseline, "tuned": result.final_prediction,
                                  "truth": truth}, pairs, extents, out / "projections.png",
                                 f"scenario {scenario.name}")
        plotting.cost_history({scenario.name: (np.arange(len(result.cost)), result.cost)},
                              out / "cost.png")
        plotting.hidden_mse({str(p): (ev.steps, ev.tuned[p], ev.baseline[p]) for p in HIDDEN_PAIRS},
                            out / "hidden.png")

    print(f"wrote {out}: scenario={scenario.name} steps={summary['steps_completed']} "
          f"({time.time() - t0:.1f} s)")
    if result.fault:
        print(f"measurement fault: {result.fault} (partial outputs kept)", file=sys.stderr)
        return EXIT_FAULT
    print(f"  observable cost: final/initial = {summary['final_cost_ratio']:.3f}")
    for k, h in summary["hidden"].items():
        print(f"  ({k}) mse untuned {h['untuned']:.3g} -> tuned {h['tuned']:.3g}")
    print(f"  weights unchanged: {summary['weights_unchanged']}")
    if "baseline_within_dither_neighborhood" in summary:
        print(f"  baseline within dither neighborhood: "
              f"{summary['baseline_within_dither_neighborhood']}")
    return EXIT_OK


def _slug(pair) -> str:
    return pair.key.replace("'", "p").replace(",", "_")


def _write_steps(path, result, ev) -> None:
    snap = {int(s): i for i, s in enumerate(ev.steps)}
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["step", "t", "cost", "raw_cost"] + [f"mse_{_slug(p)}" for p in HIDDEN_PAIRS])
        for i in range(len(result.cost)):
            j = snap.get(i)
            extra = ["" if j is None else repr(float(ev.tuned[p][j])) for p in HIDDEN_PAIRS]
            wr.writerow([i, repr(float(result.t[i])), repr(float(result.cost[i])),
                         repr(float(result.raw_cost[i]))] + extra)


# ---------------------------------------------------------------------------
# report

REPORT_COLUMNS = [
    "run", "scenario", "scenario_seed", "sample_index", "initial_cost", "final_cost_ratio",
    "xxp_untuned", "xxp_tuned", "yyp_untuned", "yyp_tuned", "pca_overlap_pc1",
    "pca_min_overlap", "weights_unchanged", "degradation_ordering",
]


def _read_run(d: Path) -> dict:
    f = d / "summary.json"
    if not d.is_dir():
        raise FileNotFoundError(f"run directory {d} does not exist")
    if not f.exists():
        raise FileNotFoundError(f"{d} has no summary.json")
    s = json.loads(f.read_text())
    fio.check_version(s.get("schema_version"), str(f))
    return s


def cmd_report(args) -> int:
    dirs = [Path(d) for d in args.runs] if args.runs else sorted(
        p for p in _default("tune").glob("*") if p.is_dir())
    if not dirs:
        raise UsageError("no run directories given or found")
    runs = [(d, _read_run(d)) for d in dirs]  # all inputs checked before any output
    versions = {fio.major_version(s["schema_version"]) for _, s in runs}
    if len(versions) > 1:
        raise fio.FormatError(f"runs mix schema versions {sorted(versions)}")
    out = Path(args.out) if args.out else _default("report")
    out.mkdir(parents=True, exist_ok=True)

    def hidden_mean(s):
        return float(np.mean([h["tuned"] for h in s["hidden"].values()]))

    med = {}
    for name in ("near", "far"):
        vals = [hidden_mean(s) for _, s in runs if s["scenario"] == name]
        if vals:
            med[name] = float(np.median(vals))
    ordering = ""
    if "near" in med and "far" in med:
        ordering = "far>=near" if med["far"] >= med["near"] else "far<near"

    rows = []
    for d, s in runs:
        h = s["hidden"]
        rows.append({
            "run": d.name, "scenario": s["scenario"], "scenario_seed": s["scenario_seed"],
            "sample_index": s["sample_index"], "initial_cost": s["initial_cost"],
            "final_cost_ratio": s["final_cost_ratio"],
            "xxp_untuned": h["x,x'"]["untuned"], "xxp_tuned": h["x,x'"]["tuned"],
            "yyp_untuned": h["y,y'"]["untuned"], "yyp_tuned": h["y,y'"]["tuned"],
            "pca_overlap_pc1": s["pca_overlap"][0], "pca_min_overlap": s["pca_min_overlap"],
            "weights_unchanged": s["weights_unchanged"], "degradation_ordering": ordering,
        })
    table = out / "report.csv"
    tmp = table.with_name(table.name + ".part")
    with open(tmp, "w", newline="") as fh:
        wr = csv.DictWriter(fh, REPORT_COLUMNS)
        wr.writeheader()
        wr.writerows(rows)
    tmp.replace(table)

    series = {}
    for d, _ in runs:
        steps = np.genfromtxt(d / "steps.csv", delimiter=",", names=True)
        if steps.size:
            series[d.name] = (np.atleast_1d(steps["step"]), np.atleast_1d(steps["cost"]))
    if series:
        plotting.cost_history(series, out / "cost.png")
    plotting.overlap_bars({d.name: s["pca_overlap"] for d, s in runs}, out / "pca_overlap.png")
    print(f"wrote {table} ({len(rows)} runs)")
    for name, m in med.items():
        print(f"  median final hidden mse {name}: {m:.3g}")
    if ordering:
        print(f"  degradation ordering: {ordering}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="latent-tuning", description=(
        "Adaptive latent-space tuning of an encoder-decoder beam model. "
        f"Outputs default to ${OUT_ENV} (./runs when unset)."))
    p.add_argument("--log-level", default="WARNING",
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON experiment config (flags override it)")
        sp.add_argument("--out", help="output path")

    g = sub.add_parser("gen-data", help="simulate a training dataset")
    common(g)
    g.add_argument("--n", type=int, help="number of records")
    g.add_argument("--seed", type=int, help="data seed")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train the encoder-decoder")
    common(t)
    t.add_argument("--data", help="dataset archive")
    t.add_argument("--seed", type=int, help="training seed")
    t.set_defaults(func=cmd_train)

    u = sub.add_parser("tune", help="adaptively tune the latent space against a shifted beam")
    common(u)
    u.add_argument("--weights", help="trained weights archive")
    u.add_argument("--data", help="training dataset (source of the stale input guess)")
    u.add_argument("--scenario", choices=SCENARIO_NAMES)
    u.add_argument("--seed", type=int, help="scenario seed")
    u.add_argument("--sample", type=int, help="scenario sample index")
    u.add_argument("--steps", type=int, help="ES step budget")
    u.add_argument("--alpha", type=float, help="ES dither gain")
    u.add_argument("--k", type=float, help="ES feedback gain")
    u.add_argument("--noise", type=float, help="relative measurement noise")
    u.set_defaults(func=cmd_tune)

    r = sub.add_parser("report", help="cross-run comparison table and figures")
    r.add_argument("runs", nargs="*", help="tuning run directories")
    r.add_argument("--out", help="report directory")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
