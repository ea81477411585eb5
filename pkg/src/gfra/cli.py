"""Command-line entry point: ``gfra <subcommand> [options]``.

Each subcommand writes its artifacts (CSV, dataset, model files) under
``--out-dir``. Options given on the command line override the ``--config``
file, which overrides the scenario preset.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .dataset import dataset_bytes, read_dataset, generate_dataset
from .detect import roc, threshold_grid
from .dmlp import load_model, model_bytes, parameter_count
from .reports import write_atomic, write_csv
from .system import build_deployment

log = logging.getLogger("gfra")

SUBCOMMANDS = ("gen-topology", "gen-dataset", "train", "pareto", "snr-cdf", "threshold-sweep", "roc",
               "perturb-eval", "quant-eval")


def _floats(text):
    return [float(v) for v in text.split(",") if v]


def _ints(text):
    return [int(v) for v in text.split(",") if v]


def _strs(text):
    return [v for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gfra", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", type=Path, help="JSON recipe (flat key/value)")
    p.add_argument("--scenario", help="scenario-1 | scenario-2-like")
    p.add_argument("--out-dir", type=Path, default=Path("out"))
    for name in ("topology", "channel", "activity", "noise", "init"):
        p.add_argument(f"--seed-{name}", type=int, dest=f"seed_{name}")
    p.add_argument("--L", type=_ints, help="pilot length(s), comma separated for sweeps")
    p.add_argument("--K", type=_ints, help="number of devices, comma separated for sweeps")
    p.add_argument("--T", type=_ints, help="cluster sizes, comma separated")
    p.add_argument("--theta", type=_floats, help="perturbation factors, comma separated")
    p.add_argument("--format", type=_strs, dest="formats", help="fixed-point formats W_F, comma separated")
    p.add_argument("--epsilon", type=_floats, help="activation probabilities for threshold-sweep")
    p.add_argument("--tau", type=float)
    p.add_argument("--tau-step", type=float, dest="tau_step")
    p.add_argument("--Z", type=_ints, help="hidden layer counts (pareto grid or single value)")
    p.add_argument("--V", type=_ints, help="hidden widths (pareto grid or single value)")
    p.add_argument("--count", type=int, help="slots to simulate (gen-dataset/train)")
    p.add_argument("--eval-slots", type=int, dest="eval_slots")
    p.add_argument("--first-slot", type=int, default=0, dest="first_slot")
    p.add_argument("--ap-policy", dest="ap_policy")
    p.add_argument("--fading-mode", dest="fading_mode")
    p.add_argument("--coherence-slots", type=int, dest="coherence_slots")
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--patience", type=int)
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--sweep", choices=("L", "K", "T"), help="roc: sweep one parameter")
    p.add_argument("--dataset", type=Path, help="input dataset file (train) or evaluation set")
    p.add_argument("--model", type=Path, help="trained model file")
    p.add_argument("--csv-limit", type=int, dest="csv_limit", help="gen-dataset: also export N samples as CSV")
    p.add_argument("--jobs", type=int, help="parallel worker processes for L/K sweeps")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def resolve_config(args) -> ex.ExperimentConfig:
    flat = {}
    if args.config:
        with open(args.config) as fh:
            flat.update(json.load(fh))
    if args.scenario:
        flat["scenario"] = args.scenario
    scalar = ("seed_topology", "seed_channel", "seed_activity", "seed_noise", "seed_init", "tau", "tau_step",
              "eval_slots", "ap_policy", "fading_mode", "coherence_slots", "max_epochs", "patience",
              "learning_rate", "jobs")
    for key in scalar:
        v = getattr(args, key)
        if v is not None:
            flat[key] = v
    if args.count is not None:
        flat["train_slots"] = args.count
    for key, target, sweep_key in (("L", "L", "L_values"), ("K", "K", "K_values")):
        vals = getattr(args, key)
        if vals:
            if args.sweep == key:
                flat[sweep_key] = vals
            else:
                flat[target] = vals[0]
    if args.T:
        flat["T_values"] = args.T
    if args.theta:
        flat["thetas"] = args.theta
    if args.formats:
        flat["formats"] = args.formats
    if args.epsilon:
        flat["epsilons"] = args.epsilon
    if args.Z:
        if args.command == "pareto":
            flat["pareto_Z"] = args.Z
        else:
            flat["hidden_layers"] = args.Z[0]
    if args.V:
        if args.command == "pareto":
            flat["pareto_V"] = args.V
        else:
            flat["hidden_width"] = args.V[0]
    return ex.ExperimentConfig.from_dict(flat)


def _model_and_deployment(args, cfg):
    dep = build_deployment(cfg.system, cfg.seeds)
    if args.model:
        return load_model(args.model), dep
    det = ex.train_detector(cfg, dep)
    write_atomic(args.out_dir / "model.gfrm", model_bytes(det.model))
    write_atomic(args.out_dir / "loss_trace.csv", det.result.trace_csv())
    return det.model, dep


def _eval_set(args, cfg, dep):
    if args.dataset:
        return read_dataset(args.dataset)
    return ex.eval_dataset(cfg, dep)


ROC_COLUMNS = [("tau", "probability"), ("fpr", "probability"), ("tpr", "probability")]


def _grid_rows(scores, labels, step, prefix=()):
    curve = roc(scores, labels, threshold_grid(step))
    return [(*prefix, t, f, p) for t, f, p in zip(curve.tau, curve.fpr, curve.tpr)]


def cmd_gen_topology(args, cfg):
    dep = build_deployment(cfg.system, cfg.seeds)
    write_atomic(args.out_dir / "topology.csv", dep.topology.to_csv())
    write_atomic(args.out_dir / "large_scale.csv", dep.beta.to_csv())


def cmd_gen_dataset(args, cfg):
    dep = build_deployment(cfg.system, cfg.seeds)
    ds = generate_dataset(dep, cfg.train_slots, cfg.ap_policy, first_slot=args.first_slot, seed=cfg.seeds.activity)
    write_atomic(args.out_dir / "dataset.gfra", dataset_bytes(ds))
    if args.csv_limit:
        write_atomic(args.out_dir / "dataset.csv", ds.to_csv(args.csv_limit))
    log.info("wrote %d samples", len(ds))


def cmd_train(args, cfg):
    if args.dataset:
        ds = read_dataset(args.dataset)
        s = cfg.system
        if (ds.K, ds.L, ds.N) != (s.num_users, s.pilot_length, s.num_antennas):
            raise SystemExit(f"dataset dims (K={ds.K}, L={ds.L}, N={ds.N}) do not match the config")
        result = ex.train_on_dataset(ds, cfg.arch, cfg.train, cfg.seeds)
    else:
        result = ex.train_detector(cfg).result
    write_atomic(args.out_dir / "model.gfrm", model_bytes(result.model))
    write_atomic(args.out_dir / "loss_trace.csv", result.trace_csv())


def cmd_pareto(args, cfg):
    points = ex.pareto_sweep(cfg)
    front = set(id(p) for p in ex.pareto_front(points))
    cols = [("Z", "count"), ("V", "count"), ("params", "count"), ("best_train_loss", "nats/sample"),
            ("best_val_loss", "nats/sample"), ("pareto_efficient", "flag")]
    rows = [(p.Z, p.V, p.params, p.best_train_loss, p.best_val_loss, int(id(p) in front)) for p in points]
    write_csv(args.out_dir / "pareto.csv", cols, rows)
    write_csv(args.out_dir / "pareto_front.csv", cols[:5], [r[:5] for r in rows if r[5]])


def cmd_snr_cdf(args, cfg):
    rows, targets = [], []
    for label, s, target in ex.snr_cdf(cfg):
        n = s.size
        rows += [(label, v, (i + 1) / n) for i, v in enumerate(s)]
        targets.append((label, target, cfg.coverage))
    write_csv(args.out_dir / "snr_cdf.csv", [("config", "label"), ("snr_db", "dB"), ("cdf", "probability")], rows)
    write_csv(args.out_dir / "snr_targets.csv",
              [("config", "label"), ("target_db", "dB"), ("coverage", "probability")], targets)


def cmd_threshold_sweep(args, cfg):
    model, dep = _model_and_deployment(args, cfg)
    res = ex.threshold_sweep(model, cfg, dep)
    rows, stars = [], []
    for eps, (tau_star, table) in res.items():
        rows += [(eps, *r) for r in table]
        p_e = table[:, 3]
        stars.append((eps, tau_star, float(p_e.min())))
    write_csv(args.out_dir / "threshold_sweep.csv",
              [("epsilon", "probability"), ("tau", "probability"), ("p_fa", "probability"),
               ("p_md", "probability"), ("p_e", "probability")], rows)
    write_csv(args.out_dir / "tau_star.csv",
              [("epsilon", "probability"), ("tau_star", "probability"), ("p_e_min", "probability")], stars)


def cmd_roc(args, cfg):
    summary_cols = [("auc", "probability"), ("accuracy", "probability"), ("p_fa", "probability"),
                    ("p_md", "probability")]
    if args.sweep in ("L", "K"):
        values = cfg.L_values if args.sweep == "L" else cfg.K_values
        res = ex.system_sweep(cfg, args.sweep, values)
        rows, summary = [], []
        for v, ev in res.items():
            rows += _grid_rows(ev.scores, ev.labels, cfg.tau_step, (v,))
            summary.append((v, ev.curve.auc, ev.accuracy, ev.p_fa, ev.p_md))
        key = (args.sweep, "count")
        write_csv(args.out_dir / f"roc_{args.sweep}.csv", [key] + ROC_COLUMNS, rows)
        write_csv(args.out_dir / f"auc_{args.sweep}.csv", [key] + summary_cols, summary)
        return
    model, dep = _model_and_deployment(args, cfg)
    if args.sweep == "T":
        curves = ex.cluster_sweep(model, cfg, dep)
        grid = threshold_grid(cfg.tau_step)
        rows = []
        for T, c in curves.items():
            # resample the exact curve onto the tau grid for plotting
            idx = np.searchsorted(c.tau, grid, side="left").clip(0, c.tau.size - 1)
            rows += [(T, t, c.fpr[i], c.tpr[i]) for t, i in zip(grid, idx)]
        write_csv(args.out_dir / "roc_T.csv", [("T", "count")] + ROC_COLUMNS, rows)
        write_csv(args.out_dir / "auc_T.csv", [("T", "count"), ("auc", "probability")],
                  [(T, c.auc) for T, c in curves.items()])
        return
    ds = _eval_set(args, cfg, dep)
    ev = ex.evaluate(model, ds.features, ds.labels, cfg.tau)
    write_csv(args.out_dir / "roc.csv", ROC_COLUMNS, _grid_rows(ev.scores, ev.labels, cfg.tau_step))
    write_csv(args.out_dir / "roc_summary.csv", summary_cols, [(ev.curve.auc, ev.accuracy, ev.p_fa, ev.p_md)])


def cmd_perturb_eval(args, cfg):
    model, dep = _model_and_deployment(args, cfg)
    ds = _eval_set(args, cfg, dep)
    curves = ex.perturbation_sweep(model, ds.features, ds.labels, cfg.thetas, cfg.seeds.rng("noise").split("perturb"))
    rows = []
    for th, c in curves.items():
        scores_rows = [(th, t, f, p) for t, f, p in zip(c.tau, c.fpr, c.tpr)]
        rows += scores_rows[:: max(1, len(scores_rows) // 1000)]
    write_csv(args.out_dir / "perturb_roc.csv", [("theta", "ratio")] + ROC_COLUMNS, rows)
    write_csv(args.out_dir / "perturb_auc.csv", [("theta", "ratio"), ("auc", "probability")],
              [(th, c.auc) for th, c in curves.items()])


def cmd_quant_eval(args, cfg):
    model, dep = _model_and_deployment(args, cfg)
    ds = _eval_set(args, cfg, dep)
    gain = cfg.adc_gain_value()
    curves = ex.quantization_sweep(model, ds.features, ds.labels, cfg.formats, gain)
    rows = []
    for label, c in curves.items():
        pts = [(label, t, f, p) for t, f, p in zip(c.tau, c.fpr, c.tpr)]
        rows += pts[:: max(1, len(pts) // 1000)]
    write_csv(args.out_dir / "quant_roc.csv", [("format", "W_F")] + ROC_COLUMNS, rows)
    write_csv(args.out_dir / "quant_auc.csv",
              [("format", "W_F"), ("word_length", "bits"), ("fractional_bits", "bits"), ("auc", "probability")],
              [(lbl, *map(int, lbl.split("_")), c.auc) for lbl, c in curves.items()])


COMMANDS = {
    "gen-topology": cmd_gen_topology,
    "gen-dataset": cmd_gen_dataset,
    "train": cmd_train,
    "pareto": cmd_pareto,
    "snr-cdf": cmd_snr_cdf,
    "threshold-sweep": cmd_threshold_sweep,
    "roc": cmd_roc,
    "perturb-eval": cmd_perturb_eval,
    "quant-eval": cmd_quant_eval,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except ex.ConfigError as exc:
        print(f"gfra: config error: {exc}", file=sys.stderr)
        return 2
    for path in (args.config, args.dataset, args.model):
        if path is not None and not path.exists():
            print(f"gfra: missing input file {path}", file=sys.stderr)
            return 2
    args.out_dir.mkdir(parents=True, exist_ok=True)
    COMMANDS[args.command](args, cfg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
