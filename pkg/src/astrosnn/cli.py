"""Command-line interface.

Subcommands map one-to-one onto the library's surfaces: ``bio-sim`` and
``macro-fit`` for the biophysical model and its macro analysis, ``train`` /
``eval`` / ``inject`` / ``repair`` for the SNN pipeline stages, and
``experiment`` / ``ablation`` / ``weight-maps`` for the harness. Exit
codes: 0 success, 1 configuration error, 2 data error, 3 numerical
failure.
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import biophysics, harness, macro, network, repair
from .biophysics import BioSimConfig, run_two_neuron_experiment
from .checkpoint import (CheckpointFormatError, load_checkpoint,
                         save_checkpoint)
from .datasets import DataError
from .hardware import DriftSpec, FaultSpec, apply_drift, inject_stuck_at
from .harness import ConfigError, ExperimentConfig
from .repair import RepairContext, retrain, snapshot_baseline
from .seeds import derive_seed


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def cmd_bio_sim(args):
    drift = None
    if args.drift:
        drift = DriftSpec(t_norm=args.drift_tnorm, mu_v=args.drift_mu,
                          sigma_v=args.drift_sigma)
    config = BioSimConfig(
        duration_s=args.duration_s, dt_ms=args.dt_ms,
        t_fault_s=args.t_fault_s, n_synapses=args.synapses,
        disable_fraction=args.disable_fraction, drift=drift,
        seed=args.seed, mean_pr0=args.mean_pr)
    trace = run_two_neuron_experiment(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    biophysics.export_pr_traces(trace, out / "pr_traces.csv",
                                stride=args.trace_stride)
    biophysics.export_astro_traces(trace, out / "astro_traces.csv",
                                   stride=args.trace_stride)
    meta = dict(seed=args.seed, duration_s=args.duration_s,
                dt_ms=args.dt_ms, t_fault_s=args.t_fault_s,
                window_s=config.window_s,
                disabled_n2=np.flatnonzero(trace.disabled[1]).tolist(),
                drift=bool(drift))
    (out / "run_meta.json").write_text(json.dumps(meta, indent=1))
    print(f"wrote traces for seed {args.seed} to {out}")
    return 0


def cmd_macro_fit(args):
    measurements = []
    for run_dir in args.run_dirs:
        run_dir = Path(run_dir)
        meta = {}
        meta_path = run_dir / "run_meta.json"
        if meta_path.exists():
            meta = json.loads(meta_path.read_text())
        t_fault = args.t_fault_s or meta.get("t_fault_s", 200.0)
        window = args.window_s or meta.get("window_s", 50.0)
        seed = meta.get("seed", 0)
        t_ms, pr = biophysics.load_pr_traces(run_dir / "pr_traces.csv")
        dt_s = (t_ms[1] - t_ms[0]) * 1e-3 if len(t_ms) > 1 else 1e-3
        k_fault = int(round(t_fault / dt_s))
        z = float(pr[k_fault, 1].sum() / pr[k_fault - 1, 1].sum())
        w = int(round(window / dt_s))
        bf = pr[k_fault - w:k_fault, 1].mean(axis=0)
        as_ = pr[-w:, 1].mean(axis=0)
        live = as_ > 0
        if not live.any():
            raise DataError(f"{run_dir}: no surviving synapses")
        q = float((as_[live] / bf[live]).mean())
        measurements.append(macro.RepairMeasurement(z=z, q=q, run_seed=seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "q_z.csv", "w") as f:
        f.write("seed,z,q\n")
        for m in sorted(measurements, key=lambda m: m.run_seed):
            f.write(f"{m.run_seed},{m.z:.6f},{m.q:.6f}\n")
    a, b, rms = macro.fit_q_z(measurements)
    print(f"a={a:.4f} b={b:.4f} rms={rms:.4f}")
    return 0


def _load_splits_for(args):
    cfg = ExperimentConfig(dataset=args.dataset, data_dir=args.data_dir,
                           n_train=args.n_train, n_test=args.n_test,
                           master_seed=args.seed)
    return cfg, harness.load_splits(cfg)


def cmd_train(args):
    cfg, (train, test) = _load_splits_for(args)
    snn = cfg.snn_config()
    snn = replace(snn, n_neuron=args.neurons)
    state = network.NetworkState.initial(snn, seed=derive_seed(args.seed,
                                                               "init"))
    network.train_stdp_baseline(state, train.images, snn,
                                seed=derive_seed(args.seed, "baseline"),
                                epochs=args.epochs)
    readout = network.assign_labels(state, train.images[:args.n_assign],
                                    train.labels[:args.n_assign], snn,
                                    seed=derive_seed(args.seed, "assign"))
    acc = network.evaluate_accuracy(state, readout, test.images, test.labels,
                                    snn, seed=derive_seed(args.seed, "eval"))
    save_checkpoint(args.checkpoint, snn, state.weights, state.theta,
                    fault_mask=state.fault_mask, seed_lineage=[args.seed],
                    baseline_acc=acc)
    print(f"trained {args.dataset} baseline: accuracy {acc:.2f}% "
          f"-> {args.checkpoint}")
    return 0


def cmd_eval(args):
    cp = load_checkpoint(args.checkpoint)
    state = cp.to_state()
    cfg, (train, test) = _load_splits_for(args)
    snn = cp.config
    readout = network.assign_labels(state, train.images[:args.n_assign],
                                    train.labels[:args.n_assign], snn,
                                    seed=derive_seed(args.seed, "assign"))
    acc = network.evaluate_accuracy(state, readout, test.images, test.labels,
                                    snn, seed=derive_seed(args.seed, "eval"))
    print(f"accuracy: {acc:.2f}%")
    if args.weight_maps:
        harness.export_weight_maps(state.weights, args.weight_maps)
        print(f"wrote weight maps to {args.weight_maps}")
    return 0


def cmd_inject(args):
    cp = load_checkpoint(args.infile)
    w0 = cp.w0 if cp.w0 is not None else cp.weights.copy()
    weights, mask = inject_stuck_at(
        cp.weights, FaultSpec(args.p_fault, seed=derive_seed(args.seed,
                                                             "stuckat")))
    if args.drift_tnorm > 1.0:
        spec = DriftSpec(t_norm=args.drift_tnorm, mu_v=args.drift_mu,
                         sigma_v=args.drift_sigma,
                         seed=derive_seed(args.seed, "drift"))
        weights = apply_drift(weights, mask, spec)
    save_checkpoint(args.outfile, cp.config, weights, cp.theta,
                    fault_mask=mask,
                    seed_lineage=list(cp.seed_lineage) + [args.seed],
                    w0=w0, baseline_acc=cp.baseline_acc)
    frac = float(mask.mean())
    print(f"injected stuck-at p={args.p_fault} (masked {frac:.3f}) "
          f"{'with' if args.drift_tnorm > 1 else 'without'} drift "
          f"-> {args.outfile}")
    return 0


def cmd_repair(args):
    cp = load_checkpoint(args.infile)
    if cp.w0 is None:
        raise ConfigError(f"{args.infile} has no pre-fault snapshot; "
                          "run 'inject' first")
    state = cp.to_state()
    snn = cp.config
    cfg, (train, test) = _load_splits_for(args)
    network.normalize_weights(state, lb=snn.weight_sum_lb)
    ctx = snapshot_baseline(cp.w0, tau=args.tau)
    report = retrain(state, ctx, train.images, train.labels, args.rule,
                     args.epochs, snn, eval_images=test.images,
                     eval_labels=test.labels, eval_every=args.eval_every,
                     seed=args.seed, assign_count=args.n_assign)
    save_checkpoint(args.outfile, snn, state.weights, state.theta,
                    fault_mask=state.fault_mask,
                    seed_lineage=list(cp.seed_lineage) + [args.seed],
                    w0=cp.w0)
    if args.report:
        report.write_csv(args.report)
    print(f"repair [{args.rule}] best accuracy {report.best_acc:.2f}% "
          f"after {report.steps_to_best} samples -> {args.outfile}")
    return 0


def _experiment_config(args):
    values = {}
    if args.config:
        values.update(harness.parse_config_file(args.config))
    base = harness.config_from_mapping(values) if values \
        else ExperimentConfig()
    overrides = {}
    for name in ExperimentConfig.__dataclass_fields__:
        flag = getattr(args, name, None)
        if flag is not None:
            overrides[name] = flag
    return harness.config_from_mapping(overrides, base=base)


def cmd_experiment(args):
    config = _experiment_config(args)
    def progress(cell):
        print(f"p_fault={cell.p_fault} run={cell.run}: "
              f"norm {cell.acc_norm:.2f}% | " +
              " | ".join(f"{r} {rep.best_acc:.2f}%@{rep.steps_to_best}"
                         for r, rep in cell.reports.items()))
    cells, table = harness.run_pipeline(config, progress=progress)
    print(f"wrote {Path(config.out_dir) / 'table1.csv'}")
    return 0


def cmd_ablation(args):
    config = _experiment_config(args)
    taus = [float(t) for t in args.taus.split(",")]
    rows = harness.run_tau_ablation(config, taus, p_fault=args.p_fault)
    for tau, am, asd, sm, ssd in rows:
        print(f"tau={tau:g}: acc {am:.2f}+-{asd:.2f}% "
              f"steps {sm:.0f}+-{ssd:.0f}")
    return 0


def cmd_weight_maps(args):
    cp = load_checkpoint(args.infile)
    harness.export_weight_maps(cp.weights, args.outfile)
    print(f"wrote {args.outfile}")
    return 0


def _add_dataset_args(p, n_train=10000, n_test=2000):
    p.add_argument("--dataset", default="mnist",
                   choices=["mnist", "fmnist", "synthetic"])
    p.add_argument("--data-dir", default="data")
    p.add_argument("--n-train", type=int, default=n_train)
    p.add_argument("--n-test", type=int, default=n_test)
    p.add_argument("--n-assign", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = _Parser(prog="astrosnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bio-sim", help="two-neuron/one-astrocyte simulation")
    p.add_argument("--duration-s", type=float, default=400.0)
    p.add_argument("--dt-ms", type=float, default=1.0)
    p.add_argument("--t-fault-s", type=float, default=200.0)
    p.add_argument("--synapses", type=int, default=10)
    p.add_argument("--disable-fraction", type=float, default=0.5)
    p.add_argument("--drift", action="store_true")
    p.add_argument("--drift-tnorm", type=float, default=1e4)
    p.add_argument("--drift-mu", type=float, default=1.0)
    p.add_argument("--drift-sigma", type=float, default=0.2258)
    p.add_argument("--mean-pr", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace-stride", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bio_sim)

    p = sub.add_parser("macro-fit", help="fit q = a/(z+b) from trace CSVs")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--t-fault-s", type=float, default=None)
    p.add_argument("--window-s", type=float, default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_macro_fit)

    p = sub.add_parser("train", help="train a baseline network with STDP")
    _add_dataset_args(p)
    p.add_argument("--neurons", type=int, default=100)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_dataset_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--weight-maps", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inject", help="inject stuck-at faults and drift")
    p.add_argument("--p-fault", type=float, required=True)
    p.add_argument("--drift-tnorm", type=float, default=1e4)
    p.add_argument("--drift-mu", type=float, default=1.0)
    p.add_argument("--drift-sigma", type=float, default=0.2258)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("repair", help="self-repair retraining")
    _add_dataset_args(p)
    p.add_argument("--rule", choices=list(repair.RULES), default="astdp-local")
    p.add_argument("--tau", type=float, default=1e-2)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--eval-every", type=int, default=1000)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("experiment", help="run the full experiment grid")
    p.add_argument("--config", default=None,
                   help="flat key = value config file")
    for name in ExperimentConfig.__dataclass_fields__:
        p.add_argument("--" + name.replace("_", "-"), default=None)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("ablation", help="self-repair time-constant sweep")
    p.add_argument("--config", default=None)
    p.add_argument("--taus", default="0.004,0.01,0.04")
    p.add_argument("--p-fault", type=float, default=0.8)
    for name in ExperimentConfig.__dataclass_fields__:
        p.add_argument("--" + name.replace("_", "-"), default=None)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("weight-maps", help="export receptive-field mosaic")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.set_defaults(func=cmd_weight_maps)

    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (DataError, CheckpointFormatError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except biophysics.NumericalInstabilityError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
