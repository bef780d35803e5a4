"""End-to-end experiment orchestration and reporting.

The pipeline per (fault probability, run) cell: train or load a cached
baseline, record its accuracy, inject stuck-at faults plus conductance
drift, normalize, record the post-fault accuracy, retrain under each
learning rule, and record the best accuracy with the samples consumed to
reach it. Results aggregate into a fault-level table (mean and standard
deviation across runs) plus convergence and ablation CSVs and weight-map
images.

All randomness derives from the master seed through the documented mixing
function, so identical configurations reproduce bit-identical outputs.
"""

import copy
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import network, repair
from .checkpoint import load_checkpoint, save_checkpoint
from .datasets import DataError, Dataset, load_dataset, make_synthetic_digits
from .hardware import DriftSpec, FaultSpec, apply_drift, inject_stuck_at
from .network import NetworkState, SnnConfig
from .repair import RepairContext, retrain, snapshot_baseline
from .seeds import derive_seed


class ConfigError(Exception):
    """Invalid experiment configuration or config file."""


REPAIR_TAU = {"mnist": 1e-2, "fmnist": 4e-3, "synthetic": 1e-2}


@dataclass
class ExperimentConfig:
    """Desk-scale experiment grid (full scale via :func:`full_scale`).

    ``dataset`` selects mnist / fmnist (IDX files under ``data_dir``) or
    the built-in synthetic set. # Steps in the output table is reported in
    training samples.
    """

    dataset: str = "mnist"
    data_dir: str = "data"
    n_neuron: int = 100
    n_train: int = 10000
    n_test: int = 2000
    n_assign: int = 1000
    p_faults: tuple = (0.5, 0.6, 0.7, 0.8, 0.9)
    drift: bool = True
    drift_t_norm: float = 1e4
    drift_mu_v: float = 1.0
    drift_sigma_v: float = 0.2258
    rules: tuple = ("stdp", "astdp-local")
    epochs_baseline: int = 2
    epochs_repair: int = 2
    eval_every: int = 1000
    runs: int = 3
    master_seed: int = 0
    tau: float = None           # repair time constant; dataset default if None
    out_dir: str = "out"
    cache_dir: str = "cache"

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.dataset not in ("mnist", "fmnist", "synthetic"):
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        for p in self.p_faults:
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"p_fault {p} outside [0, 1]")
        for r in self.rules:
            if r not in repair.RULES:
                raise ConfigError(f"unknown rule {r!r}")
        if self.tau is None:
            self.tau = REPAIR_TAU[self.dataset]

    def snn_config(self):
        if self.dataset == "fmnist":
            return SnnConfig.fmnist(n_neuron=self.n_neuron)
        return SnnConfig.mnist(n_neuron=self.n_neuron)

    def drift_spec(self, seed):
        if not self.drift:
            return None
        return DriftSpec(t_norm=self.drift_t_norm, mu_v=self.drift_mu_v,
                         sigma_v=self.drift_sigma_v, seed=seed)


def full_scale(**overrides):
    """The paper-sized grid: 400 neurons, full datasets, 5 runs.

    Long-running; excluded from the test suite by design.
    """
    base = dict(n_neuron=400, n_train=60000, n_test=10000, runs=5,
                epochs_baseline=3, epochs_repair=2)
    base.update(overrides)
    return ExperimentConfig(**base)


def load_splits(config):
    """Return (train, test) Datasets for the configured source."""
    if config.dataset == "synthetic":
        train = make_synthetic_digits(config.n_train,
                                      seed=derive_seed(config.master_seed,
                                                       "synth-train"))
        test = make_synthetic_digits(config.n_test,
                                     seed=derive_seed(config.master_seed,
                                                      "synth-test"),
                                     split="test")
        return train, test
    train = load_dataset(config.data_dir, "train").subset(config.n_train)
    test = load_dataset(config.data_dir, "test").subset(config.n_test)
    return train, test


def baseline_key(config, run_seed):
    return (f"{config.dataset}_n{config.n_neuron}_t{config.n_train}"
            f"_e{config.epochs_baseline}_s{run_seed}")


def prepare_baseline(config, run_seed, train, test):
    """Train (or load from cache) one baseline network; returns
    (state, baseline_accuracy)."""
    cache = Path(config.cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    path = cache / f"baseline_{baseline_key(config, run_seed)}.ckpt"
    snn = config.snn_config()
    if path.exists():
        cp = load_checkpoint(path)
        return cp.to_state(), cp.baseline_acc
    state = NetworkState.initial(snn, seed=derive_seed(run_seed, "init"))
    network.train_stdp_baseline(state, train.images, snn,
                                seed=derive_seed(run_seed, "baseline"),
                                epochs=config.epochs_baseline)
    readout = network.assign_labels(
        state, train.images[:config.n_assign],
        train.labels[:config.n_assign], snn,
        seed=derive_seed(run_seed, "baseline-assign"))
    acc = network.evaluate_accuracy(state, readout, test.images,
                                    test.labels, snn,
                                    seed=derive_seed(run_seed, "baseline-eval"))
    save_checkpoint(path, snn, state.weights, state.theta,
                    fault_mask=state.fault_mask,
                    seed_lineage=[config.master_seed, run_seed],
                    baseline_acc=acc)
    return state, acc


def inject_faults(state, config, run_seed, p_fault):
    """Stuck-at injection followed by drift on the survivors; mutates and
    returns the state."""
    fspec = FaultSpec(p_fault, seed=derive_seed(run_seed, "stuckat", p_fault))
    state.weights, state.fault_mask = inject_stuck_at(state.weights, fspec)
    dspec = config.drift_spec(seed=derive_seed(run_seed, "drift", p_fault))
    if dspec is not None:
        state.weights = apply_drift(state.weights, state.fault_mask, dspec)
    return state


@dataclass
class CellResult:
    """One (p_fault, run) cell of the experiment grid."""

    p_fault: float
    run: int
    run_seed: int
    baseline_acc: float
    acc_norm: float
    reports: dict               # rule -> RepairReport


def run_cell(config, train, test, run_index, p_fault, baseline_state,
             baseline_acc):
    run_seed = derive_seed(config.master_seed, "run", run_index)
    snn = config.snn_config()
    ctx_template = snapshot_baseline(baseline_state.weights, tau=config.tau)

    state0 = copy.deepcopy(baseline_state)
    inject_faults(state0, config, run_seed, p_fault)
    network.normalize_weights(state0, lb=snn.weight_sum_lb)

    readout = network.assign_labels(
        state0, train.images[:config.n_assign],
        train.labels[:config.n_assign], snn,
        seed=derive_seed(run_seed, "norm-assign", p_fault))
    acc_norm = network.evaluate_accuracy(
        state0, readout, test.images, test.labels, snn,
        seed=derive_seed(run_seed, "norm-eval", p_fault))

    reports = {}
    for rule in config.rules:
        state = copy.deepcopy(state0)
        ctx = RepairContext(w0=ctx_template.w0, w0_sums=ctx_template.w0_sums,
                            tau=config.tau)
        reports[rule] = retrain(
            state, ctx, train.images, train.labels, rule,
            config.epochs_repair, snn,
            eval_images=test.images, eval_labels=test.labels,
            eval_every=config.eval_every,
            seed=derive_seed(run_seed, "repair", p_fault, rule),
            assign_count=config.n_assign)
    return CellResult(p_fault=p_fault, run=run_index, run_seed=run_seed,
                      baseline_acc=baseline_acc, acc_norm=acc_norm,
                      reports=reports)


def run_pipeline(config, progress=None):
    """Execute the full experiment grid; returns (cells, table_rows) and
    writes table1.csv, convergence.csv and weight maps under out_dir."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, test = load_splits(config)

    baselines = {}
    for run_index in range(config.runs):
        run_seed = derive_seed(config.master_seed, "run", run_index)
        baselines[run_index] = prepare_baseline(config, run_seed, train, test)

    cells = []
    for p_fault in config.p_faults:
        for run_index in range(config.runs):
            state, acc = baselines[run_index]
            cell = run_cell(config, train, test, run_index, p_fault,
                            state, acc)
            cells.append(cell)
            if progress:
                progress(cell)
    cells.sort(key=lambda c: (c.p_fault, c.run))

    table = aggregate_table(config, cells)
    write_table_csv(table, out / "table1.csv", config.rules)
    all_reports = [(c.run, rule, c.reports[rule])
                   for c in cells for rule in config.rules]
    export_convergence([r for _, _, r in all_reports],
                       out / "convergence.csv",
                       run_ids=[rid for rid, _, _ in all_reports])
    for run_index, (state, _) in baselines.items():
        export_weight_maps(state.weights,
                           out / f"weights_baseline_run{run_index}.pgm")
    return cells, table


def aggregate_table(config, cells):
    """Group cells by fault level into mean/std rows (Table-1 layout)."""
    rows = []
    for p_fault in config.p_faults:
        group = [c for c in cells if c.p_fault == p_fault]
        row = {
            "dataset": config.dataset,
            "p_fault": p_fault,
            "baseline_mean": float(np.mean([c.baseline_acc for c in group])),
            "acc_norm_mean": float(np.mean([c.acc_norm for c in group])),
            "acc_norm_std": float(np.std([c.acc_norm for c in group])),
        }
        for rule in config.rules:
            accs = [c.reports[rule].best_acc for c in group]
            steps = [c.reports[rule].steps_to_best for c in group]
            tag = rule.replace("-", "_")
            row[f"acc_{tag}_mean"] = float(np.mean(accs))
            row[f"acc_{tag}_std"] = float(np.std(accs))
            row[f"steps_{tag}_mean"] = float(np.mean(steps))
            row[f"steps_{tag}_std"] = float(np.std(steps))
        rows.append(row)
    return rows


def write_table_csv(table, path, rules):
    cols = ["dataset", "p_fault", "baseline_mean",
            "acc_norm_mean", "acc_norm_std"]
    for rule in rules:
        tag = rule.replace("-", "_")
        cols += [f"acc_{tag}_mean", f"acc_{tag}_std",
                 f"steps_{tag}_mean", f"steps_{tag}_std"]
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for row in table:
            f.write(",".join(_fmt(row[c]) for c in cols) + "\n")


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.4f}"
    return str(x)


def export_convergence(reports, path, run_ids=None):
    """Long-format convergence CSV: run, rule, samples_seen, accuracy plus
    an is_best marker on each run's steps-to-best row."""
    if not reports:
        raise ValueError("need at least one report")
    if run_ids is None:
        run_ids = list(range(len(reports)))
    with open(path, "w") as f:
        f.write("run,rule,samples_seen,accuracy,is_best\n")
        for rid, rep in zip(run_ids, reports):
            for samples, acc in rep.rows:
                best = int(samples == rep.steps_to_best
                           and acc == rep.best_acc)
                f.write(f"{rid},{rep.rule},{samples},{acc:.4f},{best}\n")


def export_weight_maps(weights, path, side=None):
    """Tile per-neuron receptive fields into one 8-bit binary PGM mosaic.

    Each neuron's weight column is reshaped to a square image and min-max
    normalized individually (a constant column maps to 0); tiles are laid
    out on a ceil(sqrt(n))-wide grid.
    """
    w = np.asarray(weights, dtype=float)
    n_input, n_neuron = w.shape
    if side is None:
        side = int(round(math.sqrt(n_input)))
        if side * side != n_input:
            raise ValueError(f"n_input {n_input} is not a square; pass side")
    grid = int(math.ceil(math.sqrt(n_neuron)))
    mosaic = np.zeros((grid * side, grid * side), dtype=np.uint8)
    for j in range(n_neuron):
        tile = w[:, j].reshape(side, side)
        lo, hi = tile.min(), tile.max()
        if hi > lo:
            tile = (tile - lo) / (hi - lo)
        else:
            tile = np.zeros_like(tile)
        r, c = divmod(j, grid)
        mosaic[r * side:(r + 1) * side,
               c * side:(c + 1) * side] = np.round(tile * 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{mosaic.shape[1]} {mosaic.shape[0]}\n255\n"
                .encode("ascii"))
        f.write(mosaic.tobytes())


def run_tau_ablation(config, taus, p_fault=0.8, runs=None):
    """Sweep the self-repair time constant at fixed fault level with drift;
    returns rows of (tau, acc_mean, acc_std, steps_mean, steps_std) and
    writes ablation.csv under out_dir."""
    taus = list(taus)
    if not taus:
        raise ConfigError("tau sweep needs at least one value")
    runs = runs if runs is not None else config.runs
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, test = load_splits(config)
    rows = []
    for tau in taus:
        accs, steps = [], []
        for run_index in range(runs):
            sweep_cfg = replace(config, tau=tau, rules=("astdp-local",),
                                p_faults=(p_fault,))
            run_seed = derive_seed(config.master_seed, "run", run_index)
            state, acc0 = prepare_baseline(sweep_cfg, run_seed, train, test)
            cell = run_cell(sweep_cfg, train, test, run_index, p_fault,
                            state, acc0)
            rep = cell.reports["astdp-local"]
            accs.append(rep.best_acc)
            steps.append(rep.steps_to_best)
        rows.append((tau, float(np.mean(accs)), float(np.std(accs)),
                     float(np.mean(steps)), float(np.std(steps))))
    with open(out / "ablation.csv", "w") as f:
        f.write("tau,acc_mean,acc_std,steps_mean,steps_std\n")
        for r in rows:
            f.write(f"{r[0]:g},{r[1]:.4f},{r[2]:.4f},{r[3]:.1f},{r[4]:.1f}\n")
    return rows


# Flat key = value configuration files (UTF-8, '#' comments). Values use
# the same spellings as the CLI flags; lists are comma-separated.

_TUPLE_FIELDS = {"p_faults": float, "rules": str}
_SCALAR_PARSERS = {int: int, float: float, str: str}


def parse_config_file(path):
    values = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            values[key.strip()] = raw.strip()
    return values


def config_from_mapping(values, base=None):
    """Build an ExperimentConfig from string key/value pairs, laid over an
    optional base config (CLI overrides config file)."""
    kwargs = {}
    if base is not None:
        kwargs.update({k: getattr(base, k)
                       for k in ExperimentConfig.__dataclass_fields__})
    fields = ExperimentConfig.__dataclass_fields__
    for key, raw in values.items():
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        if key in _TUPLE_FIELDS:
            conv = _TUPLE_FIELDS[key]
            kwargs[key] = tuple(conv(v.strip()) for v in raw.split(","))
            continue
        ftype = fields[key].type
        if isinstance(raw, str):
            if ftype is bool or raw.lower() in ("true", "false"):
                kwargs[key] = raw.lower() == "true"
            elif ftype is int:
                kwargs[key] = int(raw)
            elif ftype is float:
                kwargs[key] = float(raw)
            else:
                try:
                    kwargs[key] = int(raw)
                except ValueError:
                    try:
                        kwargs[key] = float(raw)
                    except ValueError:
                        kwargs[key] = raw
        else:
            kwargs[key] = raw
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as e:
        raise ConfigError(str(e))
