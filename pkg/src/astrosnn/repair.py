"""Astromorphic local self-repair learning rule and retraining loop.

The rule modulates STDP potentiation by the gap between a per-synapse
repair target and the current weight: dw = eta_post * x_pre * (q*w0 - w)/tau
on post-synaptic spikes, with the per-neuron repair ratio q = 1/z computed
from quantities local to the neuron (its current and pre-fault weight
sums). Depression is left as plain STDP. Fault-masked synapses are frozen
entirely.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import network
from .network import normalize_weights, run_image_batch
from .seeds import derive_seed


@dataclass
class RepairContext:
    """Pre-fault weight snapshot and repair-target bookkeeping.

    ``w0`` is captured from the healthy trained network and never mutated
    afterwards (the array is marked read-only); ``q`` holds the current
    per-neuron self-repair ratio, recomputed once per normalization period
    (in batches). Neurons whose repair target is undefined carry NaN in
    ``q`` and fall back to plain STDP potentiation.
    """

    w0: np.ndarray
    w0_sums: np.ndarray
    tau: float = 1e-2
    q: np.ndarray = None
    recompute_period: int = 1   # batches

    def __post_init__(self):
        if self.q is None:
            self.q = np.ones(self.w0.shape[1])


def snapshot_baseline(weights, tau=1e-2):
    """Snapshot the healthy network's weights before fault injection.

    Raises ValueError if any weight is negative. The stored copy is
    immutable; later mutation of the live weights cannot touch it.
    """
    w = np.array(weights, dtype=float, copy=True)
    if np.any(w < 0):
        raise ValueError("baseline weights must be non-negative")
    w.setflags(write=False)
    sums = w.sum(axis=0)
    sums.setflags(write=False)
    return RepairContext(w0=w, w0_sums=sums, tau=tau)


def compute_q_local(weights, fault_mask, ctx):
    """Per-neuron repair ratio q_j = 1/z_j with
    z_j = sum_i w_ij(now, non-masked) / w0_sums_j.

    Neurons with z_j = 0 (or an empty pre-fault column) get NaN: their
    repair target is undefined and the update rule trains them with plain
    STDP instead.
    """
    w = np.asarray(weights, dtype=float)
    live = np.where(fault_mask, 0.0, w) if fault_mask is not None else w
    sums = live.sum(axis=0)
    q = np.full(w.shape[1], np.nan)
    valid = (ctx.w0_sums > 0) & (sums > 0)
    q[valid] = ctx.w0_sums[valid] / sums[valid]
    return q


def astdp_local_update(state, fired_pre, fired_post, ctx, config):
    """Apply the local self-repair rule for one step's spike events.

    Post-synaptic fire of neuron j moves column j toward its repair target:
    w_ij += eta_post * x_pre_i * (q_j * w0_ij - w_ij) / tau, with the
    per-event step capped so a single event never crosses the target.
    Pre-synaptic fire keeps the plain STDP depression branch. Only the
    fired columns/rows of the weight matrix are read or written; masked
    entries never change.
    """
    w = state.weights
    fired_pre = np.asarray(fired_pre, dtype=int)
    fired_post = np.asarray(fired_post, dtype=int)
    if fired_post.size:
        cols = fired_post
        w_cols = np.array(w[:, cols], dtype=float)
        w0_cols = np.array(ctx.w0[:, cols], dtype=float)
        q_cols = np.asarray(ctx.q[cols], dtype=float)
        live = ~state.fault_mask[:, cols]
        alpha = np.minimum(config.eta_post * state.x_pre / ctx.tau, 1.0)
        has_target = np.isfinite(q_cols)
        target = np.where(has_target, q_cols, 0.0)[None, :] * w0_cols
        pull = alpha[:, None] * (target - w_cols)
        plain = config.eta_post * state.x_pre[:, None]
        dw = np.where(has_target[None, :], pull, plain)
        w[:, cols] = np.clip(w_cols + dw * live, 0.0, None)
    if fired_pre.size:
        rows = fired_pre
        w_rows = np.array(w[rows, :], dtype=float)
        live = ~state.fault_mask[rows, :]
        dw = config.eta_pre * state.x_post[None, :]
        w[rows, :] = np.clip(w_rows - dw * live, 0.0, None)
    return w


def apply_astdp_local_batch(state, ctx, pot, dep, config):
    """Apply a batch's accumulated pairings under the local repair rule.

    Within a batch the weights are frozen, so all potentiation events of a
    synapse pull on the same gap (q*w0 - w); the accumulated pull factor is
    saturated at 1 so the batch as a whole cannot overshoot the target.
    """
    alpha = np.minimum((config.eta_post / ctx.tau) * pot, 1.0)
    has_target = np.isfinite(ctx.q)
    target = np.where(has_target, ctx.q, 0.0)[None, :] * ctx.w0
    pull = alpha * (target - state.weights)
    plain = config.eta_post * pot
    dw = np.where(has_target[None, :], pull, plain)
    dw -= config.eta_pre * dep
    dw[state.fault_mask] = 0.0
    state.weights += dw
    np.clip(state.weights, 0.0, None, out=state.weights)
    state.weights[state.fault_mask] = 0.0


RULES = ("stdp", "astdp-local")


@dataclass
class RepairReport:
    """Accuracy trace of one retraining run plus its summary statistics."""

    rule: str
    seed: int
    rows: list                 # (samples_seen, accuracy) pairs
    best_acc: float
    steps_to_best: int         # training samples consumed to reach best_acc

    def write_csv(self, path):
        with open(path, "w") as f:
            f.write("samples_seen,accuracy\n")
            for samples, acc in self.rows:
                f.write(f"{samples},{acc:.4f}\n")
            f.write(f"# best_acc={self.best_acc:.4f} "
                    f"steps_to_best={self.steps_to_best} seed={self.seed}\n")


def retrain(state, ctx, train_images, train_labels, rule, epochs, config,
            eval_images, eval_labels, eval_every=1000, seed=0,
            assign_count=1000):
    """Self-repair retraining loop with periodic held-out evaluation.

    Runs encode -> simulate -> plasticity (per ``rule``) -> per-batch
    normalization with the weight-sum lower bound; for the local rule the
    per-neuron q is recomputed once per normalization period. Every
    ``eval_every`` training samples the neurons are relabelled from the
    responses to an assignment subset of the training set and accuracy is
    measured on the held-out set (adaptive thresholds frozen during
    evaluation). Returns a RepairReport with the best accuracy and the
    number of samples consumed to reach it.
    """
    if rule not in RULES:
        raise ValueError(f"unknown rule {rule!r}; expected one of {RULES}")
    rng = np.random.default_rng(derive_seed(seed, "retrain", rule))
    n = train_images.shape[0]
    assign_idx = np.arange(min(assign_count, n))
    rows = []
    samples_seen = 0
    next_eval = 0
    batch_index = 0

    def checkpoint():
        readout = network.assign_labels(
            state, train_images[assign_idx], train_labels[assign_idx],
            config, seed=derive_seed(seed, "assign", samples_seen))
        acc = network.evaluate_accuracy(
            state, readout, eval_images, eval_labels, config,
            seed=derive_seed(seed, "eval", samples_seen))
        rows.append((samples_seen, acc))

    checkpoint()
    next_eval = eval_every
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            batch = train_images[order[lo:lo + config.batch_size]]
            if rule == "astdp-local" and \
                    batch_index % ctx.recompute_period == 0:
                ctx.q = compute_q_local(state.weights, state.fault_mask, ctx)
            res = run_image_batch(state.weights, state.theta, batch,
                                  config, rng, plastic=True)
            state.theta = res["theta"]
            if rule == "stdp":
                network.apply_stdp_batch(state, res["pot_pairings"],
                                         res["dep_pairings"], config)
            else:
                apply_astdp_local_batch(state, ctx, res["pot_pairings"],
                                        res["dep_pairings"], config)
            normalize_weights(state, lb=config.weight_sum_lb)
            batch_index += 1
            samples_seen += batch.shape[0]
            if samples_seen >= next_eval:
                checkpoint()
                next_eval += eval_every
    if rows[-1][0] != samples_seen:
        checkpoint()

    accs = np.array([a for _, a in rows])
    best_i = int(accs.argmax())
    return RepairReport(rule=rule, seed=seed, rows=rows,
                        best_acc=float(accs[best_i]),
                        steps_to_best=int(rows[best_i][0]))
