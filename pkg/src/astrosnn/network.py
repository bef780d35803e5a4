"""Unsupervised STDP network for image recognition.

A single excitatory layer of LIF neurons with adaptive thresholds
(homeostasis), one-step-delayed lateral inhibition through a global
inhibitory weight, trace-based STDP on the input weight matrix, and
per-batch weight-sum normalization. Pixel intensities are rate-coded into
Poisson spike trains. Readout is the standard highest-average-response
labelling: each neuron is assigned the class it responds to most, and a
sample is classified by the label group with the highest mean spike count.

Batch semantics: the images of a batch are simulated against a frozen
(weights, theta) snapshot; weight updates and threshold increments
accumulate across the batch and are merged in fixed image order at batch
end, followed by normalization.
"""

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class SnnConfig:
    """Network hyperparameters. Defaults are the MNIST retraining set;
    use :meth:`fmnist` for the Fashion-MNIST variant."""

    n_input: int = 784
    n_neuron: int = 400
    time_per_image: float = 100.0   # ms
    dt: float = 1.0                 # ms
    tau_v: float = 100.0            # ms
    delta_ref: float = 5.0          # ms
    v_res: float = -65.0            # mV
    v_reset: float = -60.0          # mV
    v_th: float = -52.0             # mV
    theta_plus: float = 0.05        # mV
    tau_theta: float = 1e7          # ms
    trace_tau: float = 20.0         # ms
    w_inh: float = -120.0
    max_rate: float = 128.0         # spikes/s at full intensity
    eta_post: float = 1e-2
    eta_pre: float = 1e-4
    norm_factor: float = 78.4       # per-neuron weight-sum target (baseline)
    weight_sum_lb: float = 0.17     # per-synapse-average lower bound (repair)
    batch_size: int = 16
    w_init_high: float = 0.3

    def __post_init__(self):
        if not self.v_reset < self.v_th:
            raise ValueError("require v_reset < v_th")
        for name in ("tau_v", "tau_theta", "trace_tau", "time_per_image",
                     "dt"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.max_rate * self.dt * 1e-3 > 1.0:
            raise ValueError("max_rate * dt > 1; rate coding invalid")

    @classmethod
    def mnist(cls, **kw):
        return cls(**kw)

    @classmethod
    def fmnist(cls, **kw):
        defaults = dict(w_inh=-250.0, max_rate=45.0, eta_post=4e-3,
                        eta_pre=4e-5, weight_sum_lb=0.22)
        defaults.update(kw)
        return cls(**defaults)

    @property
    def steps_per_image(self):
        return int(round(self.time_per_image / self.dt))


@dataclass
class NetworkState:
    """Mutable network state: plastic weights plus neuron dynamics."""

    weights: np.ndarray                 # (n_input, n_neuron), >= 0
    theta: np.ndarray                   # (n_neuron,) adaptive increment, mV
    v: np.ndarray                       # (n_neuron,) membrane potential, mV
    refractory_remaining: np.ndarray    # (n_neuron,) ms
    x_pre: np.ndarray                   # (n_input,) pre-synaptic traces
    x_post: np.ndarray                  # (n_neuron,) post-synaptic traces
    fault_mask: np.ndarray              # (n_input, n_neuron) bool, stuck-at
    prev_spikes: np.ndarray             # (n_neuron,) bool, for inhibition

    @classmethod
    def initial(cls, config, seed=0):
        rng = np.random.default_rng(seed)
        w = rng.uniform(0.0, config.w_init_high,
                        (config.n_input, config.n_neuron))
        return cls(
            weights=w,
            theta=np.zeros(config.n_neuron),
            v=np.full(config.n_neuron, config.v_res),
            refractory_remaining=np.zeros(config.n_neuron),
            x_pre=np.zeros(config.n_input),
            x_post=np.zeros(config.n_neuron),
            fault_mask=np.zeros((config.n_input, config.n_neuron), bool),
            prev_spikes=np.zeros(config.n_neuron, bool),
        )

    def reset_transient(self, config):
        """Reset per-image state (potentials, traces, refractoriness);
        weights and theta persist."""
        self.v[:] = config.v_res
        self.refractory_remaining[:] = 0.0
        self.x_pre[:] = 0.0
        self.x_post[:] = 0.0
        self.prev_spikes[:] = False


@dataclass
class Readout:
    """Per-neuron class labels plus the majority-class fallback used when a
    sample elicits no spikes at all. Label -1 marks a neuron that never
    fired during assignment."""

    neuron_labels: np.ndarray
    fallback_class: int


def encode_poisson(image, max_rate, duration, dt, seed):
    """Rate-code an intensity image into Poisson spike trains.

    ``image`` holds per-pixel intensities in [0, 1]; each pixel spikes
    independently with probability intensity*max_rate*dt per bin. Returns a
    (n_steps, n_pixels) boolean array; deterministic for a given seed.
    """
    img = np.asarray(image, dtype=float).ravel()
    if img.size and (img.min() < 0.0 or img.max() > 1.0):
        raise ValueError("pixel intensities must be scaled to [0, 1]")
    p = max_rate * dt * 1e-3
    if p > 1.0:
        raise ValueError(f"max_rate*dt = {p} > 1; binning invalid")
    n_steps = int(round(duration / dt))
    rng = np.random.default_rng(seed)
    return rng.random((n_steps, img.size)) < img * p


def step_network(state, input_spikes, config):
    """Advance the network one time step.

    Order of operations: refractory countdown, membrane leak, synaptic plus
    (one-step-delayed) inhibitory input gated by refractoriness, threshold
    test against v_th + theta, reset/homeostasis bookkeeping, trace decay
    with spiking units set to 1. Returns the output spike vector.
    """
    input_spikes = np.asarray(input_spikes, dtype=bool)
    if input_spikes.shape != (config.n_input,):
        raise ValueError(
            f"input_spikes must have shape ({config.n_input},)")
    out = _engine_step(
        state.v[None, :], state.refractory_remaining[None, :],
        state.theta[None, :], state.prev_spikes[None, :],
        state.x_pre[None, :], state.x_post[None, :],
        state.weights, input_spikes[None, :], config,
        theta_plastic=True)
    state.prev_spikes[:] = out[0]
    return out[0]


def _engine_step(v, refr, theta, prev, x_pre, x_post, weights, in_spikes,
                 config, theta_plastic):
    """Shared single-step kernel, vectorized over a leading batch axis.

    All state arrays are (B, ...) views and are updated in place except
    ``prev`` (the caller swaps in the returned spikes). ``theta_plastic``
    disables homeostasis updates during evaluation.
    """
    dt = config.dt
    d_v = math.exp(-dt / config.tau_v)
    d_th = math.exp(-dt / config.tau_theta)
    d_tr = math.exp(-dt / config.trace_tau)

    np.maximum(refr - dt, 0.0, out=refr)
    gate = refr <= 0.0
    v *= d_v
    v += config.v_res * (1.0 - d_v)
    current = in_spikes.astype(float) @ weights
    inh = prev.sum(axis=1, keepdims=True) - prev
    current += config.w_inh * inh
    v += current * gate
    out = (v >= config.v_th + theta) & gate
    v[out] = config.v_reset
    refr[out] = config.delta_ref
    if theta_plastic:
        theta *= d_th
        theta[out] += config.theta_plus
    x_pre *= d_tr
    x_pre[in_spikes] = 1.0
    x_post *= d_tr
    x_post[out] = 1.0
    return out


def stdp_update(state, fired_pre, fired_post, config):
    """Plain trace-based STDP weight update for one step's spike events.

    Post-synaptic fire of neuron j potentiates its column by
    eta_post * x_pre; pre-synaptic fire of input i depresses its row by
    eta_pre * x_post. Fault-masked entries are untouched; weights are
    clipped at 0.
    """
    w = state.weights
    fired_pre = np.asarray(fired_pre, dtype=int)
    fired_post = np.asarray(fired_post, dtype=int)
    if fired_post.size:
        dw = config.eta_post * state.x_pre[:, None]
        live = ~state.fault_mask[:, fired_post]
        w[:, fired_post] += dw * live
    if fired_pre.size:
        dw = config.eta_pre * state.x_post[None, :]
        live = ~state.fault_mask[fired_pre, :]
        w[fired_pre, :] -= dw * live
    np.clip(w, 0.0, None, out=w)
    w[state.fault_mask] = 0.0
    return w


def normalize_weights(state, lb=None, target=None):
    """Rescale each neuron's (non-masked) weight sum to a common value.

    With ``target`` given, every neuron is scaled to that fixed sum (the
    baseline-training rule). Otherwise the target is the network mean of
    the per-neuron sums, floored at lb * n_input when ``lb`` is given (the
    retraining rule: lb is a per-synapse-average bound). Neurons with a
    zero weight sum are left unscaled. Masked entries stay 0.
    """
    w = state.weights
    sums = w.sum(axis=0)
    if target is not None:
        goal = float(target)
    else:
        goal = float(sums.mean())
        if lb is not None:
            goal = max(goal, lb * w.shape[0])
    nonzero = sums > 0.0
    scale = np.ones_like(sums)
    scale[nonzero] = goal / sums[nonzero]
    w *= scale
    w[state.fault_mask] = 0.0
    return state


def run_image_batch(weights, theta, images, config, rng, plastic=True,
                    theta_start_decay=True):
    """Simulate a batch of images against frozen (weights, theta).

    Returns a dict with per-image spike counts, the merged theta, and (when
    ``plastic``) the accumulated pairing matrices:

    * ``pot_pairings``[i, j] = sum over steps/images of x_pre[i] at post
      spikes of neuron j (multiply by a learning rate to get the
      potentiation update);
    * ``dep_pairings``[i, j] = sum of x_post[j] at pre spikes of input i.

    Per-image state (v, traces, refractoriness) is reset for every image;
    theta evolves per image from the shared snapshot and the per-image
    increments are summed in fixed order at the end.
    """
    b = images.shape[0]
    n_in, n_out = weights.shape
    steps = config.steps_per_image
    p_pix = np.clip(images, 0.0, 1.0) * (config.max_rate * config.dt * 1e-3)

    v = np.full((b, n_out), config.v_res)
    refr = np.zeros((b, n_out))
    theta_local = np.tile(theta, (b, 1))
    prev = np.zeros((b, n_out), bool)
    x_pre = np.zeros((b, n_in))
    x_post = np.zeros((b, n_out))
    counts = np.zeros((b, n_out), dtype=np.int64)
    pot = np.zeros((n_in, n_out)) if plastic else None
    dep = np.zeros((n_in, n_out)) if plastic else None

    for _ in range(steps):
        in_spikes = rng.random((b, n_in)) < p_pix
        out = _engine_step(v, refr, theta_local, prev, x_pre, x_post,
                           weights, in_spikes, config,
                           theta_plastic=plastic)
        prev = out
        counts += out
        if plastic:
            if out.any():
                pot += x_pre.T @ out.astype(float)
            if in_spikes.any():
                dep += in_spikes.astype(float).T @ x_post

    if plastic and theta_start_decay:
        decayed = theta * math.exp(-config.dt * steps / config.tau_theta)
        theta_new = decayed + (theta_local - decayed[None, :]).sum(axis=0)
    else:
        theta_new = theta.copy()
    return dict(counts=counts, theta=theta_new, pot_pairings=pot,
                dep_pairings=dep)


def apply_stdp_batch(state, pot, dep, config):
    """Apply a batch's accumulated plain-STDP update to the weights."""
    dw = config.eta_post * pot - config.eta_pre * dep
    dw[state.fault_mask] = 0.0
    state.weights += dw
    np.clip(state.weights, 0.0, None, out=state.weights)
    state.weights[state.fault_mask] = 0.0


def train_stdp_baseline(state, images, config, seed, epochs=1,
                        normalize=True):
    """Train on an image stack with plain STDP and baseline normalization
    (fixed per-neuron weight-sum target)."""
    rng = np.random.default_rng(seed)
    n = images.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            batch = images[order[lo:lo + config.batch_size]]
            res = run_image_batch(state.weights, state.theta, batch,
                                  config, rng, plastic=True)
            state.theta = res["theta"]
            apply_stdp_batch(state, res["pot_pairings"],
                             res["dep_pairings"], config)
            if normalize:
                normalize_weights(state, target=config.norm_factor)
    return state


def response_counts(state, images, config, seed, batch=128):
    """Per-image output spike counts with plasticity and homeostasis off
    (theta frozen at its current value)."""
    rng = np.random.default_rng(seed)
    out = np.zeros((images.shape[0], config.n_neuron), dtype=np.int64)
    for lo in range(0, images.shape[0], batch):
        chunk = images[lo:lo + batch]
        res = run_image_batch(state.weights, state.theta, chunk, config,
                              rng, plastic=False)
        out[lo:lo + chunk.shape[0]] = res["counts"]
    return out


def assign_labels(state, images, labels, config, seed=0):
    """Assign each neuron the class it responds to most strongly.

    The mean spike count per class is computed from the responses to a
    labelled set; neurons that never fire get the sentinel label -1. The
    readout also records the most frequent class of the labelled set as
    the all-silent fallback.
    """
    labels = np.asarray(labels)
    counts = response_counts(state, images, config, seed)
    n_classes = int(labels.max()) + 1 if labels.size else 0
    mean_by_class = np.zeros((n_classes, config.n_neuron))
    for c in range(n_classes):
        sel = labels == c
        if sel.any():
            mean_by_class[c] = counts[sel].mean(axis=0)
    neuron_labels = mean_by_class.argmax(axis=0).astype(int)
    neuron_labels[counts.sum(axis=0) == 0] = -1
    fallback = int(np.bincount(labels).argmax())
    return Readout(neuron_labels=neuron_labels, fallback_class=fallback)


def _predict(counts, readout):
    """Predicted classes from response counts, one row per image."""
    n_classes = max(int(readout.neuron_labels.max()) + 1,
                    readout.fallback_class + 1)
    preds = np.full(counts.shape[0], readout.fallback_class, dtype=int)
    class_means = np.full((counts.shape[0], n_classes), -np.inf)
    for c in range(n_classes):
        sel = readout.neuron_labels == c
        if sel.any():
            class_means[:, c] = counts[:, sel].mean(axis=1)
    active = counts.sum(axis=1) > 0
    preds[active] = class_means[active].argmax(axis=1)
    return preds


def classify(state, readout, image, config, seed=0):
    """Classify one image: argmax over classes of the mean spike count of
    that class's neurons during the presentation; ties break toward the
    lowest class index; an all-silent response falls back to the most
    frequent training class."""
    counts = response_counts(state, np.asarray(image, float).reshape(1, -1),
                             config, seed)
    return int(_predict(counts, readout)[0])


def evaluate_accuracy(state, readout, images, labels, config, seed=0):
    """Classification accuracy (percent) over an image stack."""
    counts = response_counts(state, images, config, seed)
    preds = _predict(counts, readout)
    return 100.0 * float(np.mean(preds == np.asarray(labels)))
