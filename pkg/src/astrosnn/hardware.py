"""Memristive crossbar substrate and hardware fault models.

Weights live on a crossbar of phase-change-memory (PCM) devices. Each signed
weight maps to a differential conductance pair (G+, G-); the array computes
current-domain dot products by Kirchhoff's law. Two non-idealities are
modelled: stuck-at-zero faults (a synapse is dead and excluded from all
dynamics) and PCM conductance drift, G = G0 * t_norm^(-v), with the log-slope
v drawn per device from a normal distribution.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class DriftSpec:
    """Parameters of the PCM conductance-drift model.

    t_norm is the normalized elapsed time (> 1); v ~ N(mu_v, sigma_v) is the
    per-device log-scale decay slope. Defaults follow the retraining
    hyperparameter table (t_norm = 1e4, mu_v = 1, sigma_v = 0.2258).
    """

    t_norm: float = 1e4
    mu_v: float = 1.0
    sigma_v: float = 0.2258
    seed: int = 0

    def __post_init__(self):
        if not self.t_norm > 1.0:
            raise ValueError(f"t_norm must be > 1, got {self.t_norm}")
        if self.sigma_v < 0.0:
            raise ValueError(f"sigma_v must be >= 0, got {self.sigma_v}")


@dataclass
class FaultSpec:
    """Stuck-at-zero fault injection: each synapse dies independently
    with probability p_fault."""

    p_fault: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_fault <= 1.0:
            raise ValueError(f"p_fault must be in [0, 1], got {self.p_fault}")


@dataclass
class CrossbarView:
    """Differential-pair conductance representation of a signed weight matrix.

    For each synapse at most one of (g_plus, g_minus) is above the OFF level;
    the effective conductance is G = g_plus - g_minus = weight * scale.
    """

    g_plus: np.ndarray
    g_minus: np.ndarray
    scale: float = 1.0
    off_level: float = 0.0


def crossbar_current(g, v_in):
    """Column currents I_j = sum_i G[i, j] * V[i] of a crossbar read.

    ``g`` has shape (n_rows, n_cols); ``v_in`` is the per-row voltage vector.
    Raises ValueError on dimension mismatch.
    """
    g = np.asarray(g, dtype=float)
    v_in = np.asarray(v_in, dtype=float)
    if g.ndim != 2 or v_in.ndim != 1 or v_in.shape[0] != g.shape[0]:
        raise ValueError(
            f"dimension mismatch: g {g.shape} vs v_in {v_in.shape}"
        )
    return v_in @ g


def to_differential(weights, scale=1.0, off_level=0.0):
    """Map a signed weight matrix onto differential PCM pairs.

    Positive weights program g_plus (g_minus at OFF), negative weights the
    reverse. The idealized OFF state is 0 by default; a small nonzero
    off_level can be configured for sensitivity studies.
    """
    w = np.asarray(weights, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    g_plus = np.where(w >= 0, w * scale, 0.0) + off_level
    g_minus = np.where(w < 0, -w * scale, 0.0) + off_level
    return CrossbarView(g_plus=g_plus, g_minus=g_minus, scale=scale,
                        off_level=off_level)


def from_differential(view):
    """Recover the signed weight matrix from a CrossbarView."""
    return (view.g_plus - view.g_minus) / view.scale


def inject_stuck_at(weights, spec):
    """Kill each synapse independently with probability spec.p_fault.

    Returns (new_weights, fault_mask). Masked entries are zeroed and must be
    excluded from any subsequent dynamics by the caller (learning rules check
    the mask). Deterministic for a given spec.seed.
    """
    w = np.asarray(weights, dtype=float)
    rng = np.random.default_rng(spec.seed)
    mask = rng.random(w.shape) < spec.p_fault
    out = w.copy()
    out[mask] = 0.0
    return out, mask


def sample_drift_ratios(shape, spec):
    """Per-device drift ratios r_decay = t_norm^(-v), v ~ N(mu_v, sigma_v).

    Negative v samples (possible under the Gaussian) yield r_decay > 1 and
    are kept as-is. Deterministic for a given spec.seed.
    """
    rng = np.random.default_rng(spec.seed)
    v = rng.normal(spec.mu_v, spec.sigma_v, size=shape)
    return spec.t_norm ** (-v)


def apply_drift(weights, fault_mask, spec):
    """Multiply every non-masked weight by its own sampled drift ratio.

    Masked (stuck-at) entries are untouched: they are already zero and stay
    zero. The ratio field is sampled for the full matrix so the values on
    surviving synapses do not depend on the mask.
    """
    w = np.asarray(weights, dtype=float)
    if fault_mask is None:
        fault_mask = np.zeros(w.shape, dtype=bool)
    r = sample_drift_ratios(w.shape, spec)
    out = np.where(fault_mask, w, w * r)
    return out
