"""Analytical macro-model of astrocyte-mediated self-repair.

The repair of a faulty neuron is summarized by two numbers: the fault
severity z (surviving fraction of the neuron's initial synaptic strength)
and the self-repair ratio q (factor by which the surviving synapses
stabilize above their pre-fault level). Empirically q ~= 1.03/(z + 0.04);
the algorithmic simplification is q = 1/z. The temporal repair trajectory is
exponential with time constant tau and temporal intercept
t_b = -tau*log((q-1)/q).
"""

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RepairMeasurement:
    """One (fault severity, repair ratio) sample from a simulation run."""

    z: float
    q: float
    run_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.z <= 1.0:
            raise ValueError(f"z must be in (0, 1], got {self.z}")
        if not self.q > 0.0:
            raise ValueError(f"q must be > 0, got {self.q}")


@dataclass
class RepairTrajectoryParams:
    """Parameters of the exponential repair trajectory.

    t_b is derived from (q, tau) unless given explicitly; q > 1 is required
    for the temporal intercept to be finite.
    """

    q: float
    tau: float
    t_fault: float
    pr_bf: float
    t_b: float = None

    def __post_init__(self):
        if self.t_b is None:
            self.t_b = temporal_intercept(self.q, self.tau)


def fault_severity(pr0, disabled):
    """Fault severity z: surviving fraction of the initial PR mass.

    z = sum(pr0 over non-disabled) / sum(pr0 over all), in [0, 1].
    Raises ValueError on empty input or zero total initial PR.
    """
    pr0 = np.asarray(pr0, dtype=float)
    disabled = np.asarray(disabled, dtype=bool)
    if pr0.size == 0:
        raise ValueError("need at least one synapse")
    if np.any(pr0 < 0):
        raise ValueError("initial PRs must be >= 0")
    total = pr0.sum()
    if total <= 0.0:
        raise ValueError("total initial PR is zero; severity undefined")
    return float(pr0[~disabled].sum() / total)


def repair_ratio_fit(z):
    """Empirical repair ratio q = 1.03 / (z + 0.04)."""
    if not z > 0.0:
        raise ValueError(f"z must be > 0, got {z}")
    return 1.03 / (z + 0.04)


def repair_ratio(z):
    """Inverse-proportional repair ratio q = 1/z used by the learning rule."""
    if not z > 0.0:
        raise ValueError(f"z must be > 0, got {z}")
    return 1.0 / z


def temporal_intercept(q, tau):
    """Temporal intercept t_b = -tau * log((q-1)/q) of the repair trajectory.

    Defined for q > 1; t_b > 0 and 1 - exp(-t_b/tau) = 1/q exactly.
    """
    if not q > 1.0:
        raise ValueError(f"q must be > 1 for a finite intercept, got {q}")
    if not tau > 0.0:
        raise ValueError(f"tau must be > 0, got {tau}")
    return -tau * math.log((q - 1.0) / q)


def repair_trajectory(params, t):
    """PR of a healthy synapse at time t > t_fault during self-repair.

    pr(t) = q * pr_bf * (1 - exp(-(t - t_fault + t_b)/tau)); continuous at
    t_fault (equals pr_bf) and saturating at q * pr_bf.
    """
    if not t > params.t_fault:
        raise ValueError(f"t must be > t_fault ({params.t_fault}), got {t}")
    if not params.q > 1.0:
        raise ValueError("repair trajectory requires q > 1")
    x = (t - params.t_fault + params.t_b) / params.tau
    return params.q * params.pr_bf * (1.0 - math.exp(-x))


def measure_repair_ratio(trace, bf_window, as_window):
    """Per-synapse repair ratio q_i from a simulated PR trace set.

    q_i = mean(PR_i over AS window) / mean(PR_i over BF window) for every
    non-disabled synapse; disabled entries are NaN. Windows are (t0_s, t1_s)
    in seconds and must lie within the trace duration. Raises ValueError if
    the BF mean of a non-disabled synapse is zero.
    """
    dt_s = trace.dt_ms * 1e-3
    n_steps = trace.pr.shape[0]

    def window_slice(w):
        lo = int(round(w[0] / dt_s))
        hi = int(round(w[1] / dt_s))
        if not (0 <= lo < hi <= n_steps):
            raise ValueError(f"window {w} outside trace duration")
        return slice(lo, hi)

    bf = trace.pr[window_slice(bf_window)].mean(axis=0)
    as_ = trace.pr[window_slice(as_window)].mean(axis=0)
    live = ~trace.disabled
    if np.any((bf == 0.0) & live):
        raise ValueError("BF mean is zero for a non-disabled synapse")
    q = np.full(bf.shape, np.nan)
    q[live] = as_[live] / bf[live]
    return q


def fit_q_z(measurements):
    """Least-squares fit of q = a/(z + b) to (z, q) measurements.

    Linearized as 1/q = z/a + b/a and solved by ordinary least squares,
    which is closed-form and deterministic. Returns (a, b, rms) where rms is
    the root-mean-square residual of q - a/(z + b). Requires >= 10
    measurements spanning a z range of at least 0.4; raises ValueError on
    degenerate input (all z equal).
    """
    z = np.array([m.z for m in measurements], dtype=float)
    q = np.array([m.q for m in measurements], dtype=float)
    if z.size < 10:
        raise ValueError(f"need >= 10 measurements, got {z.size}")
    if np.ptp(z) == 0.0:
        raise ValueError("degenerate input: all z equal")
    if np.ptp(z) < 0.4:
        raise ValueError(f"z range width {np.ptp(z):.3f} < 0.4")
    design = np.column_stack([z, np.ones_like(z)])
    (slope, intercept), *_ = np.linalg.lstsq(design, 1.0 / q, rcond=None)
    a = 1.0 / slope
    b = intercept * a
    rms = float(np.sqrt(np.mean((q - a / (z + b)) ** 2)))
    return float(a), float(b), rms
