"""Two-neuron / one-astrocyte biophysical model of synaptic self-repair.

Two identical LIF neurons (N1, N2) each receive Poisson spike trains through
a bank of stochastic synapses; a shared astrocyte ensheathes all of them.
Every post-synaptic spike releases 2-AG, which (a) directly depresses the
neuron's own synapses (DSE) and (b) drives IP3 production inside the
astrocyte, whose Li-Rinzel calcium dynamics gate pulsed glutamate release
and hence a slow global potentiation (e-SP). Transmission probabilities
follow PR(t) = PR(0) * (1 + (DSE(t) + eSP(t)) / 100).

At the fault time a subset of N2's synapses is disabled (PR stuck at 0) and
optionally the survivors are scaled by PCM drift ratios; the DSE/e-SP
competition then drives the surviving PRs up until N2's firing rate is
restored, which is the self-repair behaviour the macro model summarizes.

All rate constants that the repair literature leaves open live in
:class:`AstrocyteParams`; see that docstring for how they were calibrated.
"""

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

try:
    import numba
except ImportError:          # pragma: no cover - numba is normally present
    numba = None

from .hardware import DriftSpec, sample_drift_ratios


class NumericalInstabilityError(RuntimeError):
    """Raised when the calcium integration produces non-finite values,
    which signals that the time step is too large for the chosen
    parameters."""


@dataclass
class AstrocyteParams:
    """Calibrated parameter block for the astrocyte/neuron signalling chain.

    The repair model fixes only the *structure* of the dynamics; the rate
    constants below are calibration choices, selected so that

    * baseline operation (10 synapses/neuron, 10 Hz Poisson input, mean
      initial PR 0.3) fires each neuron at ~6.5 Hz and produces sustained
      calcium oscillations with a ~12 s period (inside the 5-30 s target);
    * pre-fault |DSE| and eSP are the same order of magnitude and nearly
      cancel, so PR hovers near PR(0);
    * the closed-loop gain of the DSE/e-SP competition is high enough that
      the measured repair ratio tracks q ~ 1/z (hyperbolic fit lands at
      a ~= 1.1, b ~= 0.1 over disable fractions 0-0.6).

    Every value can be overridden through :class:`BioSimConfig`.
    """

    # 2-AG release/decay and its linear mapping to DSE (percent scale).
    tau_ag: float = 40.0        # s
    r_ag: float = 1.0           # quantity per post-synaptic spike
    k_ag: float = 3.7           # percent DSE per unit 2-AG

    # Li-Rinzel calcium subsystem (time unit: seconds).
    ip3_star: float = 0.16      # baseline IP3 relaxation target
    tau_ip3: float = 7.0        # s, IP3 relaxation time constant
    v_ip3: float = 0.0506       # max IP3 production rate from 2-AG binding
    k_ip3: float = 100.0        # 2-AG half-saturation of IP3 production
    a2: float = 0.2             # IP3R inactivation rate
    r_c: float = 6.0            # channel release rate
    r_l: float = 0.11           # ER leak rate
    c0: float = 2.0             # total free calcium
    c1: float = 0.185           # ER/cytosol volume ratio
    v_er: float = 0.8           # SERCA pump rate
    k_er: float = 0.1           # SERCA pump activation
    d1: float = 0.13
    d2: float = 1.049
    d3: float = 0.9434
    d5: float = 0.08234
    ca_threshold: float = 0.3   # glutamate release threshold on Ca2+

    # Glutamate exocytosis and e-SP (percent scale).
    tau_glu: float = 8.0        # s
    r_glu: float = 1.0          # quantity per threshold crossing
    tau_esp: float = 80.0       # s
    m_esp: float = 1430.0       # percent e-SP per unit glutamate

    # Nominal operating point used for warm-start initialization.
    f_nominal: float = 6.5      # Hz, baseline post-synaptic firing rate
    ca_period_nominal: float = 12.0  # s, calcium oscillation period


@dataclass(slots=True)
class AstrocyteState:
    """Continuous variables of the signalling pathway.

    ``h`` is the IP3-receptor gating variable of the two-variable Li-Rinzel
    reduction; it is not part of the published macro description but is
    required to integrate the calcium dynamics. ``dse_n1/dse_n2`` are kept
    equal to ``-ag * k_ag`` after every 2-AG step.
    """

    ag_n1: float = 0.0
    ag_n2: float = 0.0
    ip3: float = 0.16
    ca: float = 0.071006
    h: float = 0.7791
    glu: float = 0.0
    esp: float = 0.0
    dse_n1: float = 0.0
    dse_n2: float = 0.0


def compute_dse(ag, k_ag=AstrocyteParams.k_ag):
    """DSE = -AG * K_AG; always <= 0 for ag >= 0."""
    if ag < 0:
        raise ValueError(f"ag must be >= 0, got {ag}")
    return -ag * k_ag


def step_ag(state, post_spiked, dt_ms, params=None):
    """Advance both neurons' 2-AG one step: exact exponential decay plus a
    fixed release on each post-synaptic spike. Updates DSE in lockstep.

    ``post_spiked`` is a (n1, n2) pair of booleans.
    """
    p = params or _DEFAULT_PARAMS
    if dt_ms <= 0:
        raise ValueError("dt must be > 0")
    d = math.exp(-dt_ms * 1e-3 / p.tau_ag)
    sp1, sp2 = post_spiked
    state.ag_n1 = state.ag_n1 * d + (p.r_ag if sp1 else 0.0)
    state.ag_n2 = state.ag_n2 * d + (p.r_ag if sp2 else 0.0)
    state.dse_n1 = -state.ag_n1 * p.k_ag
    state.dse_n2 = -state.ag_n2 * p.k_ag
    return state


def _lr_derivs(ca, h, ip3, ip3_production, p):
    """Time derivatives of (Ca2+, h, IP3) in the Li-Rinzel reduction."""
    q2 = p.d2 * (ip3 + p.d1) / (ip3 + p.d3)
    m_inf = ip3 / (ip3 + p.d1)
    n_inf = ca / (ca + p.d5)
    gate = (m_inf * n_inf * h) ** 3
    j_chan = p.r_c * gate * (p.c0 - (1.0 + p.c1) * ca)
    j_leak = p.r_l * (p.c0 - (1.0 + p.c1) * ca)
    j_pump = p.v_er * ca * ca / (p.k_er * p.k_er + ca * ca)
    h_inf = q2 / (q2 + ca)
    tau_h = 1.0 / (p.a2 * (q2 + ca))
    d_ca = j_chan + j_leak - j_pump
    d_h = (h_inf - h) / tau_h
    d_ip3 = (p.ip3_star - ip3) / p.tau_ip3 + ip3_production
    return d_ca, d_h, d_ip3


def step_calcium(state, dt_ms, params=None):
    """One explicit midpoint (RK2) step of the IP3/Ca2+/h subsystem.

    IP3 production is a saturating function of the total 2-AG,
    v_ip3 * AG / (AG + k_ip3), so the oscillator stays inside its stable
    window while one neuron's activity transiently collapses after a fault.
    Returns (state, threshold_crossed) where the flag is True exactly when
    Ca2+ crossed the release threshold from below during this step.
    """
    p = params or _DEFAULT_PARAMS
    dt = dt_ms * 1e-3
    ag_total = state.ag_n1 + state.ag_n2
    prod = p.v_ip3 * ag_total / (ag_total + p.k_ip3) if ag_total > 0 else 0.0
    ca0, h0, ip30 = state.ca, state.h, state.ip3
    d1_ = _lr_derivs(ca0, h0, ip30, prod, p)
    half = 0.5 * dt
    d2_ = _lr_derivs(ca0 + half * d1_[0], h0 + half * d1_[1],
                     ip30 + half * d1_[2], prod, p)
    ca1 = ca0 + dt * d2_[0]
    h1 = h0 + dt * d2_[1]
    ip31 = ip30 + dt * d2_[2]
    if not (math.isfinite(ca1) and math.isfinite(h1) and math.isfinite(ip31)):
        raise NumericalInstabilityError(
            "calcium integration diverged; reduce dt or adjust parameters")
    crossed = ca0 < p.ca_threshold <= ca1
    state.ca, state.h, state.ip3 = ca1, h1, ip31
    return state, crossed


def step_glutamate(state, threshold_crossed, dt_ms, params=None):
    """Glutamate: exact exponential decay plus a fixed release on each
    calcium threshold crossing."""
    p = params or _DEFAULT_PARAMS
    if dt_ms <= 0:
        raise ValueError("dt must be > 0")
    d = math.exp(-dt_ms * 1e-3 / p.tau_glu)
    state.glu = state.glu * d + (p.r_glu if threshold_crossed else 0.0)
    return state


def step_esp(state, dt_ms, params=None):
    """One step of tau_esp * d(eSP)/dt = -eSP + m_esp * Glu, integrated
    exactly under a zero-order hold of Glu over the step. The fixed point
    under constant Glu is eSP = m_esp * Glu."""
    p = params or _DEFAULT_PARAMS
    if dt_ms <= 0:
        raise ValueError("dt must be > 0")
    d = math.exp(-dt_ms * 1e-3 / p.tau_esp)
    state.esp = state.esp * d + p.m_esp * state.glu * (1.0 - d)
    return state


def compute_pr(pr0, dse, esp):
    """PR(t) = clip(PR(0) * (1 + (DSE + eSP)/100), 0, 1)."""
    if not 0.0 <= pr0 <= 1.0:
        raise ValueError(f"pr0 must be in [0, 1], got {pr0}")
    return min(1.0, max(0.0, pr0 * (1.0 + (dse + esp) / 100.0)))


@dataclass(slots=True)
class BioLifNeuron:
    """Leaky integrate-and-fire neuron of the two-neuron model.

    The paper's LIF equation is integrated with an exact zero-order hold:
    v <- v_res + (v - v_res)*exp(-dt/tau_v) + I*R*(1 - exp(-dt/tau_v)).
    There is no refractory period here. The resting and reset potentials
    coincide (the table of SNN constants does not apply to this model);
    r_m converts pA to mV and is calibrated so that one transmitted input
    spike (6650 pA for 1 ms) depolarizes the membrane by ~5 mV.
    """

    v: float = -65.0
    tau_v: float = 100.0                 # ms
    v_res: float = -65.0                 # mV
    v_reset: float = -65.0               # mV
    v_th: float = -52.0                  # mV
    injected_charge_per_spike: float = 6650.0   # pA (for 1 ms)
    r_m: float = 0.0755644               # mV per pA of sustained current


def step_lif_bio(neuron, input_current_pa, dt_ms):
    """Integrate the membrane one step under a constant current (pA).

    Returns (neuron, spiked). On reaching threshold the neuron spikes and
    the potential resets.
    """
    if dt_ms <= 0:
        raise ValueError("dt must be > 0")
    d = math.exp(-dt_ms / neuron.tau_v)
    i_mv = input_current_pa * neuron.r_m
    neuron.v = neuron.v_res + (neuron.v - neuron.v_res) * d + i_mv * (1.0 - d)
    spiked = neuron.v >= neuron.v_th
    if spiked:
        neuron.v = neuron.v_reset
    return neuron, spiked


def poisson_train(rate_hz, duration_ms, dt_ms, seed):
    """Poisson spike train as independent Bernoulli(rate*dt) bins.

    Returns a boolean array of length round(duration/dt); deterministic for
    a given seed. Raises ValueError if rate*dt > 1 (binning invalid).
    """
    if rate_hz < 0:
        raise ValueError(f"rate must be >= 0, got {rate_hz}")
    p = rate_hz * dt_ms * 1e-3
    if p > 1.0:
        raise ValueError(f"rate*dt = {p} > 1; decrease dt or rate")
    n = int(round(duration_ms / dt_ms))
    rng = np.random.default_rng(seed)
    return rng.random(n) < p


@dataclass(slots=True)
class BioSynapse:
    """One stochastic synapse: initial and current transmission probability,
    fault flag, and its Poisson input rate."""

    pr0: float
    pr: float = None
    disabled: bool = False
    input_rate: float = 10.0   # spikes/s

    def __post_init__(self):
        if not 0.0 <= self.pr0 <= 1.0:
            raise ValueError(f"pr0 must be in [0, 1], got {self.pr0}")
        if self.pr is None:
            self.pr = self.pr0


@dataclass
class BioSimConfig:
    """Configuration of a two-neuron self-repair run.

    The fault applies to N2 only: ``disable_fraction`` of its synapses are
    picked uniformly without replacement and stuck at PR = 0 at t_fault;
    if ``drift`` is set, every surviving N2 synapse is additionally scaled
    by its own sampled drift ratio at the same instant. ``warm_start``
    initializes the slow astrocyte variables at their nominal operating
    point so measurement windows are free of the startup transient (the
    closed loop re-equilibrates within seconds either way).
    """

    duration_s: float = 400.0
    dt_ms: float = 1.0
    t_fault_s: float = 200.0
    n_synapses: int = 10
    seed: int = 0
    disable_fraction: float = 0.0
    drift: DriftSpec = None
    input_rate: float = 10.0           # spikes/s per synapse
    mean_pr0: float = 0.3
    pr0_halfwidth: float = 0.15
    warm_start: bool = True
    params: AstrocyteParams = field(default_factory=AstrocyteParams)
    record_traces: bool = True
    window_s: float = 50.0             # BF/AS measurement window length
    use_fast: bool = True              # compiled inner loop when available

    def __post_init__(self):
        if not (self.duration_s > self.t_fault_s > 0):
            raise ValueError("require duration > t_fault > 0")
        if self.dt_ms <= 0:
            raise ValueError("dt must be > 0")
        if not 0.0 <= self.disable_fraction <= 1.0:
            raise ValueError("disable_fraction must be in [0, 1]")
        if self.window_s > min(self.t_fault_s,
                               self.duration_s - self.t_fault_s):
            raise ValueError("window_s must fit before and after t_fault")


@dataclass
class PrTraceSet:
    """Per-ms traces of a two-neuron run.

    ``pr`` has shape (n_steps, 2, n_synapses) with neuron index 0 = N1,
    1 = N2; ``astro`` columns are (ag_n1, ag_n2, ip3, ca, glu, esp).
    ``clipped`` marks synapses whose unclipped PR left [0, 1] at least once
    during the run; ratio-invariance checks exclude them.
    """

    t_ms: np.ndarray
    pr: np.ndarray
    astro: np.ndarray
    pr0: np.ndarray
    disabled: np.ndarray
    clipped: np.ndarray
    drift_ratio: np.ndarray
    config: BioSimConfig


@dataclass
class RunSummary:
    """Windowed measurements of one run (no full traces kept)."""

    seed: int
    z: float
    q_per_synapse: np.ndarray      # N2 healthy synapses, NaN where disabled
    q: float                       # aggregate over healthy unclipped synapses
    pr_bf: np.ndarray              # window means, shape (2, S)
    pr_as: np.ndarray
    f_bf: np.ndarray               # per-neuron firing rate in BF window (Hz)
    f_as: np.ndarray
    clipped: np.ndarray
    disabled: np.ndarray
    pr0: np.ndarray


def _init_run(config):
    rng = np.random.default_rng(config.seed)
    s = config.n_synapses
    lo = config.mean_pr0 - config.pr0_halfwidth
    hi = config.mean_pr0 + config.pr0_halfwidth
    pr0 = np.clip(rng.uniform(lo, hi, (2, s)), 0.0, 1.0)
    disabled = np.zeros((2, s), dtype=bool)
    n_disable = int(round(config.disable_fraction * s))
    if n_disable:
        disabled[1, rng.choice(s, n_disable, replace=False)] = True
    drift_ratio = np.ones((2, s))
    if config.drift is not None:
        spec = replace(config.drift, seed=int(rng.integers(2**32)))
        drift_ratio[1] = sample_drift_ratios(s, spec)
    return rng, pr0, disabled, drift_ratio


def _warm_state(p):
    ag0 = p.r_ag * p.tau_ag * p.f_nominal
    glu0 = p.r_glu * p.tau_glu / p.ca_period_nominal
    return AstrocyteState(ag_n1=ag0, ag_n2=ag0, glu=glu0,
                          esp=p.m_esp * glu0,
                          dse_n1=-ag0 * p.k_ag, dse_n2=-ag0 * p.k_ag)


def _reference_chunk(k0, steps, sim):
    """Pure-Python chunk stepper built directly on the op functions.

    ``sim`` is the shared mutable context dict assembled by _simulate; the
    compiled kernel consumes the same pre-drawn random chunks, so the two
    paths see identical stochastic inputs.
    """
    cfg = sim["config"]
    p = cfg.params
    dt = cfg.dt_ms
    state, n1, n2 = sim["state"], sim["n1"], sim["n2"]
    charge = n1.injected_charge_per_spike
    r_arrival, r_transmit = sim["r_arrival"], sim["r_transmit"]
    for j in range(steps):
        k = k0 + j
        faulted = k >= sim["k_fault"]
        pr0_eff = sim["pr0_post"] if faulted else sim["pr0_pre"]
        u1 = 1.0 + (state.dse_n1 + state.esp) / 100.0
        u2 = 1.0 + (state.dse_n2 + state.esp) / 100.0
        raw = pr0_eff * np.array([[u1], [u2]])
        sim["clipped"] |= (raw > 1.0) | (raw < 0.0)
        pr = np.clip(raw, 0.0, 1.0)
        if faulted:
            pr[sim["disabled"]] = 0.0
        transmitted = (r_arrival[j] < sim["p_in"]) & (r_transmit[j] < pr)
        c1, c2 = transmitted.sum(axis=1)
        _, sp1 = step_lif_bio(n1, c1 * charge, dt)
        _, sp2 = step_lif_bio(n2, c2 * charge, dt)
        step_ag(state, (sp1, sp2), dt, p)
        _, crossed = step_calcium(state, dt, p)
        step_glutamate(state, crossed, dt, p)
        step_esp(state, dt, p)
        if sim["record"]:
            sim["pr_tr"][k] = pr
            sim["astro_tr"][k] = (state.ag_n1, state.ag_n2, state.ip3,
                                  state.ca, state.glu, state.esp)
        if sim["bf0"] <= k < sim["bf1"]:
            sim["acc_bf"] += pr
            sim["spikes_bf"] += (sp1, sp2)
        elif sim["as0"] <= k < sim["as1"]:
            sim["acc_as"] += pr
            sim["spikes_as"] += (sp1, sp2)


if numba is not None:

    @numba.njit(cache=True)
    def _fast_chunk(k0, steps, k_fault, bf0, bf1, as0, as1, p_in,
                    pr0_pre, pr0_post, disabled, r_arrival, r_transmit,
                    sv, lif_c, ac, acc_bf, acc_as, spikes_bf, spikes_as,
                    clipped, record, pr_tr, astro_tr):
        """Compiled twin of _reference_chunk.

        sv = [v1, v2, ag1, ag2, ip3, ca, h, glu, esp] (mutated in place);
        lif_c = [d_v, v_res, v_reset, v_th, gain_mv_per_spike];
        ac = astro constants, see _astro_const().
        """
        n_syn = pr0_pre.shape[1]
        (d_ag, r_ag, k_ag, dt_s, ip3_star, tau_ip3, v_ip3, k_ip3, a2,
         r_c, r_l, c0, c1, v_er, k_er, d1, d2, d3, d5, ca_thr, d_glu,
         r_glu, d_esp, m_esp) = ac
        d_v, v_res, v_reset, v_th, gain = lif_c
        for j in range(steps):
            k = k0 + j
            faulted = k >= k_fault
            pr0_eff = pr0_post if faulted else pr0_pre
            u1 = 1.0 + (-sv[2] * k_ag + sv[8]) / 100.0
            u2 = 1.0 + (-sv[3] * k_ag + sv[8]) / 100.0
            in_window = 1 if bf0 <= k < bf1 else (2 if as0 <= k < as1 else 0)
            c1_cnt = 0
            c2_cnt = 0
            for n in range(2):
                u = u1 if n == 0 else u2
                for s in range(n_syn):
                    raw = pr0_eff[n, s] * u
                    if raw > 1.0 or raw < 0.0:
                        clipped[n, s] = True
                    pr = min(1.0, max(0.0, raw))
                    if faulted and disabled[n, s]:
                        pr = 0.0
                    if (r_arrival[j, n, s] < p_in
                            and r_transmit[j, n, s] < pr):
                        if n == 0:
                            c1_cnt += 1
                        else:
                            c2_cnt += 1
                    if record:
                        pr_tr[k, n, s] = pr
                    if in_window == 1:
                        acc_bf[n, s] += pr
                    elif in_window == 2:
                        acc_as[n, s] += pr
            sp1 = False
            sp2 = False
            for n in range(2):
                cnt = c1_cnt if n == 0 else c2_cnt
                v = v_res + (sv[n] - v_res) * d_v + cnt * gain
                sp = v >= v_th
                if sp:
                    v = v_reset
                sv[n] = v
                if n == 0:
                    sp1 = sp
                else:
                    sp2 = sp
            sv[2] = sv[2] * d_ag + (r_ag if sp1 else 0.0)
            sv[3] = sv[3] * d_ag + (r_ag if sp2 else 0.0)
            ag_total = sv[2] + sv[3]
            prod = v_ip3 * ag_total / (ag_total + k_ip3) \
                if ag_total > 0 else 0.0
            ca0 = sv[5]
            h0 = sv[6]
            ip30 = sv[4]
            ca_m, h_m, ip3_m = ca0, h0, ip30
            d_ca = 0.0
            d_h = 0.0
            d_ip3 = 0.0
            for stage in range(2):
                q2 = d2 * (ip3_m + d1) / (ip3_m + d3)
                m_inf = ip3_m / (ip3_m + d1)
                n_inf = ca_m / (ca_m + d5)
                gate = (m_inf * n_inf * h_m) ** 3
                j_chan = r_c * gate * (c0 - (1.0 + c1) * ca_m)
                j_leak = r_l * (c0 - (1.0 + c1) * ca_m)
                j_pump = v_er * ca_m * ca_m / (k_er * k_er + ca_m * ca_m)
                h_inf = q2 / (q2 + ca_m)
                tau_h = 1.0 / (a2 * (q2 + ca_m))
                d_ca = j_chan + j_leak - j_pump
                d_h = (h_inf - h_m) / tau_h
                d_ip3 = (ip3_star - ip3_m) / tau_ip3 + prod
                if stage == 0:
                    half = 0.5 * dt_s
                    ca_m = ca0 + half * d_ca
                    h_m = h0 + half * d_h
                    ip3_m = ip30 + half * d_ip3
            ca1 = ca0 + dt_s * d_ca
            h1 = h0 + dt_s * d_h
            ip31 = ip30 + dt_s * d_ip3
            if not (math.isfinite(ca1) and math.isfinite(h1)
                    and math.isfinite(ip31)):
                return -1
            crossed = ca0 < ca_thr <= ca1
            sv[5] = ca1
            sv[6] = h1
            sv[4] = ip31
            sv[7] = sv[7] * d_glu + (r_glu if crossed else 0.0)
            sv[8] = sv[8] * d_esp + m_esp * sv[7] * (1.0 - d_esp)
            if record:
                astro_tr[k, 0] = sv[2]
                astro_tr[k, 1] = sv[3]
                astro_tr[k, 2] = sv[4]
                astro_tr[k, 3] = sv[5]
                astro_tr[k, 4] = sv[7]
                astro_tr[k, 5] = sv[8]
            if in_window == 1:
                spikes_bf[0] += sp1
                spikes_bf[1] += sp2
            elif in_window == 2:
                spikes_as[0] += sp1
                spikes_as[1] += sp2
        return 0


def _astro_const(p, dt_ms):
    dt_s = dt_ms * 1e-3
    return np.array([
        math.exp(-dt_s / p.tau_ag), p.r_ag, p.k_ag, dt_s, p.ip3_star,
        p.tau_ip3, p.v_ip3, p.k_ip3, p.a2, p.r_c, p.r_l, p.c0, p.c1,
        p.v_er, p.k_er, p.d1, p.d2, p.d3, p.d5, p.ca_threshold,
        math.exp(-dt_s / p.tau_glu), p.r_glu,
        math.exp(-dt_s / p.tau_esp), p.m_esp,
    ])


def _simulate(config):
    """Run the full two-neuron experiment; returns (PrTraceSet | None,
    RunSummary)."""
    p = config.params
    dt = config.dt_ms
    n_steps = int(round(config.duration_s * 1000.0 / dt))
    k_fault = int(round(config.t_fault_s * 1000.0 / dt))
    w_steps = int(round(config.window_s * 1000.0 / dt))
    bf0, bf1 = k_fault - w_steps, k_fault
    as0, as1 = n_steps - w_steps, n_steps

    rng, pr0_init, disabled, drift_ratio = _init_run(config)
    # pr0_post is the post-fault "initial" PR each survivor repairs from.
    pr0_pre = pr0_init.copy()
    pr0_post = pr0_init * drift_ratio

    state = _warm_state(p) if config.warm_start else AstrocyteState()
    n1 = BioLifNeuron()
    n2 = BioLifNeuron()

    p_in = config.input_rate * dt * 1e-3
    if p_in > 1.0:
        raise ValueError("input_rate * dt > 1; binning invalid")

    record = config.record_traces
    shape = (n_steps, 2, config.n_synapses) if record else (1, 1, 1)
    pr_tr = np.zeros(shape)
    astro_tr = np.zeros((n_steps if record else 1, 6))
    sim = dict(
        config=config, state=state, n1=n1, n2=n2, p_in=p_in,
        k_fault=k_fault, bf0=bf0, bf1=bf1, as0=as0, as1=as1,
        pr0_pre=pr0_pre, pr0_post=pr0_post, disabled=disabled,
        record=record, pr_tr=pr_tr, astro_tr=astro_tr,
        acc_bf=np.zeros((2, config.n_synapses)),
        acc_as=np.zeros((2, config.n_synapses)),
        spikes_bf=np.zeros(2), spikes_as=np.zeros(2),
        clipped=np.zeros((2, config.n_synapses), dtype=bool),
    )
    fast = config.use_fast and numba is not None
    if fast:
        gain = n1.injected_charge_per_spike * n1.r_m \
            * (1.0 - math.exp(-dt / n1.tau_v))
        lif_c = np.array([math.exp(-dt / n1.tau_v), n1.v_res, n1.v_reset,
                          n1.v_th, gain])
        ac = _astro_const(p, dt)
        sv = np.array([n1.v, n2.v, state.ag_n1, state.ag_n2, state.ip3,
                       state.ca, state.h, state.glu, state.esp])

    chunk = 50000
    for k0 in range(0, n_steps, chunk):
        m = min(chunk, n_steps - k0)
        r_arrival = rng.random((m, 2, config.n_synapses))
        r_transmit = rng.random((m, 2, config.n_synapses))
        if fast:
            status = _fast_chunk(
                k0, m, k_fault, bf0, bf1, as0, as1, p_in, pr0_pre,
                pr0_post, disabled, r_arrival, r_transmit, sv, lif_c, ac,
                sim["acc_bf"], sim["acc_as"], sim["spikes_bf"],
                sim["spikes_as"], sim["clipped"], record, pr_tr, astro_tr)
            if status != 0:
                raise NumericalInstabilityError(
                    "calcium integration diverged; reduce dt or adjust "
                    "parameters")
        else:
            sim["r_arrival"] = r_arrival
            sim["r_transmit"] = r_transmit
            _reference_chunk(k0, m, sim)
    if fast:
        n1.v, n2.v = sv[0], sv[1]
        state.ag_n1, state.ag_n2 = sv[2], sv[3]
        state.ip3, state.ca, state.h = sv[4], sv[5], sv[6]
        state.glu, state.esp = sv[7], sv[8]
        state.dse_n1 = -state.ag_n1 * p.k_ag
        state.dse_n2 = -state.ag_n2 * p.k_ag

    acc_bf, acc_as = sim["acc_bf"], sim["acc_as"]
    spikes_bf, spikes_as = sim["spikes_bf"], sim["spikes_as"]
    clipped = sim["clipped"]
    pr_bf = acc_bf / (bf1 - bf0)
    pr_as = acc_as / (as1 - as0)
    win_s = config.window_s
    healthy = ~disabled[1]
    q_syn = np.full(config.n_synapses, np.nan)
    q_syn[healthy] = pr_as[1, healthy] / pr_bf[1, healthy]
    z = float(pr0_post[1, healthy].sum() / pr0_pre[1].sum())
    usable = healthy & ~clipped[1]
    if usable.any():
        q_agg = float(q_syn[usable].mean())
    elif healthy.any():
        q_agg = float(pr_as[1, healthy].sum() / pr_bf[1, healthy].sum())
    else:
        q_agg = float("nan")
    summary = RunSummary(
        seed=config.seed, z=z, q_per_synapse=q_syn, q=q_agg,
        pr_bf=pr_bf, pr_as=pr_as,
        f_bf=spikes_bf / win_s, f_as=spikes_as / win_s,
        clipped=clipped, disabled=disabled, pr0=pr0_init)
    if not record:
        return None, summary
    trace = PrTraceSet(
        t_ms=np.arange(n_steps) * dt, pr=pr_tr, astro=astro_tr,
        pr0=pr0_init, disabled=disabled, clipped=clipped,
        drift_ratio=drift_ratio, config=config)
    return trace, summary


def run_two_neuron_experiment(config):
    """Simulate the two-neuron/one-astrocyte system and return full
    per-ms PR and astrocyte traces."""
    if not config.record_traces:
        config = replace(config, record_traces=True)
    trace, _ = _simulate(config)
    return trace


def summarize_two_neuron_run(config):
    """Run without keeping traces; returns windowed RunSummary only."""
    _, summary = _simulate(replace(config, record_traces=False))
    return summary


def _survey_worker(config):
    return summarize_two_neuron_run(config)


def run_repair_survey(base_config, seeds, disable_fractions, n_jobs=1):
    """Independent randomized runs for q-z statistics.

    Each run gets its own seed and disable fraction; runs are independent
    and may execute in parallel. Results are merged by sorting on seed so
    aggregation is order-independent.
    """
    if len(seeds) != len(disable_fractions):
        raise ValueError("seeds and disable_fractions must align")
    configs = [replace(base_config, seed=int(s), disable_fraction=float(f),
                       record_traces=False)
               for s, f in zip(seeds, disable_fractions)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            results = list(ex.map(_survey_worker, configs))
    else:
        results = [_survey_worker(c) for c in configs]
    return sorted(results, key=lambda r: r.seed)


def export_pr_traces(trace, path, stride=1):
    """Write the PR trace CSV: one row per (ms, neuron, synapse), columns
    t_ms, neuron_id, synapse_id, pr."""
    n_steps, n_neurons, n_syn = trace.pr.shape
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t_ms", "neuron_id", "synapse_id", "pr"])
        for k in range(0, n_steps, stride):
            t = trace.t_ms[k]
            for nid in range(n_neurons):
                row_pr = trace.pr[k, nid]
                for sid in range(n_syn):
                    w.writerow([f"{t:g}", nid, sid, repr(row_pr[sid])])


def load_pr_traces(path):
    """Read a PR trace CSV back into (t_ms, pr) arrays.

    ``pr`` has shape (n_steps, n_neurons, n_synapses); the row order is the
    one :func:`export_pr_traces` writes.
    """
    t_vals = []
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header[:4] != ["t_ms", "neuron_id", "synapse_id", "pr"]:
            raise ValueError(f"{path}: not a PR trace CSV")
        for t, nid, sid, pr in reader:
            t_vals.append(float(t))
            rows.append((int(nid), int(sid), float(pr)))
    if not rows:
        raise ValueError(f"{path}: empty trace")
    n_neurons = max(r[0] for r in rows) + 1
    n_syn = max(r[1] for r in rows) + 1
    per_step = n_neurons * n_syn
    n_steps = len(rows) // per_step
    pr = np.array([r[2] for r in rows]).reshape(n_steps, n_neurons, n_syn)
    t_ms = np.array(t_vals[::per_step])
    return t_ms, pr


def export_astro_traces(trace, path, stride=1):
    """Write the astrocyte-variable CSV: columns t_ms, ag_n1, ag_n2, ip3,
    ca, glu, esp."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t_ms", "ag_n1", "ag_n2", "ip3", "ca", "glu", "esp"])
        for k in range(0, trace.astro.shape[0], stride):
            w.writerow([f"{trace.t_ms[k]:g}"]
                       + [repr(x) for x in trace.astro[k]])


_DEFAULT_PARAMS = AstrocyteParams()
