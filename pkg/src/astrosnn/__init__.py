"""Astrocyte-inspired self-repair for spiking neural networks.

Subpackages cover the biophysical two-neuron/one-astrocyte model
(:mod:`astrosnn.biophysics`), the analytical repair macro-model
(:mod:`astrosnn.macro`), the memristive fault substrate
(:mod:`astrosnn.hardware`), the unsupervised STDP network
(:mod:`astrosnn.network`), the local self-repair rule
(:mod:`astrosnn.repair`), and the experiment harness
(:mod:`astrosnn.harness`).
"""

from .biophysics import (AstrocyteParams, AstrocyteState, BioSimConfig,
                         run_two_neuron_experiment)
from .hardware import DriftSpec, FaultSpec, apply_drift, inject_stuck_at
from .macro import (RepairMeasurement, fault_severity, fit_q_z,
                    repair_ratio, repair_ratio_fit)
from .network import NetworkState, SnnConfig
from .repair import RepairContext, retrain, snapshot_baseline

__version__ = "0.1.0"
