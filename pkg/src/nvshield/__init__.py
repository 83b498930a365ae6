"""Simulation of NV-ensemble AC magnetometry under CPMG and SHIELD decoupling.

Modules
-------
spin         Pauli operators and cluster Hamiltonians.
geometry     Lattice sampling of NV clusters and dipolar couplings.
sequences    CPMG and SHIELD schedules.
engine       Time propagation of clusters through schedules.
analytic     Closed-form small-signal predictions.
experiments  AERIS traces, ensemble averages, sweeps and SNR.
cli          Command-line front end.
"""

__version__ = "0.1.0"

from .analytic import cpmg_response, shield_response, two_nv_cpmg_factor
from .engine import NoiseSpec, SignalSpec, run_schedule
from .experiments import AerisParams, ensemble_average, fit_chemical_shift, sweep
from .geometry import Cluster, LatticeConfig, SamplingSpec, sample_cluster
from .sequences import BlockKind, ProtocolParams, PulseModel, compile_protocol
