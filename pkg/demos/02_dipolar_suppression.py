"""Two coupled NVs: CPMG loses signal to the flip-flop interaction, SHIELD does not."""

import numpy as np

from nvshield.analytic import two_nv_cpmg_factor
from nvshield.constants import TWO_PI
from nvshield.engine import SignalSpec, run_batch
from nvshield.geometry import Cluster
from nvshield.sequences import BlockKind, ProtocolParams, PulseModel, compile_protocol

schedules = {kind: compile_protocol(ProtocolParams(kind, pulse_model=PulseModel.INSTANTANEOUS))
             for kind in BlockKind}
single = {kind: run_batch(Cluster.single(), s, np.zeros((1, 1)), [1e-9], SignalSpec())[0, 0]
          for kind, s in schedules.items()}

print(" d/2pi (MHz)   CPMG   cos(3dt/4)   AABB    AAAA   (signal per NV / isolated NV)")
for d_mhz in (0.0, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0):
    d = TWO_PI * d_mhz * 1e6
    pair = Cluster.from_couplings([[0.0, d], [d, 0.0]])
    row = {}
    for kind, s in schedules.items():
        row[kind] = run_batch(pair, s, np.zeros((2, 1)), [1e-9], SignalSpec()).sum() / (2 * single[kind])
    oracle = two_nv_cpmg_factor(d, schedules[BlockKind.CPMG].sensing_time)
    print(f"  {d_mhz:6.2f}     {row[BlockKind.CPMG]:+.3f}   {oracle:+.3f}     "
          f"{row[BlockKind.SHIELD_AABB]:+.3f}  {row[BlockKind.SHIELD_AAAA]:+.3f}")
