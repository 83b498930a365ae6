"""Single NV: simulated readout versus the small-signal formulas."""

import numpy as np

from nvshield.analytic import cpmg_response, shield_response
from nvshield.engine import SignalSpec, run_batch
from nvshield.geometry import Cluster
from nvshield.sequences import BlockKind, ProtocolParams, PulseModel, axis_geometry, compile_protocol

# One isolated NV, no disorder, a 1 nT field locked to each sequence.
nv = Cluster.single()

for model in (PulseModel.INSTANTANEOUS, PulseModel.FINITE):
    print(f"\n{model.value} pulses")
    for kind in BlockKind:
        schedule = compile_protocol(ProtocolParams(kind, pulse_model=model))
        sim = run_batch(nv, schedule, np.zeros((1, 1)), [1e-9], SignalSpec())[0, 0]
        t_s = schedule.sensing_time
        if kind is BlockKind.CPMG:
            ref = cpmg_response(1e-9, t_s)
        else:
            ref = shield_response(1e-9, t_s, kind=kind)
        print(f"  {kind.value:12s} f1={schedule.first_harmonic / 1e3:7.2f} kHz "
              f"t_s={t_s * 1e6:6.3f} us  sim={sim:.5e}  formula={ref:.5e}")

# The SHIELD penalty is the reduction factor of each block geometry.
for kind in (BlockKind.SHIELD_AABB, BlockKind.SHIELD_AAAA):
    geo = axis_geometry(kind)
    print(f"{kind.value}: f_r={geo.f_r:.4f}, readout angle beta={np.degrees(geo.beta):.2f} deg")
