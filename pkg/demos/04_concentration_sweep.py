"""Amplitude and projection-noise SNR across NV concentration (reduced cluster counts).

Takes several minutes. Compare CPMG with both SHIELD variants.
"""

from pathlib import Path

from nvshield.experiments import sweep, write_sweep_csv
from nvshield.sequences import BlockKind, ProtocolParams

ppm_list = [0.1, 0.4, 1.0, 2.5, 5.0]
Q = {"cpmg": 40, "shield-aabb": 20, "shield-aaaa": 20}
protocols = [ProtocolParams(kind) for kind in BlockKind]

result = sweep(protocols, ppm_list, Q, seed=0)

print(f"{'ppm':>5} {'protocol':>12} {'amplitude':>11} {'stderr':>9} {'SNR':>7}")
for row in result.rows:
    print(f"{row.ppm:5.1f} {row.protocol:>12} {row.amplitude:11.3e} {row.amp_stderr:9.1e} "
          f"{row.snr:7.1f}")

for ppm in ppm_list:
    cpmg = result.get("cpmg", ppm).snr
    ratios = [result.get(k, ppm).snr / cpmg for k in ("shield-aabb", "shield-aaaa")]
    print(f"SNR gain over CPMG at {ppm} ppm: " + " / ".join(f"{r:.1f}" for r in ratios))

write_sweep_csv(Path(__file__).with_name("sweep.csv"), result)
