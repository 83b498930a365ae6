"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line (collected again in the
pytest terminal summary) before asserting. Seeds are fixed in advance.
"""

import numpy as np
import pytest

from nvshield import analytic
from nvshield.constants import GAMMA_E, TWO_PI
from nvshield.engine import (NoiseSpec, SignalSpec, evolve_batch, evolve_density, purity_check,
                             run_batch, site_expectations)
from nvshield.experiments import (ensemble_average, fit_chemical_shift, large_cluster_mode,
                                  run_clusters, sweep)
from nvshield.geometry import Cluster, SamplingSpec, draw_rng, iter_clusters, max_coupling_stats
from nvshield.sequences import (BlockKind, ProtocolParams, PulseModel, PulseSegment, Schedule,
                                axis_geometry, compile_protocol)

AABB, AAAA, CPMG = BlockKind.SHIELD_AABB, BlockKind.SHIELD_AAAA, BlockKind.CPMG
SWEEP_PPM = (0.1, 0.4, 1.0, 2.5, 5.0)
CI_Q = {"cpmg": 40, "shield-aabb": 20, "shield-aaaa": 20}
SEED = 0


def pair(d_hz):
    d = TWO_PI * d_hz
    return Cluster.from_couplings([[0.0, d], [d, 0.0]])


def test_c01_reduction_factors(report):
    fr_aabb = axis_geometry(AABB).f_r
    fr_aaaa = axis_geometry(AAAA).f_r
    ok = abs(fr_aabb - 0.4292) < 5e-4 and abs(fr_aaaa - 0.5774) < 5e-4
    report(1, "reduction factors", ok, f"f_r(AABB)={fr_aabb:.5f}, f_r(AAAA)={fr_aaaa:.5f}")
    assert ok


def test_c02_timing(report):
    inst = compile_protocol(ProtocolParams(AABB, pulse_model=PulseModel.INSTANTANEOUS))
    finite = compile_protocol(ProtocolParams(AABB))
    f1 = inst.first_harmonic
    ok = abs(f1 - 95.68e3) < 0.1e3
    for s in (inst, finite):
        ok &= abs(s.sensing_time - 21e-6) < 0.03 * 21e-6
    report(2, "timing", ok, f"f1={f1 / 1e3:.3f} kHz, t_s={inst.sensing_time * 1e6:.3f} us "
                            f"(instantaneous), {finite.sensing_time * 1e6:.3f} us (finite)")
    assert ok


def test_c03_two_nv_cpmg(report):
    schedule = compile_protocol(ProtocolParams(CPMG, pulse_model=PulseModel.INSTANTANEOUS))
    t_s = schedule.sensing_time
    single = run_batch(Cluster.single(), schedule, np.zeros((1, 1)), [1e-9], SignalSpec())[0, 0]
    worst = 0.0
    parts = []
    for d_hz in (0.1e6, 0.25e6, 0.5e6, 1.0e6):
        sim = run_batch(pair(d_hz), schedule, np.zeros((2, 1)), [1e-9], SignalSpec()).sum() / (2 * single)
        ref = analytic.two_nv_cpmg_factor(TWO_PI * d_hz, t_s)
        worst = max(worst, abs(sim - ref))
        parts.append(f"{d_hz / 1e6:g}MHz:{sim:+.4f}/{ref:+.4f}")
    ok = worst < 0.05
    report(3, "two-NV CPMG factor", ok, f"max |sim-oracle|={worst:.2e}; " + ", ".join(parts))
    assert ok


def test_c04_small_signal_law(report):
    schedule = compile_protocol(ProtocolParams(AABB))
    fields = np.linspace(0.2e-9, 2e-9, 10)
    resp = run_batch(Cluster.single(), schedule, np.zeros((1, fields.size)), fields,
                     SignalSpec())[0]
    slope, intercept = np.polyfit(fields, resp, 1)
    fit = slope * fields + intercept
    r2 = 1 - np.sum((resp - fit) ** 2) / np.sum((resp - resp.mean()) ** 2)
    predicted = 2 * GAMMA_E * schedule.sensing_time * axis_geometry(AABB).f_r / np.pi
    rel = abs(slope / predicted - 1)
    ok = r2 > 0.9999 and rel < 0.10
    report(4, "small-signal law", ok, f"R^2={r2:.8f}, slope={slope:.4e}/T vs {predicted:.4e}/T "
                                      f"({rel:.2e} rel)")
    assert ok


def test_c05_disorder_refocusing(report):
    # disorder only, ideal pulses: isolates refocusing of xi by the pi pulses
    schedule = compile_protocol(ProtocolParams(AABB, pulse_model=PulseModel.INSTANTANEOUS))
    noise = NoiseSpec(rabi_error=0.0)
    xi = noise.draw(draw_rng(SEED, 0, 5), 1, 50)
    readout = run_batch(Cluster.single(), schedule, xi, np.zeros(50), SignalSpec(amplitude=0.0))[0]
    mean = abs(readout.mean())
    # same draws with finite pulses, reported for context only
    finite = run_batch(Cluster.single(), compile_protocol(ProtocolParams(AABB)), xi, np.zeros(50),
                       SignalSpec(amplitude=0.0))[0]
    ok = mean < 1e-3
    report(5, "disorder refocusing", ok, f"|mean readout|={mean:.2e} over 50 draws "
                                         f"(finite-pulse model: {abs(finite.mean()):.2e})")
    assert ok


def _free_evolution_x(cluster, times):
    prep = compile_protocol(ProtocolParams(AABB)).segments[0]
    values = []
    for t in times:
        sched = Schedule((prep, PulseSegment(t, label="free")), CPMG, first_harmonic=1e5,
                         signal_origin=0.0, window=(prep.duration, prep.duration + t))
        psi = evolve_batch(cluster, sched, np.zeros((2, 1)), [0.0], SignalSpec(amplitude=0.0))
        values.append(site_expectations(psi, "x")[:, 0].mean())
    return np.array(values)


def test_c06_dipolar_suppression(report):
    cluster = pair(1e6)
    parts = []
    ok = True
    for kind in (AABB, AAAA):
        schedule = compile_protocol(ProtocolParams(kind)).without_readout()
        psi = evolve_batch(cluster, schedule, np.zeros((2, 1)), [0.0], SignalSpec(amplitude=0.0))
        sx = site_expectations(psi, "x")[:, 0]
        ok &= bool(np.all(sx >= 0.9))
        parts.append(f"{kind.value} <sx>={sx.min():.4f}")
    t_s = compile_protocol(ProtocolParams(AABB)).sensing_time
    free = _free_evolution_x(cluster, np.linspace(0, t_s, 61)[1:])
    ok &= bool(free.min() < 0.9)
    parts.append(f"free evolution min <sx>={free.min():.4f}")
    report(6, "dipolar suppression", ok, ", ".join(parts))
    assert ok


def test_c07_max_coupling_5ppm(report):
    stats = max_coupling_stats(5.0, draws=100_000, seed=SEED)
    mean = stats["mean_max_d"]
    ok = abs(mean / 2.5e6 - 1) <= 0.25 and stats["accepted"] >= 2000
    report(7, "max coupling at 5 ppm", ok,
           f"mean max|d|/2pi={mean / 1e6:.3f} +- {stats['stderr'] / 1e6:.3f} MHz "
           f"over {stats['accepted']} accepted draws")
    assert ok


def test_c08_aeris_end_to_end(report):
    trace = ensemble_average(ProtocolParams(AABB), 1.0, 20, seed=SEED)
    fit = fit_chemical_shift(trace, 1e-4)
    ok = abs(fit.delta_hat - 200.0) <= 2.0
    report(8, "AERIS delta fit", ok, f"delta_hat={fit.delta_hat:.4f} Hz, "
                                     f"amplitude={fit.amplitude_hat:.3e}, Q={trace.Q_used}")
    assert ok


@pytest.fixture(scope="module")
def ci_sweep():
    protocols = [ProtocolParams(k) for k in (CPMG, AABB, AAAA)]
    return sweep(protocols, SWEEP_PPM, CI_Q, seed=SEED)


def test_c09_concentration_trends(report, ci_sweep):
    cpmg = [ci_sweep.get("cpmg", p) for p in SWEEP_PPM]
    amps = [r.amplitude for r in cpmg[1:]]
    trend_i = all(a > b for a, b in zip(amps, amps[1:]))
    drops = {k: 1 - ci_sweep.get(k, 5.0).amplitude / ci_sweep.get(k, 0.1).amplitude
             for k in ("shield-aabb", "shield-aaaa")}
    trend_ii = all(d < 0.25 for d in drops.values())
    ratios = {k: ci_sweep.get(k, 5.0).snr / ci_sweep.get("cpmg", 5.0).snr
              for k in ("shield-aabb", "shield-aaaa")}
    trend_iii = all(3 <= r <= 6 for r in ratios.values())
    snr_04 = ci_sweep.get("cpmg", 0.4).snr
    trend_iv = snr_04 > ci_sweep.get("cpmg", 2.5).snr and snr_04 > ci_sweep.get("cpmg", 5.0).snr
    ok = trend_i and trend_ii and trend_iii and trend_iv
    detail = (f"(i) {'ok' if trend_i else 'x'} CPMG amps 0.4..5 ppm="
              + "/".join(f"{a:.2e}" for a in amps)
              + f"; (ii) {'ok' if trend_ii else 'x'} SHIELD drops="
              + "/".join(f"{d:+.1%}" for d in drops.values())
              + f"; (iii) {'ok' if trend_iii else 'x'} SNR ratios at 5 ppm="
              + "/".join(f"{r:.2f}" for r in ratios.values())
              + f" (CPMG 5 ppm amp {cpmg[-1].amplitude:.2e} +- {cpmg[-1].amp_stderr:.1e})"
              + f"; (iv) {'ok' if trend_iv else 'x'} CPMG SNR 0.4/2.5/5 ppm="
              + "/".join(f"{ci_sweep.get('cpmg', p).snr:.1f}" for p in (0.4, 2.5, 5.0)))
    report(9, "concentration trends", ok, detail)
    assert ok


def test_c10_large_cluster_mode(report):
    pairs = large_cluster_mode([ProtocolParams(CPMG), ProtocolParams(AABB)], ppm=1.0, Q=CI_Q,
                               seed=SEED)
    small_s, large_s = pairs["shield-aabb"]
    small_c, large_c = pairs["cpmg"]
    shield_change = abs(large_s.amplitude / small_s.amplitude - 1)
    ok = shield_change < 0.10 and large_c.amplitude < small_c.amplitude
    report(10, "large-cluster mode", ok,
           f"SHIELD {small_s.amplitude:.3e} -> {large_s.amplitude:.3e} ({shield_change:.1%}); "
           f"CPMG {small_c.amplitude:.3e} -> {large_c.amplitude:.3e}")
    assert ok


def test_c11_numerical_hygiene(report):
    spec = SamplingSpec(ppm=1.0, rng_seed=SEED)
    cluster = next(c for c in iter_clusters(spec) if c.q == 3)
    schedule = compile_protocol(ProtocolParams(AABB))
    noise = NoiseSpec()
    xi = noise.draw(draw_rng(SEED, 0, 7), cluster.q)

    rho = evolve_density(cluster, schedule, xi, SignalSpec(), noise.rabi_error)
    purity_drift = abs(purity_check(rho) - 1.0)

    base = run_batch(cluster, schedule, xi[:, None], [1e-9], SignalSpec(), noise.rabi_error)
    fine = run_batch(cluster, schedule, xi[:, None], [1e-9], SignalSpec(), noise.rabi_error,
                     refine=2)
    halving = abs(fine.sum() - base.sum()) / abs(base.sum())

    clusters = [c for c, _ in zip(iter_clusters(spec), range(4))]
    one = run_clusters(ProtocolParams(AABB), clusters, SEED, workers=1)
    many = run_clusters(ProtocolParams(AABB), clusters, SEED, workers=4)
    same = bool(np.array_equal(one, many))

    ok = purity_drift < 1e-8 and halving < 1e-6 and same
    report(11, "numerical hygiene", ok, f"purity drift={purity_drift:.1e}, sub-step halving "
                                        f"rel change={halving:.1e}, threads 1 vs 4 identical={same}")
    assert ok
