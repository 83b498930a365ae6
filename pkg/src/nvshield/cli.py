"""Command-line front end.

Configuration comes from built-in defaults, then an optional INI-style file
of flat dotted keys (``physics.omega_hz = 20e6``), then command-line flags.
The default seed can be set with the ``NVSHIELD_SEED`` environment variable.

Exit codes: 0 success, 2 configuration error, 3 sampling failure.
"""

import argparse
import configparser
import json
import os
import sys
from dataclasses import asdict, dataclass, fields, replace
from typing import List, Optional

import numpy as np

from . import __version__
from .constants import (ACTIVE_VOLUME, BLOCKS_PER_HALF_PERIOD, CHEMICAL_SHIFT_HZ, DISORDER_STD_HZ,
                        LATTICE_CONSTANT, MEASUREMENT_INTERVAL, N_MEASUREMENTS, CONCENTRATION_GRID,
                        RABI_ERROR, RABI_HZ, SEQUENCE_REPEATS, SIGNAL_AMPLITUDE, TWO_PI)
from .engine import NoiseSpec, SignalSpec
from .experiments import (AerisParams, DegenerateTraceError, EnsembleTrace, convergence_curve,
                          draw_clusters, ensemble_average, fit_chemical_shift, read_trace_csv,
                          run_clusters, sweep, write_convergence_csv, write_manifest,
                          write_sweep_csv, write_trace_csv)
from .geometry import (Cluster, ConfigurationError, LatticeConfig, SamplingError, SamplingSpec,
                       max_coupling_stats)
from .sequences import BlockKind, ProtocolParams, PulseModel, compile_protocol

EXIT_OK, EXIT_CONFIG, EXIT_SAMPLING = 0, 2, 3
SEED_ENV = "NVSHIELD_SEED"
SCALE_Q = {"ci": {"cpmg": 40, "shield-aabb": 20, "shield-aaaa": 20},
           "full": {"cpmg": 400, "shield-aabb": 200, "shield-aaaa": 200}}


@dataclass(frozen=True)
class RunConfig:
    """Every tunable parameter. Field names map to dotted keys by the first underscore group."""

    physics_omega_hz: float = RABI_HZ
    physics_disorder_std_hz: float = DISORDER_STD_HZ
    physics_rabi_error: float = RABI_ERROR
    physics_b_t: float = SIGNAL_AMPLITUDE
    physics_pulse_model: str = PulseModel.FINITE.value
    physics_disorder_resample: str = "per_cluster"
    physics_waveform: str = "sin"
    sequence_m: int = BLOCKS_PER_HALF_PERIOD
    sequence_M: int = SEQUENCE_REPEATS
    aeris_delta_hz: float = CHEMICAL_SHIFT_HZ
    aeris_tau: float = MEASUREMENT_INTERVAL
    aeris_n_sr: int = N_MEASUREMENTS
    sampling_ppm: float = 1.0
    sampling_a: float = LATTICE_CONSTANT
    sampling_seed_count: int = 30
    sampling_sphere_mean: int = 4
    sampling_count_min: int = 2
    sampling_count_max: int = 6
    sensing_v_act: float = ACTIVE_VOLUME
    run_seed: int = 0

    @staticmethod
    def dotted(name: str) -> str:
        section, key = name.split("_", 1)
        return f"{section}.{key}"

    def as_dotted(self) -> dict:
        return {self.dotted(k): v for k, v in asdict(self).items()}

    # builders -------------------------------------------------------------

    def protocol(self, kind: str) -> ProtocolParams:
        return ProtocolParams(BlockKind(kind), omega=TWO_PI * self.physics_omega_hz,
                              m=self.sequence_m, M=self.sequence_M,
                              pulse_model=PulseModel(self.physics_pulse_model))

    def noise(self) -> NoiseSpec:
        return NoiseSpec(disorder_std=TWO_PI * self.physics_disorder_std_hz,
                         rabi_error=self.physics_rabi_error,
                         disorder_resample=self.physics_disorder_resample)

    def signal(self) -> SignalSpec:
        return SignalSpec(amplitude=self.physics_b_t, waveform=self.physics_waveform)

    def aeris(self) -> AerisParams:
        return AerisParams(self.aeris_delta_hz, self.aeris_tau, self.aeris_n_sr)

    def lattice(self) -> LatticeConfig:
        return LatticeConfig(a=self.sampling_a)

    def sampling(self, ppm: Optional[float] = None) -> SamplingSpec:
        return SamplingSpec(ppm=self.sampling_ppm if ppm is None else ppm,
                            seed_count=self.sampling_seed_count,
                            sphere_mean=self.sampling_sphere_mean,
                            count_min=self.sampling_count_min, count_max=self.sampling_count_max,
                            rng_seed=self.run_seed)


_FIELDS = {RunConfig.dotted(f.name): f for f in fields(RunConfig)}


def _coerce(key: str, raw):
    kind = _FIELDS[key].type
    kind = {"float": float, "int": int, "str": str}.get(kind, kind)
    try:
        if kind is int:
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        return kind(raw)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key}: cannot interpret {raw!r} as {kind.__name__}") from None


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides`` (dotted keys)."""
    values = {}
    if SEED_ENV in os.environ:
        values["run.seed"] = os.environ[SEED_ENV]
    if path:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str  # keep case: sequence.M differs from sequence.m
        try:
            with open(path) as fh:
                parser.read_string("[config]\n" + fh.read())
        except (OSError, configparser.Error) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        values.update(parser["config"])
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(values) - set(_FIELDS))
    if unknown:
        raise ConfigurationError(f"unknown config key(s): {', '.join(unknown)}")
    kwargs = {_FIELDS[k].name: _coerce(k, v) for k, v in values.items()}
    cfg = RunConfig(**kwargs)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    positive = ["physics_omega_hz", "sampling_ppm", "sampling_a", "aeris_tau", "sensing_v_act"]
    for name in positive:
        if not getattr(cfg, name) > 0:
            raise ConfigurationError(f"{RunConfig.dotted(name)} must be positive, "
                                     f"got {getattr(cfg, name)}")
    try:
        PulseModel(cfg.physics_pulse_model)
        cfg.noise()
        cfg.signal()
        cfg.aeris()
        cfg.sampling()
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None


# ---------------------------------------------------------------------------
# commands


def _config(args, **extra) -> RunConfig:
    overrides = {"run.seed": args.seed, **extra}
    return load_config(args.config, overrides)


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_sample(args) -> int:
    cfg = _config(args, **{"sampling.ppm": args.ppm})
    clusters = draw_clusters(cfg.sampling(), args.count, cfg.lattice())
    payload = {"ppm": cfg.sampling_ppm, "seed": cfg.run_seed,
               "clusters": [json.loads(c.to_json()) for c in clusters]}
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    print(f"wrote {len(clusters)} clusters to {args.out}")
    return EXIT_OK


def _load_clusters(path: str) -> List[Cluster]:
    with open(path) as fh:
        data = json.load(fh)
    entries = data["clusters"] if isinstance(data, dict) and "clusters" in data else data
    if isinstance(entries, dict):
        entries = [entries]
    return [Cluster.from_json(e) for e in entries]


def cmd_coupling_stats(args) -> int:
    if args.input:
        maxima = np.array([np.abs(c.d).max() / TWO_PI for c in _load_clusters(args.input)])
        if maxima.size == 0:
            raise SamplingError("cluster file is empty")
        stats = {"mean_max_d": float(maxima.mean()),
                 "stderr": float(maxima.std(ddof=1) / np.sqrt(maxima.size)) if maxima.size > 1
                 else float("nan"),
                 "accepted": int(maxima.size)}
    else:
        cfg = _config(args, **{"sampling.ppm": args.ppm})
        stats = max_coupling_stats(cfg.sampling_ppm, args.draws, spec=cfg.sampling(),
                                   lattice=cfg.lattice())
    _emit({"mean_max_d_hz": stats["mean_max_d"], "stderr_hz": stats["stderr"],
           "accepted": stats["accepted"]})
    return EXIT_OK


def _manifest(path: str, cfg: RunConfig, command: str, **extra) -> None:
    write_manifest(path, command=command, version=__version__, config=cfg.as_dotted(), **extra)


def cmd_run(args) -> int:
    cfg = _config(args, **{"sampling.ppm": args.ppm})
    protocol = cfg.protocol(args.protocol)
    noise = NoiseSpec.off() if args.noise_off else cfg.noise()
    if args.cluster_file:
        clusters = _load_clusters(args.cluster_file)
        rows = run_clusters(protocol, clusters, cfg.run_seed, noise, cfg.aeris(), cfg.signal(),
                            args.threads)
        trace = EnsembleTrace(rows.mean(axis=0), len(clusters), rows,
                              np.array([c.q for c in clusters]))
    else:
        trace = ensemble_average(protocol, cfg.sampling_ppm, args.Q, cfg.sampling(), noise,
                                 cfg.aeris(), cfg.run_seed, cfg.signal(), cfg.lattice(),
                                 args.threads)
    write_trace_csv(args.out, trace, cfg.aeris())
    fit = fit_chemical_shift(trace, cfg.aeris_tau)
    summary = {"protocol": args.protocol, "Q_used": trace.Q_used,
               "delta_hat_hz": fit.delta_hat, "amplitude": fit.amplitude_hat,
               "offset": fit.offset_hat}
    _manifest(args.out + ".manifest.json", cfg, "run", noise_off=args.noise_off,
              cluster_file=args.cluster_file, result=summary)
    _emit(summary)
    return EXIT_OK


def _protocol_list(text: str) -> List[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    for name in names:
        BlockKind(name)
    return names


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.preset == "ppm-grid":
        ppm_list = list(CONCENTRATION_GRID)
    elif args.ppm:
        ppm_list = [float(x) for x in args.ppm.split(",")]
    else:
        raise ConfigurationError("sweep needs --ppm or --preset")
    names = _protocol_list(args.protocols)
    q_map = dict(SCALE_Q[args.scale])
    if args.Q:
        q_map = {name: args.Q for name in names}
    result = sweep([cfg.protocol(n) for n in names], ppm_list, q_map, cfg.sampling(),
                   cfg.noise(), cfg.aeris(), cfg.run_seed, cfg.signal(), cfg.lattice(),
                   cfg.sensing_v_act, args.threads)
    write_sweep_csv(args.out, result)
    _manifest(args.out + ".manifest.json", cfg, "sweep", ppm=ppm_list, protocols=names, Q=q_map)
    print(f"wrote {len(result.rows)} rows to {args.out}")
    return EXIT_OK


def cmd_convergence(args) -> int:
    cfg = _config(args, **{"sampling.ppm": args.ppm})
    curve = convergence_curve(cfg.protocol(args.protocol), cfg.sampling_ppm, args.Q_max,
                              cfg.sampling(), cfg.noise(), cfg.aeris(), cfg.run_seed,
                              cfg.signal(), args.threads)
    write_convergence_csv(args.out, curve)
    _manifest(args.out + ".manifest.json", cfg, "convergence", protocol=args.protocol,
              Q_max=args.Q_max)
    print(f"wrote {len(curve)} rows to {args.out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    fit = fit_chemical_shift(read_trace_csv(args.trace), args.tau)
    _emit({"delta_hat_hz": fit.delta_hat, "amplitude": fit.amplitude_hat,
           "phase_rad": fit.phase_hat, "offset": fit.offset_hat,
           "rms_residual": fit.rms_residual})
    return EXIT_OK


def cmd_schedule_dump(args) -> int:
    cfg = _config(args, **{"sequence.m": args.m, "sequence.M": args.M,
                           "physics.pulse_model": args.pulse_model})
    schedule = compile_protocol(cfg.protocol(args.protocol))
    info = {"protocol": args.protocol, "pulse_model": schedule.pulse_model.value,
            "first_harmonic_hz": schedule.first_harmonic,
            "sensing_time_s": schedule.sensing_time,
            "total_duration_s": schedule.total_duration,
            "n_segments": len(schedule.segments)}
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(schedule.to_csv())
    _emit(info)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file with dotted keys")
    common.add_argument("--seed", type=int, default=None,
                        help=f"master seed (default: ${SEED_ENV} or 0)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads; results do not depend on it")

    parser = argparse.ArgumentParser(prog="nvshield", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    protocols = [k.value for k in BlockKind]

    p = sub.add_parser("sample", parents=[common], help="draw clusters to JSON")
    p.add_argument("--ppm", type=float)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("coupling-stats", parents=[common], help="mean max |d|/2pi")
    p.add_argument("input", nargs="?", help="cluster JSON from 'sample'")
    p.add_argument("--ppm", type=float)
    p.add_argument("--draws", type=int, default=2000)
    p.set_defaults(func=cmd_coupling_stats)

    p = sub.add_parser("run", parents=[common], help="ensemble AERIS trace")
    p.add_argument("--protocol", choices=protocols, required=True)
    p.add_argument("--ppm", type=float)
    p.add_argument("--Q", "--clusters", dest="Q", type=int, default=20)
    p.add_argument("--cluster-file", help="run these clusters instead of sampling")
    p.add_argument("--noise-off", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="amplitude/SNR over ppm")
    p.add_argument("--protocols", default="cpmg,shield-aabb,shield-aaaa")
    p.add_argument("--ppm", help="comma-separated list")
    p.add_argument("--preset", choices=["ppm-grid"])
    p.add_argument("--scale", choices=sorted(SCALE_Q), default="ci")
    p.add_argument("--Q", type=int, help="override cluster count for every protocol")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("convergence", parents=[common], help="amplitude error vs Q")
    p.add_argument("--protocol", choices=protocols, required=True)
    p.add_argument("--ppm", type=float)
    p.add_argument("--Q-max", dest="Q_max", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("fit", parents=[common], help="fit delta to a trace CSV")
    p.add_argument("trace")
    p.add_argument("--tau", type=float, default=MEASUREMENT_INTERVAL)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("schedule-dump", parents=[common], help="compiled schedule as CSV")
    p.add_argument("--protocol", choices=protocols, required=True)
    p.add_argument("--m", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--pulse-model", choices=[m.value for m in PulseModel])
    p.add_argument("--out")
    p.set_defaults(func=cmd_schedule_dump)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DegenerateTraceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SamplingError as exc:
        print(f"sampling failed: {exc}", file=sys.stderr)
        return EXIT_SAMPLING
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
