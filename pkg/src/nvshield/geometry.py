"""NV placement on the diamond lattice, cluster sampling and dipolar couplings.

Clusters are drawn the way the ensemble simulations need them: a fixed
number of NVs is scattered over distinct lattice cells of a cube whose
volume matches the target concentration, and the NVs that fall inside a
centred sphere (sized to hold ``sphere_mean`` NVs on average) form the
cluster.
"""

import json
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .constants import ATOMS_PER_CELL, GAMMA_E_HZ, HBAR, LATTICE_CONSTANT, MU_0, TWO_PI


class ConfigurationError(ValueError):
    """Invalid sampling or lattice configuration."""


class SamplingError(RuntimeError):
    """Sampling produced no usable clusters."""


@dataclass(frozen=True)
class LatticeConfig:
    a: float = LATTICE_CONSTANT
    atoms_per_cell: int = ATOMS_PER_CELL

    def __post_init__(self):
        if not self.a > 0:
            raise ConfigurationError("lattice constant must be positive")
        if self.atoms_per_cell != 8:
            raise ConfigurationError("only the conventional 8-atom cell is supported")

    def number_density(self, ppm: float) -> float:
        """NV number density (m^-3) at concentration ``ppm``."""
        return ppm * 1e-6 * self.atoms_per_cell / self.a**3


@dataclass(frozen=True)
class SamplingSpec:
    ppm: float
    seed_count: int = 30
    sphere_mean: int = 4
    count_min: int = 2
    count_max: int = 6
    rng_seed: int = 0

    def __post_init__(self):
        if not self.ppm > 0:
            raise ConfigurationError(f"ppm must be positive, got {self.ppm}")
        if not 0 < self.sphere_mean < self.seed_count:
            raise ConfigurationError("need 0 < sphere_mean < seed_count")
        if self.count_min < 2 or self.count_max < self.count_min:
            raise ConfigurationError("need 2 <= count_min <= count_max")


@dataclass(frozen=True)
class Cluster:
    """A sampled group of coupled NVs.

    ``d`` and ``b`` are the secular and bare coupling matrices in rad/s.
    """

    positions: np.ndarray
    d: np.ndarray
    b: np.ndarray
    ppm: float = float("nan")

    @property
    def q(self) -> int:
        return len(self.positions)

    @classmethod
    def from_positions(cls, positions, ppm: float = float("nan")) -> "Cluster":
        positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        b, d = coupling_matrices(positions)
        return cls(positions=positions, d=d, b=b, ppm=ppm)

    @classmethod
    def from_couplings(cls, d, ppm: float = float("nan")) -> "Cluster":
        """Synthetic cluster defined by its secular couplings only (rad/s).

        Positions are placeholders on a line; ``b`` is set to ``d`` so the
        cluster is usable by the engine but not by geometric checks.
        """
        d = np.array(d, dtype=float, ndmin=2)
        q = d.shape[0]
        positions = np.column_stack([np.arange(q) * 1e-9, np.zeros(q), np.zeros(q)])
        return cls(positions=positions, d=d, b=d.copy(), ppm=ppm)

    @classmethod
    def single(cls) -> "Cluster":
        return cls.from_couplings(np.zeros((1, 1)))

    def to_json(self) -> str:
        return json.dumps({
            "ppm": self.ppm,
            "positions_m": self.positions.tolist(),
            "d_over_2pi_hz": (self.d / TWO_PI).tolist(),
        })

    @classmethod
    def from_json(cls, text: Union[str, dict]) -> "Cluster":
        data = json.loads(text) if isinstance(text, str) else text
        cluster = cls.from_positions(data["positions_m"], ppm=data.get("ppm", float("nan")))
        stored = np.asarray(data.get("d_over_2pi_hz", cluster.d / TWO_PI))
        if stored.shape == cluster.d.shape and not np.allclose(stored * TWO_PI, cluster.d,
                                                               rtol=1e-9, atol=1e-6):
            # stored couplings win: the file may describe a synthetic cluster
            return cls(cluster.positions, stored * TWO_PI, cluster.b, cluster.ppm)
        return cluster


@dataclass(frozen=True)
class Rejected:
    """A draw whose in-sphere NV count fell outside the accepted range."""

    count: int
    positions: np.ndarray = field(repr=False)


def _norm(r_vec) -> float:
    r = float(np.linalg.norm(r_vec))
    if r == 0.0:
        raise ValueError("zero-length separation vector")
    return r


def coupling_constant(r_vec, gamma_hz: float = GAMMA_E_HZ) -> float:
    """Bare dipolar coupling constant ``b`` (rad/s) for separation ``r_vec`` (m)."""
    r = _norm(r_vec)
    return TWO_PI * HBAR * MU_0 * gamma_hz**2 / (2.0 * r**3)


def secular_coupling(r_vec, gamma_hz: float = GAMMA_E_HZ) -> float:
    """Secular coupling ``d = b (1 - 3 cos^2 theta)`` with ``theta`` measured from z."""
    r_vec = np.asarray(r_vec, dtype=float)
    cos_t = r_vec[2] / _norm(r_vec)
    return coupling_constant(r_vec, gamma_hz) * (1.0 - 3.0 * cos_t**2)


def coupling_matrices(positions: np.ndarray, gamma_hz: float = GAMMA_E_HZ):
    """Return ``(b, d)`` coupling matrices in rad/s for an ``(q, 3)`` position array."""
    positions = np.asarray(positions, dtype=float)
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    q = len(positions)
    off = ~np.eye(q, dtype=bool)
    if np.any(dist[off] == 0.0):
        raise ValueError("coincident NV positions")
    b = np.zeros((q, q))
    d = np.zeros((q, q))
    b[off] = TWO_PI * HBAR * MU_0 * gamma_hz**2 / (2.0 * dist[off] ** 3)
    cos2 = diff[..., 2][off] ** 2 / dist[off] ** 2
    d[off] = b[off] * (1.0 - 3.0 * cos2)
    return b, d


def box_side(spec: SamplingSpec, lattice: LatticeConfig = LatticeConfig()) -> float:
    """Side of the cube holding ``seed_count`` NVs at the target concentration."""
    volume = spec.seed_count / lattice.number_density(spec.ppm)
    return volume ** (1.0 / 3.0)


def sphere_radius(spec: SamplingSpec, lattice: LatticeConfig = LatticeConfig()) -> float:
    """Radius of the sphere that contains ``sphere_mean`` NVs on average."""
    n = lattice.number_density(spec.ppm)
    return (3.0 * spec.sphere_mean / (4.0 * np.pi * n)) ** (1.0 / 3.0)


def sample_cluster(spec: SamplingSpec, lattice: LatticeConfig = LatticeConfig(),
                   rng: Optional[np.random.Generator] = None) -> Union[Cluster, Rejected]:
    """Draw one configuration.

    ``seed_count`` distinct cells are chosen uniformly from the cubic grid
    of ``round(L / a)`` cells per side; each NV sits at its cell centre. NVs
    inside the sphere centred on the cube form the cluster. A count outside
    ``[count_min, count_max]`` gives :class:`Rejected`.
    """
    rng = np.random.default_rng(spec.rng_seed) if rng is None else rng
    n_side = int(round(box_side(spec, lattice) / lattice.a))
    if n_side < 1 or n_side**3 < spec.seed_count:
        raise ConfigurationError(
            f"cube at ppm={spec.ppm} holds fewer than seed_count={spec.seed_count} cells")
    cells = rng.choice(n_side**3, size=spec.seed_count, replace=False)
    ijk = np.stack(np.unravel_index(cells, (n_side,) * 3), axis=-1)
    positions = (ijk + 0.5) * lattice.a
    centre = 0.5 * n_side * lattice.a
    inside = np.linalg.norm(positions - centre, axis=1) <= sphere_radius(spec, lattice)
    chosen = positions[inside]
    if not spec.count_min <= len(chosen) <= spec.count_max:
        return Rejected(count=len(chosen), positions=chosen)
    return Cluster.from_positions(chosen, ppm=spec.ppm)


def draw_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for draw ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream, index)))


def iter_clusters(spec: SamplingSpec, lattice: LatticeConfig = LatticeConfig(),
                  max_rejections: int = 100_000):
    """Yield accepted clusters in draw order, each from its own per-draw generator."""
    rejections = 0
    index = 0
    while True:
        result = sample_cluster(spec, lattice, draw_rng(spec.rng_seed, index))
        index += 1
        if isinstance(result, Rejected):
            rejections += 1
            if rejections > max_rejections:
                raise SamplingError(f"more than {max_rejections} rejected draws at ppm={spec.ppm}")
            continue
        yield result


def max_coupling_stats(ppm: float, draws: int, seed: int = 0, spec: Optional[SamplingSpec] = None,
                       lattice: LatticeConfig = LatticeConfig()) -> dict:
    """Mean over accepted draws of ``max |d_ij| / 2 pi`` (Hz) with its standard error.

    ``draws`` counts attempted draws, accepted or not.
    """
    if draws < 100:
        raise ValueError("need at least 100 draws")
    spec = spec or SamplingSpec(ppm=ppm, rng_seed=seed)
    maxima = []
    for index in range(draws):
        result = sample_cluster(spec, lattice, draw_rng(spec.rng_seed, index))
        if isinstance(result, Cluster):
            maxima.append(np.abs(result.d).max() / TWO_PI)
    if not maxima:
        raise SamplingError("no accepted clusters")
    maxima = np.asarray(maxima)
    return {
        "mean_max_d": float(maxima.mean()),
        "stderr": float(maxima.std(ddof=1) / np.sqrt(len(maxima))) if len(maxima) > 1 else float("nan"),
        "accepted": int(len(maxima)),
    }
