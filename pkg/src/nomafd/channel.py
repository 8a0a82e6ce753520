"""Single-cell scenario drops and channel realizations.

Users are indexed ``0 .. M-1`` for uplink and ``M .. M+N-1`` for downlink.
The base station sits at the origin. Channel gains are stored as a dense
``(F, K, K)`` tensor indexed ``[f, transmitter, receiver]`` so that every
pair needed by the interference bookkeeping is a plain array lookup.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields
from typing import Any

import numpy as np

# SeedSequence stream tags; keep distinct so positions and fading never share draws
_POSITION_STREAM = 0
_CHANNEL_STREAM = 1


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    return 10.0 * np.log10(watt) + 30.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical parameters of a cell drop. Defaults follow the reference setup."""

    num_uplink: int = 3
    num_downlink: int = 3
    num_subcarriers: int = 6
    cell_radius_m: float = 100.0
    min_distance_m: float = 30.0
    path_loss_exponent: float = 4.0
    shadowing_sigma_db: float = 8.0
    si_cancellation_db: float = 110.0
    noise_power_dbm: float = -100.0
    p_u_dbm: float = 14.0
    p_d_dbm: float = 20.0

    def validate(self) -> None:
        if self.num_uplink < 1 or self.num_downlink < 1:
            raise ValueError("need at least one uplink and one downlink user")
        if self.num_subcarriers < 1:
            raise ValueError("num_subcarriers must be >= 1")
        if not 0.0 <= self.min_distance_m < self.cell_radius_m:
            raise ValueError(
                f"min_distance_m ({self.min_distance_m}) must be below "
                f"cell_radius_m ({self.cell_radius_m})"
            )
        for name in ("shadowing_sigma_db", "si_cancellation_db", "noise_power_dbm",
                     "p_u_dbm", "p_d_dbm", "path_loss_exponent"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.path_loss_exponent <= 0:
            raise ValueError("path_loss_exponent must be positive")
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing_sigma_db must be nonnegative")

    def replace(self, **changes: Any) -> "ScenarioConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return ScenarioConfig(**data)


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    positions: np.ndarray  # (K, 2) meters, BS at origin
    rng_seed: int

    @property
    def num_uplink(self) -> int:
        return self.config.num_uplink

    @property
    def num_downlink(self) -> int:
        return self.config.num_downlink

    @property
    def num_users(self) -> int:
        return self.config.num_uplink + self.config.num_downlink

    @property
    def num_subcarriers(self) -> int:
        return self.config.num_subcarriers

    @property
    def uplink_users(self) -> tuple[int, ...]:
        return tuple(range(self.num_uplink))

    @property
    def downlink_users(self) -> tuple[int, ...]:
        return tuple(range(self.num_uplink, self.num_users))

    @property
    def distances(self) -> np.ndarray:
        return np.hypot(self.positions[:, 0], self.positions[:, 1])

    @property
    def noise_power(self) -> float:
        return dbm_to_watt(self.config.noise_power_dbm)

    def to_dict(self) -> dict:
        return {
            "config": {f.name: getattr(self.config, f.name) for f in fields(self.config)},
            "positions": self.positions.tolist(),
            "rng_seed": int(self.rng_seed),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        config = ScenarioConfig(**data["config"])
        config.validate()
        positions = np.asarray(data["positions"], dtype=float)
        if positions.shape != (config.num_uplink + config.num_downlink, 2):
            raise ValueError("positions do not match the user count")
        return cls(config=config, positions=positions, rng_seed=int(data["rng_seed"]))


@dataclass(frozen=True)
class ChannelSet:
    """Complex gains ``h[f, j, i]`` from transmitter ``j`` to receiver ``i``.

    Uplink-to-uplink entries repeat the interferer's own link to the BS and
    downlink-to-downlink entries repeat the receiver's own link from the BS,
    since both directions share a single radio at the BS. Downlink-to-uplink
    entries carry the residual self-interference.
    """

    gains: np.ndarray  # complex (F, K, K)
    num_uplink: int
    noise_power: float
    si_raw: np.ndarray  # complex (F,), before cancellation
    si_cancellation_db: float
    power_gains: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        g = np.abs(self.gains) ** 2
        g.setflags(write=False)
        object.__setattr__(self, "power_gains", g)
        if not np.all(np.isfinite(g)):
            raise ValueError("channel gains must be finite")

    @property
    def num_subcarriers(self) -> int:
        return self.gains.shape[0]

    @property
    def num_users(self) -> int:
        return self.gains.shape[1]

    @property
    def num_downlink(self) -> int:
        return self.num_users - self.num_uplink

    @property
    def direct(self) -> np.ndarray:
        """Direct links ``h[f, i, i]`` as an ``(F, K)`` array."""
        return np.diagonal(self.gains, axis1=1, axis2=2)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.gains, dtype=np.complex128).tobytes())
        h.update(np.float64(self.noise_power).tobytes())
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {
            "num_uplink": self.num_uplink,
            "noise_power_w": self.noise_power,
            "si_cancellation_db": self.si_cancellation_db,
            "gains": _complex_to_pairs(self.gains),
            "si_raw": _complex_to_pairs(self.si_raw),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelSet":
        return cls(
            gains=_pairs_to_complex(data["gains"]),
            num_uplink=int(data["num_uplink"]),
            noise_power=float(data["noise_power_w"]),
            si_raw=_pairs_to_complex(data["si_raw"]),
            si_cancellation_db=float(data["si_cancellation_db"]),
        )


def _complex_to_pairs(a: np.ndarray) -> list:
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _pairs_to_complex(pairs: list) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def generate_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Drop users uniformly over the annulus ``[min_distance, cell_radius]``."""
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _POSITION_STREAM]))
    k = config.num_uplink + config.num_downlink
    r_min, r_max = config.min_distance_m, config.cell_radius_m
    # inverse CDF of the radius for uniform-area placement
    u = rng.random(k)
    radius = np.sqrt(r_min**2 + u * (r_max**2 - r_min**2))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=k)
    positions = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
    return Scenario(config=config, positions=positions, rng_seed=int(seed))


def rayleigh_coefficients(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance circularly symmetric complex Gaussian draws."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def large_scale_gain(distance_m, path_loss_exponent: float, shadowing_db=0.0):
    """Power attenuation ``d**-xi * 10**(S/10)`` with unit gain at 1 m.

    Distances below the 1 m reference are clamped to it.
    """
    d = np.maximum(np.asarray(distance_m, dtype=float), 1.0)
    return d ** (-path_loss_exponent) * 10.0 ** (np.asarray(shadowing_db) / 10.0)


def generate_channels(scenario: Scenario) -> ChannelSet:
    cfg = scenario.config
    m, n, f_count = cfg.num_uplink, cfg.num_downlink, cfg.num_subcarriers
    k = m + n
    rng = np.random.default_rng(
        np.random.SeedSequence([scenario.rng_seed, _CHANNEL_STREAM])
    )
    pos = scenario.positions

    # user <-> BS links
    d_direct = scenario.distances
    shadow_direct = rng.normal(0.0, cfg.shadowing_sigma_db, size=k)
    beta_direct = large_scale_gain(d_direct, cfg.path_loss_exponent, shadow_direct)
    h_direct = rayleigh_coefficients(rng, (f_count, k)) * np.sqrt(beta_direct)

    # uplink transmitter -> downlink receiver links
    ul, dl = pos[:m], pos[m:]
    d_cross = np.linalg.norm(ul[:, None, :] - dl[None, :, :], axis=-1)
    shadow_cross = rng.normal(0.0, cfg.shadowing_sigma_db, size=(m, n))
    beta_cross = large_scale_gain(d_cross, cfg.path_loss_exponent, shadow_cross)
    h_cross = rayleigh_coefficients(rng, (f_count, m, n)) * np.sqrt(beta_cross)

    si_raw = rayleigh_coefficients(rng, f_count)
    si_residual = si_raw * np.sqrt(10.0 ** (-cfg.si_cancellation_db / 10.0))

    gains = np.empty((f_count, k, k), dtype=np.complex128)
    # uplink receivers (the BS): uplink interferers arrive over their own link
    gains[:, :m, :m] = h_direct[:, :m, None]
    gains[:, m:, :m] = si_residual[:, None, None]
    # downlink receivers: every downlink stream arrives over the receiver's link
    gains[:, m:, m:] = h_direct[:, None, m:]
    gains[:, :m, m:] = h_cross
    idx = np.arange(k)
    gains[:, idx, idx] = h_direct

    gains.setflags(write=False)
    si_raw.setflags(write=False)
    return ChannelSet(
        gains=gains,
        num_uplink=m,
        noise_power=scenario.noise_power,
        si_raw=si_raw,
        si_cancellation_db=cfg.si_cancellation_db,
    )


@dataclass(frozen=True)
class FairnessWeights:
    alpha: np.ndarray  # (K,)

    def __post_init__(self) -> None:
        if np.any(np.asarray(self.alpha) < 0):
            raise ValueError("fairness weights must be nonnegative")

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.alpha, dtype=dtype)


def fairness_weights(scenario: Scenario) -> FairnessWeights:
    d = scenario.distances
    return FairnessWeights(alpha=(d / d.max()) ** 2)


def budgets_from_config(config: ScenarioConfig) -> "Budgets":
    return Budgets(p_u=dbm_to_watt(config.p_u_dbm), p_d=dbm_to_watt(config.p_d_dbm))


@dataclass(frozen=True)
class Budgets:
    """Per-uplink-user and pooled downlink power budgets, in watts."""

    p_u: float
    p_d: float

    def __post_init__(self) -> None:
        if not (self.p_u > 0 and self.p_d > 0):
            raise ValueError("power budgets must be positive")
