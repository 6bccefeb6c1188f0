"""Scenario definitions, seeded channel generation and SNR-derived parameters."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

# Named sub-streams of one realization; each consumer draws from its own stream
# so that adding draws in one place never shifts another.
STREAM_CHANNELS = 0
STREAM_PHASE_INIT = 1
STREAM_BASELINE = 2
STREAM_GLOBAL_SEARCH = 3


class ConfigError(ValueError):
    """Raised when a scenario or experiment configuration is invalid."""


@dataclass(frozen=True)
class RngSeed:
    master_seed: int
    realization_index: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        if int(self.realization_index) < 0:
            raise ConfigError("realization_index must be non-negative")

    def generator(self, stream: int = STREAM_CHANNELS) -> np.random.Generator:
        """Independent generator for ``stream`` of this realization.

        Counter-based: the state depends only on (master_seed, realization_index,
        stream), so realizations can be produced in any order or in parallel.
        """
        ss = np.random.SeedSequence(
            int(self.master_seed), spawn_key=(int(self.realization_index), int(stream))
        )
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class ScenarioConfig:
    """Dimensions, budget and solver settings of one link scenario.

    ``p_max`` and ``noise_power`` are linear units; ``rate_floors`` are in bits/s/Hz.
    With ``require_zf`` left on, ``K <= M`` is enforced so the cascaded channel
    can be zero-forced. The phase-only convergence study turns it off.
    """

    num_users: int
    num_bs_antennas: int
    num_pim_units: int
    p_max: float
    noise_power: float = 1.0
    rate_floors: tuple = ()
    zf_tol: float = 1e-10
    mm_mse_tol: float = 1e-4
    outer_rel_tol: float = 1e-6
    mm_max_iter: int = 200
    outer_max_iter: int = 50
    require_zf: bool = True

    def __post_init__(self):
        K, M, N = self.num_users, self.num_bs_antennas, self.num_pim_units
        for name, v in (("num_users", K), ("num_bs_antennas", M), ("num_pim_units", N)):
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if K > N:
            raise ConfigError(f"need K <= N, got K={K}, N={N}")
        if self.require_zf and K > M:
            raise ConfigError(f"zero forcing needs K <= M, got K={K}, M={M}")
        if not self.noise_power > 0:
            raise ConfigError("noise_power must be positive")
        if not self.p_max >= 0:
            raise ConfigError("p_max must be non-negative")
        floors = tuple(float(r) for r in self.rate_floors) if len(self.rate_floors) else (0.0,) * K
        if len(floors) != K:
            raise ConfigError(f"rate_floors has {len(floors)} entries, expected {K}")
        if any(not r >= 0 for r in floors):
            raise ConfigError("rate floors must be non-negative")
        object.__setattr__(self, "rate_floors", floors)
        for name in ("zf_tol", "mm_mse_tol", "outer_rel_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("mm_max_iter", "outer_max_iter"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")

    @property
    def K(self) -> int:
        return self.num_users

    @property
    def M(self) -> int:
        return self.num_bs_antennas

    @property
    def N(self) -> int:
        return self.num_pim_units

    @property
    def rate_floor_array(self) -> np.ndarray:
        return np.asarray(self.rate_floors, dtype=float)


@dataclass(frozen=True)
class ChannelSet:
    """BS-to-mirror matrix ``h1`` (N x M) and mirror-to-users matrix ``h2`` (K x N)."""

    h1: np.ndarray
    h2: np.ndarray

    def __post_init__(self):
        h1 = np.atleast_2d(np.asarray(self.h1, dtype=complex))
        h2 = np.atleast_2d(np.asarray(self.h2, dtype=complex))
        if h1.shape[0] != h2.shape[1]:
            raise ConfigError(f"h1 is {h1.shape}, h2 is {h2.shape}: mirror sizes disagree")
        object.__setattr__(self, "h1", h1)
        object.__setattr__(self, "h2", h2)

    @property
    def dims(self) -> tuple:
        """(K, M, N)."""
        return self.h2.shape[0], self.h1.shape[1], self.h1.shape[0]

    def check(self, cfg: ScenarioConfig) -> None:
        if self.dims != (cfg.K, cfg.M, cfg.N):
            raise ConfigError(f"channel dims {self.dims} != config dims {(cfg.K, cfg.M, cfg.N)}")


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """i.i.d. CN(0, 1) samples: real and imaginary parts each of variance 1/2."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def generate_channels(cfg: ScenarioConfig, seed: RngSeed) -> ChannelSet:
    rng = seed.generator(STREAM_CHANNELS)
    h1 = complex_gaussian(rng, (cfg.N, cfg.M))
    h2 = complex_gaussian(rng, (cfg.K, cfg.N))
    return ChannelSet(h1, h2)


def random_phases(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.0, 2.0 * np.pi, size=n)


@dataclass(frozen=True)
class FixedFloor:
    """Every user gets the same rate floor ``rate`` (bits/s/Hz)."""

    rate: float = 0.0

    @property
    def label(self) -> str:
        return f"fixed({self.rate:g})"


@dataclass(frozen=True)
class Fig2Floor:
    """Rate floor log2(1 + SNR / (2K)) for every user."""

    @property
    def label(self) -> str:
        return "fig2_rule"


RateFloorMode = Union[FixedFloor, Fig2Floor]


def parse_rate_floor_mode(spec: Union[str, float, dict, RateFloorMode]) -> RateFloorMode:
    """Accepts ``"fig2_rule"``, ``"fixed(2)"``, ``2.0`` or ``{"fixed": 2}``."""
    if isinstance(spec, (FixedFloor, Fig2Floor)):
        return spec
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return FixedFloor(float(spec))
    if isinstance(spec, dict):
        if "fixed" in spec:
            return FixedFloor(float(spec["fixed"]))
        if spec.get("mode") == "fig2_rule":
            return Fig2Floor()
    if isinstance(spec, str):
        s = spec.strip()
        if s == "fig2_rule":
            return Fig2Floor()
        if s.startswith("fixed(") and s.endswith(")"):
            try:
                return FixedFloor(float(s[6:-1]))
            except ValueError:
                pass
    raise ConfigError(f"unrecognised rate floor mode {spec!r}")


def snr_config(K: int, M: int, N: int, snr_db: float, rate_floor_mode="fixed(0)", **solver) -> ScenarioConfig:
    """Scenario with unit noise power and ``p_max = 10**(snr_db / 10)``."""
    if not np.isfinite(snr_db):
        raise ConfigError("snr_db must be finite")
    mode = parse_rate_floor_mode(rate_floor_mode)
    p_max = 10.0 ** (snr_db / 10.0)
    if isinstance(mode, Fig2Floor):
        r = float(np.log2(1.0 + p_max / (2.0 * K)))
    else:
        r = mode.rate
    return ScenarioConfig(K, M, N, p_max=p_max, noise_power=1.0, rate_floors=(r,) * K, **solver)
