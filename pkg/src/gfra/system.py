"""System configuration presets and the deployment that turns them into slots.

A :class:`Deployment` freezes one topology, one large-scale map and one pilot
book, then yields received slots on demand. Slot ``i`` draws its activity,
fading block and noise from child streams keyed on ``i``, so any slot can be
regenerated on its own and sweeps can run in parallel.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field

import numpy as np

from .airlink import (
    PilotBook,
    PowerProfile,
    ReceivedSlot,
    dbm_to_watts,
    generate_pilotbook,
    pilot_length_from_coherence,
    sample_activity,
    synth_slot,
)
from .channel import (
    LargeScaleMap,
    LogDistancePathLoss,
    PathLossParams,
    SmallScaleBlock,
    large_scale_map,
    small_scale_block,
)
from .numerics import SeededRng
from .topology import Topology, TopologyConfig, generate_topology

__all__ = ["SystemConfig", "Seeds", "Deployment", "PRESETS", "preset", "build_deployment"]

FADING_MODES = ("per-slot", "fixed")
PATH_LOSS_MODELS = ("uma-los", "log-distance")


@dataclass(frozen=True)
class SystemConfig:
    area_side_m: float = 500.0
    num_aps: int = 20
    num_users: int = 100
    num_antennas: int = 2
    pilot_length: int = 40
    edge_distance_m: float = 50.0
    min_ue_ap_distance_m: float = 10.0
    min_ap_ap_distance_m: float = 15.0
    ap_height_m: float = 12.0
    ue_height_m: float = 1.5
    carrier_freq_hz: float = 900e6
    tx_power_w: float = 0.2
    epsilon: float = 0.1
    noise_power_dbm: float = -109.0
    shadow_std_db: float = 1.0
    path_loss: str = "uma-los"
    log_distance_intercept_db: float = 15.3
    log_distance_slope_db: float = 37.6
    coherence_time_s: float | None = 1e-3
    coherence_bw_hz: float | None = 200e3
    pilot_fraction: float | None = 0.2
    fading_mode: str = "per-slot"
    # slots per fading block in "fixed" mode; 0 keeps one block for the whole run
    coherence_slots: int = 0

    def __post_init__(self):
        if self.fading_mode not in FADING_MODES:
            raise ValueError(f"fading_mode must be one of {FADING_MODES}, got {self.fading_mode!r}")
        if self.path_loss not in PATH_LOSS_MODELS:
            raise ValueError(f"path_loss must be one of {PATH_LOSS_MODELS}, got {self.path_loss!r}")
        if self.coherence_slots < 0:
            raise ValueError("coherence_slots must be >= 0 (0 holds one block for the whole run)")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        for name in ("num_aps", "num_users", "num_antennas", "pilot_length"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def check_pilot_length(self) -> bool:
        """Warn when L disagrees with round(fraction * tau_C * B_C)."""
        if None in (self.coherence_time_s, self.coherence_bw_hz, self.pilot_fraction):
            return True
        expected = pilot_length_from_coherence(self.coherence_time_s, self.coherence_bw_hz, self.pilot_fraction)
        if expected != self.pilot_length:
            warnings.warn(
                f"pilot_length={self.pilot_length} differs from the coherence-block budget "
                f"round({self.pilot_fraction} * {self.coherence_time_s} * {self.coherence_bw_hz}) = {expected}",
                stacklevel=2,
            )
            return False
        return True

    @property
    def noise_power_w(self) -> float:
        return dbm_to_watts(self.noise_power_dbm)

    @property
    def feature_dim(self) -> int:
        return 2 * self.num_antennas * self.pilot_length

    def topology_config(self) -> TopologyConfig:
        return TopologyConfig(
            area_side_m=self.area_side_m,
            num_aps=self.num_aps,
            num_users=self.num_users,
            edge_distance_m=self.edge_distance_m,
            min_ue_ap_distance_m=self.min_ue_ap_distance_m,
            min_ap_ap_distance_m=self.min_ap_ap_distance_m,
            ap_height_m=self.ap_height_m,
            ue_height_m=self.ue_height_m,
        )

    def path_loss_params(self) -> PathLossParams:
        return PathLossParams(
            carrier_freq_hz=self.carrier_freq_hz,
            ap_height_m=self.ap_height_m,
            ue_height_m=self.ue_height_m,
            shadow_std_db=self.shadow_std_db,
        )

    def path_loss_model(self):
        if self.path_loss == "log-distance":
            return LogDistancePathLoss(
                self.log_distance_intercept_db, self.log_distance_slope_db,
                self.ap_height_m, self.ue_height_m,
            )
        return None

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)


PRESETS: dict[str, SystemConfig] = {
    "scenario-1": SystemConfig(),
    # 1 km^2, no placement margins, N(0, 4) shadowing and a log-distance law
    # standing in for the unspecified simplified model.
    "scenario-2-like": SystemConfig(
        area_side_m=1000.0,
        edge_distance_m=0.0,
        min_ue_ap_distance_m=0.0,
        min_ap_ap_distance_m=0.0,
        shadow_std_db=2.0,
        path_loss="log-distance",
    ),
}


def preset(name: str, **overrides) -> SystemConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(PRESETS)}") from None
    return base.replace(**overrides)


@dataclass(frozen=True)
class Seeds:
    topology: int = 2024
    channel: int = 38901
    activity: int = 101
    noise: int = 109
    init: int = 7

    def rng(self, name: str) -> SeededRng:
        return SeededRng(getattr(self, name)).split(name)


@dataclass
class Deployment:
    config: SystemConfig
    topology: Topology
    beta: LargeScaleMap
    pilots: PilotBook
    power: PowerProfile
    seeds: Seeds = field(default_factory=Seeds)

    def __post_init__(self):
        self._activity_rng = self.seeds.rng("activity")
        self._noise_rng = self.seeds.rng("noise")
        self._fading_rng = self.seeds.rng("channel").split("small-scale")

    def block_of(self, slot: int) -> int:
        if self.config.fading_mode == "fixed":
            cs = self.config.coherence_slots
            return 0 if cs == 0 else slot // cs
        return slot

    def fading(self, block: int) -> SmallScaleBlock:
        return small_scale_block(
            self.beta, self.config.num_antennas, self._fading_rng.split(f"block-{block}"), block_id=block
        )

    def slot(self, index: int, fading: SmallScaleBlock | None = None) -> ReceivedSlot:
        """Regenerate slot ``index``; pass ``fading`` to reuse an already drawn block."""
        block = self.block_of(index)
        if fading is None or fading.block_id != block:
            fading = self.fading(block)
        activity = sample_activity(
            self.config.num_users, self.config.epsilon, self._activity_rng.split(f"slot-{index}")
        )
        return synth_slot(self.pilots, activity, self.power, fading, self._noise_rng.split(f"slot-{index}"))

    def slots(self, start: int, count: int):
        fading = None
        for i in range(start, start + count):
            block = self.block_of(i)
            if fading is None or fading.block_id != block:
                fading = self.fading(block)
            yield i, self.slot(i, fading)


def build_deployment(config: SystemConfig, seeds: Seeds | None = None) -> Deployment:
    seeds = seeds or Seeds()
    config.check_pilot_length()
    topo = generate_topology(config.topology_config(), seeds.rng("topology"))
    channel_rng = seeds.rng("channel")
    beta = large_scale_map(topo, config.path_loss_params(), channel_rng.split("large-scale"),
                           path_loss=config.path_loss_model())
    pilots = generate_pilotbook(config.pilot_length, config.num_users, channel_rng.split("pilots"))
    power = PowerProfile.uniform(config.num_users, config.tx_power_w, config.noise_power_w)
    return Deployment(config=config, topology=topo, beta=beta, pilots=pilots, power=power, seeds=seeds)
