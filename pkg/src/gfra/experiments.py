"""Experiment pipelines: training, evaluation and the sweeps behind each figure.

Every pipeline is driven by an :class:`ExperimentConfig` and returns plain
numbers and arrays; CSV emission lives in :mod:`gfra.reports`.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .airlink import snr_per_device, snr_target
from .dataset import Dataset, fit_scaler, generate_dataset
from .detect import RocCurve, calibrate_threshold, fused_roc, rates, roc, hard_decision
from .dmlp import MlpArchitecture, MlpModel, TrainConfig, TrainResult, init_model, parameter_count, predict, train
from .numerics import SeededRng
from .robustness import FixedPointFormat, perturb_features, quantize_features
from .system import Deployment, Seeds, SystemConfig, build_deployment, preset

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "TrainedDetector",
    "train_detector",
    "eval_dataset",
    "evaluate",
    "train_and_evaluate",
    "cluster_eval_probs",
    "cluster_sweep",
    "system_sweep",
    "threshold_sweep",
    "perturbation_sweep",
    "quantization_sweep",
    "pareto_sweep",
    "pareto_front",
    "snr_cdf",
]

log = logging.getLogger(__name__)

_ALIASES = {"K": "num_users", "L": "pilot_length", "N": "num_antennas", "M": "num_aps", "D": "area_side_m"}
_SYSTEM_FIELDS = {f.name for f in dataclasses.fields(SystemConfig)}
_TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)}
_SEED_FIELDS = {f.name for f in dataclasses.fields(Seeds)}

# Slot index ranges kept apart so training, calibration and evaluation never share a slot.
CALIBRATION_FIRST_SLOT = 500_000_000
EVAL_FIRST_SLOT = 1_000_000_000


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    scenario: str = "scenario-1"
    system: SystemConfig = field(default_factory=SystemConfig)
    seeds: Seeds = field(default_factory=Seeds)
    train: TrainConfig = field(default_factory=TrainConfig)
    ap_policy: str = "uniform-random-ap"
    hidden_layers: int = 2
    hidden_width: int = 320
    train_slots: int = 30_000
    eval_slots: int = 3_000
    tau: float = 0.5
    tau_step: float = 0.01
    coverage: float = 0.95
    adc_gain: str | float = "noise"
    L_values: list[int] = field(default_factory=lambda: [20, 40, 60])
    K_values: list[int] = field(default_factory=lambda: [50, 100, 200])
    T_values: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    thetas: list[float] = field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3, 0.5])
    formats: list[str] = field(default_factory=lambda: ["10_2", "12_4", "14_6", "16_8"])
    epsilons: list[float] = field(default_factory=lambda: [0.05, 0.1, 0.2, 0.3])
    pareto_Z: list[int] = field(default_factory=lambda: [2, 3, 4])
    pareto_V: list[int] = field(default_factory=lambda: [64, 128, 160, 256, 320, 512, 640, 1024, 1280, 2048])
    snr_areas_m: list[float] = field(default_factory=lambda: [500.0, 1000.0, 2000.0])
    snr_aps: list[int] = field(default_factory=lambda: [20, 25])
    snr_scenarios: list[str] = field(default_factory=lambda: ["scenario-1", "scenario-2-like"])
    snr_realizations: int = 20
    # worker processes for L/K sweep points (each point owns its rng streams)
    jobs: int = 1

    @property
    def arch(self) -> MlpArchitecture:
        s = self.system
        return MlpArchitecture.for_system(s.num_users, s.pilot_length, s.num_antennas, self.hidden_layers, self.hidden_width)

    @classmethod
    def from_dict(cls, flat: dict) -> "ExperimentConfig":
        """Build from a flat key/value mapping.

        System keys (or the aliases K, L, N, M, D) override the scenario
        preset, ``seed_<stream>`` keys set seeds, optimizer keys go to the
        training config, everything else must be an experiment field.
        """
        flat = dict(flat)
        scenario = flat.pop("scenario", "scenario-1")
        sys_kw, seed_kw, train_kw, top_kw = {}, {}, {}, {}
        top_fields = {f.name for f in dataclasses.fields(cls)} - {"system", "seeds", "train", "scenario"}
        for key, value in flat.items():
            name = _ALIASES.get(key, key)
            if name in _SYSTEM_FIELDS:
                sys_kw[name] = value
            elif name.startswith("seed_") and name[5:] in _SEED_FIELDS:
                seed_kw[name[5:]] = int(value)
            elif name in _TRAIN_FIELDS:
                train_kw[name] = value
            elif name in top_fields:
                top_kw[name] = value
            else:
                raise ConfigError(f"unknown config field {key!r}")
        try:
            system = preset(scenario, **sys_kw)
            return cls(scenario=scenario, system=system, seeds=Seeds(**seed_kw), train=TrainConfig(**train_kw), **top_kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_system(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, system=self.system.replace(**changes))

    def adc_gain_value(self) -> float:
        if self.adc_gain == "noise":
            return 1.0 / np.sqrt(self.system.noise_power_w)
        return float(self.adc_gain)


@dataclass
class TrainedDetector:
    deployment: Deployment
    result: TrainResult
    dataset: Dataset

    @property
    def model(self) -> MlpModel:
        return self.result.model


def train_on_dataset(ds: Dataset, arch: MlpArchitecture, cfg: TrainConfig, seeds: Seeds) -> TrainResult:
    """Slot-wise split, scaler fit on the training part, init, train."""
    tr, va = ds.split_by_slot(cfg.val_fraction, seeds.rng("init").split("val-split"))
    scaler = fit_scaler(tr.features)
    model = init_model(arch, scaler, seeds.rng("init").split("weights"))
    return train(model, tr.features, tr.labels, va.features, va.labels, cfg, log=log.debug)


def train_detector(cfg: ExperimentConfig, deployment: Deployment | None = None) -> TrainedDetector:
    dep = deployment or build_deployment(cfg.system, cfg.seeds)
    ds = generate_dataset(dep, cfg.train_slots, cfg.ap_policy, seed=cfg.seeds.activity)
    log.info("training %s on %d samples", cfg.arch, len(ds))
    result = train_on_dataset(ds, cfg.arch, cfg.train, cfg.seeds)
    log.info("best epoch %d, val loss %.5f", result.best_epoch, result.best_val_loss)
    return TrainedDetector(dep, result, ds)


def eval_dataset(cfg: ExperimentConfig, dep: Deployment, policy: str | None = None,
                 first_slot: int = EVAL_FIRST_SLOT) -> Dataset:
    return generate_dataset(dep, cfg.eval_slots, policy or cfg.ap_policy, first_slot=first_slot,
                            seed=cfg.seeds.activity + 1)


@dataclass
class Evaluation:
    scores: np.ndarray
    labels: np.ndarray
    curve: RocCurve
    accuracy: float
    p_fa: float
    p_md: float


def evaluate(model: MlpModel, features: np.ndarray, labels: np.ndarray, tau: float = 0.5) -> Evaluation:
    scores = predict(model, features)
    rep = rates(hard_decision(scores, tau), labels)
    return Evaluation(scores, labels, roc(scores, labels), rep.accuracy, rep.p_fa, rep.p_md)


def cluster_eval_probs(model: MlpModel, cfg: ExperimentConfig, dep: Deployment):
    """Detector outputs at every AP for each evaluation slot: (slots, M, K), plus labels (slots, K)."""
    ds = eval_dataset(cfg, dep, policy="all-aps")
    M, K = cfg.system.num_aps, cfg.system.num_users
    probs = predict(model, ds.features).reshape(-1, M, K)
    labels = ds.labels.reshape(-1, M, K)[:, 0, :]
    return probs, labels


def cluster_sweep(model: MlpModel, cfg: ExperimentConfig, dep: Deployment, T_values=None) -> dict[int, RocCurve]:
    """Majority-fused ROC per cluster size; one random cluster per slot, one shared model."""
    probs, labels = cluster_eval_probs(model, cfg, dep)
    n_slots, M, _ = probs.shape
    out = {}
    for T in (T_values or cfg.T_values):
        rng = cfg.seeds.rng("activity").split(f"clusters-T{T}")
        pick = np.stack([rng.choice(M, T, replace=False) for _ in range(n_slots)])
        sel = np.take_along_axis(probs, pick[:, :, None], axis=1)
        out[T] = fused_roc(sel, labels)
    return out


def train_and_evaluate(cfg: ExperimentConfig) -> tuple[TrainedDetector, Evaluation]:
    """Train on the training slots, then score the held-out evaluation slots."""
    det = train_detector(cfg)
    ev_ds = eval_dataset(cfg, det.deployment)
    return det, evaluate(det.model, ev_ds.features, ev_ds.labels, cfg.tau)


def _sweep_point(cfg: ExperimentConfig, param: str, value: int) -> Evaluation:
    sub = cfg.with_system(**{_ALIASES[param]: value, "pilot_fraction": None})
    _, ev = train_and_evaluate(sub)
    log.info("%s=%s  AUC %.4f  acc %.4f", param, value, ev.curve.auc, ev.accuracy)
    return ev


def system_sweep(cfg: ExperimentConfig, param: str, values) -> dict:
    """Retrain and evaluate per value of ``L`` or ``K``; topology and seeds stay fixed."""
    if param not in ("L", "K"):
        raise ValueError(f"system sweep supports L or K, got {param!r}")
    values = [int(v) for v in values]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            evs = list(pool.map(_sweep_point, [cfg] * len(values), [param] * len(values), values))
    else:
        evs = [_sweep_point(cfg, param, v) for v in values]
    return dict(zip(values, evs))


def threshold_sweep(model: MlpModel, cfg: ExperimentConfig, dep: Deployment, epsilons=None):
    """P_E(tau) per activation probability from one calibration set.

    FA and MD rates come from held-out calibration slots; each epsilon only
    re-weights them. Returns ``{epsilon: (tau_star, table)}``.
    """
    cal = eval_dataset(cfg, dep, first_slot=CALIBRATION_FIRST_SLOT)
    scores = predict(model, cal.features)
    return {float(e): calibrate_threshold(scores, cal.labels, float(e), cfg.tau_step)
            for e in (epsilons or cfg.epsilons)}


def perturbation_sweep(model: MlpModel, features, labels, thetas, rng: SeededRng) -> dict[float, RocCurve]:
    out = {}
    for th in thetas:
        x = perturb_features(features, float(th), rng.split(f"theta-{th}"))
        out[float(th)] = roc(predict(model, x), labels)
    return out


def quantization_sweep(model: MlpModel, features, labels, formats, gain: float) -> dict[str, RocCurve]:
    out = {}
    for f in formats:
        fmt = f if isinstance(f, FixedPointFormat) else FixedPointFormat.parse(f)
        out[fmt.label] = roc(predict(model, quantize_features(features, fmt, gain)), labels)
    return out


@dataclass(frozen=True)
class ParetoPoint:
    Z: int
    V: int
    params: int
    best_train_loss: float
    best_val_loss: float


def pareto_sweep(cfg: ExperimentConfig, Z_values=None, V_values=None) -> list[ParetoPoint]:
    dep = build_deployment(cfg.system, cfg.seeds)
    ds = generate_dataset(dep, cfg.train_slots, cfg.ap_policy, seed=cfg.seeds.activity)
    s = cfg.system
    points = []
    for Z in (Z_values or cfg.pareto_Z):
        for V in (V_values or cfg.pareto_V):
            arch = MlpArchitecture.for_system(s.num_users, s.pilot_length, s.num_antennas, Z, V)
            res = train_on_dataset(ds, arch, cfg.train, cfg.seeds)
            best_train = min(tr for _, tr, _ in res.trace)
            points.append(ParetoPoint(Z, V, parameter_count(arch), best_train, res.best_val_loss))
            log.info("pareto Z=%d V=%d params=%d train=%.5f val=%.5f", Z, V, points[-1].params, best_train,
                     res.best_val_loss)
    return points


def pareto_front(points, key=lambda p: (p.params, p.best_train_loss)) -> list:
    """Points not dominated in (complexity, loss): nothing else is <= on both and < on one."""
    keyed = [key(p) for p in points]
    front = []
    for i, (c, l) in enumerate(keyed):
        dominated = any(c2 <= c and l2 <= l and (c2 < c or l2 < l) for j, (c2, l2) in enumerate(keyed) if j != i)
        if not dominated:
            front.append(points[i])
    return front


def snr_cdf(cfg: ExperimentConfig) -> list[tuple[str, np.ndarray, float]]:
    """Per-configuration sorted SNR samples (dB) at the dominant AP and the coverage target.

    Configurations span scenario x area x AP count; each pools
    ``snr_realizations`` independent topologies.
    """
    out = []
    for scen in cfg.snr_scenarios:
        for area in cfg.snr_areas_m:
            for M in cfg.snr_aps:
                if scen == cfg.scenario:
                    sys_cfg = cfg.system.replace(area_side_m=float(area), num_aps=int(M))
                else:
                    sys_cfg = preset(scen, area_side_m=float(area), num_aps=int(M),
                                     num_users=cfg.system.num_users, tx_power_w=cfg.system.tx_power_w,
                                     noise_power_dbm=cfg.system.noise_power_dbm)
                samples = []
                for r in range(cfg.snr_realizations):
                    seeds = dataclasses.replace(cfg.seeds, topology=cfg.seeds.topology + r,
                                                channel=cfg.seeds.channel + r)
                    dep = build_deployment(sys_cfg, seeds)
                    samples.append(snr_per_device(dep.beta, dep.power))
                s = np.sort(np.concatenate(samples))
                label = f"{scen}|D={area:g}m|M={M}"
                out.append((label, s, snr_target(s, cfg.coverage)))
    return out
