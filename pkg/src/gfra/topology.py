"""AP and UE placement in a square deployment area."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .numerics import SeededRng

__all__ = [
    "PlacementError",
    "TopologyConfig",
    "Topology",
    "generate_topology",
    "distance_2d",
    "distance_3d",
    "pairwise_distance_2d",
]

# Rejection budget per placed point.
RETRY_BUDGET = 100_000
_CHUNK = 512


class PlacementError(RuntimeError):
    """Raised when a point cannot be placed within the retry budget."""

    def __init__(self, constraint: str, kind: str, index: int):
        super().__init__(
            f"could not place {kind} #{index} within {RETRY_BUDGET} draws: "
            f"constraint '{constraint}' is infeasible"
        )
        self.constraint = constraint


@dataclass(frozen=True)
class TopologyConfig:
    area_side_m: float = 500.0
    num_aps: int = 20
    num_users: int = 100
    edge_distance_m: float = 50.0
    min_ue_ap_distance_m: float = 10.0
    min_ap_ap_distance_m: float = 15.0
    ap_height_m: float = 12.0
    ue_height_m: float = 1.5

    def __post_init__(self):
        if self.num_aps < 1 or self.num_users < 1:
            raise ValueError("num_aps and num_users must be >= 1")
        dists = (self.edge_distance_m, self.min_ue_ap_distance_m, self.min_ap_ap_distance_m)
        if any(d < 0 for d in dists):
            raise ValueError("distances must be non-negative")
        if not self.area_side_m > 2 * self.edge_distance_m:
            raise ValueError("area_side_m must exceed twice the edge distance")


@dataclass(frozen=True)
class Topology:
    ap_positions: np.ndarray  # (M, 2) meters
    ue_positions: np.ndarray  # (K, 2) meters
    config: TopologyConfig

    @property
    def num_aps(self) -> int:
        return self.ap_positions.shape[0]

    @property
    def num_users(self) -> int:
        return self.ue_positions.shape[0]

    def distances_2d(self) -> np.ndarray:
        """(M, K) horizontal AP-UE distances."""
        return pairwise_distance_2d(self.ap_positions, self.ue_positions)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        buf.write("# units: kind=label, x_m=meters, y_m=meters\n")
        w.writerow(["kind", "x_m", "y_m"])
        for kind, pts in (("ap", self.ap_positions), ("ue", self.ue_positions)):
            for x, y in pts:
                w.writerow([kind, repr(float(x)), repr(float(y))])
        return buf.getvalue()


def distance_2d(p, q) -> float:
    return float(np.hypot(p[0] - q[0], p[1] - q[1]))


def distance_3d(p, q, h_bs: float, h_ut: float) -> float:
    return float(np.hypot(distance_2d(p, q), h_bs - h_ut))


def pairwise_distance_2d(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def _place(rng, n, lo, hi, kind, checks):
    """Uniform rejection sampling of ``n`` points in ``[lo, hi]^2``.

    ``checks`` is a list of ``(name, fn)``; ``fn(candidates, placed)`` returns a
    boolean mask of acceptable candidates.
    """
    placed = np.empty((0, 2))
    for i in range(n):
        drawn = 0
        while True:
            if drawn >= RETRY_BUDGET:
                raise PlacementError(failed, kind, i)
            cand = rng.uniform(lo, hi, size=(_CHUNK, 2))
            ok = np.ones(_CHUNK, dtype=bool)
            failed = None
            for name, fn in checks:
                mask = fn(cand, placed)
                if failed is None and not (ok & mask).any():
                    failed = name
                ok &= mask
            hits = np.flatnonzero(ok)
            if hits.size:
                placed = np.vstack([placed, cand[hits[0]]])
                break
            drawn += _CHUNK
    return placed


def generate_topology(cfg: TopologyConfig, rng: SeededRng) -> Topology:
    """Place APs inside the edge margin, then UEs anywhere in the area.

    APs keep ``min_ap_ap_distance_m`` from each other; UEs keep
    ``min_ue_ap_distance_m`` from every AP.
    """
    d = cfg.area_side_m
    edge = cfg.edge_distance_m

    def ap_spacing(cand, placed):
        if placed.size == 0:
            return np.ones(len(cand), dtype=bool)
        return pairwise_distance_2d(cand, placed).min(axis=1) >= cfg.min_ap_ap_distance_m

    aps = _place(rng.split("ap"), cfg.num_aps, edge, d - edge, "ap",
                 [("min_ap_ap_distance_m", ap_spacing)])

    def ue_clearance(cand, _placed):
        return pairwise_distance_2d(cand, aps).min(axis=1) >= cfg.min_ue_ap_distance_m

    ues = _place(rng.split("ue"), cfg.num_users, 0.0, d, "ue",
                 [("min_ue_ap_distance_m", ue_clearance)])
    return Topology(ap_positions=aps, ue_positions=ues, config=cfg)
