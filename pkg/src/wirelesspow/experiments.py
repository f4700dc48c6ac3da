"""Dataset generators for the four reproduction sweeps.

Each generator takes an :class:`ExperimentConfig` and returns a
:class:`FigureDataset` holding CSV-ready rows. Theory columns come only from
the closed forms in :mod:`wirelesspow.race` (or its Markov oracle); empirical
columns come only from :func:`wirelesspow.race.run_ensemble`.

Every grid point reuses the same master seed, so points are compared under
common random numbers.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import __version__
from .channel import LinkParams, block_delivery_prob
from .race import (
    RaceParams,
    advantage_ratio,
    catch_up_probability,
    effective_round_prob,
    first_passage_cdf,
    region,
    run_ensemble,
)

DEFAULT_SEED = 0x5EEDB10C

KINDS = ("tradeoff_surface", "gap_trajectories", "attack_cdf", "success_vs_depth")

COLUMNS = {
    "tradeoff_surface": ("q_w", "sinr_db", "max_attempts", "q_c", "Q", "region", "p_theory", "p_empirical", "trials", "master_seed"),
    "gap_trajectories": ("q_w", "sinr_db", "round", "mean_gap", "mean_gap_active", "active_fraction"),
    "attack_cdf": ("q_w", "sinr_db", "round", "cdf_theory", "cdf_empirical"),
    "success_vs_depth": ("q_w", "sinr_db", "z", "p_theory", "p_empirical"),
}

# dataset file stems
STEMS = {
    "tradeoff_surface": "tradeoff",
    "gap_trajectories": "gap",
    "attack_cdf": "cdf",
    "success_vs_depth": "depth",
}

FIGURE_POINTS = {
    "gap_trajectories": ((0.6, 60.0), (0.4, 45.0), (0.4, 60.0)),
    "attack_cdf": ((0.6, 60.0), (0.4, 45.0), (0.4, 60.0)),
    "success_vs_depth": ((0.4, 45.0), (0.4, 50.0), (0.4, 60.0)),
}


def _grid(start: float, stop: float, step: float) -> tuple[float, ...]:
    n = int(round((stop - start) / step))
    return tuple(round(start + i * step, 10) for i in range(n + 1))


@dataclass
class ExperimentConfig:
    experiment: str = "success_vs_depth"
    link: LinkParams = field(default_factory=LinkParams)
    q_w_grid: tuple = field(default_factory=lambda: _grid(0.1, 0.9, 0.05))
    sinr_grid: tuple = field(default_factory=lambda: _grid(40.0, 65.0, 1.0))
    attempts_grid: Optional[tuple] = None
    points: Optional[tuple] = None
    q_c: Optional[float] = None
    z: int = 6
    z_range: tuple = tuple(range(1, 13))
    trials: int = 1000
    horizon: int = 1000
    master_seed: int = DEFAULT_SEED
    strict: bool = False
    workers: int = 1
    output_dir: str = "."

    def __post_init__(self):
        if self.experiment not in KINDS:
            raise ValueError(f"experiment must be one of {KINDS}")
        self.q_w_grid = tuple(float(x) for x in self.q_w_grid)
        self.sinr_grid = tuple(float(x) for x in self.sinr_grid)
        self.z_range = tuple(int(x) for x in self.z_range)
        if self.attempts_grid is None:
            self.attempts_grid = (self.link.max_attempts,)
        self.attempts_grid = tuple(int(a) for a in self.attempts_grid)
        if self.points is None:
            self.points = FIGURE_POINTS.get(self.experiment, ())
        self.points = tuple((float(q), float(s)) for q, s in self.points)
        for q in self.q_w_grid + tuple(p[0] for p in self.points):
            if not 0.0 <= q <= 1.0:
                raise ValueError(f"q_w must be in [0, 1], got {q}")
        if self.q_c is not None and not 0.0 <= self.q_c <= 1.0:
            raise ValueError("q_c must be in [0, 1]")
        if any(a < 1 for a in self.attempts_grid):
            raise ValueError("max_attempts must be positive")
        if self.z < 1 or any(z < 1 for z in self.z_range):
            raise ValueError("z must be a positive integer")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["link"] = dataclasses.asdict(self.link)
        return d


@dataclass
class FigureDataset:
    kind: str
    columns: tuple
    rows: list
    provenance: dict

    @property
    def stem(self) -> str:
        return STEMS[self.kind]

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    def select(self, **match) -> list[dict]:
        out = []
        for row in self.rows:
            rec = dict(zip(self.columns, row))
            if all(rec[k] == v for k, v in match.items()):
                out.append(rec)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def write(self, out_dir: str) -> tuple[str, str]:
        """Write ``<stem>.csv`` and ``<stem>.json`` into ``out_dir``.

        Either both files land or neither does.
        """
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, self.stem + ".csv")
        json_path = os.path.join(out_dir, self.stem + ".json")
        sidecar = dict(self.provenance, timestamp=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()))
        written = []
        try:
            for path, text in ((csv_path, self.to_csv()), (json_path, json.dumps(sidecar, indent=2, default=_json_default) + "\n")):
                tmp = path + ".partial"
                written.append(tmp)
                with open(tmp, "w", encoding="utf-8", newline="") as f:
                    f.write(text)
            os.replace(csv_path + ".partial", csv_path)
            written.append(csv_path)
            os.replace(json_path + ".partial", json_path)
        except BaseException:
            for path in written:
                if os.path.exists(path):
                    os.remove(path)
            raise
        return csv_path, json_path


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj)}")


def _provenance(config: ExperimentConfig) -> dict:
    return {
        "tool": "wirelesspow",
        "version": __version__,
        "experiment": config.experiment,
        "master_seed": config.master_seed,
        "config": config.to_dict(),
    }


def _q_c_for(config: ExperimentConfig, sinr_db: float, max_attempts: Optional[int] = None) -> float:
    if config.q_c is not None:
        return float(config.q_c)
    link = dataclasses.replace(
        config.link,
        sinr_db=sinr_db,
        max_attempts=max_attempts if max_attempts is not None else config.link.max_attempts,
    )
    return block_delivery_prob(link).block_delivery


def _require(items, what: str) -> None:
    if not items:
        raise ValueError(f"empty {what}")


def tradeoff_surface(config: ExperimentConfig) -> FigureDataset:
    """Theoretical and simulated P(z) over the (q_w, SINR, max_attempts) grid."""
    _require(config.q_w_grid, "q_w grid")
    _require(config.sinr_grid, "SINR grid")
    _require(config.attempts_grid, "attempts grid")
    rows = []
    for attempts in config.attempts_grid:
        for sinr in config.sinr_grid:
            qc = _q_c_for(config, sinr, attempts)
            for q_w in config.q_w_grid:
                params = RaceParams(q_w, qc, config.z, config.horizon, config.strict)
                stats = run_ensemble(params, config.trials, config.master_seed, config.workers)
                rows.append([
                    q_w, sinr, attempts, qc, advantage_ratio(q_w, qc), region(q_w, qc),
                    catch_up_probability(q_w, qc, config.z, config.strict),
                    stats.empirical_success_prob, config.trials, config.master_seed,
                ])
    return FigureDataset("tradeoff_surface", COLUMNS["tradeoff_surface"], rows, _provenance(config))


def gap_trajectories(config: ExperimentConfig) -> FigureDataset:
    """Mean deficit per effective round, overall and over still-active trials.

    Each point's series ends at the last round any trial was still racing.
    """
    _require(config.points, "point list")
    rows = []
    for q_w, sinr in config.points:
        qc = _q_c_for(config, sinr)
        params = RaceParams(q_w, qc, config.z, config.horizon, config.strict)
        stats = run_ensemble(params, config.trials, config.master_seed, config.workers)
        for r in range(stats.max_effective_rounds + 1):
            rows.append([
                q_w, sinr, r, float(stats.mean_gap_by_round[r]),
                float(stats.mean_gap_active_by_round[r]), float(stats.active_fraction_by_round[r]),
            ])
    return FigureDataset("gap_trajectories", COLUMNS["gap_trajectories"], rows, _provenance(config))


def attack_cdf(config: ExperimentConfig) -> FigureDataset:
    """CDF of the success round, exact (Markov oracle) against simulated."""
    _require(config.points, "point list")
    depth = config.z + 1 if config.strict else config.z
    rows = []
    for q_w, sinr in config.points:
        qc = _q_c_for(config, sinr)
        theory = first_passage_cdf(effective_round_prob(q_w, qc), depth, config.horizon)
        params = RaceParams(q_w, qc, config.z, config.horizon, config.strict)
        stats = run_ensemble(params, config.trials, config.master_seed, config.workers)
        for r in range(config.horizon + 1):
            rows.append([q_w, sinr, r, float(theory[r]), float(stats.cdf_by_round[r])])
    return FigureDataset("attack_cdf", COLUMNS["attack_cdf"], rows, _provenance(config))


def success_vs_depth(config: ExperimentConfig) -> FigureDataset:
    """P(z) against z: closed form next to the success rate within the horizon."""
    _require(config.points, "point list")
    _require(config.z_range, "z range")
    rows = []
    for q_w, sinr in config.points:
        qc = _q_c_for(config, sinr)
        for z in config.z_range:
            params = RaceParams(q_w, qc, z, config.horizon, config.strict)
            stats = run_ensemble(params, config.trials, config.master_seed, config.workers)
            rows.append([q_w, sinr, z, catch_up_probability(q_w, qc, z, config.strict), stats.empirical_success_prob])
    return FigureDataset("success_vs_depth", COLUMNS["success_vs_depth"], rows, _provenance(config))


RUNNERS: dict[str, Callable[[ExperimentConfig], FigureDataset]] = {
    "tradeoff_surface": tradeoff_surface,
    "gap_trajectories": gap_trajectories,
    "attack_cdf": attack_cdf,
    "success_vs_depth": success_vs_depth,
}


def run_experiment(config: ExperimentConfig) -> FigureDataset:
    return RUNNERS[config.experiment](config)
