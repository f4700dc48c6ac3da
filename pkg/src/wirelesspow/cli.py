"""Command-line entry point.

    wirelesspow analyze    closed-form numbers for one (q_w, link) point, as JSON
    wirelesspow simulate   one Monte-Carlo ensemble, written to the output directory
    wirelesspow sweep      one of the four experiment datasets (CSV + JSON sidecar)
    wirelesspow chain-demo tamper demo on a small mined chain

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import math
import os
import sys
from typing import Any, Mapping, Optional, Sequence

from . import __version__
from .channel import FADING_MODELS, LinkParams, block_delivery_prob
from .experiments import DEFAULT_SEED, KINDS, ExperimentConfig, run_experiment
from .ledger import chain_demo
from .race import (
    RaceParams,
    advantage_ratio,
    catch_up_probability,
    effective_round_prob,
    min_attacker_power,
    region,
    run_ensemble,
)

log = logging.getLogger("wirelesspow")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

CONFIG_KEYS_HELP = """\
config keys (flat `key = value` file, `#` comments; flags override the file):
  experiment         tradeoff_surface | gap_trajectories | attack_cdf | success_vs_depth
  q_w                attacker block-finding probability, [0, 1] (default 0.4)
  q_c                force the honest delivery probability, [0, 1] (default: from the link)
  sinr_db            average SINR in dB (default 45)
  rayleigh_scale     Rayleigh amplitude scale sigma (default 0.5)
  bits_per_packet    packet length in bits (default 8000; block = 8 Mbit)
  packets_per_block  packets per block (default 1000)
  max_attempts       transmissions allowed per packet, retries included (default 3)
  fading             fast (per-bit fades) | block (one fade per attempt) (default fast)
  z                  attacker deficit in blocks (default 6)
  target_prob        success probability for the minimum-power bound (default 1)
  strict             true: attacker must get one block ahead, not just tie (default false)
  trials             Monte-Carlo trials per point (default 1000)
  horizon            effective-round cap per trial (default 1000)
  master_seed        64-bit seed (default 0x5EEDB10C = 1592635660)
  workers            worker processes for ensembles (default 1)
  q_w_grid           list [0.1, 0.2] or range "0.1:0.9:0.05" (tradeoff_surface)
  sinr_grid          list or range "40:65:1", in dB (tradeoff_surface)
  attempts_grid      list of max_attempts values, e.g. [3, 6] (tradeoff_surface)
  points             list of [q_w, sinr_db] pairs (gap_trajectories, attack_cdf, success_vs_depth)
  z_range            list or range "1:12:1" (success_vs_depth)
"""

LINK_KEYS = ("sinr_db", "rayleigh_scale", "bits_per_packet", "packets_per_block", "max_attempts", "fading")
INT_KEYS = ("bits_per_packet", "packets_per_block", "max_attempts", "z", "trials", "horizon", "master_seed", "workers")
FLOAT_KEYS = ("q_w", "q_c", "sinr_db", "rayleigh_scale", "target_prob")
GRID_KEYS = ("q_w_grid", "sinr_grid", "attempts_grid", "z_range")
KNOWN_KEYS = frozenset(
    ("experiment", "strict", "fading", "points") + INT_KEYS + FLOAT_KEYS + GRID_KEYS
)


class ConfigError(Exception):
    def __init__(self, key: Optional[str], message: str):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


@dataclasses.dataclass
class RunConfig:
    """Everything a subcommand needs: the experiment config plus single-point knobs."""

    experiment: ExperimentConfig
    q_w: float = 0.4
    target_prob: float = 1.0

    @property
    def link(self) -> LinkParams:
        return self.experiment.link


def _parse_value(raw: str) -> Any:
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        pass
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "'\"":
        return raw[1:-1]
    return raw


def _expand_range(key: str, value: Any) -> list:
    if isinstance(value, str):
        parts = value.split(":")
        if len(parts) != 3:
            raise ConfigError(key, f"expected a list or 'start:stop:step', got {value!r}")
        try:
            start, stop, step = (float(p) for p in parts)
        except ValueError:
            raise ConfigError(key, f"bad range {value!r}") from None
        if step <= 0 or stop < start:
            raise ConfigError(key, f"bad range {value!r}")
        n = int(math.floor((stop - start) / step + 1e-9))
        return [round(start + i * step, 10) for i in range(n + 1)]
    if isinstance(value, (int, float)):
        return [value]
    if isinstance(value, list):
        return value
    raise ConfigError(key, f"expected a list or range, got {value!r}")


def read_config_file(path: str) -> dict:
    """Parse a flat key-value file into a raw mapping (values not yet validated)."""
    if not os.path.isfile(path):
        raise ConfigError(None, f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    with open(path, encoding="utf-8") as f:
        text = f.read()
    try:
        parser.read_string("[config]\n" + text, source=path)
    except configparser.Error as exc:
        raise ConfigError(None, f"cannot parse {path}: {exc}") from None
    return {k: _parse_value(v) for k, v in parser.items("config")}


def build_config(values: Mapping[str, Any]) -> RunConfig:
    """Validate a raw mapping and fill defaults."""
    unknown = sorted(set(values) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    v = dict(values)

    for key in INT_KEYS:
        if key in v:
            try:
                val = v[key]
                if isinstance(val, str):
                    val = int(val, 0)
                if isinstance(val, bool) or int(val) != val:
                    raise ValueError
                v[key] = int(val)
            except (TypeError, ValueError):
                raise ConfigError(key, f"expected an integer, got {values[key]!r}") from None
    for key in FLOAT_KEYS:
        if key in v:
            try:
                if isinstance(v[key], bool):
                    raise ValueError
                v[key] = float(v[key])
            except (TypeError, ValueError):
                raise ConfigError(key, f"expected a number, got {values[key]!r}") from None
    for key in ("q_w", "q_c"):
        if key in v and not 0.0 <= v[key] <= 1.0:
            raise ConfigError(key, f"must be in [0, 1], got {v[key]}")
    if "target_prob" in v and not 0.0 < v["target_prob"] <= 1.0:
        raise ConfigError("target_prob", f"must be in (0, 1], got {v['target_prob']}")
    if "strict" in v and not isinstance(v["strict"], bool):
        raise ConfigError("strict", "expected true or false")
    if "experiment" in v and v["experiment"] not in KINDS:
        raise ConfigError("experiment", f"must be one of {', '.join(KINDS)}")
    if "fading" in v and v["fading"] not in FADING_MODELS:
        raise ConfigError("fading", f"must be one of {', '.join(FADING_MODELS)}")

    link_kwargs = {k: v[k] for k in LINK_KEYS if k in v}
    try:
        link = LinkParams(**link_kwargs)
    except ValueError as exc:
        key = next((k for k in link_kwargs if k in str(exc)), None)
        raise ConfigError(key, str(exc)) from None

    exp_kwargs: dict[str, Any] = {"link": link}
    for key in ("experiment", "q_c", "z", "trials", "horizon", "master_seed", "strict", "workers"):
        if key in v:
            exp_kwargs[key] = v[key]
    for key in GRID_KEYS:
        if key in v:
            exp_kwargs[key] = tuple(_expand_range(key, v[key]))
    if "points" in v:
        pts = v["points"]
        if not isinstance(pts, list) or not all(isinstance(p, list) and len(p) == 2 for p in pts):
            raise ConfigError("points", "expected a list of [q_w, sinr_db] pairs")
        exp_kwargs["points"] = tuple(tuple(p) for p in pts)

    for key in ("z", "trials", "horizon", "workers"):
        if key in exp_kwargs and exp_kwargs[key] < 1:
            raise ConfigError(key, "must be a positive integer")
    if "master_seed" in exp_kwargs and not 0 <= exp_kwargs["master_seed"] < 2**64:
        raise ConfigError("master_seed", "must be a 64-bit unsigned integer")
    try:
        experiment = ExperimentConfig(**exp_kwargs)
    except (TypeError, ValueError) as exc:
        key = next((k for k in GRID_KEYS + ("points", "q_w", "z") if k in str(exc)), None)
        raise ConfigError(key, str(exc)) from None
    return RunConfig(experiment, q_w=v.get("q_w", 0.4), target_prob=v.get("target_prob", 1.0))


def load_config(path: str, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    values = read_config_file(path)
    values.update(overrides or {})
    return build_config(values)


def _point_q_c(cfg: RunConfig) -> float:
    if cfg.experiment.q_c is not None:
        return cfg.experiment.q_c
    return block_delivery_prob(cfg.link).block_delivery


def analyze(cfg: RunConfig) -> dict:
    link = cfg.link
    z = cfg.experiment.z
    rel = block_delivery_prob(link)
    qc = _point_q_c(cfg)
    out = {
        "q_w": cfg.q_w,
        "sinr_db": link.sinr_db,
        "max_attempts": link.max_attempts,
        "z": z,
        "avg_ber": rel.avg_ber,
        "q_c": qc,
        "q_c_forced": cfg.experiment.q_c is not None,
        "q": effective_round_prob(cfg.q_w, qc),
        "Q": advantage_ratio(cfg.q_w, qc),
        "region": region(cfg.q_w, qc),
        "P": catch_up_probability(cfg.q_w, qc, z, cfg.experiment.strict),
        "target_prob": cfg.target_prob,
        "min_attacker_power": min_attacker_power(qc, z, cfg.target_prob) if qc > 0 else 0.0,
    }
    if math.isinf(out["Q"]):
        out["Q"] = None  # JSON has no infinity
    return out


def simulate(cfg: RunConfig) -> dict:
    exp = cfg.experiment
    qc = _point_q_c(cfg)
    params = RaceParams(cfg.q_w, qc, exp.z, exp.horizon, exp.strict)
    stats = run_ensemble(params, exp.trials, exp.master_seed, exp.workers)
    return {
        "version": __version__,
        "params": dataclasses.asdict(params),
        "link": dataclasses.asdict(cfg.link),
        "master_seed": exp.master_seed,
        "p_theory": params.p_theory,
        "standard_error": stats.standard_error(),
        **stats.to_dict(),
    }


def _write_json(path: str, payload: dict) -> None:
    tmp = path + ".partial"
    try:
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2)
            f.write("\n")
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wirelesspow",
        description="Communication reliability vs computing power in proof-of-work security.",
        epilog=CONFIG_KEYS_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--q-w", dest="q_w", type=float, help="attacker block-finding probability")
    common.add_argument("--q-c", dest="q_c", type=float, help="force honest delivery probability")
    common.add_argument("--sinr-db", dest="sinr_db", type=float, help="average SINR (dB)")
    common.add_argument("--rayleigh-scale", dest="rayleigh_scale", type=float)
    common.add_argument("--bits-per-packet", dest="bits_per_packet", type=int)
    common.add_argument("--packets-per-block", dest="packets_per_block", type=int)
    common.add_argument("--max-attempts", dest="max_attempts", type=int, help="transmissions per packet")
    common.add_argument("--fading", choices=FADING_MODELS)
    common.add_argument("--z", type=int, help="attacker deficit in blocks")
    common.add_argument("--target", dest="target_prob", type=float, help="target success probability for the power bound")
    common.add_argument("--strict", action="store_const", const=True, default=None)

    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--trials", type=int)
    mc.add_argument("--horizon", type=int)
    mc.add_argument("--seed", dest="master_seed", type=lambda s: int(s, 0), help=f"master seed (default {DEFAULT_SEED:#x})")
    mc.add_argument("--workers", type=int)
    mc.add_argument("--out", dest="out_dir", default="results", help="output directory (default ./results)")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="closed-form analysis of one point")
    sub.add_parser("simulate", parents=[common, mc], help="Monte-Carlo ensemble for one point")
    sweep = sub.add_parser("sweep", parents=[common, mc], help="generate an experiment dataset")
    sweep.add_argument("--experiment", choices=KINDS)
    sub.add_parser("chain-demo", help="mine a small chain, tamper with it, and verify")
    return parser


_FLAG_KEYS = (
    "q_w", "q_c", "sinr_db", "rayleigh_scale", "bits_per_packet", "packets_per_block",
    "max_attempts", "fading", "z", "target_prob", "strict", "trials", "horizon",
    "master_seed", "workers", "experiment",
)


def _resolve(args: argparse.Namespace) -> RunConfig:
    overrides = {k: getattr(args, k) for k in _FLAG_KEYS if getattr(args, k, None) is not None}
    if args.config:
        return load_config(args.config, overrides)
    return build_config(overrides)


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )

    if args.command == "chain-demo":
        try:
            print(json.dumps(chain_demo(), indent=2))
        except Exception as exc:  # pragma: no cover
            log.error("chain demo failed: %s", exc)
            return EXIT_RUNTIME
        return EXIT_OK

    try:
        cfg = _resolve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "analyze":
            print(json.dumps(analyze(cfg), indent=2))
        elif args.command == "simulate":
            os.makedirs(args.out_dir, exist_ok=True)
            result = simulate(cfg)
            path = os.path.join(args.out_dir, "ensemble.json")
            _write_json(path, result)
            summary = {k: result[k] for k in ("trials", "successes", "empirical_success_prob", "p_theory", "standard_error")}
            summary["output"] = path
            print(json.dumps(summary, indent=2))
        elif args.command == "sweep":
            log.info("running %s", cfg.experiment.experiment)
            cfg.experiment.output_dir = args.out_dir
            dataset = run_experiment(cfg.experiment)
            csv_path, json_path = dataset.write(args.out_dir)
            print(json.dumps({"rows": len(dataset.rows), "csv": csv_path, "sidecar": json_path}))
    except (ValueError, OSError, RuntimeError) as exc:
        log.error("%s failed: %s", args.command, exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
