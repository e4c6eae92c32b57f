"""Command-line front end.

    ncsim run <config.json> [--seed N] [--out DIR]
    ncsim presets
    ncsim validate <config.json>

A config either names a preset or points at a network spec file plus
stimulus blocks:

    {"experiment": "my-run",
     "preset": "fig12-swta",            # or "network": "net.json"
     "overrides": {...},                # preset knobs, optional
     "stimuli": [ ... ],                # network mode only
     "sim": {"dt": 1e-4, "t_end": 1.0, "seed": 0},
     "out_dir": "results"}

Stimulus blocks (network mode):
    {"kind": "poisson", "population": p, "slot": s, "rate": Hz,
     "t_start": s, "t_end": s, "neurons": [..] | null, "label": str}
    {"kind": "regular", ...same fields minus label...}
    {"kind": "current", "population": p, "i_amp": A,
     "t_start": s, "t_end": s, "neurons": [..] | null}

Outputs: spikes_<label>.csv per record, rate series per population,
trace CSVs when recorded, and summary.json with the headline metrics.
NCSIM_THREADS caps engine workers; results are worker-count invariant.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .engine import (
    CurrentStep,
    PoissonStimulus,
    SimConfig,
    SpikeStimulus,
    rate_estimate,
    regular_train,
    run,
)
from .network import NetworkSpec
from .presets import PRESETS, PresetResult

SUMMARY_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid experiment configuration; message carries the field path."""


def _require(cond, where, msg):
    if not cond:
        raise ConfigError(f"{where}: {msg}")


def _parse_stimulus(block: dict, idx: int, net: NetworkSpec):
    where = f"stimuli[{idx}]"
    _require(isinstance(block, dict), where, "must be an object")
    kind = block.get("kind")
    _require(kind in ("poisson", "regular", "current"), where,
             f"unknown kind {kind!r}")
    pop = block.get("population")
    _require(isinstance(pop, str), where, "population must be a string")
    try:
        pop_spec = net.population(pop)
    except KeyError:
        raise ConfigError(f"{where}: unknown population {pop!r}")
    neurons = block.get("neurons")
    if neurons is not None:
        _require(isinstance(neurons, list) and
                 all(isinstance(n, int) and 0 <= n < pop_spec.size for n in neurons),
                 where, "neurons must be a list of valid indices")
        neurons = tuple(neurons)
    t0 = block.get("t_start", 0.0)
    t1 = block.get("t_end")
    _require(isinstance(t0, (int, float)) and isinstance(t1, (int, float)) and t1 > t0,
             where, "need numeric t_start < t_end")
    if kind == "current":
        amp = block.get("i_amp")
        _require(isinstance(amp, (int, float)), where, "i_amp must be numeric")
        return CurrentStep(pop, float(amp), float(t0), float(t1), neurons)
    rate = block.get("rate")
    _require(isinstance(rate, (int, float)) and rate >= 0, where,
             "rate must be a non-negative number")
    slot = block.get("slot")
    _require(isinstance(slot, str) and slot in pop_spec.slots, where,
             f"unknown slot {slot!r} of population {pop!r}")
    weight = block.get("weight")
    if kind == "poisson":
        return PoissonStimulus(pop, slot, float(rate), float(t0), float(t1),
                               neurons, weight, block.get("label", f"stim{idx}"))
    train = regular_train(float(rate), float(t0), float(t1))
    targets = neurons if neurons is not None else range(pop_spec.size)
    return SpikeStimulus.from_arrays(pop, slot, [(n, train) for n in targets], weight)


def load_config(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})")
    _require(isinstance(cfg, dict), path, "top level must be an object")
    return cfg


def validate_config(cfg: dict, base_dir: str = "."):
    """Full validation; returns the resolved pieces without running."""
    _require(isinstance(cfg.get("experiment", "run"), str), "experiment",
             "must be a string")
    has_preset = "preset" in cfg
    has_network = "network" in cfg
    _require(has_preset != has_network, "config",
             "exactly one of 'preset' or 'network' is required")
    sim = cfg.get("sim", {})
    _require(isinstance(sim, dict), "sim", "must be an object")
    for key in ("dt", "t_end"):
        if key in sim:
            _require(isinstance(sim[key], (int, float)) and sim[key] > 0,
                     f"sim.{key}", "must be a positive number")
    if "seed" in sim:
        _require(isinstance(sim["seed"], int), "sim.seed", "must be an integer")
    if has_preset:
        _require(cfg["preset"] in PRESETS, "preset",
                 f"unknown preset {cfg['preset']!r}; see `ncsim presets`")
        overrides = cfg.get("overrides", {})
        _require(isinstance(overrides, dict), "overrides", "must be an object")
        if "glyph_path" in overrides:
            p = os.path.join(base_dir, overrides["glyph_path"])
            _require(os.path.exists(p), "overrides.glyph_path",
                     f"file not found: {p}")
        return ("preset", cfg["preset"], overrides, sim)
    net_path = os.path.join(base_dir, cfg["network"])
    _require(os.path.exists(net_path), "network", f"file not found: {net_path}")
    try:
        net = NetworkSpec.load(net_path)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"network: invalid spec ({exc})")
    _require("t_end" in sim, "sim.t_end", "required in network mode")
    blocks = cfg.get("stimuli", [])
    _require(isinstance(blocks, list), "stimuli", "must be a list")
    stimuli = [_parse_stimulus(b, i, net) for i, b in enumerate(blocks)]
    return ("network", net, stimuli, sim)


def _write_outputs(out_dir: str, experiment: str, preset_id, seed: int,
                   result: PresetResult) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for label, rec in result.records.items():
        rec.save_spikes_csv(os.path.join(out_dir, f"spikes_{label}.csv"))
        if rec.traces:
            rec.save_traces_csv(os.path.join(out_dir, f"traces_{label}.csv"))
        rec.save_metadata_json(os.path.join(out_dir, f"metadata_{label}.json"))
        for pop, size in rec.metadata["populations"].items():
            times, rates = rate_estimate(rec, 0.1, pop)
            path = os.path.join(out_dir, f"rates_{label}_{pop}.csv")
            with open(path, "w") as fh:
                fh.write("t,rate_hz\n")
                for t, r in zip(times, rates):
                    fh.write(f"{t!r},{r!r}\n")
    summary = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "experiment": experiment,
        "preset": preset_id,
        "seed": seed,
        "metrics": result.summary,
        "warnings": sorted({w for rec in result.records.values()
                            for w in rec.metadata["warnings"]}),
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    kind, *resolved = validate_config(cfg, base_dir)
    sim = resolved[-1]
    seed = args.seed if args.seed is not None else int(sim.get("seed", 0))
    out_dir = args.out or cfg.get("out_dir") or "ncsim-out"
    experiment = cfg.get("experiment", "run")

    if kind == "preset":
        preset_id, overrides, _ = resolved
        _, runner = PRESETS[preset_id]
        result = runner(seed=seed, overrides=overrides or None)
    else:
        net, stimuli, _ = resolved
        preset_id = None
        sim_cfg = SimConfig(
            dt=float(sim.get("dt", 1e-4)),
            t_end=float(sim["t_end"]),
            seed=seed,
        )
        rec = run(net, stimuli, sim_cfg)
        result = PresetResult(
            records={"run": rec},
            summary={
                "seed": seed,
                "n_spikes": rec.n_spikes,
                "events": rec.metadata["events"],
            },
        )
    _write_outputs(out_dir, experiment, preset_id, seed, result)
    print(f"wrote {out_dir}/summary.json")
    return 0


def cmd_presets(_args) -> int:
    width = max(len(k) for k in PRESETS)
    for key, (description, _) in PRESETS.items():
        print(f"{key:<{width}}  {description}")
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    validate_config(cfg, os.path.dirname(os.path.abspath(args.config)))
    print(f"{args.config}: ok")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ncsim",
        description="Neuromorphic circuit simulator: preset experiments and "
                    "custom network runs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", help="experiment config (JSON)")
    p_run.add_argument("--seed", type=int, default=None, help="override the seed")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_presets = sub.add_parser("presets", help="list available presets")
    p_presets.set_defaults(func=cmd_presets)

    p_val = sub.add_parser("validate", help="validate a config without running")
    p_val.add_argument("config", help="experiment config (JSON)")
    p_val.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
