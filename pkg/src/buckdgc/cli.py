"""Command-line entry point: train, eval, sweep, simulate.

Every run resolves its configuration (defaults <- config file <- flags),
archives the resolved form next to its outputs, and derives all randomness
from the single --seed.  Exit codes: 0 success, 1 usage or configuration
error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from buckdgc.circuit import SimulationError
from buckdgc.config import ConfigError, parse_config_file, resolve_run_config
from buckdgc.envs import make_env
from buckdgc.evaluate import (
    SCENARIOS,
    SWEEP_VARIATIONS,
    Scenario,
    compute_metrics,
    open_loop_trace,
    run_scenario,
    sweep,
    write_metrics_csv,
)
from buckdgc.nets import CheckpointError, load_checkpoint
from buckdgc.ppo import TrainingDiverged, train

USAGE_ERROR = 1
RUNTIME_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="buckdgc",
        description="Train and evaluate gate-level and PWM duty-ratio "
        "controllers for a buck converter.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run PPO training")
    p_train.add_argument("variant", choices=("dgc", "pwm"))
    p_train.add_argument("--config", type=Path, help="config file path")
    p_train.add_argument("--seed", type=int, help="root seed (overrides config)")
    p_train.add_argument("--out", type=Path, help="output directory (overrides config)")
    p_train.add_argument("--steps", type=int, help="total environment steps (overrides config)")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a scenario")
    p_eval.add_argument("checkpoint", type=Path)
    p_eval.add_argument("scenario", help="built-in name or scenario file path")
    p_eval.add_argument("--config", type=Path, help="config file (circuit/env overrides)")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", type=Path, default=Path("evals"))

    p_sweep = sub.add_parser("sweep", help="parameter-variation sweep on a checkpoint")
    p_sweep.add_argument("checkpoint", type=Path)
    p_sweep.add_argument("--config", type=Path)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--out", type=Path, default=Path("evals"))

    p_sim = sub.add_parser("simulate", help="open-loop sanity simulation")
    group = p_sim.add_mutually_exclusive_group(required=True)
    group.add_argument("--duty", type=float, help="fixed duty ratio at the PWM period")
    group.add_argument("--pattern", help="repeating 1-us gate pattern, e.g. 1110")
    p_sim.add_argument("--load", type=float, help="load resistance (overrides config)")
    p_sim.add_argument("--horizon", type=float, default=5e-3, help="simulated seconds")
    p_sim.add_argument("--config", type=Path)
    p_sim.add_argument("--out", type=Path, default=Path("sim"))
    return parser


_SCENARIO_KEYS = {
    "r_initial": float,
    "r_final": float,
    "preroll_s": float,
    "horizon_s": float,
    "noise_v": float,
    "noise_i": float,
}
_SCENARIO_OVERRIDE_KEYS = {
    "input_voltage": "E",
    "inductance": "L",
    "inductor_esr": "R_L",
    "capacitance": "C",
    "capacitor_esr": "R_C",
}


def load_scenario(name_or_path: str) -> Scenario:
    """Built-in scenario by name, or a [scenario]-section file by path."""
    if name_or_path in SCENARIOS:
        return SCENARIOS[name_or_path]
    path = Path(name_or_path)
    if not path.exists():
        known = ", ".join(sorted(SCENARIOS) + ["sweep-params"])
        raise ConfigError(f"unknown scenario {name_or_path!r} (built-ins: {known})")
    fields = {}
    overrides = []
    section = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
                if section != "scenario":
                    raise ConfigError(f"{path}:{lineno}: expected [scenario], got [{section}]")
                continue
            if section != "scenario" or "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value' inside [scenario]")
            key, _, text = line.partition("=")
            key = key.strip()
            text = text.strip()
            if key in _SCENARIO_KEYS:
                try:
                    fields[key] = _SCENARIO_KEYS[key](text)
                except ValueError as err:
                    raise ConfigError(f"{path}:{lineno}: bad value for {key}: {err}") from err
            elif key in _SCENARIO_OVERRIDE_KEYS:
                overrides.append((_SCENARIO_OVERRIDE_KEYS[key], float(text)))
            else:
                raise ConfigError(f"{path}:{lineno}: unknown scenario key {key!r}")
    return Scenario(name=path.stem, overrides=tuple(overrides), **fields)


def cmd_train(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if args.out is not None:
        overrides["run.out_dir"] = str(args.out)
    if args.steps is not None:
        overrides["ppo.total_steps"] = args.steps
    run = resolve_run_config(args.variant, args.config, overrides)
    out_dir = Path(run.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run.archive(out_dir / "resolved_config.ini")

    def factory(seed_seq):
        return make_env(run.env, seed=seed_seq)

    print(f"training variant={run.variant} seed={run.seed} steps={run.ppo.total_steps} "
          f"out={out_dir} config_hash={run.config_hash()}")
    train(
        factory,
        run.ppo,
        run.variant,
        seed=run.seed,
        out_dir=out_dir,
        config_hash=run.config_hash(),
        verbose=True,
    )
    print(f"final checkpoint: {out_dir / 'checkpoint_final.txt'}")
    return 0


def _metric_summary(name, metrics) -> str:
    rec = f"{metrics.recovery_s * 1e3:.3f} ms" if metrics.recovered else "not recovered"
    return (
        f"{name}: v_min={metrics.v_min:.2f} V  v_max={metrics.v_max:.2f} V  "
        f"recovery={rec}  ripple={metrics.ripple_pp * 1e3:.1f} mV  "
        f"mean|err|={metrics.mean_abs_err * 1e3:.1f} mV  "
        f"switching={metrics.switching_hz / 1e3:.1f} kHz"
    )


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    circuit = None
    if args.config is not None:
        run = resolve_run_config(ckpt.variant, args.config)
        circuit = run.circuit
    args.out.mkdir(parents=True, exist_ok=True)
    ckpt_id = args.checkpoint.stem

    if args.scenario == "sweep-params":
        return _run_sweep(ckpt, ckpt_id, args, circuit)

    scenario = load_scenario(args.scenario)
    trace = run_scenario(ckpt, scenario, seed=args.seed, circuit=circuit)
    metrics = compute_metrics(trace)
    trace_path = args.out / f"{scenario.name}__{ckpt_id}.csv"
    metrics_path = args.out / f"{scenario.name}__{ckpt_id}__metrics.csv"
    trace.to_csv(trace_path)
    write_metrics_csv(metrics_path, [(scenario.name, metrics, None)])
    print(_metric_summary(scenario.name, metrics))
    print(f"trace: {trace_path}")
    print(f"metrics: {metrics_path}")
    return 0


def _run_sweep(ckpt, ckpt_id, args, circuit) -> int:
    rows = sweep(ckpt, SWEEP_VARIATIONS, seed=args.seed, circuit=circuit)
    metrics_path = args.out / f"sweep-params__{ckpt_id}__metrics.csv"
    write_metrics_csv(metrics_path, [(s.name, m, e) for s, m, e, _ in rows])
    for scn, metrics, error, trace in rows:
        if trace is not None:
            trace.to_csv(args.out / f"sweep-{scn.name}__{ckpt_id}.csv")
        if error is not None:
            print(f"{scn.name}: FAILED ({error})")
        else:
            print(_metric_summary(scn.name, metrics))
    print(f"metrics: {metrics_path}")
    return 0


def cmd_sweep(args) -> int:
    args.scenario = "sweep-params"
    return cmd_eval(args)


def cmd_simulate(args) -> int:
    variant = "dgc"
    run = resolve_run_config(variant, args.config)
    params = run.circuit
    if args.load is not None:
        params = params.with_load(args.load)
    trace = open_loop_trace(
        params,
        args.horizon,
        duty=args.duty,
        pattern=args.pattern,
        v_ref=run.env.v_ref,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    tag = f"duty{args.duty}" if args.duty is not None else f"pattern{args.pattern}"
    path = args.out / f"openloop__{tag}.csv"
    trace.to_csv(path)
    final = trace.v_out[trace.time_s > trace.time_s[-1] - 1e-3]
    print(f"samples={len(trace)} mean_v_out_final_ms={final.mean():.4f} V "
          f"i_L_end={trace.i_l[-1]:.4f} A")
    print(f"trace: {path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return USAGE_ERROR if err.code not in (0, None) else 0
    try:
        if args.command == "train":
            return cmd_train(args)
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        parser.error(f"unknown command {args.command}")
    except (ConfigError, FileNotFoundError, CheckpointError) as err:
        print(f"error: {err}", file=sys.stderr)
        return USAGE_ERROR
    except (SimulationError, TrainingDiverged, ValueError) as err:
        print(f"runtime failure: {err}", file=sys.stderr)
        return RUNTIME_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
