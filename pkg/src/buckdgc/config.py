"""Declarative run configuration: defaults, file values, flag overrides.

The config file is a plain sectioned key-value text format:

    # comment
    [ppo]
    total_steps = 200000
    gamma = 0.999

Resolution order is fixed: variant defaults, then the file, then explicit
overrides (command-line flags).  Unknown sections or keys are errors with
the file line quoted, not warnings, so typos cannot silently fall back to
defaults.  The fully resolved config serializes canonically (sorted keys);
its circuit/env/reward part is hashed into checkpoints so evaluation can
verify what an agent was trained against.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

from buckdgc.circuit import CircuitParams
from buckdgc.envs import EnvConfig, RewardParams
from buckdgc.ppo import PpoConfig

__all__ = ["ConfigError", "RunConfig", "parse_config_file", "resolve_run_config", "SCHEMA"]


class ConfigError(ValueError):
    """Bad config file or overrides; message carries file and line."""


def _float(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise ValueError("nan is not a valid config value")
    return value


def _int(text: str) -> int:
    return int(text)


def _str(text: str) -> str:
    return text


SCHEMA = {
    "circuit": {
        "input_voltage": _float,
        "inductance": _float,
        "inductor_esr": _float,
        "capacitance": _float,
        "capacitor_esr": _float,
        "load_resistance": _float,   # 'inf' for an open load
    },
    "env": {
        "v_ref": _float,
        "control_period_s": _float,
        "pwm_period_s": _float,
        "episode_steps": _int,
        "i_l0_min": _float,
        "i_l0_max": _float,
        "v_c0_min": _float,
        "v_c0_max": _float,
        "load_min": _float,
        "load_max": _float,
        "l_min": _float,
        "l_max": _float,
        "r_c_min": _float,
        "r_c_max": _float,
        "noise_v": _float,
        "noise_i": _float,
        "current_scale": _float,
        "error_scale": _float,
    },
    "reward": {
        "proximity_gain": _float,
        "flat_cost": _float,
        "error_weight": _float,
        "switch_penalty": _float,
        "error_floor": _float,
        "scale": _float,
    },
    "ppo": {
        "gamma": _float,
        "clip_range": _float,
        "learning_rate": _float,
        "epochs": _int,
        "minibatch_size": _int,
        "rollout_steps": _int,
        "total_steps": _int,
        "gae_lambda": _float,
        "value_coef": _float,
        "entropy_coef": _float,
        "entropy_coef_final": _float,
        "entropy_target": _float,
        "entropy_target_frac": _float,
        "max_grad_norm": _float,
        "target_kl": _float,
        "checkpoint_every": _int,
    },
    "run": {
        "variant": _str,
        "seed": _int,
        "out_dir": _str,
    },
}

_HASHED_SECTIONS = ("circuit", "env", "reward")


def variant_defaults(variant: str) -> dict:
    """Built-in defaults; the two variants differ in cadence, episode
    length, reward scaling and discount."""
    if variant not in ("dgc", "pwm"):
        raise ConfigError(f"unknown variant {variant!r} (expected dgc or pwm)")
    dgc = variant == "dgc"
    return {
        "circuit": {
            "input_voltage": 20.0,
            "inductance": 47e-6,
            "inductor_esr": 10e-3,
            "capacitance": 470e-6,
            "capacitor_esr": 100e-3,
            "load_resistance": 15.0,
        },
        "env": {
            "v_ref": 15.0,
            "control_period_s": 1e-6 if dgc else 10e-6,
            "pwm_period_s": 10e-6,
            "episode_steps": 2000 if dgc else 200,
            "i_l0_min": 0.0,
            "i_l0_max": 10.0,
            "v_c0_min": 0.0,
            "v_c0_max": 20.0,
            "load_min": 1.0,
            "load_max": 50.0,
            "l_min": 30e-6,
            "l_max": 70e-6,
            "r_c_min": 50e-3,
            "r_c_max": 250e-3,
            "noise_v": 0.0,
            "noise_i": 0.0,
            "current_scale": 20.0,
            "error_scale": 20.0,
        },
        "reward": {
            "proximity_gain": 0.2,
            "flat_cost": 0.004,
            "error_weight": 0.1,
            "switch_penalty": 4.0,
            "error_floor": 0.1,
            "scale": 1.0 if dgc else 10.0,
        },
        "ppo": {
            "gamma": 0.999 if dgc else 0.99,
            "clip_range": 0.2,
            "learning_rate": 3e-4,
            "epochs": 10,
            "minibatch_size": 64,
            "rollout_steps": 2048,
            "total_steps": 1_000_000,
            "gae_lambda": 0.95,
            "value_coef": 0.5,
            "entropy_coef": 0.02,
            "entropy_coef_final": 0.0 if not dgc else -1.0,
            "entropy_target": 0.45 if dgc else -1.0,
            "entropy_target_frac": 0.6,
            "max_grad_norm": 0.5,
            "target_kl": 0.05,
            "checkpoint_every": 0,
        },
        "run": {
            "variant": variant,
            "seed": 0,
            "out_dir": "runs/latest",
        },
    }


def parse_config_file(path) -> dict:
    """Parse and type-check one file against the schema.

    Returns {section: {key: value}}; raises ConfigError with file:line on
    syntax errors, unknown sections/keys, or unparsable values.
    """
    values: dict = {}
    section = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
                if section not in SCHEMA:
                    raise ConfigError(
                        f"{path}:{lineno}: unknown section [{section}] "
                        f"(expected one of {', '.join(SCHEMA)})"
                    )
                values.setdefault(section, {})
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            if section is None:
                raise ConfigError(f"{path}:{lineno}: key outside of any [section]")
            key, _, text = line.partition("=")
            key = key.strip()
            text = text.strip()
            if key not in SCHEMA[section]:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r} in [{section}]")
            try:
                values[section][key] = SCHEMA[section][key](text)
            except ValueError as err:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {err}") from err
    return values


def _apply(base: dict, patch: dict, origin: str):
    for section, pairs in patch.items():
        if section not in base:
            raise ConfigError(f"{origin}: unknown section [{section}]")
        for key, value in pairs.items():
            if key not in base[section]:
                raise ConfigError(f"{origin}: unknown key {section}.{key}")
            base[section][key] = value


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings for one run, plus their canonical text."""

    variant: str
    circuit: CircuitParams
    env: EnvConfig
    ppo: PpoConfig
    seed: int
    out_dir: str
    resolved: dict

    def canonical_text(self) -> str:
        lines = []
        for section in sorted(self.resolved):
            lines.append(f"[{section}]")
            for key in sorted(self.resolved[section]):
                value = self.resolved[section][key]
                text = repr(value) if isinstance(value, float) else str(value)
                lines.append(f"{key} = {text}")
            lines.append("")
        return "\n".join(lines)

    def config_hash(self) -> str:
        """Digest of the physics-facing sections (circuit, env, reward)."""
        parts = []
        for section in _HASHED_SECTIONS:
            for key in sorted(self.resolved[section]):
                parts.append(f"{section}.{key}={self.resolved[section][key]!r}")
        return hashlib.sha256("\n".join(parts).encode()).hexdigest()[:12]

    def archive(self, path):
        with open(path, "w") as fh:
            fh.write(self.canonical_text())


def resolve_run_config(variant: str, file_path=None, overrides: dict | None = None) -> RunConfig:
    """defaults <- file <- overrides, materialized into typed objects.

    `overrides` maps dotted keys ("ppo.total_steps") to already-typed
    values, matching how command-line flags arrive.
    """
    resolved = variant_defaults(variant)
    if file_path is not None:
        _apply(resolved, parse_config_file(file_path), origin=str(file_path))
    if overrides:
        patch: dict = {}
        for dotted, value in overrides.items():
            section, _, key = dotted.partition(".")
            patch.setdefault(section, {})[key] = value
        _apply(resolved, patch, origin="overrides")
    if resolved["run"]["variant"] != variant:
        raise ConfigError(
            f"config variant {resolved['run']['variant']!r} does not match requested {variant!r}"
        )

    c = resolved["circuit"]
    try:
        circuit = CircuitParams(
            E=c["input_voltage"],
            L=c["inductance"],
            R_L=c["inductor_esr"],
            C=c["capacitance"],
            R_C=c["capacitor_esr"],
            R=c["load_resistance"],
        )
        e = resolved["env"]
        r = resolved["reward"]
        env = EnvConfig(
            variant=variant,
            circuit=circuit,
            v_ref=e["v_ref"],
            control_period=e["control_period_s"],
            pwm_period=e["pwm_period_s"],
            episode_steps=e["episode_steps"],
            i_l0_range=(e["i_l0_min"], e["i_l0_max"]),
            v_c0_range=(e["v_c0_min"], e["v_c0_max"]),
            load_range=(e["load_min"], e["load_max"]),
            l_range=(e["l_min"], e["l_max"]) if e["l_max"] > 0 else None,
            r_c_range=(e["r_c_min"], e["r_c_max"]) if e["r_c_max"] > 0 else None,
            noise_v=e["noise_v"],
            noise_i=e["noise_i"],
            error_scale=e["error_scale"],
            reward=RewardParams(
                proximity_gain=r["proximity_gain"],
                flat_cost=r["flat_cost"],
                error_weight=r["error_weight"],
                switch_penalty=r["switch_penalty"],
                error_floor=r["error_floor"],
            ),
            reward_scale=r["scale"],
            current_scale=e["current_scale"],
        )
        p = resolved["ppo"]
        ppo = PpoConfig(
            gamma=p["gamma"],
            clip_range=p["clip_range"],
            learning_rate=p["learning_rate"],
            epochs=p["epochs"],
            minibatch_size=p["minibatch_size"],
            rollout_steps=p["rollout_steps"],
            total_steps=p["total_steps"],
            gae_lambda=p["gae_lambda"],
            value_coef=p["value_coef"],
            entropy_coef=p["entropy_coef"],
            entropy_coef_final=p["entropy_coef_final"],
            entropy_target=p["entropy_target"],
            entropy_target_frac=p["entropy_target_frac"],
            max_grad_norm=p["max_grad_norm"],
            target_kl=p["target_kl"],
            checkpoint_every=p["checkpoint_every"],
        )
    except ValueError as err:
        raise ConfigError(f"invalid configuration: {err}") from err
    return RunConfig(
        variant=variant,
        circuit=circuit,
        env=env,
        ppo=ppo,
        seed=resolved["run"]["seed"],
        out_dir=resolved["run"]["out_dir"],
        resolved=resolved,
    )
