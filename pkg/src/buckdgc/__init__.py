"""Direct gate control of a buck converter with PPO.

A binary-action policy drives the MOSFET gate once per microsecond (no PWM
stage) inside an exact switched-linear converter simulator, with a
fixed-frequency PWM duty-ratio baseline trained by the same algorithm for
comparison.
"""

from buckdgc.circuit import (
    CircuitParams,
    CircuitState,
    Mode,
    StepTelemetry,
    SimulationError,
    CompiledCircuit,
    compile_circuit,
    output_voltage,
    derivatives,
    step,
    dc_duty_for_target,
)
from buckdgc.envs import (
    DirectGateEnv,
    EnvConfig,
    PwmEnv,
    RewardParams,
    apply_sensor_noise,
    dgc_config,
    make_env,
    pwm_config,
    regulation_reward,
)
from buckdgc.nets import ActorCritic, load_checkpoint, save_checkpoint
from buckdgc.ppo import PpoConfig, train
from buckdgc.evaluate import (
    SCENARIOS,
    SWEEP_VARIATIONS,
    EpisodeTrace,
    Metrics,
    Scenario,
    compute_metrics,
    effective_duty,
    open_loop_trace,
    run_scenario,
    sweep,
)
from buckdgc.config import RunConfig, resolve_run_config

__all__ = [
    "CircuitParams",
    "CircuitState",
    "Mode",
    "StepTelemetry",
    "SimulationError",
    "CompiledCircuit",
    "compile_circuit",
    "output_voltage",
    "derivatives",
    "step",
    "dc_duty_for_target",
    "DirectGateEnv",
    "EnvConfig",
    "PwmEnv",
    "RewardParams",
    "apply_sensor_noise",
    "dgc_config",
    "make_env",
    "pwm_config",
    "regulation_reward",
    "ActorCritic",
    "load_checkpoint",
    "save_checkpoint",
    "PpoConfig",
    "train",
    "SCENARIOS",
    "SWEEP_VARIATIONS",
    "EpisodeTrace",
    "Metrics",
    "Scenario",
    "compute_metrics",
    "effective_duty",
    "open_loop_trace",
    "run_scenario",
    "sweep",
    "RunConfig",
    "resolve_run_config",
]

__version__ = "0.1.0"
