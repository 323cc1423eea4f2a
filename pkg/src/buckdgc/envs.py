"""Discrete-time control environments wrapping the converter simulator.

Two variants of the same voltage-regulation MDP:

  * DirectGateEnv: the action is the raw MOSFET gate state {0, 1}, applied
    every 1 us with no modulation stage.
  * PwmEnv: the action is a continuous duty ratio in [0, 1], turned into a
    leading-edge gate pulse by a fixed 10 us PWM generator; one action per
    PWM period.  Internally the period is stepped in 1 us slots (with the
    duty edge placed exactly inside its slot), so a PWM episode traverses
    bit-identical converter states to the equivalent gate sequence played
    through DirectGateEnv.

Both variants observe a rolling window of the last 10 samples of
(voltage error, inductor current, applied control), flattened oldest-first
into a 30-element vector with a fixed affine normalization (error scaled by
1/E, current by 1/current_scale, control left in [0, 1]).  Actions take
effect one control step late, modeling ADC plus inference latency.  The
per-step reward rewards proximity of the output to the reference and
penalizes both the absolute error and changes of the applied control:

    r = gain / (|v_err| + floor) - weight * |v_err| - cost
        - penalty * |a_now - a_prev|

evaluated on the true (noise-free) error sampled at the interval end.
Sensor noise, when enabled, perturbs only what the agent observes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from buckdgc.circuit import CircuitParams, compile_circuit

__all__ = [
    "RewardParams",
    "EnvConfig",
    "ObsWindow",
    "DirectGateEnv",
    "PwmEnv",
    "regulation_reward",
    "apply_sensor_noise",
    "duty_edge",
    "dgc_config",
    "pwm_config",
    "make_env",
]

# Duty edges closer than this (in slot units) to a slot boundary collapse
# onto it; sub-attosecond gate slivers are numerical dust, and snapping keeps
# k/10 duty cycles bit-identical to their expanded gate sequences.
_EDGE_SNAP = 1e-9


@dataclass(frozen=True)
class RewardParams:
    """Coefficients of the regulation reward."""

    proximity_gain: float = 0.2   # numerator of the closeness bonus
    flat_cost: float = 0.004      # constant per-step cost
    error_weight: float = 0.1     # linear |v_err| penalty, per volt
    switch_penalty: float = 4.0   # penalty per unit change of the control
    error_floor: float = 0.1      # volts; bounds the bonus at gain/floor

    def __post_init__(self):
        for name in ("proximity_gain", "flat_cost", "error_weight", "switch_penalty"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.error_floor > 0:
            raise ValueError("error_floor must be > 0")


def duty_edge(duty: float, slots: int) -> tuple[int, float]:
    """Leading-edge pulse layout: (full-on slots, fractional part of the edge slot).

    Edges within _EDGE_SNAP of a slot boundary collapse onto it, so
    slot-aligned duty cycles expand to exact binary sequences.
    """
    x = duty * slots
    on_full = int(x)
    frac = x - on_full
    if frac < _EDGE_SNAP:
        frac = 0.0
    elif frac > 1.0 - _EDGE_SNAP:
        on_full += 1
        frac = 0.0
    if on_full > slots:
        on_full = slots
    return on_full, frac


def regulation_reward(v_err: float, a_now: float, a_prev: float, p: RewardParams) -> float:
    """Per-step reward: closeness bonus minus error, flatness and switching costs."""
    e = abs(v_err)
    return (
        p.proximity_gain / (e + p.error_floor)
        - p.error_weight * e
        - p.flat_cost
        - p.switch_penalty * abs(a_now - a_prev)
    )


def apply_sensor_noise(v_err, i_l, sigma_v, sigma_i, rng):
    """Additive white Gaussian measurement noise; sigma = 0 is the identity."""
    return (
        v_err + sigma_v * rng.standard_normal(),
        i_l + sigma_i * rng.standard_normal(),
    )


@dataclass(frozen=True)
class EnvConfig:
    variant: str = "dgc"                                  # "dgc" | "pwm"
    circuit: CircuitParams = field(default_factory=CircuitParams)
    v_ref: float = 15.0                                   # regulation target, V
    control_period: float = 1e-6                          # agent step, s
    pwm_period: float = 10e-6                             # pwm variant only, s
    episode_steps: int = 2000
    i_l0_range: tuple[float, float] = (0.0, 10.0)         # uniform, A
    v_c0_range: tuple[float, float] = (0.0, 20.0)         # uniform, V
    load_range: tuple[float, float] = (1.0, 50.0)         # log-uniform, ohm
    # Optional plant randomization (uniform per episode); None = fixed value
    # from `circuit`.  Makes trained policies robust to component tolerances.
    l_range: tuple[float, float] | None = None            # H
    r_c_range: tuple[float, float] | None = None          # ohm
    noise_v: float = 0.0                                  # sensor sigma, V
    noise_i: float = 0.0                                  # sensor sigma, A
    reward: RewardParams = field(default_factory=RewardParams)
    reward_scale: float = 1.0
    history: int = 10
    current_scale: float = 20.0                           # A, observation scaling
    error_scale: float = 0.0                              # V; 0 = use input voltage

    def __post_init__(self):
        if self.variant not in ("dgc", "pwm"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "pwm":
            if self.control_period != self.pwm_period:
                raise ValueError("pwm variant requires control_period == pwm_period")
            slots = self.pwm_period / 1e-6
            if abs(slots - round(slots)) > 1e-9 or round(slots) < 1:
                raise ValueError("pwm_period must be a whole number of 1 us slots")
        if self.episode_steps < 1:
            raise ValueError("episode_steps must be >= 1")
        if self.noise_v < 0 or self.noise_i < 0:
            raise ValueError("noise sigmas must be >= 0")
        for lo, hi in (self.i_l0_range, self.v_c0_range, self.load_range):
            if not lo <= hi:
                raise ValueError("randomization ranges must be ordered")
        if self.load_range[0] < 1.0:
            raise ValueError("load range must stay >= 1 ohm")

    @property
    def obs_size(self) -> int:
        return 3 * self.history


def dgc_config(**overrides) -> EnvConfig:
    """Direct-gate defaults: 1 us control period, 2000-step (2 ms) episodes."""
    return EnvConfig(**overrides)


def pwm_config(**overrides) -> EnvConfig:
    """PWM-baseline defaults: 10 us period, 2 ms episodes, reward scaled x10."""
    defaults = dict(
        variant="pwm",
        control_period=10e-6,
        pwm_period=10e-6,
        episode_steps=200,
        reward_scale=10.0,
    )
    defaults.update(overrides)
    return EnvConfig(**defaults)


class ObsWindow:
    """Fixed-length rolling history of (v_err, i_L, control) samples.

    Stores the samples already normalized (fixed affine map, no running
    statistics) and exposes them flattened oldest-first.
    """

    __slots__ = ("length", "v_scale", "i_scale", "_data")

    def __init__(self, length: int, v_scale: float, i_scale: float):
        self.length = length
        self.v_scale = v_scale
        self.i_scale = i_scale
        self._data = [0.0] * (3 * length)

    def fill(self, v_err: float, i_l: float, control: float):
        self._data = [v_err * self.v_scale, i_l * self.i_scale, control] * self.length

    def push(self, v_err: float, i_l: float, control: float):
        d = self._data
        del d[0:3]
        d.extend((v_err * self.v_scale, i_l * self.i_scale, control))

    def vector(self) -> np.ndarray:
        return np.array(self._data)


class _ConverterEnv:
    """Shared machinery: randomized resets, windowing, noise, load control."""

    def __init__(self, cfg: EnvConfig, seed=None):
        self.cfg = cfg
        err_scale = cfg.error_scale if cfg.error_scale > 0 else cfg.circuit.E
        self._window = ObsWindow(cfg.history, 1.0 / err_scale, 1.0 / cfg.current_scale)
        self._seed(seed)
        self._params = cfg.circuit
        self._comp = compile_circuit(self._params)
        self._i = 0.0
        self._v = 0.0
        self._t = 0
        self._done = True
        self._noisy = cfg.noise_v > 0.0 or cfg.noise_i > 0.0

    def _seed(self, seed):
        if isinstance(seed, np.random.SeedSequence):
            ss = seed
        else:
            ss = np.random.SeedSequence(seed)
        reset_ss, noise_ss = ss.spawn(2)
        self._rng_reset = np.random.default_rng(reset_ss)
        self._rng_noise = np.random.default_rng(noise_ss)

    @property
    def params(self) -> CircuitParams:
        return self._params

    @property
    def state(self):
        """True (i_L, v_C), untouched by sensor noise."""
        return self._i, self._v

    @property
    def steps_taken(self) -> int:
        return self._t

    def set_load(self, r: float):
        """Change the load resistance in place (disturbance injection)."""
        self._params = self._params.with_load(r)
        self._comp = compile_circuit(self._params)

    def reset(self, seed=None, *, i_l0=None, v_c0=None, load=None) -> np.ndarray:
        """Start a new episode; unspecified initial conditions are randomized."""
        if seed is not None:
            self._seed(seed)
        rng = self._rng_reset
        cfg = self.cfg
        if i_l0 is None:
            i_l0 = rng.uniform(*cfg.i_l0_range)
        if v_c0 is None:
            v_c0 = rng.uniform(*cfg.v_c0_range)
        if load is None:
            lo, hi = cfg.load_range
            load = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        self._params = cfg.circuit.with_load(load)
        if cfg.l_range is not None:
            self._params = replace(self._params, L=rng.uniform(*cfg.l_range))
        if cfg.r_c_range is not None:
            self._params = replace(self._params, R_C=rng.uniform(*cfg.r_c_range))
        self._comp = compile_circuit(self._params)
        self._i = float(i_l0)
        self._v = float(v_c0)
        self._t = 0
        self._done = False
        self._pending = 0.0
        self._prev_applied = 0.0
        v_err = self._comp.v_out(self._i, self._v) - cfg.v_ref
        v_err_obs, i_obs = self._observe(v_err, self._i)
        self._window.fill(v_err_obs, i_obs, 0.0)
        return self._window.vector()

    def _observe(self, v_err, i_l):
        if self._noisy:
            return apply_sensor_noise(
                v_err, i_l, self.cfg.noise_v, self.cfg.noise_i, self._rng_noise
            )
        return v_err, i_l

    def _guard_not_done(self):
        if self._done:
            raise RuntimeError("episode finished; call reset() before stepping")


class DirectGateEnv(_ConverterEnv):
    """Binary gate control every control period, one-step action delay."""

    discrete = True
    n_actions = 2

    def step(self, action):
        self._guard_not_done()
        a = int(action)
        if a not in (0, 1):
            raise ValueError(f"gate action must be 0 or 1, got {action!r}")
        g = int(self._pending)
        self._pending = a
        self._i, self._v = self._comp.advance(self._i, self._v, g, self.cfg.control_period)
        v_out = self._comp.v_out(self._i, self._v)
        v_err = v_out - self.cfg.v_ref
        v_err_obs, i_obs = self._observe(v_err, self._i)
        self._window.push(v_err_obs, i_obs, float(g))
        reward = self.cfg.reward_scale * regulation_reward(
            v_err, float(g), self._prev_applied, self.cfg.reward
        )
        self._prev_applied = float(g)
        self._t += 1
        done = self._t == self.cfg.episode_steps
        self._done = done
        info = {
            "v_out": v_out,
            "i_L": self._i,
            "gate": g,
            "v_out_obs": self.cfg.v_ref + v_err_obs,
            "i_L_obs": i_obs,
        }
        return self._window.vector(), reward, done, info


class PwmEnv(_ConverterEnv):
    """Duty-ratio control through a fixed-frequency leading-edge modulator."""

    discrete = False
    n_actions = 1

    def __init__(self, cfg: EnvConfig, seed=None, record_substeps=False):
        super().__init__(cfg, seed)
        # The slot grid is exactly the 1 us simulator step, so slot-aligned
        # duty cycles reproduce direct-gate trajectories bit for bit.
        self._slots = round(cfg.pwm_period / 1e-6)
        self._slot_dt = 1e-6
        self.record_substeps = record_substeps

    def step(self, action):
        self._guard_not_done()
        d_cmd = float(action)
        if d_cmd < 0.0:
            d_cmd = 0.0
        elif d_cmd > 1.0:
            d_cmd = 1.0
        d = self._pending
        self._pending = d_cmd

        # Leading-edge pulse: gate high for d * period, low for the rest,
        # realized slot by slot so the trajectory matches the equivalent
        # direct-gate sequence exactly.
        on_full, frac = duty_edge(d, self._slots)
        adv = self._comp.advance
        i, v = self._i, self._v
        sub = [] if self.record_substeps else None
        slot_dt = self._slot_dt
        for k in range(self._slots):
            if k < on_full:
                g = 1.0
                i, v = adv(i, v, 1, slot_dt)
            elif k == on_full and frac > 0.0:
                g = frac
                i, v = adv(i, v, 1, frac * slot_dt)
                i, v = adv(i, v, 0, (1.0 - frac) * slot_dt)
            else:
                g = 0.0
                i, v = adv(i, v, 0, slot_dt)
            if sub is not None:
                sub.append((g, i, self._comp.v_out(i, v)))
        self._i, self._v = i, v

        v_out = self._comp.v_out(i, v)
        v_err = v_out - self.cfg.v_ref
        v_err_obs, i_obs = self._observe(v_err, i)
        self._window.push(v_err_obs, i_obs, d)
        reward = self.cfg.reward_scale * regulation_reward(
            v_err, d, self._prev_applied, self.cfg.reward
        )
        self._prev_applied = d
        self._t += 1
        done = self._t == self.cfg.episode_steps
        self._done = done
        info = {
            "v_out": v_out,
            "i_L": i,
            "duty": d,
            "v_out_obs": self.cfg.v_ref + v_err_obs,
            "i_L_obs": i_obs,
        }
        if sub is not None:
            info["substeps"] = sub
        return self._window.vector(), reward, done, info


def make_env(cfg: EnvConfig, seed=None, **kwargs):
    if cfg.variant == "dgc":
        return DirectGateEnv(cfg, seed)
    return PwmEnv(cfg, seed, **kwargs)
