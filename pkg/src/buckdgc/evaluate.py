"""Closed-loop evaluation of trained checkpoints: load steps, sweeps, noise.

A Scenario describes one experiment: settle the converter under the policy
at an initial load (closed-loop pre-roll from the averaged-model operating
point), switch the load at t = 0, and keep running to the horizon.  The
run is captured as an EpisodeTrace sampled on the 1 us simulator grid
(both variants), exported as CSV, and summarized into waveform Metrics.

Traces store the true output voltage alongside the observed (noisy) one;
rewards and metrics always read the true waveform.  For the direct-gate
variant the `duty` column carries the low-pass-filtered gate signal
("effective duty"), so figures and metrics share one filter.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from buckdgc.circuit import CircuitParams, compile_circuit
from buckdgc.envs import EnvConfig, RewardParams, duty_edge, make_env
from buckdgc.nets import ActorCritic, load_checkpoint

__all__ = [
    "Scenario",
    "EpisodeTrace",
    "Metrics",
    "SCENARIOS",
    "SWEEP_VARIATIONS",
    "EFFECTIVE_DUTY_TAU",
    "run_scenario",
    "open_loop_trace",
    "effective_duty",
    "compute_metrics",
    "sweep",
    "write_metrics_csv",
]

# First-order filter time constant for the effective-duty view of the gate
# signal: well above the per-step switching, below the transient timescale.
EFFECTIVE_DUTY_TAU = 100e-6

TRACE_COLUMNS = ("time_s", "gate", "duty", "i_L_A", "v_out_V", "v_obs_V", "action", "reward")


@dataclass(frozen=True)
class Scenario:
    """One load-step experiment; overrides patch the nominal circuit."""

    name: str
    r_initial: float = 15.0
    r_final: float = 1.0
    preroll_s: float = 1e-3
    horizon_s: float = 2e-3
    overrides: tuple[tuple[str, float], ...] = ()
    noise_v: float = 0.0
    noise_i: float = 0.0
    variant: str | None = None   # restrict to one checkpoint variant, if set

    def __post_init__(self):
        if not self.horizon_s > 0 or not self.preroll_s >= 0:
            raise ValueError("scenario times must be positive")
        if self.noise_v < 0 or self.noise_i < 0:
            raise ValueError("noise sigmas must be >= 0")

    def circuit(self, base: CircuitParams) -> CircuitParams:
        try:
            patched = replace(base, **dict(self.overrides))
        except TypeError as err:
            raise ValueError(f"unknown circuit override in {self.overrides}") from err
        return patched.with_load(self.r_initial)


SCENARIOS = {
    "loadstep-nominal": Scenario("loadstep-nominal", r_initial=15.0, r_final=1.0),
    "loadstep-null": Scenario("loadstep-null", r_initial=15.0, r_final=15.0),
    "noise": Scenario("noise", r_initial=15.0, r_final=1.0, noise_v=0.01, noise_i=0.1),
}

# Component-tolerance sweep: inductance spread plus doubled capacitor ESR.
SWEEP_VARIATIONS = (
    Scenario("nominal"),
    Scenario("L-33uH", overrides=(("L", 33e-6),)),
    Scenario("L-68uH", overrides=(("L", 68e-6),)),
    Scenario("Rc-200mOhm", overrides=(("R_C", 200e-3),)),
)


@dataclass
class EpisodeTrace:
    """Uniform 1 us waveform record; t = 0 is the load-step instant."""

    variant: str
    v_ref: float
    dt: float
    time_s: np.ndarray
    gate: np.ndarray
    duty: np.ndarray
    i_l: np.ndarray
    v_out: np.ndarray
    v_obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray

    def __len__(self):
        return len(self.time_s)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# variant={self.variant} v_ref={self.v_ref!r} dt={self.dt!r}\n")
            writer = csv.writer(fh)
            writer.writerow(TRACE_COLUMNS)
            cols = (self.time_s, self.gate, self.duty, self.i_l,
                    self.v_out, self.v_obs, self.action, self.reward)
            for row in zip(*cols):
                writer.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path):
        meta = {"variant": "dgc", "v_ref": 15.0, "dt": 1e-6}
        rows = []
        with open(path, newline="") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    for tok in line[1:].split():
                        key, _, val = tok.partition("=")
                        if key == "variant":
                            meta[key] = val
                        elif key in meta:
                            meta[key] = float(val)
                    continue
                if line.startswith(TRACE_COLUMNS[0]):
                    continue
                rows.append([float(x) for x in line.split(",")])
        data = np.array(rows)
        if data.ndim != 2 or data.shape[1] != len(TRACE_COLUMNS):
            raise ValueError(f"{path}: expected {len(TRACE_COLUMNS)} trace columns")
        return cls(meta["variant"], meta["v_ref"], meta["dt"], *data.T)


@dataclass(frozen=True)
class Metrics:
    """Scalar waveform summary of the post-step trace."""

    v_min: float              # lowest sampled output after the step, V
    v_max: float              # highest sampled output after the step, V
    recovered: bool           # entered the band and stayed there
    recovery_s: float         # time of final band entry (nan if never)
    settled: bool
    settling_s: float         # same rule at the tighter band (nan if never)
    overshoot: float          # max(v_out) - v_ref, clamped at 0, V
    ripple_pp: float          # peak-to-peak over the final ripple window, V
    switching_hz: float       # mean gate transition rate after the step
    mean_abs_err: float       # mean |v_out - v_ref| over the final window, V

    FIELDS = (
        "v_min", "v_max", "recovered", "recovery_s", "settled", "settling_s",
        "overshoot", "ripple_pp", "switching_hz", "mean_abs_err",
    )


def effective_duty(gate, dt=1e-6, tau=EFFECTIVE_DUTY_TAU, y0=0.0) -> np.ndarray:
    """First-order low-pass of the gate signal: y_{k+1} = y_k + dt/tau (u_k - y_k).

    Chunked processing reproduces whole-trace output when the previous
    chunk's final value is passed back in as y0.
    """
    gate = np.asarray(gate, dtype=float)
    alpha = dt / tau
    out = np.empty(len(gate))
    y = float(y0)
    for k, u in enumerate(gate):
        out[k] = y
        y += alpha * (u - y)
    return out


def _band_entry_time(times, values, center, band):
    """Final entry into [center-band, center+band]: (entered_and_stayed, time).

    Returns (True, 0.0) when no sample ever leaves the band, and
    (False, nan) when the last sample is still outside.
    """
    outside = np.abs(values - center) > band
    if not outside.any():
        return True, 0.0
    last_out = int(np.flatnonzero(outside)[-1])
    if last_out == len(values) - 1:
        return False, math.nan
    return True, float(times[last_out + 1])


def compute_metrics(trace: EpisodeTrace, band=None, settle_band=None,
                    ripple_window=0.2e-3, err_window=0.5e-3) -> Metrics:
    """Summarize the post-step part (time > 0) of a trace.

    Recovery means entering v_ref +/- band and remaining inside for the rest
    of the horizon (measured from the final band entry); settling applies
    the same rule at the tighter band.  Defaults: band = 2% of v_ref,
    settle band = 1%.
    """
    v_ref = trace.v_ref
    if band is None:
        band = 0.02 * v_ref
    if settle_band is None:
        settle_band = 0.01 * v_ref
    post = trace.time_s > 0
    if not post.any():
        raise ValueError("trace has no samples after the step instant")
    t = trace.time_s[post]
    v = trace.v_out[post]
    g = trace.gate[post]

    recovered, recovery_s = _band_entry_time(t, v, v_ref, band)
    settled, settling_s = _band_entry_time(t, v, v_ref, settle_band)
    ripple = v[t > t[-1] - ripple_window]
    err = np.abs(v[t > t[-1] - err_window] - v_ref)
    transitions = int(np.sum(g[1:] != g[:-1]))
    duration = t[-1] - t[0]
    return Metrics(
        v_min=float(v.min()),
        v_max=float(v.max()),
        recovered=recovered,
        recovery_s=recovery_s,
        settled=settled,
        settling_s=settling_s,
        overshoot=max(0.0, float(v.max()) - v_ref),
        ripple_pp=float(ripple.max() - ripple.min()),
        switching_hz=transitions / duration if duration > 0 else 0.0,
        mean_abs_err=float(err.mean()),
    )


def _resolve_checkpoint(checkpoint) -> ActorCritic:
    if isinstance(checkpoint, ActorCritic):
        return checkpoint
    return load_checkpoint(checkpoint)


def run_scenario(checkpoint, scenario: Scenario, seed=0, *,
                 circuit: CircuitParams | None = None, v_ref=15.0,
                 reward: RewardParams | None = None,
                 duty_tau=EFFECTIVE_DUTY_TAU) -> EpisodeTrace:
    """Deterministic-policy closed-loop run of one scenario.

    Pre-rolls from the averaged-model operating point at the initial load,
    applies the load step at t = 0 and continues to the horizon.  The trace
    is sampled every microsecond for either variant.
    """
    ac = _resolve_checkpoint(checkpoint)
    if scenario.variant is not None and scenario.variant != ac.variant:
        raise ValueError(
            f"scenario {scenario.name!r} is for variant {scenario.variant!r}, "
            f"checkpoint is {ac.variant!r}"
        )
    base = circuit if circuit is not None else CircuitParams()
    params = scenario.circuit(base)

    if ac.variant == "dgc":
        control = 1e-6
        cfg_kwargs = {}
    else:
        control = 10e-6
        cfg_kwargs = {"pwm_period": 10e-6}
    n_pre = round(scenario.preroll_s / control)
    n_post = round(scenario.horizon_s / control)
    cfg = EnvConfig(
        variant=ac.variant,
        circuit=params,
        v_ref=v_ref,
        control_period=control,
        episode_steps=n_pre + n_post,
        noise_v=scenario.noise_v,
        noise_i=scenario.noise_i,
        reward=reward if reward is not None else RewardParams(),
        reward_scale=1.0 if ac.variant == "dgc" else 10.0,
        **cfg_kwargs,
    )
    env = make_env(cfg, seed=seed, **({"record_substeps": True} if ac.variant == "pwm" else {}))
    obs = env.reset(i_l0=v_ref / scenario.r_initial, v_c0=v_ref, load=scenario.r_initial)

    slots = 1 if ac.variant == "dgc" else round(cfg.pwm_period / 1e-6)
    n_rows = (n_pre + n_post) * slots
    gate = np.zeros(n_rows)
    duty = np.zeros(n_rows)
    i_l = np.zeros(n_rows)
    v_out = np.zeros(n_rows)
    v_obs = np.full(n_rows, math.nan)
    action = np.zeros(n_rows)
    rew = np.full(n_rows, math.nan)

    for tstep in range(n_pre + n_post):
        if tstep == n_pre:
            env.set_load(scenario.r_final)
        a = ac.act_deterministic(obs)
        obs, r, done, info = env.step(a)
        if ac.variant == "dgc":
            gate[tstep] = info["gate"]
            i_l[tstep] = info["i_L"]
            v_out[tstep] = info["v_out"]
            v_obs[tstep] = info["v_out_obs"]
            action[tstep] = a
            rew[tstep] = r
        else:
            row0 = tstep * slots
            for j, (g, ii, vo) in enumerate(info["substeps"]):
                gate[row0 + j] = g
                i_l[row0 + j] = ii
                v_out[row0 + j] = vo
                duty[row0 + j] = info["duty"]
                action[row0 + j] = a
            v_obs[row0 + slots - 1] = info["v_out_obs"]
            rew[row0 + slots - 1] = r
    if ac.variant == "dgc":
        duty[:] = effective_duty(gate, dt=1e-6, tau=duty_tau)

    times = (np.arange(1, n_rows + 1) - n_pre * slots) * 1e-6
    return EpisodeTrace(
        variant=ac.variant,
        v_ref=v_ref,
        dt=1e-6,
        time_s=times,
        gate=gate,
        duty=duty,
        i_l=i_l,
        v_out=v_out,
        v_obs=v_obs,
        action=action,
        reward=rew,
    )


def open_loop_trace(params: CircuitParams, horizon_s: float, *, duty=None,
                    pattern=None, v_ref=15.0, pwm_period=10e-6,
                    i_l0=0.0, v_c0=0.0) -> EpisodeTrace:
    """Open-loop run: either a fixed duty at the PWM period or a repeating
    1-per-microsecond gate pattern.  No controller, so the reward column is
    NaN and the trace time axis starts at the first sample.
    """
    if (duty is None) == (pattern is None):
        raise ValueError("give exactly one of duty= or pattern=")
    n = round(horizon_s / 1e-6)
    comp = compile_circuit(params)
    gate = np.zeros(n)
    if duty is not None:
        if not 0.0 <= duty <= 1.0:
            raise ValueError(f"duty must be in [0, 1], got {duty}")
        slots = round(pwm_period / 1e-6)
        on_full, frac = duty_edge(duty, slots)
        period = np.zeros(slots)
        period[:on_full] = 1.0
        if frac > 0.0:
            period[on_full] = frac
        gate[:] = np.tile(period, n // slots + 1)[:n]
    else:
        bits = [int(b) for b in pattern]
        if not bits or any(b not in (0, 1) for b in bits):
            raise ValueError(f"pattern must be a non-empty string of 0/1, got {pattern!r}")
        gate[:] = np.tile(bits, n // len(bits) + 1)[:n]

    i, v = float(i_l0), float(v_c0)
    i_l = np.zeros(n)
    v_out = np.zeros(n)
    for k, g in enumerate(gate):
        if g == 0.0 or g == 1.0:
            i, v = comp.advance(i, v, int(g), 1e-6)
        else:
            i, v = comp.advance(i, v, 1, g * 1e-6)
            i, v = comp.advance(i, v, 0, (1.0 - g) * 1e-6)
        i_l[k] = i
        v_out[k] = comp.v_out(i, v)

    duty_col = np.full(n, duty) if duty is not None else effective_duty(gate)
    return EpisodeTrace(
        variant="open",
        v_ref=v_ref,
        dt=1e-6,
        time_s=np.arange(1, n + 1) * 1e-6,
        gate=gate,
        duty=duty_col,
        i_l=i_l,
        v_out=v_out,
        v_obs=v_out.copy(),
        action=gate.copy(),
        reward=np.full(n, math.nan),
    )


def sweep(checkpoint, variations=SWEEP_VARIATIONS, seed=0, *,
          circuit: CircuitParams | None = None, v_ref=15.0, band=None):
    """Run each variation; per-row failures are recorded, not raised.

    Returns a list of (scenario, metrics_or_None, error_or_None, trace_or_None).
    """
    ac = _resolve_checkpoint(checkpoint)
    rows = []
    for scn in variations:
        try:
            trace = run_scenario(ac, scn, seed=seed, circuit=circuit, v_ref=v_ref)
            metrics = compute_metrics(trace, band=band)
            rows.append((scn, metrics, None, trace))
        except Exception as err:  # keep sweeping, report per row
            rows.append((scn, None, str(err), None))
    return rows


def write_metrics_csv(path, rows):
    """rows: iterable of (name, Metrics | None, error | None)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("scenario", *Metrics.FIELDS, "error"))
        for name, metrics, error in rows:
            if metrics is None:
                writer.writerow([name] + [""] * len(Metrics.FIELDS) + [error or "failed"])
            else:
                cells = []
                for field_name in Metrics.FIELDS:
                    value = getattr(metrics, field_name)
                    cells.append(str(value) if isinstance(value, bool) else repr(float(value)))
                writer.writerow([name, *cells, ""])
