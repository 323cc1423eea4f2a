"""Exact simulation of a buck converter as a switched pair of linear systems.

Topology: voltage source E -> ideal switch -> inductor L with series
resistance R_L -> output node; freewheeling diode from ground to the
switch/inductor junction; output capacitor C with series resistance R_C in
parallel with a resistive load R at the output node.

State is x = (i_L, v_C): inductor current and the voltage across the ideal
capacitance.  The load terminals see v_C plus the ESR drop.  Nodal analysis
at the output node gives

    v_out = R * (v_C + R_C * i_L) / (R + R_C)          (finite R)
    v_out = v_C + R_C * i_L                            (open load, R = inf)

since the capacitor branch carries i_C = i_L - v_out / R.

Within a gate interval each conduction mode is an affine system
dx/dt = A x + b, which is advanced with the closed-form 2x2 matrix
exponential (no integrator truncation error).  Mode logic:

  * gate high: the closed switch is an ideal short, so the SwitchOn linear
    system applies for the whole interval.  An ideal closed switch conducts
    both directions; from high-energy initial conditions into a light load
    the LC tank can therefore ring the output above E and swing i_L
    transiently negative before settling at the DC fixed point.
  * gate low, i_L > 0: the freewheeling diode carries the current (DiodeOn)
    until i_L reaches zero -- the crossing is located by bisection -- after
    which the diode blocks and i_L stays pinned at 0 (AllOff).  It cannot
    re-conduct while the gate stays low because v_out >= 0 with a passive
    load.  At most one DiodeOn -> AllOff transition can occur per interval.
  * gate low, i_L <= 0: opening the switch against reverse current leaves
    the current no path; it is interrupted to exactly zero (the residual
    magnetic energy is discarded, as with any ideal-switch model), and the
    interval proceeds in AllOff.

Normal converter operation (gate sequences applied from states with
i_L >= 0, v_C in [0, E]) never reverses the inductor current, so i_L >= 0
holds after every step there; the ring-up corner above is the documented
exception.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache

import numpy as np

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
]

# Longest single integration segment.  Keeps the eigen-exponent arguments
# small (|lambda| * seg << 1 for any parameters within the supported ranges)
# so the fixed 8-point Gauss quadrature used for the energy telemetry is
# accurate to machine precision.  Longer step() calls are chunked internally.
_MAX_SEGMENT = 10e-6

# Bracket width at which the zero-crossing bisection stops (1 fs).
_BISECT_TOL = 1e-15

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(8)
_GAUSS_NODES = tuple((x + 1.0) * 0.5 for x in _GAUSS_NODES)   # map to [0, 1]
_GAUSS_WEIGHTS = tuple(w * 0.5 for w in _GAUSS_WEIGHTS)


class SimulationError(RuntimeError):
    """Integration produced a non-finite state or failed to make progress."""


class Mode(Enum):
    """Conduction mode of the power stage within one segment."""

    SWITCH_ON = "switch_on"
    DIODE_ON = "diode_on"
    ALL_OFF = "all_off"


@dataclass(frozen=True)
class CircuitParams:
    """Component values.  R may be math.inf for an open load."""

    E: float = 20.0        # input voltage, V
    L: float = 47e-6       # inductance, H
    R_L: float = 10e-3     # inductor series resistance, ohm
    C: float = 470e-6      # capacitance, F
    R_C: float = 100e-3    # capacitor series resistance, ohm
    R: float = 15.0        # load resistance, ohm (>= 1, or inf)

    def __post_init__(self):
        if not (self.E > 0 and math.isfinite(self.E)):
            raise ValueError(f"input voltage must be positive, got {self.E}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError(f"inductance must be positive, got {self.L}")
        if not (self.C > 0 and math.isfinite(self.C)):
            raise ValueError(f"capacitance must be positive, got {self.C}")
        if not (self.R_L >= 0 and math.isfinite(self.R_L)):
            raise ValueError(f"inductor ESR must be >= 0, got {self.R_L}")
        if not (self.R_C >= 0 and math.isfinite(self.R_C)):
            raise ValueError(f"capacitor ESR must be >= 0, got {self.R_C}")
        if not self.R >= 1.0:
            raise ValueError(f"load resistance must be >= 1 ohm or inf, got {self.R}")

    def with_load(self, r: float) -> "CircuitParams":
        return replace(self, R=r)


@dataclass(frozen=True)
class CircuitState:
    """Continuous state: inductor current and internal capacitor voltage.

    i_L is non-negative whenever the gate is low (diode blocking); it can
    dip below zero only through the closed switch during ring-up corners.
    """

    i_L: float = 0.0
    v_C: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.i_L) and math.isfinite(self.v_C)):
            raise ValueError(f"state must be finite, got ({self.i_L}, {self.v_C})")


@dataclass(frozen=True)
class StepTelemetry:
    """Per-step bookkeeping produced alongside the integrated state."""

    v_out_end: float          # output voltage at the end of the step, V
    v_out_mean: float         # time average of v_out over the step, V
    source_energy: float      # energy drawn from the source, J
    dissipated_energy: float  # energy burned in R_L, R_C and the load, J
    modes: tuple[Mode, ...]   # conduction modes traversed, deduplicated


class _ModeSystem:
    """One conduction mode as dx/dt = A x + b with its closed-form solution.

    The 2x2 propagator exp(A t) is written as c(t) I + m(t) (A - a I) with
    a = tr(A)/2, where (c, m) are cosh/sinh-type scalars of the half
    eigenvalue gap.  Both are evaluated from exponentials of the (always
    non-positive) eigenvalues, so nothing overflows and the nearly-defective
    case is handled smoothly through expm1.
    """

    __slots__ = ("a11", "a12", "a21", "a22", "b1", "xp_i", "xp_v", "half_tr", "disc")

    def __init__(self, a11, a12, a21, a22, b1):
        self.a11 = a11
        self.a12 = a12
        self.a21 = a21
        self.a22 = a22
        self.b1 = b1
        self.half_tr = 0.5 * (a11 + a22)
        det = a11 * a22 - a12 * a21
        self.disc = self.half_tr * self.half_tr - det
        if b1 == 0.0:
            # DiodeOn and AllOff decay toward the origin.
            self.xp_i = 0.0
            self.xp_v = 0.0
        else:
            # b = (b1, 0); the mode has a unique DC fixed point -A^{-1} b.
            self.xp_i = -b1 * a22 / det
            self.xp_v = b1 * a21 / det

    def propagator(self, t: float):
        a = self.half_tr
        d = self.disc
        if d >= 0.0:
            s = math.sqrt(d)
            if s > 0.0:
                eq = math.exp((a - s) * t)
                grow = math.expm1(2.0 * s * t)
                c = eq * (1.0 + 0.5 * grow)
                m = eq * grow / (2.0 * s)
            else:
                c = math.exp(a * t)
                m = t * c
        else:
            w = math.sqrt(-d)
            ea = math.exp(a * t)
            c = ea * math.cos(w * t)
            m = ea * math.sin(w * t) / w
        return (
            c + m * (self.a11 - a),
            m * self.a12,
            m * self.a21,
            c + m * (self.a22 - a),
        )

    def state_at(self, i0: float, v0: float, t: float):
        f11, f12, f21, f22 = self.propagator(t)
        di = i0 - self.xp_i
        dv = v0 - self.xp_v
        return self.xp_i + f11 * di + f12 * dv, self.xp_v + f21 * di + f22 * dv

    def i_slope(self, i: float, v: float) -> float:
        return self.a11 * i + self.a12 * v + self.b1


class CompiledCircuit:
    """Mode systems and propagator caches bound to one parameter set.

    This is the fast path used by the control environments: `advance`
    integrates one gate interval with plain scalar arithmetic, reusing the
    cached full-interval propagators.  Use the module-level `step` for the
    telemetry-carrying contract.
    """

    __slots__ = ("params", "on", "diode", "off", "ko_i", "ko_v", "inv_r", "_phi_cache", "_node_cache")

    def __init__(self, params: CircuitParams):
        self.params = params
        E, L, R_L, C, R_C, R = params.E, params.L, params.R_L, params.C, params.R_C, params.R
        if math.isfinite(R):
            k = R / (R + R_C)
            self.ko_i = k * R_C
            self.ko_v = k
            self.inv_r = 1.0 / R
            a11 = -(R_L + k * R_C) / L
            a12 = -k / L
            a21 = k / C
            a22 = -1.0 / ((R + R_C) * C)
            self.off = _ModeSystem(0.0, 0.0, 0.0, a22, 0.0)
        else:
            # Open load: all inductor current flows into the capacitor.
            self.ko_i = R_C
            self.ko_v = 1.0
            self.inv_r = 0.0
            a11 = -(R_L + R_C) / L
            a12 = -1.0 / L
            a21 = 1.0 / C
            a22 = 0.0
            self.off = _ModeSystem(0.0, 0.0, 0.0, 0.0, 0.0)
        self.on = _ModeSystem(a11, a12, a21, a22, E / L)
        self.diode = _ModeSystem(a11, a12, a21, a22, 0.0)
        self._phi_cache = {}
        self._node_cache = {}

    def v_out(self, i: float, v: float) -> float:
        return self.ko_i * i + self.ko_v * v

    def _phi(self, tag: int, system: _ModeSystem, t: float):
        key = (tag, t)
        f = self._phi_cache.get(key)
        if f is None:
            f = system.propagator(t)
            if len(self._phi_cache) < 64:
                self._phi_cache[key] = f
        return f

    def advance(self, i: float, v: float, gate: int, dt: float, segments: list | None = None):
        """Integrate one constant-gate interval; returns the end state.

        When `segments` is a list, (mode, duration, i0, v0) tuples are
        appended for each traversed mode segment (telemetry quadrature).
        """
        if gate:
            sys = self.on
            f11, f12, f21, f22 = self._phi(0, sys, dt)
            di = i - sys.xp_i
            dv = v - sys.xp_v
            i1 = sys.xp_i + f11 * di + f12 * dv
            v1 = sys.xp_v + f21 * di + f22 * dv
            if segments is not None:
                segments.append((Mode.SWITCH_ON, dt, i, v))
            return i1, v1

        if i < 0.0:
            # Opening the switch against reverse current interrupts it.
            i = 0.0
        t_off = dt
        if i > 0.0:
            sys = self.diode
            f11, f12, f21, f22 = self._phi(1, sys, dt)
            i1 = f11 * i + f12 * v
            v1 = f21 * i + f22 * v
            if i1 >= 0.0:
                if segments is not None:
                    segments.append((Mode.DIODE_ON, dt, i, v))
                return i1, v1
            # The diode current reaches zero inside the interval; locate the
            # crossing and continue in AllOff from there.
            t_x = self._bisect_crossing(sys, i, v, dt)
            v_cross = sys.state_at(i, v, t_x)[1]
            if segments is not None:
                segments.append((Mode.DIODE_ON, t_x, i, v))
            i, v = 0.0, v_cross
            t_off = dt - t_x
            if t_off <= 0.0:
                return i, v
        if segments is not None:
            segments.append((Mode.ALL_OFF, t_off, i, v))
        f22 = self._phi(2, self.off, t_off)[3]
        return 0.0, f22 * v

    @staticmethod
    def _bisect_crossing(sys, i0, v0, t_hi):
        """First zero of i_L(t) in (0, t_hi]; i(0) > 0 > i(t_hi) on entry."""
        lo, hi = 0.0, t_hi
        while hi - lo > _BISECT_TOL:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if sys.state_at(i0, v0, mid)[0] > 0.0:
                lo = mid
            else:
                hi = mid
        return hi

    def _segment_nodes(self, tag: int, system: _ModeSystem, t_seg: float):
        key = (tag, t_seg)
        nodes = self._node_cache.get(key)
        if nodes is None:
            nodes = tuple(system.propagator(x * t_seg) for x in _GAUSS_NODES)
            if len(self._node_cache) < 64:
                self._node_cache[key] = nodes
        return nodes


@lru_cache(maxsize=128)
def compile_circuit(params: CircuitParams) -> CompiledCircuit:
    """Cached constructor for the per-parameter-set fast stepper."""
    return CompiledCircuit(params)


def output_voltage(state: CircuitState, params: CircuitParams) -> float:
    """Instantaneous voltage across the load terminals (nodal relation)."""
    if math.isfinite(params.R):
        return params.R * (state.v_C + params.R_C * state.i_L) / (params.R + params.R_C)
    return state.v_C + params.R_C * state.i_L


def derivatives(state: CircuitState, mode: Mode, params: CircuitParams):
    """Vector field (di_L/dt, dv_C/dt) of the given conduction mode.

    The mode must be consistent with the state: AllOff requires i_L = 0 and
    DiodeOn requires i_L > 0 (the freewheeling diode cannot start from zero
    current while the output voltage is non-negative).
    """
    if mode is Mode.ALL_OFF:
        assert state.i_L == 0.0, "AllOff requires zero inductor current"
        v_out = output_voltage(state, params)
        inv_r = 1.0 / params.R if math.isfinite(params.R) else 0.0
        return 0.0, -v_out * inv_r / params.C
    if mode is Mode.DIODE_ON:
        assert state.i_L > 0.0, "DiodeOn requires positive inductor current"
    v_out = output_voltage(state, params)
    u = params.E if mode is Mode.SWITCH_ON else 0.0
    di = (u - params.R_L * state.i_L - v_out) / params.L
    inv_r = 1.0 / params.R if math.isfinite(params.R) else 0.0
    dv = (state.i_L - v_out * inv_r) / params.C
    return di, dv


def step(
    state: CircuitState,
    gate: int,
    dt: float,
    params: CircuitParams,
) -> tuple[CircuitState, StepTelemetry]:
    """Advance the converter by dt seconds under a constant gate value.

    Integrates the active affine mode in closed form, handling conduction
    events by bisection, and accumulates per-step telemetry (mean output
    voltage plus source/dissipated energy) with Gauss quadrature along the
    exact trajectory.  Raises SimulationError if the result is non-finite.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    comp = compile_circuit(params)
    gate = 1 if gate else 0

    segments: list = []
    i, v = state.i_L, state.v_C
    n_chunks = 1 if dt <= _MAX_SEGMENT else math.ceil(dt / _MAX_SEGMENT)
    chunk = dt / n_chunks
    for _ in range(n_chunks):
        i, v = comp.advance(i, v, gate, chunk, segments)

    if not (math.isfinite(i) and math.isfinite(v)):
        raise SimulationError(
            f"non-finite state ({i}, {v}) after step; params={params}, gate={gate}, dt={dt}"
        )

    e_src = 0.0
    e_diss = 0.0
    vout_int = 0.0
    E, R_L, R_C = params.E, params.R_L, params.R_C
    ko_i, ko_v, inv_r = comp.ko_i, comp.ko_v, comp.inv_r
    modes: list[Mode] = []
    for mode, t_seg, i0, v0 in segments:
        if not modes or modes[-1] is not mode:
            modes.append(mode)
        if t_seg <= 0.0:
            continue
        tag = 0 if mode is Mode.SWITCH_ON else (1 if mode is Mode.DIODE_ON else 2)
        sys = (comp.on, comp.diode, comp.off)[tag]
        di0 = i0 - sys.xp_i
        dv0 = v0 - sys.xp_v
        nodes = comp._segment_nodes(tag, sys, t_seg)
        src = 0.0
        diss = 0.0
        vint = 0.0
        for (f11, f12, f21, f22), w in zip(nodes, _GAUSS_WEIGHTS):
            ii = sys.xp_i + f11 * di0 + f12 * dv0
            vv = sys.xp_v + f21 * di0 + f22 * dv0
            vo = ko_i * ii + ko_v * vv
            ic = ii - vo * inv_r
            diss += w * (R_L * ii * ii + R_C * ic * ic + vo * vo * inv_r)
            vint += w * vo
            if tag == 0:
                src += w * ii
        e_src += E * src * t_seg
        e_diss += diss * t_seg
        vout_int += vint * t_seg

    new_state = CircuitState(i_L=i, v_C=v)
    telem = StepTelemetry(
        v_out_end=comp.v_out(i, v),
        v_out_mean=vout_int / dt,
        source_energy=e_src,
        dissipated_energy=e_diss,
        modes=tuple(modes),
    )
    return new_state, telem


def dc_duty_for_target(params: CircuitParams, v_ref: float) -> float:
    """Averaged-model duty ratio that regulates the mean output to v_ref.

    In continuous conduction the cycle-mean loop equation gives
    D = (v_ref + i_L * R_L) / E with i_L = v_ref / R.  Saturates into [0, 1]
    when the target is unreachable.
    """
    i_load = v_ref / params.R if math.isfinite(params.R) else 0.0
    duty = (v_ref + i_load * params.R_L) / params.E
    return min(max(duty, 0.0), 1.0)
