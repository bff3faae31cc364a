"""Behavioral model of the dual-range capacitor-less FVF LDO.

The regulator is collapsed into five behavioral blocks:

* two-stage error amplifier: EA1 drives node ``V_EA``, EA2 drives ``V_CTRL``
  where the compensation capacitor sits (dominant pole of the slow loop),
* an FVF sense branch that pulls current from ``V_OUT`` into ``V_D``,
  comparing the output deviation against ``V_CTRL``,
* a unity-gain gate buffer from ``V_D`` to the pass gate ``V_G`` with low
  output impedance (keeps the gate pole high) and asymmetric drive limits,
* a square-law pass device from the supply into ``V_OUT``.

The supply rail is the reference for the sense load, the buffer output and
the gate capacitance, so the gate rides on the supply and ripple injection
reduces to the pass device's finite output resistance.  A bias controller
switches block strengths and clamps between the two current modes on the
externally driven enable signal.

Small-signal circuits are stamped from the linearization of the very same
nonlinear blocks at the analytic operating point, so transient and AC views
agree by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from enum import IntEnum

from .errors import ConfigError, LoadRangeError
from .netlist import (
    BreakPort, Capacitor, Circuit, ISource, NonlinearVccs, Resistor, VSource,
    Vccs, parse_si, register_model,
)
from .transient import Stimulus


class Mode(IntEnum):
    LOW = 0
    HIGH = 1


# ---------------------------------------------------------------------------
# Parameter record

@dataclass(frozen=True)
class LdoParams:
    """Every behavioral parameter of the regulator, with calibrated defaults.

    The shipped ``params/default.ldo`` file mirrors these field names; the
    defaults below are the calibration artifact that centers the stability,
    rejection and transient targets.
    """

    v_in_v: float = 1.5
    v_out_target_v: float = 1.2
    v_ref_v: float = 1.2
    c_comp_f: float = 40e-12
    c_load_f: float = 160e-12
    c_gate_f: float = 1.0e-12
    gm_ea1: float = 20e-6
    ro_ea1: float = 5e6
    gm_ea2: float = 2e-6
    ro_ea2: float = 5e6
    gm_sense: float = 50e-6
    ro_sense: float = 64e3
    buffer_current_ratio: float = 4.0
    buffer_pull_up_max_a: float = 100e-6
    buffer_pull_down_max_a: float = 25e-6
    ro_buffer: float = 500.0
    gm_pass_low: float = 1.414e-3
    gm_pass_high: float = 2.30e-3
    ro_pass_low: float = 1e6
    ro_pass_high: float = 20e3
    i_ref_a: float = 0.5e-6
    iq_low_a: float = 3e-6
    iq_high_min_a: float = 50e-6
    iq_high_max_a: float = 110e-6
    load_low_max_a: float = 500e-6
    load_high_min_a: float = 5e-3
    load_high_max_a: float = 15e-3
    iq_conventional_a: float = 42e-6

    def __post_init__(self):
        positive = ("c_comp_f", "c_load_f", "c_gate_f", "ro_ea1", "ro_ea2",
                    "ro_sense", "ro_buffer", "ro_pass_low", "ro_pass_high")
        for name in positive:
            if not (getattr(self, name) > 0.0):
                raise ValueError(f"{name} must be > 0")
        if not (0.0 < self.iq_low_a < self.iq_high_min_a <= self.iq_high_max_a):
            raise ValueError("need 0 < iq_low_a < iq_high_min_a <= iq_high_max_a")
        if not (self.load_low_max_a < self.load_high_min_a < self.load_high_max_a):
            raise ValueError("load ranges must be ordered low < high_min < high_max")
        if self.buffer_current_ratio < 1.0:
            raise ValueError("buffer_current_ratio must be >= 1")


def params_to_text(params: LdoParams) -> str:
    lines = ["# LDO behavioral parameters (SI suffixes allowed)"]
    for f in fields(LdoParams):
        lines.append(f"{f.name} = {getattr(params, f.name):.6g}")
    return "\n".join(lines) + "\n"


def load_params(path) -> LdoParams:
    """Read a flat key = value parameter file; unlisted fields keep defaults."""
    known = {f.name for f in fields(LdoParams)}
    overrides = {}
    with open(path, "r", encoding="utf-8") as fh:
        for no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, _, val = line.partition("=")
            else:
                parts = line.split(None, 1)
                if len(parts) != 2:
                    raise ConfigError(f"{path}:{no}: expected 'name = value'")
                key, val = parts
            key = key.strip()
            if key not in known:
                raise ConfigError(f"{path}:{no}: unknown parameter {key!r}")
            overrides[key] = parse_si(val.strip())
    return LdoParams(**overrides)


def save_params(params: LdoParams, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(params_to_text(params))


# ---------------------------------------------------------------------------
# Mode rules

def mode_from_ven(ven_volts: float, v_in_v: float) -> Mode:
    """Enable mapping: high current mode iff the enable pin sits above half
    the supply.  Deterministic, no hysteresis; the pin is a clean external
    digital control."""
    return Mode.HIGH if ven_volts > 0.5 * v_in_v else Mode.LOW


def quiescent_current(params: LdoParams, mode: Mode, i_load_a: float) -> float:
    """Regulator ground current per the dual-range schedule.

    Low mode draws a fixed floor regardless of load.  High mode interpolates
    linearly between the schedule endpoints over the high load range
    (clamped outside it).
    """
    if i_load_a < 0.0:
        raise ValueError("i_load_a must be >= 0")
    if mode == Mode.LOW:
        if i_load_a > params.load_low_max_a:
            raise LoadRangeError(
                f"load {i_load_a:.3g} A exceeds the low-mode maximum "
                f"{params.load_low_max_a:.3g} A; the controller should have "
                "switched to high mode")
        return params.iq_low_a
    span = params.load_high_max_a - params.load_high_min_a
    frac = (i_load_a - params.load_high_min_a) / span
    iq = params.iq_high_min_a + (params.iq_high_max_a - params.iq_high_min_a) * frac
    return min(max(iq, params.iq_high_min_a), params.iq_high_max_a)


def _check_load_range(params: LdoParams, mode: Mode, i_load_a: float) -> None:
    if mode == Mode.LOW:
        if not (0.0 <= i_load_a <= params.load_low_max_a):
            raise LoadRangeError(
                f"low mode supports 0..{params.load_low_max_a:.3g} A, "
                f"got {i_load_a:.3g} A")
    else:
        if not (params.load_high_min_a <= i_load_a <= params.load_high_max_a):
            raise LoadRangeError(
                f"high mode supports {params.load_high_min_a:.3g}.."
                f"{params.load_high_max_a:.3g} A, got {i_load_a:.3g} A")


# ---------------------------------------------------------------------------
# Bias mapping (mode-dependent block constants)

# fractions of the mode's base quiescent current assigned to each block
_SENSE_BIAS_FRAC = {Mode.LOW: 0.4, Mode.HIGH: 0.8}
_EA1_SAT_FRAC = 0.5         # EA1 output clamps at half the stage bias
_EA2_SOURCE_FRAC = 0.65     # EA2 sourcing (slews the compensation node up)
_EA2_SINK_FRAC = 3.0        # EA2 sinks harder than it sources (class-AB)
_VTH_PASS_HIGH = 0.4


@dataclass(frozen=True)
class BlockBias:
    """Derived per-mode constants of the five behavioral blocks."""

    mode: Mode
    i_ref_a: float
    i_sense_a: float            # FVF branch standing current (pulled off V_OUT)
    i_stand_pass_a: float       # pass device standing current
    k_pass: float               # square-law strength
    vth_pass: float
    vov_stand: float
    v_shift: float              # buffer level shift, gate to sense node
    ro_pass: float
    gm_ea1: float
    ro_ea1: float
    sat_ea1: float
    gm_ea2: float
    ro_ea2: float
    sat_ea2_up: float
    sat_ea2_down: float
    gm_buf: float
    buf_up_a: float
    buf_down_a: float


def derive_bias(params: LdoParams, mode: Mode) -> BlockBias:
    """Map the parameter record onto mode-dependent block constants.

    The reference current is mode-invariant.  EA strengths scale with the
    mode's base quiescent current (gm up, ro down, gain preserved); output
    clamps scale linearly with that bias.  The pass square law is anchored
    at the mode's standing current so the per-mode gm fields are the
    transconductance at zero external load.
    """
    iq_base = params.iq_low_a if mode == Mode.LOW else params.iq_high_min_a
    ea_scale = 1.0 if mode == Mode.LOW else (
        params.iq_high_min_a / (2.0 * params.iq_low_a))
    buf_scale = 1.0 if mode == Mode.HIGH else (
        params.iq_low_a / params.iq_high_min_a)

    dropout = params.v_in_v - params.v_out_target_v
    i_sense = _SENSE_BIAS_FRAC[mode] * iq_base
    ro_pass = params.ro_pass_low if mode == Mode.LOW else params.ro_pass_high
    gm_pass = params.gm_pass_low if mode == Mode.LOW else params.gm_pass_high
    i_stand = i_sense - dropout / ro_pass
    if i_stand <= 0.0:
        raise ValueError("pass standing current must stay positive; "
                         "raise ro_pass or the sense bias fraction")
    k_pass = gm_pass * gm_pass / (4.0 * i_stand)
    vov_stand = math.sqrt(i_stand / k_pass)

    # high-mode threshold is the anchor; the low-mode one keeps the standing
    # gate voltage identical so mode switching does not kick the gate
    bias_high_needed = mode == Mode.LOW
    if bias_high_needed:
        hi = derive_bias(params, Mode.HIGH)
        vth = hi.vth_pass + hi.vov_stand - vov_stand
    else:
        vth = _VTH_PASS_HIGH
    v_shift = vth + vov_stand

    return BlockBias(
        mode=mode,
        i_ref_a=params.i_ref_a,
        i_sense_a=i_sense,
        i_stand_pass_a=i_stand,
        k_pass=k_pass,
        vth_pass=vth,
        vov_stand=vov_stand,
        v_shift=v_shift,
        ro_pass=ro_pass,
        gm_ea1=params.gm_ea1 * ea_scale,
        ro_ea1=params.ro_ea1 / ea_scale,
        sat_ea1=_EA1_SAT_FRAC * iq_base,
        gm_ea2=params.gm_ea2 * ea_scale,
        ro_ea2=params.ro_ea2 / ea_scale,
        sat_ea2_up=_EA2_SOURCE_FRAC * iq_base,
        sat_ea2_down=_EA2_SINK_FRAC * iq_base,
        gm_buf=1.0 / params.ro_buffer,
        buf_up_a=params.buffer_pull_up_max_a * buf_scale,
        buf_down_a=params.buffer_pull_down_max_a * buf_scale,
    )


# ---------------------------------------------------------------------------
# Analytic operating point and block linearizations

@dataclass(frozen=True)
class LdoOperatingPoint:
    mode: Mode
    i_load_a: float
    i_pass_a: float
    i_sense_a: float
    v_out: float
    v_ctrl: float
    v_ea: float
    v_d: float
    v_g: float
    gm_pass: float
    gm_sense_eff: float
    gm_ea1_eff: float
    gm_ea2_eff: float
    gm_buf_eff: float


def operating_point(params: LdoParams, mode: Mode,
                    i_load_a: float) -> LdoOperatingPoint:
    """Closed-form equilibrium of the behavioral blocks at a fixed load.

    Solves the standing currents by fixed-point iteration (the coupling
    through the sense branch is a mild contraction) and propagates the EA
    chain backwards for the residual regulation offset.
    """
    bias = derive_bias(params, mode)
    p = params
    dropout = p.v_in_v - p.v_out_target_v
    bleed = dropout / bias.ro_pass

    i_s = bias.i_sense_a
    for _ in range(200):
        i_pass = max(i_load_a + i_s - bleed, 1e-12)
        vov = math.sqrt(i_pass / bias.k_pass)
        i_s_new = bias.i_sense_a + (bias.vov_stand - vov) / p.ro_sense
        if abs(i_s_new - i_s) < 1e-18:
            i_s = i_s_new
            break
        i_s = i_s_new
    i_pass = max(i_load_a + i_s - bleed, 1e-12)
    vov = math.sqrt(i_pass / bias.k_pass)

    v_g = p.v_in_v - bias.vth_pass - vov
    v_d = v_g + bias.v_shift

    ratio = i_s / bias.i_sense_a - 1.0
    ratio = min(max(ratio, -0.999999), 0.999999)
    x_sense = math.atanh(ratio) * bias.i_sense_a / p.gm_sense

    # EA chain: iterate once for the (tiny) output offset
    dv_out = 0.0
    for _ in range(5):
        v_ctrl = dv_out - x_sense
        i2 = v_ctrl / bias.ro_ea2
        sat2 = bias.sat_ea2_up if i2 >= 0 else bias.sat_ea2_down
        r2 = min(max(i2 / sat2, -0.999999), 0.999999)
        v_ea = math.atanh(r2) * sat2 / bias.gm_ea2
        i1 = v_ea / bias.ro_ea1
        r1 = min(max(i1 / bias.sat_ea1, -0.999999), 0.999999)
        x1 = math.atanh(r1) * bias.sat_ea1 / bias.gm_ea1
        dv_new = (p.v_ref_v - p.v_out_target_v) - x1
        if abs(dv_new - dv_out) < 1e-15:
            dv_out = dv_new
            break
        dv_out = dv_new

    return LdoOperatingPoint(
        mode=mode, i_load_a=i_load_a, i_pass_a=i_pass, i_sense_a=i_s,
        v_out=p.v_out_target_v + dv_out, v_ctrl=v_ctrl, v_ea=v_ea,
        v_d=v_d, v_g=v_g,
        gm_pass=2.0 * math.sqrt(bias.k_pass * i_pass),
        gm_sense_eff=p.gm_sense * (1.0 - ratio * ratio),
        gm_ea1_eff=bias.gm_ea1 * (1.0 - r1 * r1),
        gm_ea2_eff=bias.gm_ea2 * (1.0 - r2 * r2),
        gm_buf_eff=bias.gm_buf,
    )


def node_pole_estimates(params: LdoParams, mode: Mode,
                        i_load_a: float) -> dict:
    """Single-node RC pole estimates, straight from the parameter record."""
    bias = derive_bias(params, mode)
    op = operating_point(params, mode, i_load_a)
    r_out = bias.ro_pass
    if op.gm_sense_eff > 0:
        r_out = 1.0 / (1.0 / r_out + op.gm_sense_eff)
    if i_load_a > 0.0:
        r_load = params.v_out_target_v / i_load_a
        r_out = 1.0 / (1.0 / r_out + 1.0 / r_load)
    return {
        "V_CTRL": 1.0 / (2.0 * math.pi * bias.ro_ea2 * params.c_comp_f),
        "V_OUT": 1.0 / (2.0 * math.pi * r_out * params.c_load_f),
        "V_G": 1.0 / (2.0 * math.pi * params.ro_buffer * params.c_gate_f),
    }


# ---------------------------------------------------------------------------
# Nonlinear block models (registered for the transient engine)

def _mode_key(mode: int) -> str:
    return "high" if mode else "low"


def _asym_sat(x, gm, up, down):
    """Odd transconductance with asymmetric smooth clamps; slope gm at 0."""
    if x >= 0.0:
        t = math.tanh(gm * x / up)
        return up * t, gm * (1.0 - t * t)
    t = math.tanh(gm * x / down)
    return down * t, gm * (1.0 - t * t)


def _ldo_ea_model(vc, p, mode):
    m = p[_mode_key(mode)]
    return _asym_sat(vc, m["gm"], m["sat_up"], m["sat_down"])


def _ldo_sense_model(vc, p, mode):
    m = p[_mode_key(mode)]
    x = vc - p["v_out_target"]
    t = math.tanh(m["gm"] * x / m["i_bias"])
    return m["i_bias"] * (1.0 + t), m["gm"] * (1.0 - t * t)


def _ldo_buffer_model(vc, p, mode):
    m = p[_mode_key(mode)]
    return _asym_sat(vc - m["v_shift"], p["gm_buf"], m["up"], m["down"])


def _ldo_pass_model(vc, p, mode):
    m = p[_mode_key(mode)]
    x = vc - m["vth"]
    if x <= 0.0:
        return 0.0, 0.0
    return m["k"] * x * x, 2.0 * m["k"] * x


register_model("ldo_ea", _ldo_ea_model)
register_model("ldo_sense", _ldo_sense_model)
register_model("ldo_buffer", _ldo_buffer_model)
register_model("ldo_pass", _ldo_pass_model)


# ---------------------------------------------------------------------------
# Circuit builders

def _add_common_rails(circuit: Circuit, params: LdoParams):
    vin = circuit.new_node("V_IN")
    vref = circuit.new_node("V_REF")
    vin_src = circuit.add(VSource(vin, 0, params.v_in_v, 1.0))
    circuit.add(VSource(vref, 0, params.v_ref_v, 0.0))
    return vin, vref, vin_src


def build_small_signal(params: LdoParams, mode: Mode, i_load_a: float, *,
                       buffer_bypassed: bool = False) -> Circuit:
    """Linear circuit at the analytic operating point for one (mode, load).

    Labels V_EA, V_CTRL, V_D, V_G, V_OUT and break ports ``loop1`` (sense
    output to buffer input), ``loop2`` (EA interstage) and ``overall``
    (buffer output to pass gate).  The load is the target voltage over the
    load current, in parallel with the pass output resistance and the load
    capacitance; the sense branch input impedance appears automatically
    through its stamp.

    With ``buffer_bypassed`` the sense node drives the gate directly through
    its own output resistance (the gate pole collapses onto the sense node);
    only ``loop2`` and ``overall`` ports exist in that variant.
    """
    _check_load_range(params, mode, i_load_a)
    bias = derive_bias(params, mode)
    op = operating_point(params, mode, i_load_a)

    c = Circuit()
    vin, vref, vin_src = _add_common_rails(c, params)
    vout = c.new_node("V_OUT")
    vea = c.new_node("V_EA")
    vea_in = c.new_node()
    vctrl = c.new_node("V_CTRL")

    # error amplifier
    c.add(Vccs(vref, vout, 0, vea, op.gm_ea1_eff))
    c.add(Resistor(vea, 0, bias.ro_ea1))
    c.add(BreakPort(vea, vea_in, "loop2"))
    c.add(Vccs(vea_in, 0, 0, vctrl, op.gm_ea2_eff))
    c.add(Resistor(vctrl, 0, bias.ro_ea2))
    c.add(Capacitor(vctrl, 0, params.c_comp_f))

    if not buffer_bypassed:
        vd = c.new_node("V_D")
        vd_in = c.new_node()
        vg = c.new_node("V_G")
        vg_in = c.new_node()
        c.add(Vccs(vout, vctrl, vout, vd, op.gm_sense_eff))
        c.add(Resistor(vd, vin, params.ro_sense))
        c.add(BreakPort(vd, vd_in, "loop1"))
        c.add(Vccs(vd_in, vg, vin, vg, op.gm_buf_eff))
        c.add(Capacitor(vg, vin, params.c_gate_f))
        c.add(BreakPort(vg, vg_in, "overall"))
    else:
        vg = c.new_node("V_G")
        vg_in = c.new_node()
        c.add(Vccs(vout, vctrl, vout, vg, op.gm_sense_eff))
        c.add(Resistor(vg, vin, params.ro_sense))
        c.add(Capacitor(vg, vin, params.c_gate_f))
        c.add(BreakPort(vg, vg_in, "overall"))

    # pass device and output network
    c.add(Vccs(vin, vg_in, vin, vout, op.gm_pass))
    c.add(Resistor(vin, vout, bias.ro_pass))
    c.add(Capacitor(vout, 0, params.c_load_f))
    if i_load_a > 0.0:
        c.add(Resistor(vout, 0, params.v_out_target_v / i_load_a))
    return c


SUPPLY_SOURCE = 0  # element id of the supply V source in built circuits
REF_SOURCE = 1


@dataclass
class TransientSetup:
    """Nonlinear circuit plus the stimulus set driving it."""

    circuit: Circuit
    stimuli: list
    supply_source_id: int
    ven_source_id: int
    load_source_id: int
    params: LdoParams

    def node(self, label: str) -> int:
        return self.circuit.node_labels[label]


def build_transient(params: LdoParams, stimuli: dict) -> TransientSetup:
    """Nonlinear behavioral circuit for time-domain runs.

    ``stimuli`` must provide ``"load"`` (current-sink PWL, amps) and
    ``"ven"`` (enable waveform, volts) as breakpoint lists; an optional
    ``"supply_ripple"`` entry ``(amplitude_v, freq_hz)`` rides on the supply.
    The enable stimulus drives the mode controller: block strengths and
    clamps switch when it crosses half its swing.
    """
    for key in ("load", "ven"):
        if key not in stimuli or not stimuli[key]:
            raise ConfigError(f"transient setup requires a {key!r} stimulus")

    bias = {m: derive_bias(params, m) for m in (Mode.LOW, Mode.HIGH)}

    c = Circuit()
    vin, vref, vin_src = _add_common_rails(c, params)
    ven = c.new_node("V_EN")
    ven_src = c.add(VSource(ven, 0, 0.0, 0.0))
    vout = c.new_node("V_OUT")
    vea = c.new_node("V_EA")
    vea_in = c.new_node()
    vctrl = c.new_node("V_CTRL")
    vd = c.new_node("V_D")
    vd_in = c.new_node()
    vg = c.new_node("V_G")
    vg_in = c.new_node()

    def per_mode(fn):
        return {"low": fn(bias[Mode.LOW]), "high": fn(bias[Mode.HIGH])}

    c.add(NonlinearVccs(vref, vout, 0, vea, "ldo_ea", per_mode(
        lambda b: {"gm": b.gm_ea1, "sat_up": b.sat_ea1, "sat_down": b.sat_ea1})))
    # mode-dependent output resistances ride on switched conductance elements
    c.add(NonlinearVccs(vea, 0, vea, 0, "ldo_ro", per_mode(
        lambda b: {"g": 1.0 / b.ro_ea1})))
    c.add(BreakPort(vea, vea_in, "loop2"))
    c.add(NonlinearVccs(vea_in, 0, 0, vctrl, "ldo_ea", per_mode(
        lambda b: {"gm": b.gm_ea2, "sat_up": b.sat_ea2_up,
                   "sat_down": b.sat_ea2_down})))
    c.add(NonlinearVccs(vctrl, 0, vctrl, 0, "ldo_ro", per_mode(
        lambda b: {"g": 1.0 / b.ro_ea2})))
    c.add(Capacitor(vctrl, 0, params.c_comp_f))

    sense_params = per_mode(lambda b: {"gm": params.gm_sense,
                                       "i_bias": b.i_sense_a})
    sense_params["v_out_target"] = params.v_out_target_v
    c.add(NonlinearVccs(vout, vctrl, vout, vd, "ldo_sense", sense_params))
    c.add(Resistor(vd, vin, params.ro_sense))
    # FVF branch bias sink referenced to the supply rail
    c.add(NonlinearVccs(vd, 0, vd, vin, "ldo_sink", per_mode(
        lambda b: {"i": b.i_sense_a})))
    c.add(BreakPort(vd, vd_in, "loop1"))

    buf_params = per_mode(lambda b: {"v_shift": b.v_shift, "up": b.buf_up_a,
                                     "down": b.buf_down_a})
    buf_params["gm_buf"] = bias[Mode.LOW].gm_buf
    c.add(NonlinearVccs(vd_in, vg, vin, vg, "ldo_buffer", buf_params))
    c.add(Capacitor(vg, vin, params.c_gate_f))
    c.add(BreakPort(vg, vg_in, "overall"))

    c.add(NonlinearVccs(vin, vg_in, vin, vout, "ldo_pass", per_mode(
        lambda b: {"k": b.k_pass, "vth": b.vth_pass})))
    c.add(NonlinearVccs(vin, vout, vin, vout, "ldo_ro", per_mode(
        lambda b: {"g": 1.0 / b.ro_pass})))
    c.add(Capacitor(vout, 0, params.c_load_f))

    load_src = c.add(ISource(vout, 0, 0.0, 0.0))

    stim_list = [
        Stimulus(load_src, tuple(stimuli["load"])),
        Stimulus(ven_src, tuple(stimuli["ven"])),
    ]
    if "supply_ripple" in stimuli:
        amp, freq = stimuli["supply_ripple"]
        stim_list.append(Stimulus(vin_src, ((0.0, params.v_in_v),),
                                  sine_amplitude=amp, sine_freq_hz=freq))
    return TransientSetup(c, stim_list, vin_src, ven_src, load_src, params)


def _ldo_ro_model(vc, p, mode):
    g = p[_mode_key(mode)]["g"]
    return g * vc, g


def _ldo_sink_model(vc, p, mode):
    # constant bias current; vc unused
    return p[_mode_key(mode)]["i"], 0.0


register_model("ldo_ro", _ldo_ro_model)
register_model("ldo_sink", _ldo_sink_model)


def initial_guess(setup: TransientSetup):
    """Operating-point seed for the transient DC solve at t = 0."""
    import numpy as np

    from .mna import MnaStructure

    ven0 = next(s for s in setup.stimuli
                if s.source_id == setup.ven_source_id).value(0.0)
    load0 = next(s for s in setup.stimuli
                 if s.source_id == setup.load_source_id).value(0.0)
    mode = mode_from_ven(ven0, setup.params.v_in_v)
    op = operating_point(setup.params, mode, load0)

    st = MnaStructure(setup.circuit)
    x0 = np.zeros(st.size)
    labels = setup.circuit.node_labels
    seeds = {"V_IN": setup.params.v_in_v, "V_REF": setup.params.v_ref_v,
             "V_EN": ven0, "V_OUT": op.v_out, "V_EA": op.v_ea,
             "V_CTRL": op.v_ctrl, "V_D": op.v_d, "V_G": op.v_g}
    for name, val in seeds.items():
        node = labels.get(name)
        if node:
            x0[st.nidx(node)] = val
    # unlabeled break-port partner nodes sit at their driving node's level
    for el in setup.circuit.elements:
        if isinstance(el, BreakPort):
            x0[st.nidx(el.to_node)] = x0[st.nidx(el.from_node)]
    return x0


# ---------------------------------------------------------------------------
# Canonical load-step scenario

@dataclass(frozen=True)
class StepScenario:
    """Mode-switched full-range load step timing and stimuli."""

    stimuli: dict
    t_end_s: float
    t_step_start_s: float       # load ramp up begins (mode switch instant)
    t_step_hold_end_s: float    # last time the high load is still applied
    t_release_start_s: float    # load ramp down begins


def step_scenario(params: LdoParams, *, t_pre_s: float = 1.0e-6,
                  edge_s: float = 80e-9, hold_s: float = 2.0e-6,
                  ven_edge_s: float = 10e-9, release_delay_s: float = 1.0e-6,
                  t_post_s: float = 1.5e-6) -> StepScenario:
    """Enable-driven 0 -> full load -> 0 scenario with ramped edges.

    The load ramp starts exactly when the enable crosses half swing; the
    enable returns low only after the load has ramped off, mirroring a
    controller that leaves high current mode once demand is gone.
    """
    v_in = params.v_in_v
    i_max = params.load_high_max_a
    t_cross = t_pre_s + 0.5 * ven_edge_s
    t_up_end = t_cross + edge_s
    t_down = t_up_end + hold_s
    t_down_end = t_down + edge_s
    t_ven_fall = t_down_end + release_delay_s
    t_end = t_ven_fall + ven_edge_s + t_post_s

    ven = [(0.0, 0.0), (t_pre_s, 0.0), (t_pre_s + ven_edge_s, v_in),
           (t_ven_fall, v_in), (t_ven_fall + ven_edge_s, 0.0)]
    load = [(0.0, 0.0), (t_cross, 0.0), (t_up_end, i_max),
            (t_down, i_max), (t_down_end, 0.0)]
    return StepScenario(
        stimuli={"load": load, "ven": ven},
        t_end_s=t_end,
        t_step_start_s=t_cross,
        t_step_hold_end_s=t_down,
        t_release_start_s=t_down,
    )
