"""Small-signal analysis: DC operating point, complex frequency sweeps,
transfer functions (PSR included) and loop-gain extraction at break ports.

Loop gain uses an ideal break: the named port is opened, a test source
drives the forward (``to``) side and the return (``from``) side is
terminated with the impedance seen looking into the forward side.  When the
forward node feeds only controlled-source inputs, that impedance is infinite
and the break is exact; this holds by construction for the shipped LDO model.
The reported quantity is the return ratio ``T = -V(from) / V(injected)``, so
a well-behaved negative-feedback loop starts near 0 degrees of phase and the
phase margin is ``180 + phase(T)`` at the unity crossing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CircuitError, LdosimError
from .mna import MnaStructure, newton_solve, solve_dense, stamp_linear
from .netlist import (
    BreakPort, Circuit, ISource, NonlinearVccs, VSource, connection_terminals,
)

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Sweep / response containers

@dataclass(frozen=True)
class FrequencySweep:
    """Logarithmic frequency grid including both endpoints."""

    start_hz: float
    stop_hz: float
    points_per_decade: int = 40

    def __post_init__(self):
        if not (self.start_hz > 0.0):
            raise ValueError("start_hz must be > 0")
        if not (self.stop_hz > self.start_hz):
            raise ValueError("stop_hz must exceed start_hz")
        if self.points_per_decade < 1:
            raise ValueError("points_per_decade must be >= 1")

    def grid(self) -> np.ndarray:
        decades = math.log10(self.stop_hz / self.start_hz)
        n = max(2, int(math.ceil(decades * self.points_per_decade)) + 1)
        freqs = np.logspace(math.log10(self.start_hz), math.log10(self.stop_hz), n)
        freqs[0] = self.start_hz
        freqs[-1] = self.stop_hz
        return freqs


@dataclass
class FrequencyResponse:
    """Complex transfer-function samples over a frequency grid."""

    freqs_hz: np.ndarray
    values: np.ndarray

    def mag_db(self) -> np.ndarray:
        return 20.0 * np.log10(np.abs(self.values))

    def phase_deg(self, unwrap: bool = True) -> np.ndarray:
        ph = np.angle(self.values)
        if unwrap:
            ph = np.unwrap(ph)
        return np.degrees(ph)


@dataclass
class LoopGainResult:
    response: FrequencyResponse
    dc_gain_db: float
    ugbw_hz: float | None = None
    phase_margin_deg: float | None = None


@dataclass
class OperatingPoint:
    """DC solution plus the linearization data of every nonlinear source."""

    node_voltages: np.ndarray
    branch_currents: dict = field(default_factory=dict)
    nonlinear: dict = field(default_factory=dict)  # eid -> (vc, i, gm)

    def voltage(self, node: int) -> float:
        return float(self.node_voltages[node])

    def gm(self, eid: int) -> float:
        return self.nonlinear[eid][2]


# ---------------------------------------------------------------------------
# DC operating point

def dc_operating_point(circuit: Circuit, newton_tol: float = 1e-9,
                       max_iter: int = 100, *, mode: int = 0,
                       x0: np.ndarray | None = None) -> OperatingPoint:
    """Solve the nonlinear DC system; AC magnitudes are ignored.

    The KCL residual at every node ends up below ``newton_tol`` times the
    node's conductance scale.  Raises ConvergenceError or
    SingularMatrixError on failure.
    """
    st = MnaStructure(circuit)
    base = stamp_linear(st, dtype=float, with_caps_omega=None, dc_sources=True)
    x, op = newton_solve(st, base, mode=mode, x0=x0, tol=newton_tol,
                         max_iter=max_iter)
    voltages = np.zeros(circuit.node_count)
    voltages[1:] = x[:st.n_nodes]
    branches = {eid: float(x[idx]) for eid, idx in st.branch_index.items()}
    return OperatingPoint(voltages, branches, op)


def _linearized_gms(circuit: Circuit, op: OperatingPoint | None) -> dict:
    gms = {}
    for eid, el in enumerate(circuit.elements):
        if isinstance(el, NonlinearVccs):
            if op is None:
                raise LdosimError("nonlinear circuit requires an operating point")
            gms[eid] = op.nonlinear[eid][2]
    return gms


def _has_nonlinear(circuit: Circuit) -> bool:
    return any(isinstance(el, NonlinearVccs) for el in circuit.elements)


# ---------------------------------------------------------------------------
# AC sweep

def ac_sweep(circuit: Circuit, sweep: FrequencySweep, input_source_id: int,
             output_node, *, mode: int = 0,
             op: OperatingPoint | None = None) -> FrequencyResponse:
    """Sweep the linearized circuit and return ``V(output)/ac_input``.

    Only the designated source is AC-driven; every other source is at its
    quiescent value (AC zero).
    """
    source = circuit.element(input_source_id)
    if isinstance(source, VSource):
        amp = source.ac_magnitude_volts
    elif isinstance(source, ISource):
        amp = source.ac_magnitude_amps
    else:
        raise CircuitError(f"element {input_source_id} is not a V or I source")
    if amp == 0.0:
        raise CircuitError(f"source {input_source_id} has zero AC magnitude")

    out = circuit.node(output_node)
    if op is None and _has_nonlinear(circuit):
        op = dc_operating_point(circuit, mode=mode)
    gms = _linearized_gms(circuit, op)

    st = MnaStructure(circuit)
    freqs = sweep.grid()
    values = np.empty(len(freqs), dtype=complex)
    for i, f in enumerate(freqs):
        stamps = stamp_linear(st, dtype=complex, with_caps_omega=TWO_PI * f,
                              dc_sources=False, nl_gm=gms)
        if isinstance(source, VSource):
            stamps.b[st.branch_index[input_source_id]] += amp
        else:
            stamps.current(st, source.pos, source.neg, amp)
        x = solve_dense(stamps.A, stamps.b, st, freq_hz=f)
        values[i] = x[st.nidx(out)] / amp if out > 0 else 0.0
    resp = FrequencyResponse(freqs, values)
    if not np.all(np.isfinite(values)):
        raise LdosimError("non-finite AC response")
    return resp


# ---------------------------------------------------------------------------
# Loop gain

def _first_unity_crossing(freqs: np.ndarray, mag: np.ndarray):
    """First downward crossing of |T| through 1 (log-log interpolation)."""
    for i in range(len(mag) - 1):
        if mag[i] >= 1.0 > mag[i + 1]:
            if mag[i] == 1.0:
                return float(freqs[i]), i
            lx0, lx1 = math.log10(freqs[i]), math.log10(freqs[i + 1])
            ly0, ly1 = math.log10(mag[i]), math.log10(mag[i + 1])
            lf = lx0 + (0.0 - ly0) * (lx1 - lx0) / (ly1 - ly0)
            return 10.0 ** lf, i
    return None, None


def loop_gain(circuit: Circuit, break_port_label: str, sweep: FrequencySweep,
              *, mode: int = 0, amplitude: float = 1.0,
              op: OperatingPoint | None = None) -> LoopGainResult:
    """Open the named break port and measure the loop transmission.

    The operating point (when the circuit is nonlinear) is computed with the
    loop closed; the AC measurement then opens the port, injects ``amplitude``
    into the forward side and reads the returned voltage on the break side.
    """
    port_eid, port = circuit.break_port(break_port_label)
    if port.from_node == 0 or port.to_node == 0:
        raise CircuitError("break port terminals must be non-ground nodes")

    if op is None and _has_nonlinear(circuit):
        op = dc_operating_point(circuit, mode=mode)
    gms = _linearized_gms(circuit, op)

    # forward-side input impedance is infinite iff nothing conducts there
    needs_termination = any(
        port.to_node in connection_terminals(el)
        for eid, el in enumerate(circuit.elements) if eid != port_eid)

    probe_st = MnaStructure(circuit, open_break=port_eid)

    meas = Circuit()
    meas.node_count = circuit.node_count
    meas._labels = list(circuit._labels)
    meas.elements = list(circuit.elements)
    inject_eid = len(meas.elements)
    meas.elements.append(VSource(port.to_node, 0, 0.0, amplitude))
    meas_st = MnaStructure(meas, open_break=port_eid)

    freqs = sweep.grid()
    values = np.empty(len(freqs), dtype=complex)
    for i, f in enumerate(freqs):
        omega = TWO_PI * f
        y_term = 0.0
        if needs_termination:
            probe = stamp_linear(probe_st, dtype=complex, with_caps_omega=omega,
                                 dc_sources=False, nl_gm=gms)
            probe.current(probe_st, 0, port.to_node, 1.0)  # 1 A into the node
            xz = solve_dense(probe.A, probe.b, probe_st, freq_hz=f)
            z_in = xz[probe_st.nidx(port.to_node)]
            if z_in != 0.0:
                y_term = 1.0 / z_in
        stamps = stamp_linear(meas_st, dtype=complex, with_caps_omega=omega,
                              dc_sources=False, nl_gm=gms)
        stamps.b[meas_st.branch_index[inject_eid]] += amplitude
        if y_term != 0.0:
            stamps.admittance(meas_st, port.from_node, 0, y_term)
        x = solve_dense(stamps.A, stamps.b, meas_st, freq_hz=f)
        values[i] = -x[meas_st.nidx(port.from_node)] / amplitude

    resp = FrequencyResponse(freqs, values)
    mag = np.abs(values)
    dc_gain_db = float(20.0 * math.log10(mag[0])) if mag[0] > 0 else -math.inf

    ugbw, idx = _first_unity_crossing(freqs, mag)
    pm = None
    if ugbw is not None:
        phase = resp.phase_deg(unwrap=True)
        lx = np.log10(freqs)
        phi = float(np.interp(math.log10(ugbw), lx, phase))
        pm = 180.0 + phi
    return LoopGainResult(resp, dc_gain_db, ugbw, pm)


# ---------------------------------------------------------------------------
# Power-supply rejection

def psr(circuit: Circuit, sweep: FrequencySweep, supply_source_id: int,
        output_node, *, mode: int = 0,
        op: OperatingPoint | None = None) -> FrequencyResponse:
    """Supply-to-output transfer ``V(out)/V(supply)``; negative dB rejects."""
    source = circuit.element(supply_source_id)
    if not isinstance(source, VSource):
        raise CircuitError("supply source must be a voltage source")
    return ac_sweep(circuit, sweep, supply_source_id, output_node,
                    mode=mode, op=op)


# ---------------------------------------------------------------------------
# CSV output

def write_response_csv(resp: FrequencyResponse, path) -> None:
    """``freq_hz,re,im,mag_db,phase_deg`` rows, 9 significant digits."""
    mag = resp.mag_db()
    ph = resp.phase_deg(unwrap=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("freq_hz,re,im,mag_db,phase_deg\n")
        for f, v, m, p in zip(resp.freqs_hz, resp.values, mag, ph):
            fh.write(f"{f:.8e},{v.real:.8e},{v.imag:.8e},{m:.8e},{p:.8e}\n")
