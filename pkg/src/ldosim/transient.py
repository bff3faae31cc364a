"""Nonlinear time-domain simulation.

Implicit one-step integration: trapezoidal rule with a backward-Euler step at
startup and after every stimulus breakpoint or digital event (damps
trapezoidal ringing at discontinuities).  Step size is controlled by doubling
and halving from a local-truncation-error estimate built from divided
differences of the recent solution history.  Steps land exactly on stimulus
breakpoints, and a designated digital stimulus generates mode-switch events
when it crosses half its swing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, LdosimError, TransientStallError
from .mna import MnaStructure, Stamps, newton_solve, stamp_linear
from .netlist import Capacitor, Circuit, ISource, VSource

_H_FLOOR = 1e-15
_GROW_THRESHOLD = 0.08  # err ratio below which the step doubles
_RESTART_FRACTION = 1e-3  # of the gap to the next forced time


@dataclass(frozen=True)
class Stimulus:
    """Piecewise-linear drive for one source, plus an optional sine rider."""

    source_id: int
    breakpoints: tuple  # ((time_s, value), ...) strictly increasing times
    sine_amplitude: float = 0.0
    sine_freq_hz: float = 0.0

    def __post_init__(self):
        times = [t for t, _ in self.breakpoints]
        if not times:
            raise ValueError("stimulus needs at least one breakpoint")
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("breakpoint times must be strictly increasing")
        if times[0] < 0.0:
            raise ValueError("breakpoint times must be >= 0")

    def pwl(self, t: float) -> float:
        pts = self.breakpoints
        if t <= pts[0][0]:
            base = pts[0][1]
        elif t >= pts[-1][0]:
            base = pts[-1][1]
        else:
            for (t0, v0), (t1, v1) in zip(pts, pts[1:]):
                if t0 <= t <= t1:
                    base = v0 + (v1 - v0) * (t - t0) / (t1 - t0)
                    break
        return base

    def value(self, t: float) -> float:
        v = self.pwl(t)
        if self.sine_amplitude:
            v += self.sine_amplitude * math.sin(2.0 * math.pi * self.sine_freq_hz * t)
        return v

    def crossings(self, threshold: float, t_end: float) -> list[float]:
        """Exact times in (0, t_end] where the PWL crosses the threshold."""
        out = []
        pts = list(self.breakpoints)
        if pts[0][0] > 0.0:
            pts.insert(0, (0.0, pts[0][1]))
        for (t0, v0), (t1, v1) in zip(pts, pts[1:]):
            above0, above1 = v0 > threshold, v1 > threshold
            if above0 != above1:
                tc = t0 + (threshold - v0) * (t1 - t0) / (v1 - v0)
                if 0.0 < tc <= t_end:
                    out.append(tc)
        return out


@dataclass
class TransientTrace:
    """Non-uniform time series of node voltages and source branch currents."""

    times_s: np.ndarray
    node_voltages: np.ndarray  # shape (node_count, n_samples); row 0 is ground
    branch_currents: dict = field(default_factory=dict)  # source eid -> series
    events: list = field(default_factory=list)  # (time_s, label)
    labels: dict = field(default_factory=dict)  # name -> node

    def voltage(self, ref) -> np.ndarray:
        if isinstance(ref, str):
            try:
                node = self.labels[ref]
            except KeyError:
                raise KeyError(f"unknown node label {ref!r}") from None
        else:
            node = int(ref)
        return self.node_voltages[node]

    def current(self, source_eid: int) -> np.ndarray:
        return self.branch_currents[source_eid]

    def window(self, t0: float, t1: float) -> "TransientTrace":
        sel = (self.times_s >= t0) & (self.times_s <= t1)
        return TransientTrace(
            self.times_s[sel], self.node_voltages[:, sel],
            {k: v[sel] for k, v in self.branch_currents.items()},
            [(t, l) for t, l in self.events if t0 <= t <= t1],
            dict(self.labels))


def write_trace_csv(trace: TransientTrace, path) -> None:
    """``time_s,<label>...`` rows plus trailing ``# event`` comment lines."""
    names = list(trace.labels)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("time_s," + ",".join(names) + "\n")
        cols = [trace.voltage(n) for n in names]
        for i, t in enumerate(trace.times_s):
            row = ",".join(f"{c[i]:.8e}" for c in cols)
            fh.write(f"{t:.8e},{row}\n")
        for t, label in trace.events:
            fh.write(f"# event,{t:.8e},{label}\n")


def _divided_difference(ts, vs):
    """Newton divided difference f[t0..tk] over column-vector samples."""
    table = [np.asarray(v, dtype=float) for v in vs]
    k = len(table)
    for order in range(1, k):
        for i in range(k - order):
            table[i] = (table[i + 1] - table[i]) / (ts[i + order] - ts[i])
    return table[0]


class _CapState:
    def __init__(self, circuit: Circuit):
        self.caps = [(eid, el) for eid, el in enumerate(circuit.elements)
                     if isinstance(el, Capacitor)]
        self.v = np.zeros(len(self.caps))
        self.i = np.zeros(len(self.caps))

    def init_from(self, voltages):
        for k, (_, el) in enumerate(self.caps):
            self.v[k] = voltages[el.a] - voltages[el.b]
        self.i[:] = 0.0


def simulate(circuit: Circuit, stimuli, t_end_s: float, tol_rel: float = 1e-4,
             tol_abs_v: float = 1e-6, max_step_s: float | None = None, *,
             mode_source_id: int | None = None, newton_tol: float = 1e-9,
             x0_hint=None) -> TransientTrace:
    """Integrate the circuit DAE from a DC start at t=0 to ``t_end_s``.

    ``stimuli`` drive V/I sources by element id.  ``mode_source_id``
    designates the digital stimulus whose half-swing crossings switch the
    nonlinear models between modes and are recorded as events.
    """
    if not (t_end_s > 0.0):
        raise ValueError("t_end_s must be positive")
    report = circuit.validate()
    if not report.ok:
        raise LdosimError(f"circuit fails validation:\n{report}")

    stim_by_src: dict[int, Stimulus] = {}
    for s in stimuli:
        el = circuit.element(s.source_id)
        if not isinstance(el, (VSource, ISource)):
            raise LdosimError(f"stimulus targets element {s.source_id}, "
                              "which is not a V or I source")
        if s.source_id in stim_by_src:
            raise LdosimError(f"duplicate stimulus for source {s.source_id}")
        stim_by_src[s.source_id] = s

    mode_stim = None
    threshold = 0.0
    if mode_source_id is not None:
        mode_stim = stim_by_src.get(mode_source_id)
        if mode_stim is None:
            raise LdosimError("mode_source_id has no stimulus")
        vals = [v for _, v in mode_stim.breakpoints]
        threshold = 0.5 * (min(vals) + max(vals))

    # forced step targets: stimulus breakpoints, mode crossings, t_end
    forced = {t_end_s}
    for s in stim_by_src.values():
        forced.update(t for t, _ in s.breakpoints if 0.0 < t <= t_end_s)
    crossing_set = set()
    if mode_stim is not None:
        crossing_set = set(mode_stim.crossings(threshold, t_end_s))
        forced |= crossing_set
    forced_times = sorted(forced)

    if max_step_s is None:
        max_step_s = t_end_s / 10.0
    for s in stim_by_src.values():
        if s.sine_freq_hz > 0.0:
            max_step_s = min(max_step_s, 1.0 / (20.0 * s.sine_freq_hz))

    st = MnaStructure(circuit)
    static = stamp_linear(st, dtype=float, with_caps_omega=None, dc_sources=False)
    caps = _CapState(circuit)

    def source_values(t):
        vals = {}
        for eid, el in enumerate(circuit.elements):
            if isinstance(el, VSource):
                s = stim_by_src.get(eid)
                vals[eid] = s.value(t) if s else el.dc_volts
            elif isinstance(el, ISource):
                s = stim_by_src.get(eid)
                vals[eid] = s.value(t) if s else el.dc_amps
        return vals

    def current_mode(t):
        if mode_stim is None:
            return 0
        return 1 if mode_stim.value(t) > threshold else 0

    def assemble(t, h=None, be=False):
        stamps = Stamps(st.size)
        stamps.A[:] = static.A
        stamps.b[:] = static.b
        stamps.scale[:] = static.scale
        for eid, val in source_values(t).items():
            el = circuit.element(eid)
            if isinstance(el, VSource):
                stamps.b[st.branch_index[eid]] += val
            else:
                stamps.current(st, el.pos, el.neg, val)
        if h is not None:
            for k, (_, el) in enumerate(caps.caps):
                geq = (el.farads / h) if be else (2.0 * el.farads / h)
                i_hist = geq * caps.v[k] + (0.0 if be else caps.i[k])
                stamps.admittance(st, el.a, el.b, geq)
                stamps.current(st, el.b, el.a, i_hist)
        return stamps

    # DC operating point at t = 0
    mode = current_mode(0.0)
    x, _ = newton_solve(st, assemble(0.0), mode=mode, x0=x0_hint,
                        tol=newton_tol, max_iter=200)

    times: list = []
    volt_rows: list = []
    branch_rows = {eid: [] for eid in source_values(0.0)}
    events: list = []

    def record(t, xv):
        times.append(t)
        v = np.concatenate(([0.0], xv[:st.n_nodes]))
        volt_rows.append(v)
        vals = source_values(t)
        for eid in branch_rows:
            el = circuit.element(eid)
            if isinstance(el, VSource):
                branch_rows[eid].append(xv[st.branch_index[eid]])
            else:
                branch_rows[eid].append(vals[eid])
        return v

    caps.init_from(record(0.0, x))

    next_idx = 0
    gap0 = forced_times[0] if forced_times else t_end_s
    h = min(max(_RESTART_FRACTION * gap0, _H_FLOOR * 10), max_step_s)
    use_be = True
    history = [(0.0, x[:st.n_nodes].copy())]

    t = 0.0
    while t < t_end_s:
        next_forced = forced_times[next_idx]
        t_target = min(t + h, next_forced)
        hit_forced = t_target == next_forced
        h_step = t_target - t
        if h_step < _H_FLOOR:
            raise TransientStallError(
                f"step underflow at t={t:.6e}s", time_s=t)

        try:
            stamps = assemble(t_target, h=h_step, be=use_be)
            x_new, _ = newton_solve(st, stamps, mode=mode, x0=x,
                                    tol=newton_tol, max_iter=60)
        except ConvergenceError as exc:
            h = h_step / 2.0
            if h < _H_FLOOR:
                raise TransientStallError(
                    f"Newton stalled at t={t_target:.6e}s ({exc})",
                    time_s=t_target) from exc
            continue

        # local truncation error from divided differences of node voltages
        ratio = 0.0
        needed = 2 if use_be else 3
        if len(history) >= needed:
            pts = history[-needed:] + [(t_target, x_new[:st.n_nodes])]
            ts = [p[0] for p in pts]
            vs = [p[1] for p in pts]
            dd = _divided_difference(ts, vs)
            if use_be:
                lte = (h_step ** 2) * np.abs(dd)  # h^2/2 * |v''|
            else:
                lte = (h_step ** 3) * np.abs(dd) / 2.0  # h^3/12 * |v'''|
            tol = np.maximum(tol_rel * np.abs(x_new[:st.n_nodes]), tol_abs_v)
            ratio = float(np.max(lte / tol))

        if ratio > 1.0:
            h = h_step / 2.0
            if h < _H_FLOOR:
                worst = int(np.argmax(lte / tol))
                raise TransientStallError(
                    f"error control stalled at t={t_target:.6e}s",
                    time_s=t_target, node=st.unknown_name(worst))
            continue

        # accept
        t = t_target
        x = x_new
        v_full = record(t, x)
        for k, (_, el) in enumerate(caps.caps):
            v_now = v_full[el.a] - v_full[el.b]
            geq = (el.farads / h_step) if use_be else (2.0 * el.farads / h_step)
            i_hist = geq * caps.v[k] + (0.0 if use_be else caps.i[k])
            caps.i[k] = geq * v_now - i_hist
            caps.v[k] = v_now
        history.append((t, x[:st.n_nodes].copy()))
        if len(history) > 4:
            history.pop(0)

        if hit_forced:
            next_idx += 1
            if t in crossing_set:
                new_mode = current_mode(t + _H_FLOOR)
                if new_mode != mode:
                    mode = new_mode
                    events.append((t, "mode:high" if mode else "mode:low"))
            # source slope may be discontinuous here: restart the integrator
            use_be = True
            history = [(t, x[:st.n_nodes].copy())]
            if next_idx < len(forced_times):
                gap = forced_times[next_idx] - t
                h = min(max(_RESTART_FRACTION * gap, _H_FLOOR * 10), max_step_s)
        else:
            use_be = False
            if ratio < _GROW_THRESHOLD:
                h = h_step * 2.0
            else:
                h = h_step
        h = min(h, max_step_s)

    trace = TransientTrace(
        np.array(times), np.column_stack(volt_rows),
        {eid: np.array(rows) for eid, rows in branch_rows.items()},
        events, dict(circuit.node_labels))
    return trace
