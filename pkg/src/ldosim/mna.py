"""Modified nodal analysis stamping and dense solves (internal).

Unknown vector layout: node voltages for nodes ``1..N-1`` followed by branch
currents, one per voltage source and per closed break port, in element order.
Circuits here have tens of nodes at most, so everything is dense NumPy with
LU partial pivoting; sparsity machinery is deliberately absent.

Sign conventions follow SPICE: the branch current of a voltage source and the
output current of a (non)linear VCCS flow from the positive terminal through
the element to the negative terminal.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import ConvergenceError, SingularMatrixError
from .netlist import (
    BreakPort, Capacitor, Circuit, ISource, NonlinearVccs, Resistor, VSource,
    Vccs, get_model,
)


class MnaStructure:
    """Unknown bookkeeping for one circuit (optionally with one port opened)."""

    def __init__(self, circuit: Circuit, open_break: int | None = None):
        self.circuit = circuit
        self.open_break = open_break
        self.n_nodes = circuit.node_count - 1

        self.branch_elements: list[int] = []
        for eid, el in enumerate(circuit.elements):
            if isinstance(el, VSource):
                self.branch_elements.append(eid)
            elif isinstance(el, BreakPort) and eid != open_break:
                self.branch_elements.append(eid)
        self.branch_index = {
            eid: self.n_nodes + i for i, eid in enumerate(self.branch_elements)
        }
        self.size = self.n_nodes + len(self.branch_elements)

    def nidx(self, node: int) -> int:
        return node - 1

    def unknown_name(self, idx: int) -> str:
        if idx < self.n_nodes:
            node = idx + 1
            label = self.circuit.label_of(node)
            return f"V({label})" if label else f"V(node {node})"
        eid = self.branch_elements[idx - self.n_nodes]
        return f"I(element {eid})"


class Stamps:
    """Matrix/RHS accumulator with a per-row conductance scale."""

    def __init__(self, size: int, dtype=float):
        self.A = np.zeros((size, size), dtype=dtype)
        self.b = np.zeros(size, dtype=dtype)
        self.scale = np.zeros(size, dtype=float)

    def admittance(self, st: MnaStructure, a: int, b: int, y) -> None:
        mag = abs(y)
        if a > 0:
            ia = st.nidx(a)
            self.A[ia, ia] += y
            self.scale[ia] += mag
        if b > 0:
            ib = st.nidx(b)
            self.A[ib, ib] += y
            self.scale[ib] += mag
        if a > 0 and b > 0:
            self.A[ia, ib] -= y
            self.A[ib, ia] -= y

    def transconductance(self, st: MnaStructure, cp, cn, op, on, g) -> None:
        mag = abs(g)
        for out, sign in ((op, 1.0), (on, -1.0)):
            if out == 0:
                continue
            io = st.nidx(out)
            self.scale[io] += mag
            if cp > 0:
                self.A[io, st.nidx(cp)] += sign * g
            if cn > 0:
                self.A[io, st.nidx(cn)] -= sign * g

    def current(self, st: MnaStructure, pos: int, neg: int, amps) -> None:
        # current flows from pos through the element to neg
        if pos > 0:
            self.b[st.nidx(pos)] -= amps
        if neg > 0:
            self.b[st.nidx(neg)] += amps


def _stamp_branch_incidence(stamps: Stamps, st: MnaStructure, row: int,
                            pos: int, neg: int) -> None:
    if pos > 0:
        ip = st.nidx(pos)
        stamps.A[ip, row] += 1.0
        stamps.A[row, ip] += 1.0
    if neg > 0:
        ineg = st.nidx(neg)
        stamps.A[ineg, row] -= 1.0
        stamps.A[row, ineg] -= 1.0
    stamps.scale[row] = max(stamps.scale[row], 1.0)


def stamp_linear(st: MnaStructure, *, dtype=float, with_caps_omega=None,
                 dc_sources=True, nl_gm: dict | None = None) -> Stamps:
    """Stamp every element that does not depend on the unknown vector.

    ``with_caps_omega``: None leaves capacitors open (DC); a float stamps
    their complex admittance ``j*omega*C``.  ``nl_gm`` maps the element id of
    a NonlinearVccs to a linearized transconductance (AC use).
    """
    stamps = Stamps(st.size, dtype=dtype)
    circuit = st.circuit
    for eid, el in enumerate(circuit.elements):
        if isinstance(el, Resistor):
            stamps.admittance(st, el.a, el.b, 1.0 / el.ohms)
        elif isinstance(el, Capacitor):
            if with_caps_omega is not None:
                stamps.admittance(st, el.a, el.b, 1j * with_caps_omega * el.farads)
        elif isinstance(el, Vccs):
            stamps.transconductance(st, el.ctrl_pos, el.ctrl_neg,
                                    el.out_pos, el.out_neg, el.siemens)
        elif isinstance(el, NonlinearVccs):
            if nl_gm is not None:
                stamps.transconductance(st, el.ctrl_pos, el.ctrl_neg,
                                        el.out_pos, el.out_neg, nl_gm[eid])
        elif isinstance(el, VSource):
            row = st.branch_index[eid]
            _stamp_branch_incidence(stamps, st, row, el.pos, el.neg)
            if dc_sources:
                stamps.b[row] += el.dc_volts
        elif isinstance(el, BreakPort):
            if eid in st.branch_index:
                row = st.branch_index[eid]
                _stamp_branch_incidence(stamps, st, row, el.from_node, el.to_node)
        elif isinstance(el, ISource):
            if dc_sources:
                stamps.current(st, el.pos, el.neg, el.dc_amps)
    return stamps


def solve_dense(A: np.ndarray, b: np.ndarray, st: MnaStructure,
                freq_hz: float | None = None) -> np.ndarray:
    """LU solve with an explicit near-singularity diagnostic."""
    lu, piv = lu_factor(A, check_finite=False)
    diag = np.abs(np.diag(lu))
    ref = max(np.abs(A).max(), 1e-30)
    bad = np.where(diag <= ref * 1e-13)[0]
    if bad.size:
        name = st.unknown_name(int(bad[0]))
        where = "" if freq_hz is None else f" at {freq_hz:.6g} Hz"
        raise SingularMatrixError(
            f"singular MNA system{where}: pivot for {name}",
            pivot_name=name, freq_hz=freq_hz)
    return lu_solve((lu, piv), b, check_finite=False)


def ctrl_voltage(x: np.ndarray, st: MnaStructure, cp: int, cn: int) -> float:
    v = 0.0
    if cp > 0:
        v += x[st.nidx(cp)]
    if cn > 0:
        v -= x[st.nidx(cn)]
    return v


def add_nonlinear(stamps_A, stamps_b, scale, x, st: MnaStructure, mode: int):
    """Stamp linearized nonlinear sources at the current iterate.

    Adds Norton companions ``i(vc0) + g*(vc - vc0)`` for every NonlinearVccs
    and returns a dict of the evaluated operating data.
    """
    op = {}
    for eid, el in enumerate(st.circuit.elements):
        if not isinstance(el, NonlinearVccs):
            continue
        fn = get_model(el.model_id)
        vc = ctrl_voltage(x, st, el.ctrl_pos, el.ctrl_neg)
        i, g = fn(vc, el.model_params, mode)
        op[eid] = (vc, i, g)
        # Jacobian part
        for out, sign in ((el.out_pos, 1.0), (el.out_neg, -1.0)):
            if out == 0:
                continue
            io = st.nidx(out)
            scale[io] += abs(g)
            if el.ctrl_pos > 0:
                stamps_A[io, st.nidx(el.ctrl_pos)] += sign * g
            if el.ctrl_neg > 0:
                stamps_A[io, st.nidx(el.ctrl_neg)] -= sign * g
        # residual part: current i - g*vc acts as an independent source
        i0 = i - g * vc
        if el.out_pos > 0:
            stamps_b[st.nidx(el.out_pos)] -= i0
        if el.out_neg > 0:
            stamps_b[st.nidx(el.out_neg)] += i0
    return op


def newton_solve(st: MnaStructure, base: Stamps, *, mode: int = 0,
                 x0: np.ndarray | None = None, tol: float = 1e-9,
                 max_iter: int = 100, extra_b: np.ndarray | None = None):
    """Damped Newton iteration on the MNA residual.

    ``base`` holds all state-independent stamps (DC values already applied).
    Returns ``(x, op)`` where ``op`` maps nonlinear element ids to
    ``(vc, i, gm)`` at the solution.
    """
    n = st.size
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)

    def residual_and_jac(xv):
        A = base.A.copy()
        b = base.b.copy()
        scale = base.scale.copy()
        if extra_b is not None:
            b = b + extra_b
        op = add_nonlinear(A, b, scale, xv, st, mode)
        F = A @ xv - b
        return F, A, scale, op

    F, J, scale, op = residual_and_jac(x)
    norm = np.linalg.norm(F)
    for _ in range(max_iter):
        tol_vec = tol * np.maximum(scale, 1e-12)
        if np.all(np.abs(F) <= tol_vec):
            return x, op
        dx = solve_dense(J, -F, st)
        # step halving (up to 10 times) when the residual grows
        step = 1.0
        for _half in range(11):
            x_try = x + step * dx
            F_try, J_try, scale_try, op_try = residual_and_jac(x_try)
            norm_try = np.linalg.norm(F_try)
            if norm_try <= norm or step <= 1.0 / 1024.0:
                break
            step *= 0.5
        x, F, J, scale, op, norm = x_try, F_try, J_try, scale_try, op_try, norm_try
    tol_vec = tol * np.maximum(scale, 1e-12)
    if np.all(np.abs(F) <= tol_vec):
        return x, op
    worst = int(np.argmax(np.abs(F) / np.maximum(tol_vec, 1e-300)))
    raise ConvergenceError(
        f"Newton failed after {max_iter} iterations; worst residual "
        f"{F[worst]:.3e} A at {st.unknown_name(worst)}",
        residual=float(np.max(np.abs(F))), iterations=max_iter)
