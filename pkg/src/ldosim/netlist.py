"""Circuit data model: nodes, elements, validation and the netlist text format.

Node 0 is the global ground and exists in every circuit.  Nodes are dense
integer indices; they are created either explicitly with :meth:`Circuit.new_node`
or implicitly by referencing index ``node_count`` (contiguous growth) when an
element is added.  Element order is preserved and the position of an element in
the list is its stable ``ElementId``.

The line-oriented netlist format::

    R <a> <b> <ohms>
    C <a> <b> <farads>
    G <cp> <cn> <op> <on> <siemens>
    V <p> <n> <dc> <ac>
    I <p> <n> <dc> <ac>
    X <cp> <cn> <op> <on> <model> <k=v ...>
    BREAK <from> <to> <label>
    .label <name> <node>

``#`` starts a comment; values accept SI suffixes (p, n, u, m, k, meg).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .errors import CircuitError, NetlistParseError

# ---------------------------------------------------------------------------
# SI-suffixed numbers

_SI_SUFFIXES = {
    "meg": 1e6,
    "k": 1e3,
    "m": 1e-3,
    "u": 1e-6,
    "n": 1e-9,
    "p": 1e-12,
}

_NUM_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(meg|[knumpKNUMP])?$")


def parse_si(text: str) -> float:
    """Parse a number with an optional SI suffix (``40p`` -> 4e-11)."""
    m = _NUM_RE.match(text.strip())
    if not m:
        raise NetlistParseError(f"not a number: {text!r}")
    value = float(m.group(1))
    suffix = m.group(2)
    if suffix:
        value *= _SI_SUFFIXES[suffix.lower()]
    return value


# ---------------------------------------------------------------------------
# Elements

@dataclass(frozen=True)
class Resistor:
    a: int
    b: int
    ohms: float


@dataclass(frozen=True)
class Capacitor:
    a: int
    b: int
    farads: float


@dataclass(frozen=True)
class Vccs:
    """Linear voltage-controlled current source.

    Current ``gm * (v[ctrl_pos] - v[ctrl_neg])`` flows from ``out_pos``
    through the source to ``out_neg``.  Negative gm is allowed so inverting
    stages need no extra element kind.
    """

    ctrl_pos: int
    ctrl_neg: int
    out_pos: int
    out_neg: int
    siemens: float


@dataclass(frozen=True)
class VSource:
    pos: int
    neg: int
    dc_volts: float
    ac_magnitude_volts: float = 0.0


@dataclass(frozen=True)
class ISource:
    """Independent current source; current flows from ``pos`` through the
    source to ``neg`` (a positive value pulls current out of ``pos``)."""

    pos: int
    neg: int
    dc_amps: float
    ac_magnitude_amps: float = 0.0


@dataclass(frozen=True)
class NonlinearVccs:
    """Controlled current source ``i = f(v_ctrl)`` from a registered model.

    The model function must be continuously differentiable in its control
    voltage (Newton linearizes it).  ``model_params`` is an arbitrary mapping
    interpreted by the model.
    """

    ctrl_pos: int
    ctrl_neg: int
    out_pos: int
    out_neg: int
    model_id: str
    model_params: dict = field(default_factory=dict)

    def __hash__(self):
        return id(self)


@dataclass(frozen=True)
class BreakPort:
    """Inert short between two nodes; only loop-gain analysis opens it."""

    from_node: int
    to_node: int
    label: str


Element = (Resistor, Capacitor, Vccs, VSource, ISource, NonlinearVccs, BreakPort)


def element_terminals(el) -> tuple[int, ...]:
    """All node indices the element references (controls included)."""
    if isinstance(el, (Resistor, Capacitor)):
        return (el.a, el.b)
    if isinstance(el, (Vccs, NonlinearVccs)):
        return (el.ctrl_pos, el.ctrl_neg, el.out_pos, el.out_neg)
    if isinstance(el, (VSource, ISource)):
        return (el.pos, el.neg)
    if isinstance(el, BreakPort):
        return (el.from_node, el.to_node)
    raise CircuitError(f"unknown element type: {el!r}")


def connection_terminals(el) -> tuple[int, ...]:
    """Node indices galvanically connected by the element.

    Control pins of (nonlinear) VCCS elements sense voltage without
    providing a conduction path, so they are excluded here.
    """
    if isinstance(el, (Vccs, NonlinearVccs)):
        return (el.out_pos, el.out_neg)
    return element_terminals(el)


# ---------------------------------------------------------------------------
# Nonlinear device models

_MODEL_REGISTRY: dict = {}


def register_model(model_id: str, fn) -> None:
    """Register ``fn(vc, params, mode) -> (i, di_dvc)`` under ``model_id``."""
    _MODEL_REGISTRY[model_id] = fn


def get_model(model_id: str):
    try:
        return _MODEL_REGISTRY[model_id]
    except KeyError:
        raise CircuitError(f"unknown nonlinear model: {model_id!r}") from None


def _square_law(vc, params, mode):
    # i = k * (vc - vth)^2 for vc > vth, 0 otherwise (C1 at the corner)
    k = params["k"]
    vth = params.get("vth", 0.0)
    x = vc - vth
    if x <= 0.0:
        return 0.0, 0.0
    return k * x * x, 2.0 * k * x


register_model("square_law", _square_law)


# ---------------------------------------------------------------------------
# Circuit

@dataclass
class ValidationViolation:
    kind: str
    message: str
    element_id: int | None = None
    node: int | None = None

    def __str__(self):
        return f"{self.kind}: {self.message}"


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __iter__(self):
        return iter(self.violations)

    def __str__(self):
        if self.ok:
            return "ok"
        return "\n".join(str(v) for v in self.violations)


class Circuit:
    """Node/element graph.  Treated as immutable once analyses start."""

    def __init__(self):
        self.node_count = 1  # ground is node 0
        self.elements: list = []
        self._labels: list[tuple[str, int]] = []

    # -- construction -------------------------------------------------------

    def new_node(self, label: str | None = None) -> int:
        node = self.node_count
        self.node_count += 1
        if label is not None:
            self.set_label(label, node)
        return node

    def set_label(self, name: str, node: int) -> None:
        if not (0 <= node < self.node_count):
            raise CircuitError(f"label {name!r} references unknown node {node}")
        self._labels.append((name, node))

    @property
    def node_labels(self) -> dict:
        """First-binding-wins name -> node map."""
        out = {}
        for name, node in self._labels:
            out.setdefault(name, node)
        return out

    def node(self, ref) -> int:
        """Resolve a node reference (index or label)."""
        if isinstance(ref, str):
            try:
                return self.node_labels[ref]
            except KeyError:
                raise CircuitError(f"unknown node label {ref!r}") from None
        return int(ref)

    def label_of(self, node: int) -> str | None:
        for name, n in self._labels:
            if n == node:
                return name
        return None

    def _admit_terminal(self, t: int) -> None:
        if t < 0:
            raise CircuitError(f"negative node index {t}")
        if t > self.node_count:
            raise CircuitError(
                f"unknown node {t} (circuit has nodes 0..{self.node_count - 1})"
            )
        if t == self.node_count:
            self.node_count += 1

    def add_element(self, el) -> int:
        """Append an element, growing the node set contiguously.

        Returns the stable ElementId (list index).  A terminal may create at
        most the next node index; referencing past that is a structural error.
        """
        if not isinstance(el, Element):
            raise CircuitError(f"not an element: {el!r}")
        for t in element_terminals(el):
            self._admit_terminal(t)
        self.elements.append(el)
        return len(self.elements) - 1

    def add(self, el) -> int:
        return self.add_element(el)

    def element(self, element_id: int):
        return self.elements[element_id]

    def break_port(self, label: str) -> tuple[int, BreakPort]:
        for eid, el in enumerate(self.elements):
            if isinstance(el, BreakPort) and el.label == label:
                return eid, el
        raise CircuitError(f"no BreakPort labelled {label!r}")

    # -- validation ---------------------------------------------------------

    def validate(self) -> ValidationReport:
        """Structural diagnostics; identical output on repeated calls."""
        report = ValidationReport()

        for eid, el in enumerate(self.elements):
            if isinstance(el, Resistor) and not (el.ohms > 0.0):
                report.violations.append(ValidationViolation(
                    "nonpositive-value", f"resistor {eid} has ohms={el.ohms}", eid))
            if isinstance(el, Capacitor) and not (el.farads > 0.0):
                report.violations.append(ValidationViolation(
                    "nonpositive-value", f"capacitor {eid} has farads={el.farads}", eid))
            if isinstance(el, Vccs) and not math.isfinite(el.siemens):
                report.violations.append(ValidationViolation(
                    "nonfinite-value", f"vccs {eid} has siemens={el.siemens}", eid))
            if isinstance(el, NonlinearVccs) and el.model_id not in _MODEL_REGISTRY:
                report.violations.append(ValidationViolation(
                    "unknown-model", f"element {eid} uses model {el.model_id!r}", eid))

        # connectivity to ground through conduction paths
        parent = list(range(self.node_count))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        def union(i, j):
            parent[find(i)] = find(j)

        for el in self.elements:
            conns = connection_terminals(el)
            for t in conns[1:]:
                union(conns[0], t)
        ground = find(0)
        for n in range(1, self.node_count):
            if find(n) != ground:
                report.violations.append(ValidationViolation(
                    "floating-node", f"node {n} has no conduction path to ground",
                    node=n))

        seen: dict = {}
        for name, node in self._labels:
            if name in seen and seen[name] != node:
                report.violations.append(ValidationViolation(
                    "duplicate-label",
                    f"label {name!r} bound to nodes {seen[name]} and {node}"))
            seen.setdefault(name, node)

        return report


# ---------------------------------------------------------------------------
# Netlist text format

def parse_netlist(text: str) -> Circuit:
    """Parse the line-oriented netlist format into a Circuit."""
    stripped = []
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            stripped.append((no, line))

    # pre-create nodes so file order does not matter
    max_node = 0
    for no, line in stripped:
        tok = line.split()
        kind = tok[0].upper()
        idx = {"R": (1, 2), "C": (1, 2), "G": (1, 2, 3, 4), "V": (1, 2),
               "I": (1, 2), "X": (1, 2, 3, 4), "BREAK": (1, 2)}.get(kind)
        if kind == ".LABEL":
            idx = (2,)
        if idx is None:
            raise NetlistParseError(f"unknown card {tok[0]!r}", no)
        for i in idx:
            if i >= len(tok):
                raise NetlistParseError(f"too few fields for {kind}", no)
            try:
                max_node = max(max_node, int(tok[i]))
            except ValueError:
                raise NetlistParseError(f"bad node reference {tok[i]!r}", no) from None

    circuit = Circuit()
    while circuit.node_count <= max_node:
        circuit.new_node()

    for no, line in stripped:
        tok = line.split()
        kind = tok[0].upper()
        try:
            if kind == "R":
                circuit.add(Resistor(int(tok[1]), int(tok[2]), parse_si(tok[3])))
            elif kind == "C":
                circuit.add(Capacitor(int(tok[1]), int(tok[2]), parse_si(tok[3])))
            elif kind == "G":
                circuit.add(Vccs(int(tok[1]), int(tok[2]), int(tok[3]),
                                 int(tok[4]), parse_si(tok[5])))
            elif kind == "V":
                ac = parse_si(tok[4]) if len(tok) > 4 else 0.0
                circuit.add(VSource(int(tok[1]), int(tok[2]), parse_si(tok[3]), ac))
            elif kind == "I":
                ac = parse_si(tok[4]) if len(tok) > 4 else 0.0
                circuit.add(ISource(int(tok[1]), int(tok[2]), parse_si(tok[3]), ac))
            elif kind == "X":
                params = {}
                for kv in tok[6:]:
                    if "=" not in kv:
                        raise NetlistParseError(f"expected k=v, got {kv!r}", no)
                    key, val = kv.split("=", 1)
                    params[key] = parse_si(val)
                circuit.add(NonlinearVccs(int(tok[1]), int(tok[2]), int(tok[3]),
                                          int(tok[4]), tok[5], params))
            elif kind == "BREAK":
                circuit.add(BreakPort(int(tok[1]), int(tok[2]), tok[3]))
            elif kind == ".LABEL":
                circuit.set_label(tok[1], int(tok[2]))
            else:  # pragma: no cover - guarded in the pre-scan
                raise NetlistParseError(f"unknown card {tok[0]!r}", no)
        except IndexError:
            raise NetlistParseError(f"too few fields for {kind}", no) from None
        except NetlistParseError:
            raise
        except (ValueError, CircuitError) as exc:
            raise NetlistParseError(str(exc), no) from None

    return circuit
