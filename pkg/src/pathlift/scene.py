"""Scene files: a declarative description of a chart, a path, a transport and a task.

Two encodings share one schema. The text encoding is a list of items::

    item  := KEY '=' VALUE | KEY '{' item* '}'

where VALUE is any JSON literal (number, string, array, true/false/null) and
``#`` starts a comment that runs to the end of the line (comments may not sit
inside a multi-line value). A file whose first non-blank character is ``{``
is read as JSON instead. Numeric fields accept numbers or expression strings
such as ``"2*pi"``.

Sections and keys::

    chart     { preset = "euclidean" | "sphere"; dim; name; bounds = [[lo, hi], ...] }
    path      { domain = [a, b]; position = [...]; velocity = [...] }
    transport { kind = "generator" | "coefficients" | "connection"
                matrix = [[...]]          # F(s) or Gamma(s, x, v)
                derivative = [[...]]      # optional dF/ds for generators
                preset = "flat" | "sphere"; christoffel = [[[...]]]
                tensor_mode = "full" | "product"
                covector_generator = [[...]]; scalar_potential = "..." }
    task      { domain; s0; t; vector; scalar; x0; velocity0; grid; step; eps
                tensor { p; q; components } }
    check     { <law> = tolerance ...; trials }
    output    { format = "csv" | "json"; path }

Every expression is parsed when the scene is read and every dimension is
checked against the chart, so no numerics run on an inconsistent scene.
"""

import json
import re
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from . import expr
from .errors import ExpressionError, PathliftError, SceneError, ValidationError

SECTIONS = ("chart", "path", "transport", "task", "check", "output")
KINDS = ("generator", "coefficients", "connection")
CHART_PRESETS = ("euclidean", "sphere")
CONNECTION_PRESETS = ("flat", "sphere")
TENSOR_MODES = ("full", "product")
FORMATS = ("csv", "json")

# Default tolerances of the check suite, keyed by the names used in scene files.
CHECK_DEFAULTS = {
    "cocycle": None,  # chosen by provenance: 1e-12 closed form, 1e-7 integrated
    "identity": 1e-12,
    "inverse": 1e-10,
    "round_trip": 1e-7,
    "special_frame": 1e-8,
    "tensor_product": 1e-10,
    "contraction": 1e-10,
    "inverse_pair": 1e-10,
    "scalar_invariance": 1e-10,
    "scalar_cocycle": 1e-14,
}

_KEY = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_DECODER = json.JSONDecoder()


# ---------------------------------------------------------------------------
# text encoding -> tree


def _strip_comments(text):
    out, in_string, escaped = [], False, False
    i = 0
    while i < len(text):
        c = text[i]
        if in_string:
            out.append(c)
            if escaped:
                escaped = False
            elif c == "\\":
                escaped = True
            elif c == '"':
                in_string = False
        elif c == '"':
            in_string = True
            out.append(c)
        elif c == "#":
            while i < len(text) and text[i] != "\n":
                out.append(" ")  # keep byte offsets stable
                i += 1
            continue
        else:
            out.append(c)
        i += 1
    return "".join(out)


def _line_col(text, pos):
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return f"line {line}, column {col}"


class _TextReader:
    def __init__(self, text):
        self.text = _strip_comments(text)
        self.pos = 0

    def _skip(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\n;":
            self.pos += 1

    def _error(self, message):
        return SceneError(f"{message} at {_line_col(self.text, self.pos)}")

    def items(self, closing):
        tree = {}
        while True:
            self._skip()
            if self.pos >= len(self.text):
                if closing:
                    raise self._error("missing '}'")
                return tree
            if self.text[self.pos] == "}":
                if not closing:
                    raise self._error("unexpected '}'")
                self.pos += 1
                return tree
            m = _KEY.match(self.text, self.pos)
            if not m:
                raise self._error(f"expected a key, found {self.text[self.pos]!r}")
            key = m.group()
            if key in tree:
                raise self._error(f"duplicate key {key!r}")
            self.pos = m.end()
            self._skip()
            if self.text.startswith("{", self.pos):
                self.pos += 1
                tree[key] = self.items(closing=True)
            elif self.text.startswith("=", self.pos):
                self.pos += 1
                self._skip()
                try:
                    value, end = _DECODER.raw_decode(self.text, self.pos)
                except json.JSONDecodeError as exc:
                    raise self._error(f"bad value for {key!r}: {exc.msg}") from None
                if isinstance(value, dict):
                    raise self._error(f"use a section, not a JSON object, for {key!r}")
                tree[key] = value
                self.pos = end
            else:
                raise self._error(f"expected '=' or '{{' after {key!r}")


def parse_tree(text):
    """Read either encoding into a plain nested dict."""
    if text.lstrip().startswith("{"):
        try:
            tree = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SceneError(f"invalid JSON scene: {exc}") from None
        if not isinstance(tree, dict):
            raise SceneError("a JSON scene must be an object")
        return tree
    return _TextReader(text).items(closing=False)


# ---------------------------------------------------------------------------
# schema


Node = object  # an expression tree from :mod:`pathlift.expr`


@dataclass(frozen=True)
class ChartSpec:
    dim: int
    preset: str = "euclidean"
    name: Optional[str] = None
    bounds: Optional[Tuple[Tuple[Optional[Node], Optional[Node]], ...]] = None


@dataclass(frozen=True)
class PathSpec:
    domain: Tuple[Node, Node]
    position: Tuple[Node, ...]
    velocity: Optional[Tuple[Node, ...]] = None


@dataclass(frozen=True)
class TransportSpec:
    kind: str
    matrix: Optional[Tuple[Tuple[Node, ...], ...]] = None
    derivative: Optional[Tuple[Tuple[Node, ...], ...]] = None
    preset: Optional[str] = None
    christoffel: Optional[tuple] = None
    tensor_mode: str = "full"
    covector_generator: Optional[Tuple[Tuple[Node, ...], ...]] = None
    scalar_potential: Optional[Node] = None


@dataclass(frozen=True)
class TensorSpec:
    p: int
    q: int
    components: object  # nested tuples of expression trees, depth p + q


@dataclass(frozen=True)
class TaskSpec:
    domain: Optional[Tuple[Node, Node]] = None
    s0: Optional[Node] = None
    t: Optional[Node] = None
    vector: Optional[Tuple[Node, ...]] = None
    scalar: Optional[Node] = None
    tensor: Optional[TensorSpec] = None
    x0: Optional[Tuple[Node, ...]] = None
    velocity0: Optional[Tuple[Node, ...]] = None
    grid: object = None  # an int (uniform count) or a tuple of expression trees
    step: Optional[float] = None
    eps: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class OutputSpec:
    format: Optional[str] = None
    path: Optional[str] = None


@dataclass(frozen=True)
class Scene:
    chart: ChartSpec
    transport: TransportSpec
    path: Optional[PathSpec] = None
    task: TaskSpec = field(default_factory=TaskSpec)
    checks: Tuple[Tuple[str, float], ...] = ()
    trials: Optional[int] = None
    output: OutputSpec = field(default_factory=OutputSpec)

    @property
    def dim(self):
        return self.chart.dim


# ---------------------------------------------------------------------------
# tree -> scene


class _Section:
    """Dict wrapper that reports unknown keys once everything known was read."""

    def __init__(self, tree, name):
        if not isinstance(tree, dict):
            raise SceneError(f"{name} must be a section")
        self.data = dict(tree)
        self.name = name

    def take(self, key, default=None):
        return self.data.pop(key, default)

    def finish(self):
        if self.data:
            raise SceneError(f"unknown key(s) in {self.name}: {', '.join(sorted(self.data))}")


def _where(section, key):
    return f"{section}.{key}"


def _expression(value, variables, where):
    try:
        return expr.as_expression(value, variables)
    except ExpressionError as exc:
        raise SceneError(f"{where}: {exc}") from None
    except TypeError:
        raise SceneError(f"{where}: expected a number or expression string") from None


def _constant(value, where):
    return _expression(value, set(), where)


def _vector(value, n, variables, where):
    if not isinstance(value, (list, tuple)):
        raise SceneError(f"{where}: expected a list of {n} entries")
    if len(value) != n:
        raise SceneError(f"{where}: expected {n} entries, got {len(value)}")
    return tuple(_expression(v, variables, f"{where}[{k}]") for k, v in enumerate(value))


def _matrix(value, n, variables, where):
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise SceneError(f"{where}: expected a {n}x{n} matrix")
    return tuple(_vector(row, n, variables, f"{where}[{k}]") for k, row in enumerate(value))


def _nested(value, n, depth, variables, where):
    if depth == 0:
        if isinstance(value, (list, tuple)):
            raise SceneError(f"{where}: too many nesting levels")
        return _expression(value, variables, where)
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise SceneError(f"{where}: expected {n} entries at this level")
    return tuple(_nested(v, n, depth - 1, variables, f"{where}[{k}]") for k, v in enumerate(value))


def _int(value, where, minimum=0):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise SceneError(f"{where}: expected an integer >= {minimum}, got {value!r}")
    return value


def _float(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SceneError(f"{where}: expected a number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise SceneError(f"{where}: must be finite")
    return value


def _choice(value, choices, where):
    if value not in choices:
        raise SceneError(f"{where}: expected one of {', '.join(choices)}, got {value!r}")
    return value


def _interval(value, where):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise SceneError(f"{where}: expected [a, b]")
    ends = tuple(_constant(v, f"{where}[{k}]") for k, v in enumerate(value))
    try:
        a, b = (expr.constant_value(e) for e in ends)
    except PathliftError as exc:
        raise SceneError(f"{where}: {exc}") from None
    if not a < b:
        raise SceneError(f"{where}: expected a < b, got [{a:.17g}, {b:.17g}]")
    return ends


def coordinate_names(n):
    return {f"x{k + 1}" for k in range(n)}


def velocity_names(n):
    return {f"v{k + 1}" for k in range(n)}


def _read_chart(tree):
    sec = _Section(tree, "chart")
    preset = _choice(sec.take("preset", "euclidean"), CHART_PRESETS, "chart.preset")
    dim = sec.take("dim")
    if preset == "sphere":
        if dim not in (None, 2):
            raise SceneError("chart.dim: the sphere chart has dimension 2")
        dim = 2
    if dim is None:
        raise SceneError("chart.dim is required")
    dim = _int(dim, "chart.dim", 1)
    name = sec.take("name")
    if name is not None and not isinstance(name, str):
        raise SceneError("chart.name must be a string")
    bounds = sec.take("bounds")
    if bounds is not None:
        if preset == "sphere":
            raise SceneError("chart.bounds: the sphere preset fixes its own bounds")
        if not isinstance(bounds, list) or len(bounds) != dim:
            raise SceneError(f"chart.bounds: expected {dim} intervals")
        bounds = tuple(
            tuple(None if v is None else _constant(v, f"chart.bounds[{k}]") for v in _pair(b, k))
            for k, b in enumerate(bounds))
    sec.finish()
    return ChartSpec(dim, preset, name, bounds)


def _pair(b, k):
    if not isinstance(b, list) or len(b) != 2:
        raise SceneError(f"chart.bounds[{k}]: expected [lo, hi] (null for unbounded)")
    return b


def _read_path(tree, n):
    sec = _Section(tree, "path")
    domain = sec.take("domain")
    if domain is None:
        raise SceneError("path.domain is required")
    domain = _interval(domain, "path.domain")
    position = sec.take("position")
    if position is None:
        raise SceneError("path.position is required")
    position = _vector(position, n, {"s"}, "path.position")
    velocity = sec.take("velocity")
    if velocity is not None:
        velocity = _vector(velocity, n, {"s"}, "path.velocity")
    sec.finish()
    return PathSpec(domain, position, velocity)


def _read_transport(tree, n):
    sec = _Section(tree, "transport")
    kind = _choice(sec.take("kind"), KINDS, "transport.kind")
    matrix = sec.take("matrix")
    derivative = sec.take("derivative")
    preset = sec.take("preset")
    christoffel = sec.take("christoffel")
    if kind == "generator":
        if matrix is None:
            raise SceneError("transport.matrix (the generator F(s)) is required")
        matrix = _matrix(matrix, n, {"s"}, "transport.matrix")
        if derivative is not None:
            derivative = _matrix(derivative, n, {"s"}, "transport.derivative")
    elif kind == "coefficients":
        if matrix is None:
            raise SceneError("transport.matrix (the coefficients) is required")
        variables = {"s"} | coordinate_names(n) | velocity_names(n)
        matrix = _matrix(matrix, n, variables, "transport.matrix")
        if derivative is not None:
            raise SceneError("transport.derivative only applies to generators")
    else:
        if matrix is not None or derivative is not None:
            raise SceneError("transport.matrix/derivative do not apply to a connection")
        if (preset is None) == (christoffel is None):
            raise SceneError("a connection needs exactly one of transport.preset and transport.christoffel")
        if preset is not None:
            _choice(preset, CONNECTION_PRESETS, "transport.preset")
            if preset == "sphere" and n != 2:
                raise SceneError("transport.preset: the sphere connection needs a 2-dimensional chart")
        else:
            christoffel = _nested(christoffel, n, 3, coordinate_names(n), "transport.christoffel")
    if kind != "connection" and (preset is not None or christoffel is not None):
        raise SceneError("transport.preset/christoffel only apply to kind = \"connection\"")
    mode = _choice(sec.take("tensor_mode", "full"), TENSOR_MODES, "transport.tensor_mode")
    cov = sec.take("covector_generator")
    if cov is not None:
        cov = _matrix(cov, n, {"s"}, "transport.covector_generator")
    potential = sec.take("scalar_potential")
    if potential is not None:
        potential = _expression(potential, {"s"}, "transport.scalar_potential")
    if mode == "full" and (cov is not None or potential is not None):
        raise SceneError("covector_generator and scalar_potential need tensor_mode = \"product\"")
    sec.finish()
    return TransportSpec(kind, matrix, derivative, preset, christoffel, mode, cov, potential)


def _read_task(tree, n):
    sec = _Section(tree, "task")
    out = {}
    domain = sec.take("domain")
    if domain is not None:
        out["domain"] = _interval(domain, "task.domain")
    for key in ("s0", "t", "scalar"):
        value = sec.take(key)
        if value is not None:
            out[key] = _constant(value, f"task.{key}")
    for key in ("vector", "x0", "velocity0"):
        value = sec.take(key)
        if value is not None:
            out[key] = _vector(value, n, set(), f"task.{key}")
    grid = sec.take("grid")
    if grid is not None:
        if isinstance(grid, int) and not isinstance(grid, bool):
            out["grid"] = _int(grid, "task.grid", 2)
        elif isinstance(grid, list) and grid:
            out["grid"] = tuple(_constant(v, f"task.grid[{k}]") for k, v in enumerate(grid))
        else:
            raise SceneError("task.grid: expected a sample count or a nonempty list of parameters")
    step = sec.take("step")
    if step is not None:
        out["step"] = _float(step, "task.step")
    eps = sec.take("eps")
    if eps is not None:
        if not isinstance(eps, list) or not eps:
            raise SceneError("task.eps: expected a nonempty list")
        out["eps"] = tuple(_float(e, f"task.eps[{k}]") for k, e in enumerate(eps))
    tensor = sec.take("tensor")
    if tensor is not None:
        ts = _Section(tensor, "task.tensor")
        p = _int(ts.take("p", 0), "task.tensor.p")
        q = _int(ts.take("q", 0), "task.tensor.q")
        comps = ts.take("components")
        if comps is None:
            raise SceneError("task.tensor.components is required")
        ts.finish()
        out["tensor"] = TensorSpec(p, q, _nested(comps, n, p + q, set(), "task.tensor.components"))
    sec.finish()
    return TaskSpec(**out)


def _read_checks(tree):
    sec = _Section(tree, "check")
    trials = sec.take("trials")
    if trials is not None:
        trials = _int(trials, "check.trials", 1)
    checks = []
    for key in sorted(sec.data):
        if key not in CHECK_DEFAULTS:
            raise SceneError(f"check.{key}: unknown law; known: {', '.join(CHECK_DEFAULTS)}")
        checks.append((key, _float(sec.data[key], f"check.{key}")))
    return tuple(checks), trials


def _read_output(tree):
    sec = _Section(tree, "output")
    fmt = sec.take("format")
    if fmt is not None:
        _choice(fmt, FORMATS, "output.format")
    path = sec.take("path")
    if path is not None and not isinstance(path, str):
        raise SceneError("output.path must be a string")
    sec.finish()
    return OutputSpec(fmt, path)


def scene_from_tree(tree):
    """Validate a nested dict and build a :class:`Scene`."""
    top = _Section(tree, "scene")
    chart_tree = top.take("chart")
    if chart_tree is None:
        raise SceneError("the chart section is required")
    transport_tree = top.take("transport")
    if transport_tree is None:
        raise SceneError("the transport section is required")
    chart = _read_chart(chart_tree)
    n = chart.dim
    path_tree = top.take("path")
    path = None if path_tree is None else _read_path(path_tree, n)
    transport = _read_transport(transport_tree, n)
    task = _read_task(top.take("task", {}), n)
    checks, trials = _read_checks(top.take("check", {}))
    output = _read_output(top.take("output", {}))
    top.finish()
    return Scene(chart, transport, path, task, checks, trials, output)


def parse_scene(text):
    """Parse scene text (either encoding) into a validated :class:`Scene`."""
    return scene_from_tree(parse_tree(text))


def load_scene(filename):
    try:
        with open(filename, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise SceneError(f"cannot read scene file: {exc}") from None
    return parse_scene(text)


# ---------------------------------------------------------------------------
# scene -> tree -> text


def _emit(value):
    """Expression trees become canonical strings; tuples become lists."""
    if isinstance(value, tuple):
        return [_emit(v) for v in value]
    if isinstance(value, expr.Num):
        # a number, not a string: "-1" would reparse as a negation node
        v = value.value
        return int(v) if v.is_integer() and abs(v) < 2**53 else v
    if isinstance(value, (expr.Name, expr.Unary, expr.Binary, expr.Call)):
        return str(value)
    return value


def scene_to_tree(scene):
    tree = {}
    c = scene.chart
    chart = {"preset": c.preset, "dim": c.dim}
    if c.name is not None:
        chart["name"] = c.name
    if c.bounds is not None:
        chart["bounds"] = _emit(c.bounds)
    tree["chart"] = chart
    if scene.path is not None:
        path = {"domain": _emit(scene.path.domain), "position": _emit(scene.path.position)}
        if scene.path.velocity is not None:
            path["velocity"] = _emit(scene.path.velocity)
        tree["path"] = path
    t = scene.transport
    transport = {"kind": t.kind}
    for key in ("matrix", "derivative", "preset", "christoffel"):
        if getattr(t, key) is not None:
            transport[key] = _emit(getattr(t, key))
    transport["tensor_mode"] = t.tensor_mode
    for key in ("covector_generator", "scalar_potential"):
        if getattr(t, key) is not None:
            transport[key] = _emit(getattr(t, key))
    tree["transport"] = transport
    task = {}
    for key in ("domain", "s0", "t", "vector", "scalar", "x0", "velocity0", "grid", "step", "eps"):
        value = getattr(scene.task, key)
        if value is not None:
            task[key] = _emit(value)
    if scene.task.tensor is not None:
        ts = scene.task.tensor
        task["tensor"] = {"p": ts.p, "q": ts.q, "components": _emit(ts.components)}
    if task:
        tree["task"] = task
    check = dict(scene.checks)
    if scene.trials is not None:
        check["trials"] = scene.trials
    if check:
        tree["check"] = check
    output = {k: v for k, v in (("format", scene.output.format), ("path", scene.output.path)) if v is not None}
    if output:
        tree["output"] = output
    return tree


def _text_items(tree, indent):
    lines = []
    pad = "  " * indent
    for key, value in tree.items():
        if isinstance(value, dict):
            lines.append(f"{pad}{key} {{")
            lines.extend(_text_items(value, indent + 1))
            lines.append(f"{pad}}}")
        else:
            lines.append(f"{pad}{key} = {json.dumps(value)}")
    return lines


def serialize_scene(scene, encoding="text"):
    """Render a scene in the text or the JSON encoding."""
    tree = scene_to_tree(scene)
    if encoding == "json":
        return json.dumps(tree, indent=2) + "\n"
    if encoding != "text":
        raise ValidationError(f"unknown scene encoding {encoding!r}")
    return "\n".join(_text_items(tree, 0)) + "\n"


# ---------------------------------------------------------------------------
# scene -> runtime objects


def constant_array(nodes):
    """Evaluate nested tuples of constant expressions to a float array."""
    if isinstance(nodes, tuple):
        return np.array([constant_array(n) for n in nodes], dtype=float)
    return np.array(expr.constant_value(nodes))


def expression_names(nodes):
    if isinstance(nodes, tuple):
        names = set()
        for n in nodes:
            names |= expression_names(n)
        return names
    return expr.free_names(nodes)
