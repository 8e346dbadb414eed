"""Turn a validated :class:`~pathlift.scene.Scene` into library objects."""

import functools

import numpy as np

from . import expr
from .errors import SceneError
from .geometry import (
    Chart,
    ConnectionField,
    euclidean_chart,
    flat_connection,
    make_path,
    sphere_chart,
    sphere_connection,
)
from .lpath import LPathProblem, coefficient_provider, geodesic_provider
from .scene import constant_array, coordinate_names, expression_names, velocity_names
from .tensors import FULL, PRODUCT, TensorComponents, TensorTransportRule
from .transport import (
    DEFAULT_STEP,
    CoefficientField,
    TransportGenerator,
    TransportMatrixFamily,
    parallel_coefficients,
)


def _matrix_fn(rows, n):
    """Broadcasting ``s -> (..., n, n)`` for a matrix of expressions in ``s``."""
    def env(s):
        s = np.asarray(s, dtype=float)
        return {"s": s}, s.shape

    return expr.matrix_function(rows, env)


class SceneModel:
    """Lazily built chart, path, transport and task values of a scene."""

    def __init__(self, scene, step=None):
        self.scene = scene
        self.n = scene.dim
        self.step = step if step is not None else (scene.task.step or DEFAULT_STEP)

    # geometry ---------------------------------------------------------------

    @functools.cached_property
    def chart(self):
        spec = self.scene.chart
        if spec.preset == "sphere":
            return sphere_chart()
        if spec.bounds is None:
            return euclidean_chart(spec.dim, spec.name or "R^n")
        bounds = tuple(tuple(None if v is None else expr.constant_value(v) for v in pair)
                       for pair in spec.bounds)
        return Chart(spec.dim, spec.name or "chart", bounds)

    @functools.cached_property
    def path(self):
        spec = self.scene.path
        if spec is None:
            return None
        domain = tuple(expr.constant_value(v) for v in spec.domain)
        return make_path(domain, list(spec.position),
                         None if spec.velocity is None else list(spec.velocity), chart=self.chart)

    def require_path(self, why):
        if self.path is None:
            raise SceneError(f"{why} needs a path section")
        return self.path

    @functools.cached_property
    def domain(self):
        if self.scene.task.domain is not None:
            return tuple(expr.constant_value(v) for v in self.scene.task.domain)
        if self.path is not None:
            return self.path.domain
        raise SceneError("no parameter domain: give path.domain or task.domain")

    @functools.cached_property
    def connection(self):
        spec = self.scene.transport
        if spec.kind != "connection":
            return None
        if spec.preset == "sphere":
            return sphere_connection()
        if spec.preset == "flat":
            flat = flat_connection(self.n)
            return ConnectionField(flat._coefficients, self.chart, vectorized=True, name="flat")
        nodes = spec.christoffel
        n = self.n

        def coefficients(x):
            x = np.asarray(x, dtype=float)
            env = {f"x{k + 1}": x[..., k] for k in range(n)}
            out = np.empty(x.shape[:-1] + (n, n, n))
            for i in range(n):
                for j in range(n):
                    for k in range(n):
                        out[..., i, j, k] = expr.evaluate(nodes[i][j][k], env)
            return out

        return ConnectionField(coefficients, self.chart, vectorized=True, name="expression")

    # transport --------------------------------------------------------------

    @functools.cached_property
    def generator(self):
        spec = self.scene.transport
        if spec.kind != "generator":
            return None
        dF = None if spec.derivative is None else _matrix_fn(spec.derivative, self.n)
        return TransportGenerator(_matrix_fn(spec.matrix, self.n), self.n, self.domain, dF,
                                  self.path, vectorized=True)

    def _uses_path_state(self):
        names = expression_names(self.scene.transport.matrix)
        return bool(names & (coordinate_names(self.n) | velocity_names(self.n)))

    @functools.cached_property
    def coefficients(self):
        """Coefficient field ``Gamma(s)`` along the path (or the bare parameter domain)."""
        spec = self.scene.transport
        n = self.n
        if spec.kind == "connection":
            return parallel_coefficients(self.connection, self.require_path("a connection transport"))
        if spec.kind == "generator":
            return TransportMatrixFamily.from_generator(self.generator).coefficients
        path = self.path
        if self._uses_path_state():
            path = self.require_path("coefficients depending on x or v")
        return CoefficientField(self._expression_coefficients(path), n, self.domain, path,
                                vectorized=True)

    def _expression_coefficients(self, path):
        """``s -> Gamma(s)`` from the coefficient expressions, with x and v read off ``path``."""
        n = self.n

        def env(s):
            s = np.asarray(s, dtype=float)
            values = {"s": s}
            if path is not None:
                x, v = path.position(s), path.velocity(s)
                for k in range(n):
                    values[f"x{k + 1}"] = x[..., k]
                    values[f"v{k + 1}"] = v[..., k]
            return values, s.shape

        return expr.matrix_function(self.scene.transport.matrix, env)

    @functools.cached_property
    def family(self):
        if self.generator is not None:
            return TransportMatrixFamily.from_generator(self.generator)
        return TransportMatrixFamily.from_coefficients(self.coefficients, self.domain, self.step)

    @functools.cached_property
    def rule(self):
        spec = self.scene.transport
        if spec.tensor_mode == "full":
            return TensorTransportRule.from_family(self.family)
        covector = None
        if spec.covector_generator is not None:
            K = TransportGenerator(_matrix_fn(spec.covector_generator, self.n), self.n,
                                   self.domain, vectorized=True)
            covector = TransportMatrixFamily.from_generator(K)
        potential = None
        if spec.scalar_potential is not None:
            node = spec.scalar_potential

            def potential(s):
                return float(expr.evaluate(node, {"s": np.asarray(s, dtype=float)}))

        return TensorTransportRule(self.family, self.n, PRODUCT, covector, potential,
                                   exact_identity=True)

    @property
    def mode(self):
        return FULL if self.scene.transport.tensor_mode == "full" else PRODUCT

    # task -------------------------------------------------------------------

    def task_value(self, key, default=None):
        value = getattr(self.scene.task, key)
        if value is None:
            if default is None:
                raise SceneError(f"task.{key} is required for this command")
            return default
        return constant_array(value)

    def s0(self):
        return float(self.task_value("s0", self.domain[0]))

    def t(self):
        return float(self.task_value("t", self.domain[1]))

    def tensor(self, anchor):
        spec = self.scene.task.tensor
        if spec is not None:
            return TensorComponents(spec.p, spec.q, self.n, constant_array(spec.components), anchor)
        if self.scene.task.vector is not None:
            return TensorComponents(1, 0, self.n, self.task_value("vector"), anchor)
        if self.scene.task.scalar is not None:
            return TensorComponents(0, 0, self.n, self.task_value("scalar"), anchor)
        raise SceneError("task needs one of vector, scalar or tensor")

    def grid(self, default=11):
        grid = self.scene.task.grid
        if grid is None or isinstance(grid, int):
            a, b = self.domain
            return np.linspace(a, b, default if grid is None else grid)
        return constant_array(grid)

    def provider(self):
        """``(s, x, v) -> Gamma`` for L-path problems."""
        spec = self.scene.transport
        n = self.n
        if spec.kind == "connection":
            return geodesic_provider(self.connection)
        if spec.kind == "generator" or not self._uses_path_state():
            return coefficient_provider(CoefficientField(
                self._expression_coefficients(None) if spec.kind == "coefficients" else self.coefficients,
                n, self.domain, vectorized=True))

        def env(s, x, v):
            s, x, v = (np.asarray(a, dtype=float) for a in (s, x, v))
            shape = np.broadcast_shapes(s.shape, x.shape[:-1], v.shape[:-1])
            values = {"s": s}
            for k in range(n):
                values[f"x{k + 1}"] = x[..., k]
                values[f"v{k + 1}"] = v[..., k]
            return values, shape

        provider = expr.matrix_function(spec.matrix, env)
        provider.batched = True
        return provider

    def lpath_problem(self):
        x0 = self.task_value("x0")
        v0 = self.task_value("velocity0")
        return LPathProblem(self.provider(), tuple(x0), tuple(v0), self.s0(), self.domain, self.chart)
