"""Charts, paths, frame fields and affine-connection coefficient fields."""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from . import expr
from ._numerics import FD_STEP, checked_solve, derivative, evaluate
from .errors import ChartBoundsError, NumericalError, SingularMatrixError, ValidationError

FRAME_COND_CAP = 1e8
DOMAIN_SLACK = 1e-12


@dataclass(frozen=True)
class Chart:
    """A coordinate chart: dimension, optional open box, optional periodic axes.

    ``bounds`` holds one ``(lo, hi)`` pair per axis, either end may be None
    for an unbounded side. ``periods`` marks axes whose coordinates are
    identified modulo a period (the longitude of the sphere chart); it only
    affects :meth:`displacement`, never the bounds check.
    """

    dim: int
    name: str = "chart"
    bounds: Optional[Tuple[Tuple[Optional[float], Optional[float]], ...]] = None
    periods: Optional[Tuple[Optional[float], ...]] = None

    def __post_init__(self):
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 1:
            raise ValidationError(f"chart dimension must be a positive integer, got {self.dim!r}")
        if self.bounds is not None:
            if len(self.bounds) != self.dim:
                raise ValidationError("chart bounds need one interval per axis")
            for lo, hi in self.bounds:
                lo = -math.inf if lo is None else lo
                hi = math.inf if hi is None else hi
                if not lo < hi:
                    raise ValidationError(f"empty coordinate interval ({lo}, {hi})")
        if self.periods is not None and len(self.periods) != self.dim:
            raise ValidationError("chart periods need one entry per axis")

    def _box(self):
        lo = np.array([-np.inf if b[0] is None else b[0] for b in self.bounds], dtype=float)
        hi = np.array([np.inf if b[1] is None else b[1] for b in self.bounds], dtype=float)
        return lo, hi

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValidationError(f"point has {x.shape[-1]} coordinates, chart has dim {self.dim}")
        finite = np.all(np.isfinite(x), axis=-1)
        if self.bounds is None:
            return finite
        lo, hi = self._box()
        return finite & np.all((x > lo) & (x < hi), axis=-1)

    def require(self, x):
        """Raise :class:`ChartBoundsError` unless every point lies inside the chart."""
        inside = self.contains(x)
        if not np.all(inside):
            bad = np.asarray(x, dtype=float)
            if bad.ndim > 1:
                bad = bad[~np.asarray(inside)][0]
            raise ChartBoundsError(f"point {bad.tolist()} lies outside chart {self.name!r}")
        return x

    def displacement(self, x, y):
        """``y - x`` with periodic axes reduced to ``[-period/2, period/2)``."""
        d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        if self.periods is None:
            return d
        d = d.copy()
        for axis, period in enumerate(self.periods):
            if period:
                d[..., axis] = (d[..., axis] + period / 2) % period - period / 2
        return d


def euclidean_chart(dim, name="R^n"):
    return Chart(dim, name)


def sphere_chart():
    """Colatitude/longitude chart ``(theta, phi)`` on the unit 2-sphere."""
    return Chart(2, "sphere", bounds=((0.0, math.pi), (None, None)), periods=(None, 2 * math.pi))


class PathCurve:
    """A C^1 path ``gamma: [a, b] -> chart`` with its velocity.

    ``position`` maps a parameter to chart coordinates; if ``velocity`` is
    omitted it is obtained by centered differences (one-sided at the ends).
    With ``vectorized=True`` both callables must accept parameter arrays and
    return ``(..., dim)`` arrays.
    """

    def __init__(self, domain, position, velocity=None, chart=None, *, dim=None,
                 vectorized=False, representation="closed-form", fd_step=FD_STEP):
        a, b = (float(v) for v in domain)
        if not a < b:
            raise ValidationError(f"path domain must satisfy a < b, got [{a}, {b}]")
        self.domain = (a, b)
        self._position = position
        self._velocity = velocity
        self.vectorized = vectorized
        self.representation = representation
        self.fd_step = fd_step
        if dim is None:
            dim = chart.dim if chart is not None else int(np.size(position(a)))
        self.dim = int(dim)
        if chart is None:
            chart = euclidean_chart(self.dim)
        if chart.dim != self.dim:
            raise ValidationError(f"path dimension {self.dim} differs from chart dimension {chart.dim}")
        self.chart = chart

    @property
    def analytic_velocity(self):
        return self._velocity is not None

    def _check_domain(self, s):
        a, b = self.domain
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr < a - DOMAIN_SLACK) or np.any(s_arr > b + DOMAIN_SLACK):
            raise ValidationError(f"parameter {s!r} outside path domain [{a}, {b}]")

    def position(self, s):
        self._check_domain(s)
        x = evaluate(self._position, s, self.vectorized)
        self.chart.require(x)
        return x

    def velocity(self, s):
        self._check_domain(s)
        if self._velocity is not None:
            return evaluate(self._velocity, s, self.vectorized)
        if np.ndim(s) == 0:
            return derivative(self.position, float(s), self.fd_step, 2, self.domain)
        return np.stack([self.velocity(float(x)) for x in np.ravel(s)]).reshape(
            np.shape(s) + (self.dim,)
        )

    def __call__(self, s):
        return self.position(s)

    def is_closed(self, tol=1e-9):
        a, b = self.domain
        gap = self.chart.displacement(self.position(a), self.position(b))
        return float(np.max(np.abs(gap))) <= tol

    @classmethod
    def sampled(cls, domain, samples, chart=None):
        """Path through uniformly spaced ``samples`` (shape ``(m, dim)``), cubic-spline interpolated."""
        samples = np.asarray(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.shape[0] < 4:
            raise ValidationError("a sampled path needs at least 4 samples")
        a, b = (float(v) for v in domain)
        grid = np.linspace(a, b, samples.shape[0])
        spline = CubicSpline(grid, samples, axis=0)
        slope = spline.derivative()
        return cls((a, b), spline, slope, chart, dim=samples.shape[1],
                   vectorized=True, representation="sampled")


def make_path(domain, position_fn, velocity_fn=None, chart=None, vectorized=False):
    """Build a :class:`PathCurve` from expressions in ``s`` or from callables.

    ``position_fn`` may be a sequence of expression strings (one per
    coordinate) or a callable; the same holds for the optional
    ``velocity_fn``. Without velocity expressions the velocity is taken by
    finite differences.
    """
    if callable(position_fn):
        pos = position_fn
    else:
        pos = expr.vector_function(position_fn, {"s"})
        vectorized = True
        dim = len(position_fn)
        if chart is not None and chart.dim != dim:
            raise ValidationError(f"{dim} coordinate expressions for a chart of dim {chart.dim}")
    vel = velocity_fn
    if velocity_fn is not None and not callable(velocity_fn):
        if len(velocity_fn) != len(position_fn):
            raise ValidationError("velocity and position expression counts differ")
        vel = expr.vector_function(velocity_fn, {"s"})
    path = PathCurve(domain, pos, vel, chart, vectorized=vectorized)
    # fail early: parse errors surface above, evaluation and bounds errors here
    a, b = path.domain
    path.position(np.linspace(a, b, 5) if vectorized else a)
    return path


class FrameField:
    """Basis of the fiber at each parameter: columns are the basis vectors
    in the chart's coordinate basis."""

    def __init__(self, basis, dim, path=None, *, vectorized=False, cond_cap=FRAME_COND_CAP):
        self._basis = basis
        self.dim = int(dim)
        self.path = path
        self.vectorized = vectorized
        self.cond_cap = cond_cap

    def __call__(self, s):
        m = evaluate(self._basis, s, self.vectorized)
        if m.shape[-2:] != (self.dim, self.dim):
            raise ValidationError(f"frame basis has shape {m.shape[-2:]}, expected {(self.dim, self.dim)}")
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.max(np.linalg.cond(m)) if np.all(np.isfinite(m)) else np.inf
        if not cond <= self.cond_cap:
            raise SingularMatrixError(f"frame basis ill-conditioned at s={s!r} (cond={cond:.3g})")
        return m

    @classmethod
    def coordinate(cls, dim, path=None):
        """The chart's own coordinate basis along ``path``."""
        eye = np.eye(dim)

        def basis(s):
            return np.broadcast_to(eye, np.shape(s) + (dim, dim)).copy()

        return cls(basis, dim, path, vectorized=True)


def frame_change_matrix(frame_a, frame_b, s):
    """Matrix ``A(s)`` with ``e_i^b(s) = A^j_i(s) e_j^a(s)``, i.e. ``basis_a^{-1} basis_b``."""
    if frame_a.path is not None and frame_b.path is not None and frame_a.path is not frame_b.path:
        raise ValidationError("frames are defined over different paths")
    if frame_a.dim != frame_b.dim:
        raise ValidationError("frames have different dimensions")
    return checked_solve(frame_a(s), frame_b(s), cond_cap=frame_a.cond_cap, what="frame basis")


class ConnectionField:
    """Coefficients ``Gamma^i_{jk}(x)`` of an affine connection on a chart.

    The array is indexed ``[i, j, k]``: upper index first, then the index
    contracted with the transported vector, then the direction index.
    """

    def __init__(self, coefficients, chart, *, vectorized=False, name="connection"):
        self._coefficients = coefficients
        self.chart = chart
        self.vectorized = vectorized
        self.name = name

    @property
    def dim(self):
        return self.chart.dim

    def __call__(self, x):
        return connection_coefficients(self, x)


def connection_coefficients(conn, x):
    """``Gamma^i_{jk}(x)``; ``x`` may be a single point or a stack of points."""
    x = np.asarray(x, dtype=float)
    conn.chart.require(x)
    if x.ndim == 1:
        g = np.asarray(conn._coefficients(x), dtype=float)
    elif conn.vectorized:
        g = np.asarray(conn._coefficients(x), dtype=float)
    else:
        g = np.stack([np.asarray(conn._coefficients(p), dtype=float) for p in x.reshape(-1, x.shape[-1])])
        g = g.reshape(x.shape[:-1] + g.shape[1:])
    n = conn.dim
    if g.shape[-3:] != (n, n, n):
        raise ValidationError(f"connection coefficients have shape {g.shape[-3:]}, expected {(n, n, n)}")
    if not np.all(np.isfinite(g)):
        raise NumericalError(f"connection {conn.name!r} is not finite at {x.tolist()}")
    return g


def flat_connection(dim):
    chart = euclidean_chart(dim)

    def coefficients(x):
        return np.zeros(np.shape(x)[:-1] + (dim, dim, dim))

    return ConnectionField(coefficients, chart, vectorized=True, name="flat")


def _sphere_christoffel(x):
    theta = np.asarray(x, dtype=float)[..., 0]
    out = np.zeros(theta.shape + (2, 2, 2))
    cot = np.cos(theta) / np.sin(theta)
    out[..., 0, 1, 1] = -np.sin(theta) * np.cos(theta)
    out[..., 1, 0, 1] = cot
    out[..., 1, 1, 0] = cot
    return out


def sphere_connection():
    """Levi-Civita connection of the round unit sphere in ``(theta, phi)``."""
    return ConnectionField(_sphere_christoffel, sphere_chart(), vectorized=True, name="sphere")


def expression_connection(entries, chart):
    """Connection whose coefficients are expressions in ``x1..xn``.

    ``entries`` is nested ``[i][j][k]``.
    """
    n = chart.dim
    names = {f"x{k + 1}" for k in range(n)}
    if len(entries) != n or any(len(p) != n or any(len(r) != n for r in p) for p in entries):
        raise ValidationError(f"connection needs {n}x{n}x{n} coefficient entries")
    nodes = [[[expr.as_expression(e, names) for e in row] for row in plane] for plane in entries]

    def coefficients(x):
        x = np.asarray(x, dtype=float)
        env = {f"x{k + 1}": x[..., k] for k in range(n)}
        out = np.empty(x.shape[:-1] + (n, n, n))
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    out[..., i, j, k] = expr.evaluate(nodes[i][j][k], env)
        return out

    return ConnectionField(coefficients, chart, vectorized=True, name="expression")


def sphere_rotation_angle(matrix, theta):
    """Rotation angle of a tangent-space map at colatitude ``theta`` on the unit sphere.

    The map is rewritten in the orthonormal frame ``(d_theta, sin(theta) d_phi)``
    and the angle read off with ``atan2``.
    """
    scale = np.diag([1.0, math.sin(theta)])
    r = scale @ np.asarray(matrix, dtype=float) @ np.diag([1.0, 1.0 / math.sin(theta)])
    return math.atan2(r[1, 0], r[0, 0])
