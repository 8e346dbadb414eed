"""L-paths: paths whose own velocity is transported along them.

With transport coefficients ``Gamma(s; gamma)`` the condition is the first
order system ``x' = v``, ``v' = -Gamma(s, x, v) v``. A connection gives the
ordinary geodesic equation through ``Gamma^i_j = Gamma^i_{jk}(x) v^k``.

Coefficient providers only see the local state ``(s, x, v)``; transports
that depend on the whole history of the path are not representable.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from ._numerics import COND_CAP, _check_condition, step_count
from .errors import ChartBoundsError, IntegrationError, ValidationError
from .transport import DEFAULT_STEP


@dataclass(frozen=True)
class LPathProblem:
    """Initial value problem ``gamma(s0) = x0``, ``gamma'(s0) = velocity0`` on ``domain``."""

    provider: Callable
    x0: Tuple[float, ...]
    velocity0: Tuple[float, ...]
    s0: float
    domain: Tuple[float, float]
    chart: Optional[object] = None

    def __post_init__(self):
        x0 = tuple(float(v) for v in self.x0)
        v0 = tuple(float(v) for v in self.velocity0)
        if len(x0) != len(v0):
            raise ValidationError("initial point and velocity have different dimensions")
        if not all(np.isfinite(v0)):
            raise ValidationError("initial velocity must be finite")
        a, b = (float(v) for v in self.domain)
        if not (a <= self.s0 <= b):
            raise ValidationError(f"s0={self.s0} outside [{a}, {b}]")
        if self.chart is not None and self.chart.dim != len(x0):
            raise ValidationError("initial point dimension differs from the chart")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "velocity0", v0)
        object.__setattr__(self, "domain", (a, b))

    @property
    def dim(self):
        return len(self.x0)


@dataclass
class LPathSolution:
    """Samples ``(s, gamma(s), gamma'(s))``; ``truncated`` when the chart was left early."""

    s: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    step: float
    method: str = "rk4"
    truncated: bool = False
    message: str = ""

    def rows(self):
        return np.column_stack([self.s, self.positions, self.velocities])


def _coefficients(provider, s, x, v, n):
    g = np.asarray(provider(s, x, v), dtype=float)
    if g.shape[-2:] != (n, n):
        raise ValidationError(f"provider returned shape {g.shape}, expected {(n, n)}")
    if not np.all(np.isfinite(g)):
        raise IntegrationError(f"non-finite transport coefficients near s={np.min(s):.6g}")
    return g


def coefficient_provider(coef):
    """Provider ``(s, x, v) -> Gamma(s)`` that ignores the path state.

    The solver recognizes it and evaluates the coefficients at every RK4
    stage in one vectorized call.
    """
    def provider(s, x, v):
        return coef(s)

    provider.coefficients = coef
    return provider


def _batch_coefficients(provider, s, x, v, n):
    """Coefficients at many samples: one call when the provider allows it."""
    coef = getattr(provider, "coefficients", None)
    if coef is not None:
        return _coefficients(lambda s_, x_, v_: coef(s_), s, x, v, n)
    if getattr(provider, "batched", False):
        return _coefficients(provider, s, x, v, n)
    return np.stack([_coefficients(provider, float(a), xa, va, n) for a, xa, va in zip(s, x, v)])


def _march(problem, s_end, step):
    n = problem.dim
    chart = problem.chart
    count = step_count(s_end - problem.s0, step)
    h = (s_end - problem.s0) / count if count else 0.0
    table = None
    if count and getattr(problem.provider, "coefficients", None) is not None:
        half_steps = problem.s0 + 0.5 * h * np.arange(2 * count + 1)
        table = _batch_coefficients(problem.provider, half_steps, None, None, n)

    def rhs(m, y):
        # m counts half steps from s0
        x, v = y[:n], y[n:]
        if table is not None:
            g = table[m]
        else:
            g = _coefficients(problem.provider, problem.s0 + 0.5 * m * h, x, v, n)
        return np.concatenate([v, -g @ v])

    y = np.concatenate([problem.x0, problem.velocity0])
    params, states = [problem.s0], [y]
    for k in range(count):
        s = problem.s0 + k * h
        m = 2 * k
        try:
            k1 = rhs(m, y)
            k2 = rhs(m + 1, y + (0.5 * h) * k1)
            k3 = rhs(m + 1, y + (0.5 * h) * k2)
            k4 = rhs(m + 2, y + h * k3)
        except ChartBoundsError as exc:
            return params, states, f"left the chart near s={s:.6g}: {exc}"
        y_next = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y_next)):
            raise IntegrationError(f"L-path integration diverged near s={s:.6g}")
        if chart is not None and not bool(chart.contains(y_next[:n])):
            return params, states, f"left chart {chart.name!r} near s={s + h:.6g}"
        y = y_next
        params.append(problem.s0 + (k + 1) * h)
        states.append(y)
    return params, states, ""


def solve_lpath(problem, step=DEFAULT_STEP):
    """Integrate the L-path system with fixed-step RK4 over the whole domain.

    Integration runs from ``s0`` to both ends. If the trajectory leaves the
    chart the solution stops at the last interior sample and is flagged
    ``truncated``.
    """
    n = problem.dim
    if problem.chart is not None:
        problem.chart.require(np.array(problem.x0))
    _coefficients(problem.provider, problem.s0, np.array(problem.x0), np.array(problem.velocity0), n)
    a, b = problem.domain
    # divergence is reported by the finiteness check, not by numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        fwd_s, fwd_y, fwd_msg = _march(problem, b, step)
        bwd_s, bwd_y, bwd_msg = _march(problem, a, step)
    params = bwd_s[:0:-1] + fwd_s
    states = np.array(bwd_y[:0:-1] + fwd_y)
    message = "; ".join(m for m in (bwd_msg, fwd_msg) if m)
    return LPathSolution(np.array(params), states[:, :n], states[:, n:], step,
                         truncated=bool(message), message=message)


def geodesic_provider(conn):
    """Provider ``(s, x, v) -> Gamma^i_{jk}(x) v^k`` of the parallel transport of ``conn``."""
    def provider(s, x, v):
        return np.einsum("...ijk,...k->...ij", conn(np.asarray(x, dtype=float)), np.asarray(v, dtype=float))

    provider.batched = True
    return provider


def _nonuniform_derivative(s, f):
    """Three-point derivative at interior samples of a possibly nonuniform grid."""
    h1 = (s[1:-1] - s[:-2])[:, None]
    h2 = (s[2:] - s[1:-1])[:, None]
    return (-h2 / (h1 * (h1 + h2)) * f[:-2]
            + (h2 - h1) / (h1 * h2) * f[1:-1]
            + h1 / (h2 * (h1 + h2)) * f[2:])


def lpath_residuals(solution, provider):
    """Per-sample transport residual ``|v' + Gamma v|`` and tangency residual ``|x' - v|``."""
    if solution.s.size < 3:
        raise ValidationError("need at least 3 samples to difference the solution")
    s, x, v = solution.s, solution.positions, solution.velocities
    dv = _nonuniform_derivative(s, v)
    dx = _nonuniform_derivative(s, x)
    n = x.shape[1]
    g = _batch_coefficients(provider, s[1:-1], x[1:-1], v[1:-1], n)
    transport = np.max(np.abs(dv + np.einsum("kij,kj->ki", g, v[1:-1])), axis=1)
    tangency = np.max(np.abs(dx - v[1:-1]), axis=1)
    return transport, tangency


def lpath_residual(solution, provider):
    """Largest residual of the L-path condition over the interior samples.

    Both halves of the condition are measured: the stored velocity must
    satisfy the transport equation and must be the derivative of the stored
    positions.
    """
    transport, tangency = lpath_residuals(solution, provider)
    return float(max(np.max(transport), np.max(tangency)))


@dataclass
class FrameLinearityReport:
    s: np.ndarray
    components: np.ndarray
    max_deviation: float
    note: str = ("only the constancy of frame components is checked; the linear coordinate "
                 "form needs a holonomic extension of the frame, which is not constructed")


def special_frame_linearity(solution, gen):
    """Velocity components ``u(s) = F(s) gamma'(s)`` in the special frame and their spread.

    For an L-path of the generator's transport ``u`` is constant.
    """
    F = gen(solution.s)
    _check_condition(F, COND_CAP, "generator F(s)")
    u = np.einsum("kij,kj->ki", F, solution.velocities)
    dev = float(np.max(np.abs(u - u[0])))
    return FrameLinearityReport(solution.s, u, dev)
