"""Derivations along a path generated by a transport, and transported sections.

For a vector section with components ``sigma(s)`` in the working frame the
derivation reads ``(D sigma)(s) = sigma'(s) + Gamma(s) sigma(s)``; sections
annihilated by it are exactly the ones the transport reproduces, and those
solve ``sigma' + Gamma sigma = 0``.
"""

from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from ._numerics import derivative, evaluate, integrate_linear_batch
from .errors import ValidationError
from .geometry import DOMAIN_SLACK
from .tensors import PRODUCT, TensorComponents, TensorTransportRule, slot_action, transport_tensor
from .transport import DEFAULT_STEP, CoefficientField, TransportMatrixFamily

SECTION_FD_STEP = 1e-3
DEFAULT_EPS = (1e-2, 1e-3, 1e-4)


class SectionAlongPath:
    """Components of a section of the bundle restricted to a path.

    ``components(s)`` returns an array of shape ``(dim,) * (p + q)``;
    vector sections are the default ``(p, q) = (1, 0)``. Without an analytic
    ``derivative`` a fourth-order finite difference is used.
    """

    def __init__(self, components, dim, domain=None, path=None, *, derivative=None,
                 p=1, q=0, c1=True, vectorized=False, fd_step=SECTION_FD_STEP):
        self._components = components
        self._derivative = derivative
        self.dim = int(dim)
        self.domain = None if domain is None else tuple(float(v) for v in domain)
        self.path = path
        self.p, self.q = int(p), int(q)
        self.c1 = c1
        self.vectorized = vectorized
        self.fd_step = fd_step

    @property
    def shape(self):
        return (self.dim,) * (self.p + self.q)

    def __call__(self, s):
        return evaluate(self._components, s, self.vectorized)

    def derivative(self, s):
        if not self.c1:
            raise ValidationError("section is not flagged C^1; its derivative is undefined")
        if self._derivative is not None:
            return evaluate(self._derivative, s, self.vectorized)
        if np.ndim(s) == 0:
            return derivative(self.__call__, float(s), self.fd_step, 4, self.domain)
        return np.stack([self.derivative(float(x)) for x in np.ravel(s)]).reshape(np.shape(s) + self.shape)

    def tensor(self, s):
        return TensorComponents(self.p, self.q, self.dim, self(s), s)

    @classmethod
    def constant(cls, value, domain=None, path=None, p=1, q=0):
        value = np.asarray(value, dtype=float)
        dim = value.shape[0] if value.ndim else 1

        def comps(s):
            return np.broadcast_to(value, np.shape(s) + value.shape).copy()

        def deriv(s):
            return np.zeros(np.shape(s) + value.shape)

        return cls(comps, dim, domain, path, derivative=deriv, p=p, q=q, vectorized=True)

    @classmethod
    def scalar(cls, fn, domain=None, derivative=None, path=None, dim=1):
        return cls(fn, dim, domain, path, derivative=derivative, p=0, q=0)


class DerivationResult:
    """Components ``(D sigma)(s)`` as a map of the parameter."""

    def __init__(self, fn, dim, path=None, p=1, q=0):
        self._fn = fn
        self.dim = dim
        self.path = path
        self.p, self.q = p, q

    def __call__(self, s):
        if np.ndim(s) == 0:
            return self._fn(float(s))
        return np.stack([self._fn(float(x)) for x in np.ravel(s)]).reshape(
            np.shape(s) + (self.dim,) * (self.p + self.q))


def _vector_section(sigma):
    if (sigma.p, sigma.q) != (1, 0):
        raise ValidationError(f"expected a vector section, got type ({sigma.p},{sigma.q})")
    if not sigma.c1:
        raise ValidationError("the derivation needs a C^1 section")


def derivation_apply(coef, sigma):
    """``(D sigma)^i = d sigma^i/ds + Gamma^i_j(s) sigma^j``."""
    _vector_section(sigma)
    if coef.dim != sigma.dim:
        raise ValidationError("coefficient and section dimensions differ")

    def fn(s):
        return sigma.derivative(s) + coef(s) @ sigma(s)

    return DerivationResult(fn, sigma.dim, sigma.path)


def tensor_derivation(rule, sigma):
    """Derivation generated by a tensor transport rule on a (p, q) section.

    Upper slots pick up the vector coefficients, lower slots the covector
    coefficients; scalars of a product-only rule pick up ``d/ds h(t, s)``.
    """
    if not sigma.c1:
        raise ValidationError("the derivation needs a C^1 section")

    def fn(s):
        gv, gc, eta = rule.slot_coefficients(s)
        value = sigma(s)
        out = sigma.derivative(s) + slot_action(value, sigma.p, sigma.q, gv, gc)
        if sigma.p == 0 and sigma.q == 0 and rule.mode == PRODUCT:
            out = out + eta * value
        return out

    return DerivationResult(fn, sigma.dim, sigma.path, sigma.p, sigma.q)


@dataclass
class LimitCheckReport:
    """Difference quotients of the transport against the derivation value."""

    s: float
    eps: Tuple[float, ...]
    quotients: np.ndarray
    reference: np.ndarray
    deviations: np.ndarray
    orders: np.ndarray

    @property
    def max_deviation(self):
        return float(np.max(self.deviations))


def derivation_limit_check(H, sigma, s, eps=DEFAULT_EPS, reference=None):
    """Evaluate ``[H(s, s+e) sigma(s+e) - sigma(s)] / e`` along a decreasing ``eps`` schedule.

    ``reference`` defaults to :func:`derivation_apply` with the family's
    coefficients. Observed orders are log-ratios of successive deviations;
    C^1 data should give about 1. Near the right end of the domain the
    quotient is taken with ``-e``.
    """
    eps = tuple(float(e) for e in eps)
    if any(e <= 0 for e in eps) or any(a <= b for a, b in zip(eps, eps[1:])):
        raise ValidationError("epsilon schedule must be positive and strictly decreasing")
    if reference is None:
        if H.coefficients is None:
            raise ValidationError("transport family carries no coefficients; pass a reference value")
        reference = derivation_apply(H.coefficients, sigma)(s)
    reference = np.asarray(reference, dtype=float)
    base = sigma(s)
    quotients = []
    for e in eps:
        step = e
        if H.domain is not None and s + e > H.domain[1] + DOMAIN_SLACK:
            step = -e
        quotients.append((H(s, s + step) @ sigma(s + step) - base) / step)
    quotients = np.array(quotients)
    deviations = np.max(np.abs(quotients - reference), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        orders = np.log(deviations[:-1] / deviations[1:]) / np.log(np.array(eps[:-1]) / np.array(eps[1:]))
    return LimitCheckReport(float(s), eps, quotients, reference, deviations, orders)


@dataclass
class DeviationReport:
    samples: np.ndarray
    deviations: np.ndarray

    @property
    def max_deviation(self):
        return float(np.max(self.deviations)) if self.deviations.size else 0.0


def _sample_grid(domain, samples):
    if domain is None:
        raise ValidationError("a domain is needed to choose sample points")
    return np.linspace(domain[0], domain[1], samples)


def leibniz_check(coef, f, sigma, samples=21, df=None):
    """Largest ``|D(f sigma) - f' sigma - f D sigma|`` over a uniform sample of the domain.

    ``f`` is a scalar function of the parameter (``df`` its derivative, else
    differenced). ``D(f sigma)`` differences the product section itself.
    """
    _vector_section(sigma)
    domain = sigma.domain or coef.domain
    product = SectionAlongPath(lambda s: f(s) * sigma(s), sigma.dim, domain, sigma.path)
    d_prod = derivation_apply(coef, product)
    d_sigma = derivation_apply(coef, sigma)
    grid = _sample_grid(domain, samples)
    devs = []
    for s in grid:
        fp = df(s) if df is not None else derivative(f, float(s), SECTION_FD_STEP, 4, domain)
        devs.append(np.max(np.abs(d_prod(s) - fp * sigma(s) - f(s) * d_sigma(s))))
    return DeviationReport(grid, np.array(devs))


def solve_transport_equation(coef, sigma0, s0, grid, step=DEFAULT_STEP):
    """Solve ``sigma' + Gamma sigma = 0`` with ``sigma(s0) = sigma0`` by RK4.

    The solution is integrated outward from ``s0`` through every grid node
    (steps no longer than ``step``), stored at the nodes, and interpolated
    by a cubic spline in between; its derivative is ``-Gamma sigma``.
    """
    sigma0 = np.asarray(sigma0, dtype=float)
    if sigma0.shape != (coef.dim,):
        raise ValidationError(f"initial value has shape {sigma0.shape}, expected ({coef.dim},)")
    grid = np.asarray(grid, dtype=float)
    if coef.domain is not None:
        a, b = coef.domain
        if not (a - DOMAIN_SLACK <= s0 <= b + DOMAIN_SLACK):
            raise ValidationError(f"s0={s0} outside the domain [{a}, {b}]")
    nodes = np.unique(np.concatenate([grid, [float(s0)]]))
    k0 = int(np.searchsorted(nodes, s0))
    values = np.empty((nodes.size, coef.dim))
    values[k0] = sigma0

    def advance(y, u0, u1):
        out = integrate_linear_batch(coef, y[None, :, None], np.array([u0]), np.array([u1]), step)
        return out[0, :, 0]

    for k in range(k0, nodes.size - 1):
        values[k + 1] = advance(values[k], nodes[k], nodes[k + 1])
    for k in range(k0, 0, -1):
        values[k - 1] = advance(values[k], nodes[k], nodes[k - 1])

    if nodes.size >= 2:
        spline = CubicSpline(nodes, values, axis=0)
    else:
        spline = lambda s: np.broadcast_to(values[0], np.shape(s) + values[0].shape)  # noqa: E731

    def comps(s):
        return np.asarray(spline(s), dtype=float)

    def deriv(s):
        return -np.einsum("...ij,...j->...i", coef(s), comps(s))

    section = SectionAlongPath(comps, coef.dim, (nodes[0], nodes[-1]), coef.path,
                               derivative=deriv, vectorized=True)
    section.grid = nodes
    section.values = values
    return section


class LTransportCheck(NamedTuple):
    transported: bool
    max_deviation: float


def is_l_transported(transport, sigma, tolerance=1e-7, samples=11, domain=None):
    """Whether ``sigma(t) = L_{s->t} sigma(s)`` for all pairs on a uniform sample.

    ``transport`` is a :class:`TransportMatrixFamily` (vector sections) or a
    :class:`TensorTransportRule` (sections of any type, scalars included).
    """
    domain = domain or getattr(sigma, "domain", None) or getattr(transport, "domain", None)
    grid = _sample_grid(domain, samples)
    values = [np.asarray(sigma(s), dtype=float) for s in grid]
    worst = 0.0
    if isinstance(transport, TransportMatrixFamily):
        tt, ss = np.meshgrid(grid, grid, indexing="ij")
        mats = transport(tt, ss)
        vals = np.array(values)
        moved = np.einsum("tsij,sj->tsi", mats, vals)
        worst = float(np.max(np.abs(moved - vals[:, None, :])))
    elif isinstance(transport, TensorTransportRule):
        p, q = getattr(sigma, "p", None), getattr(sigma, "q", None)
        if p is None:
            p, q = (0, 0) if values[0].ndim == 0 else (1, 0)
        for j, s in enumerate(grid):
            T = TensorComponents(p, q, transport.dim, values[j], s)
            for i, t in enumerate(grid):
                moved = transport_tensor(transport, T, t, s).components
                worst = max(worst, float(np.max(np.abs(moved - values[i]))))
    else:
        raise ValidationError(f"cannot use {type(transport).__name__} as a transport")
    return LTransportCheck(worst <= tolerance, worst)


def covariant_decomposition(coef, conn, path):
    """The field ``H_V(s) = Gamma(s) - Gamma^i_{jk}(gamma(s)) gamma'^k(s)``.

    It is the part of the transport's derivation not accounted for by the
    covariant derivative of ``conn`` along the path, so that
    ``D = nabla_V + H_V`` on the path.
    """
    if conn.dim != coef.dim or path.dim != coef.dim:
        raise ValidationError("coefficient field, connection and path dimensions differ")

    def hv(s):
        along = np.einsum("...ijk,...k->...ij", conn(path.position(s)), path.velocity(s))
        return coef(s) - along

    return CoefficientField(hv, coef.dim, path.domain, path, vectorized=True)


def covariant_derivative(conn, path, sigma):
    """``nabla_V sigma`` along the path for a section of any type."""
    def fn(s):
        g = np.einsum("ijk,k->ij", conn(path.position(s)), path.velocity(s))
        return sigma.derivative(s) + slot_action(sigma(s), sigma.p, sigma.q, g, -g.T)

    return DerivationResult(fn, sigma.dim, path, sigma.p, sigma.q)


def reconstructed_derivation(hv, conn, path, sigma):
    """``(nabla_V + H_V) sigma``, which must agree with the transport's derivation."""
    nabla = covariant_derivative(conn, path, sigma)

    def fn(s):
        m = hv(s)
        return nabla(s) + slot_action(sigma(s), sigma.p, sigma.q, m, -m.T)

    return DerivationResult(fn, sigma.dim, path, sigma.p, sigma.q)
