"""Linear transports along a path in a rank-n bundle.

A transport is held in one of three interchangeable forms:

* a generator ``F(s)``, with transport matrix ``H(t, s) = F(t)^{-1} F(s)``;
* the two-point matrix family ``H(t, s)`` itself;
* the coefficient matrix ``Gamma(s) = F(s)^{-1} F'(s)``, from which ``H(., s)``
  is recovered by integrating ``dH/dt + Gamma(t) H = 0`` with ``H(s, s) = I``.

Components follow ``L_{s->t} e_i(s) = H^j_i(t, s) e_j(t)``, so a vector with
components ``v`` at ``s`` arrives at ``t`` with components ``H(t, s) @ v``.
"""

import numpy as np

from ._numerics import (
    COND_CAP,
    FD_STEP,
    checked_inv,
    checked_solve,
    derivative,
    derivative_many,
    evaluate,
    integrate_linear_batch,
)
from .errors import ValidationError
from .geometry import DOMAIN_SLACK, FrameField

DEFAULT_STEP = 1e-3

FROM_GENERATOR = "from-generator"
ODE_INTEGRATED = "ode-integrated"
CLOSED_FORM = "closed-form"

# Representation tolerances used by property checks, keyed by provenance.
COCYCLE_TOLERANCE = {FROM_GENERATOR: 1e-12, CLOSED_FORM: 1e-12, ODE_INTEGRATED: 1e-7}


def _check_domain(domain, *params):
    if domain is None:
        return
    a, b = domain
    for p in params:
        p = np.asarray(p, dtype=float)
        if np.any(p < a - DOMAIN_SLACK) or np.any(p > b + DOMAIN_SLACK):
            raise ValidationError(f"parameter outside transport domain [{a}, {b}]")


class TransportGenerator:
    """Nondegenerate matrix function ``F(s)`` generating a transport.

    ``F`` is only defined up to a constant left factor; any representative
    works. Without an analytic ``dF`` the derivative is a centered difference
    with step ``fd_step``.
    """

    def __init__(self, F, dim, domain, dF=None, path=None, *, vectorized=False, fd_step=FD_STEP):
        self._F = F
        self._dF = dF
        self.dim = int(dim)
        self.domain = tuple(float(v) for v in domain)
        self.path = path
        self.vectorized = vectorized
        self.fd_step = fd_step

    def __call__(self, s):
        _check_domain(self.domain, s)
        m = evaluate(self._F, s, self.vectorized)
        if m.shape[-2:] != (self.dim, self.dim):
            raise ValidationError(f"generator value has shape {m.shape[-2:]}, expected {(self.dim,) * 2}")
        return m

    @property
    def analytic_derivative(self):
        return self._dF is not None

    def derivative(self, s):
        _check_domain(self.domain, s)
        if self._dF is not None:
            return evaluate(self._dF, s, self.vectorized)
        if self.vectorized:
            return derivative_many(self.__call__, s, self.fd_step, 2, self.domain)
        if np.ndim(s) == 0:
            return derivative(self.__call__, float(s), self.fd_step, 2, self.domain)
        return np.stack([self.derivative(float(x)) for x in np.ravel(s)]).reshape(
            np.shape(s) + (self.dim, self.dim))

    @classmethod
    def from_family(cls, family, s_ref=None):
        """A generator representative of an arbitrary transport: ``F(s) = H(s_ref, s)``."""
        if s_ref is None:
            s_ref = family.domain[0]

        def F(s):
            return family(np.full(np.shape(s), s_ref), s)

        dF = None
        if family.coefficients is not None:
            # d/ds H(r, s) = H(r, s) Gamma(s)
            def dF(s):
                return F(s) @ family.coefficients(s)

        return cls(F, family.dim, family.domain, dF, family.path, vectorized=True)


class CoefficientField:
    """Transport coefficients ``Gamma(s) = [Gamma^i_j(s)]`` along a path."""

    def __init__(self, gamma, dim, domain=None, path=None, *, vectorized=False):
        self._gamma = gamma
        self.dim = int(dim)
        self.domain = None if domain is None else tuple(float(v) for v in domain)
        self.path = path
        self.vectorized = vectorized

    def __call__(self, s):
        m = evaluate(self._gamma, s, self.vectorized)
        if m.shape[-2:] != (self.dim, self.dim):
            raise ValidationError(f"coefficient value has shape {m.shape[-2:]}, expected {(self.dim,) * 2}")
        return m

    @classmethod
    def constant(cls, matrix, domain=None, path=None):
        matrix = np.asarray(matrix, dtype=float)
        n = matrix.shape[0]

        def gamma(s):
            return np.broadcast_to(matrix, np.shape(s) + (n, n)).copy()

        return cls(gamma, n, domain, path, vectorized=True)


class TransportMatrixFamily:
    """The two-point matrix ``H(t, s)`` of a transport.

    ``provenance`` records how the matrices are produced so that checks can
    pick a matching tolerance. ``H(s, s)`` is returned as the exact identity.
    """

    def __init__(self, H, dim, domain, provenance=CLOSED_FORM, path=None, *,
                 coefficients=None, generator=None, vectorized=False):
        self._H = H
        self.dim = int(dim)
        self.domain = None if domain is None else tuple(float(v) for v in domain)
        self.provenance = provenance
        self.path = path
        self.coefficients = coefficients
        self.generator = generator
        self.vectorized = vectorized

    def __call__(self, t, s):
        _check_domain(self.domain, t, s)
        t_arr, s_arr = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
        if t_arr.ndim == 0:
            if float(t_arr) == float(s_arr):
                return np.eye(self.dim)
            return np.asarray(self._H(float(t_arr), float(s_arr)), dtype=float)
        if self.vectorized:
            out = np.array(self._H(t_arr, s_arr), dtype=float)
        else:
            flat = [np.asarray(self._H(float(a), float(b)), dtype=float)
                    for a, b in zip(t_arr.ravel(), s_arr.ravel())]
            out = np.stack(flat).reshape(t_arr.shape + (self.dim, self.dim))
        out[t_arr == s_arr] = np.eye(self.dim)
        return out

    @property
    def tolerance(self):
        return COCYCLE_TOLERANCE[self.provenance]

    @classmethod
    def from_generator(cls, gen):
        def H(t, s):
            return matrix_from_generator(gen, t, s)

        coef = CoefficientField(lambda s: coefficients_from_generator(gen, s), gen.dim,
                                gen.domain, gen.path, vectorized=True)
        return cls(H, gen.dim, gen.domain, FROM_GENERATOR, gen.path,
                   coefficients=coef, generator=gen, vectorized=True)

    @classmethod
    def from_coefficients(cls, coef, domain=None, step=DEFAULT_STEP):
        domain = domain if domain is not None else coef.domain

        def H(t, s):
            return matrix_from_coefficients(coef, t, s, step)

        return cls(H, coef.dim, domain, ODE_INTEGRATED, coef.path,
                   coefficients=coef, vectorized=True)


def matrix_from_generator(gen, t, s):
    """``H(t, s) = F(t)^{-1} F(s)``."""
    return checked_solve(gen(t), gen(s), what="generator F(t)")


def coefficients_from_generator(gen, s):
    """``Gamma(s) = F(s)^{-1} dF/ds(s)``."""
    return checked_solve(gen(s), gen.derivative(s), what="generator F(s)")


def matrix_from_coefficients(coef, t, s, step=DEFAULT_STEP):
    """Integrate ``dH(u, s)/du = -Gamma(u) H(u, s)`` from ``u = s`` to ``u = t``.

    Classical RK4 with equal steps no longer than ``step``. ``t`` and ``s``
    may be arrays; they are broadcast and integrated as one batch.
    """
    if coef.domain is not None:
        _check_domain(coef.domain, t, s)
    t_arr, s_arr = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    shape = t_arr.shape
    t_flat, s_flat = t_arr.ravel(), s_arr.ravel()
    n = coef.dim
    y0 = np.broadcast_to(np.eye(n), (t_flat.size, n, n))
    out = integrate_linear_batch(coef, y0, s_flat, t_flat, step)
    return out.reshape(shape + (n, n))


def transport_vector(H, t, s, v):
    """Components ``H^i_j(t, s) v^j`` of the transported vector."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != H.dim:
        raise ValidationError(f"vector has {v.shape[-1]} components, bundle rank is {H.dim}")
    if np.ndim(t) == 0 and np.ndim(s) == 0 and float(t) == float(s):
        return v.copy()
    return np.einsum("...ij,...j->...i", H(t, s), v)


def special_frame(gen, base=None):
    """Frame ``e'_i(s) = [F^{-1}(s)]^j_i e_j(s)`` in which the transport matrix is the identity.

    ``base`` defaults to the coordinate frame.
    """
    if base is None:
        base = FrameField.coordinate(gen.dim, gen.path)

    def basis(s):
        return base(s) @ checked_inv(gen(s), COND_CAP, "generator F(s)")

    return FrameField(basis, gen.dim, base.path, vectorized=True, cond_cap=base.cond_cap)


def _as_matrix_map(A):
    vectorized = getattr(A, "vectorized", False)

    def fn(s):
        return evaluate(A, s, vectorized)

    return fn


def change_transport_frame(H, A, dA=None):
    """Re-express ``H`` in the frame ``e'_i = A^j_i e_j``: ``H'(t, s) = A(t)^{-1} H(t, s) A(s)``.

    ``A`` is any matrix-valued map of the parameter (a :class:`FrameField`
    works). The coefficients, when known, are carried over as
    ``A^{-1} Gamma A + A^{-1} dA/ds``.
    """
    amap = _as_matrix_map(A)

    def H_new(t, s):
        return checked_solve(amap(t), H(t, s) @ amap(s), what="frame change A(t)")

    coef = None
    if H.coefficients is not None:
        coef = coefficients_in_frame(H.coefficients, A, dA, H.domain)
    gen = None
    if H.generator is not None:
        old = H.generator
        gen = TransportGenerator(lambda s: old(s) @ amap(s), old.dim, old.domain, path=old.path,
                                 vectorized=True)
    return TransportMatrixFamily(H_new, H.dim, H.domain, H.provenance, H.path,
                                 coefficients=coef, generator=gen, vectorized=True)


def coefficients_in_frame(coef, A, dA=None, domain=None):
    """Coefficients of the same transport in the frame ``e'_i = A^j_i e_j``."""
    amap = _as_matrix_map(A)
    domain = domain if domain is not None else coef.domain

    def dmap(s):
        if dA is not None:
            return evaluate(dA, s, getattr(dA, "vectorized", False))
        if np.ndim(s) == 0:
            return derivative(amap, float(s), FD_STEP, 2, domain)
        return np.stack([dmap(float(x)) for x in np.ravel(s)]).reshape(np.shape(s) + (coef.dim,) * 2)

    def gamma(s):
        a = amap(s)
        return checked_solve(a, coef(s) @ a + dmap(s), what="frame change A(s)")

    return CoefficientField(gamma, coef.dim, domain, coef.path, vectorized=True)


def holonomy(H, loop, tol=1e-9):
    """Transport matrix once around a closed loop, ``H(b, a)``."""
    if H.path is not None and H.path is not loop:
        raise ValidationError("transport family is defined along a different path")
    if not loop.is_closed(tol):
        a, b = loop.domain
        gap = loop.chart.displacement(loop.position(a), loop.position(b))
        raise ValidationError(f"loop is not closed: endpoint gap {np.max(np.abs(gap)):.3g} > {tol:g}")
    a, b = loop.domain
    return H(b, a)


def parallel_coefficients(conn, path):
    """Coefficients ``Gamma^i_j(s) = Gamma^i_{jk}(gamma(s)) gamma'^k(s)`` of the parallel transport."""
    if conn.dim != path.dim:
        raise ValidationError("connection and path dimensions differ")

    def gamma(s):
        return np.einsum("...ijk,...k->...ij", conn(path.position(s)), path.velocity(s))

    return CoefficientField(gamma, path.dim, path.domain, path, vectorized=True)


def parallel_transport(conn, path, step=DEFAULT_STEP):
    """ODE-backed transport family of the connection along ``path``."""
    return TransportMatrixFamily.from_coefficients(parallel_coefficients(conn, path), path.domain, step)
