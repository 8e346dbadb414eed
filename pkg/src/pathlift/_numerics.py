"""Shared numerical kernels: guarded linear solves, finite differences, RK4.

Every matrix-valued map in the package follows one calling convention: a
scalar parameter gives an ``(n, n)`` array, an array of parameters with shape
``S`` gives ``S + (n, n)``. Callables flagged ``vectorized`` handle arrays
themselves; the rest are looped over here.
"""

import math

import numpy as np

from .errors import IntegrationError, SingularMatrixError

COND_CAP = 1e12
FD_STEP = 1e-6
MAX_STEPS = 10_000_000


def _check_condition(a, cond_cap, what):
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise SingularMatrixError(f"{what} has non-finite entries")
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.linalg.cond(a)
    worst = float(np.max(cond)) if np.ndim(cond) else float(cond)
    if not np.isfinite(worst) or worst > cond_cap:
        raise SingularMatrixError(
            f"{what} is singular or ill-conditioned (cond={worst:.3g}, cap={cond_cap:.3g})"
        )
    return a


def checked_solve(a, b, cond_cap=COND_CAP, what="matrix"):
    """Solve ``a x = b`` by LU with partial pivoting after a condition check.

    Works on stacks: ``a`` of shape ``(..., n, n)`` and ``b`` of shape
    ``(..., n, k)``.
    """
    a = _check_condition(a, cond_cap, what)
    return np.linalg.solve(a, np.asarray(b, dtype=float))


def checked_inv(a, cond_cap=COND_CAP, what="matrix"):
    a = _check_condition(a, cond_cap, what)
    n = a.shape[-1]
    eye = np.broadcast_to(np.eye(n), a.shape)
    return np.linalg.solve(a, eye)


def evaluate(fn, s, vectorized=False):
    """Evaluate a parameter map at a scalar or an array of parameters."""
    if np.ndim(s) == 0:
        return np.asarray(fn(float(s)), dtype=float)
    s = np.asarray(s, dtype=float)
    if vectorized:
        return np.asarray(fn(s), dtype=float)
    flat = [np.asarray(fn(float(x)), dtype=float) for x in s.ravel()]
    if not flat:
        raise ValueError("cannot evaluate on an empty parameter array")
    return np.stack(flat).reshape(s.shape + flat[0].shape)


# Stencils: (offsets, weights); derivative = sum(w * f(s + o*h)) / h
_CENTERED = {
    2: ((-1, 1), (-0.5, 0.5)),
    4: ((-2, -1, 1, 2), (1 / 12, -8 / 12, 8 / 12, -1 / 12)),
}
_FORWARD = {
    2: ((0, 1, 2), (-1.5, 2.0, -0.5)),
    4: ((0, 1, 2, 3, 4), (-25 / 12, 48 / 12, -36 / 12, 16 / 12, -3 / 12)),
}


def _apply_stencil(fn, s, h, offsets, weights):
    acc = None
    for o, w in zip(offsets, weights):
        term = w * np.asarray(fn(s + o * h), dtype=float)
        acc = term if acc is None else acc + term
    return acc / h


def derivative(fn, s, h=FD_STEP, order=2, domain=None):
    """Finite-difference derivative of a scalar-parameter map at scalar ``s``.

    Centered stencils are used in the interior; within reach of an end of
    ``domain`` the stencil flips to a one-sided one of the same order so the
    map is never evaluated outside its domain.
    """
    offsets, weights = _CENTERED[order]
    reach = max(abs(o) for o in offsets) * h
    if domain is not None:
        a, b = domain
        if s - reach < a:
            offsets, weights = _FORWARD[order]
        elif s + reach > b:
            fo, fw = _FORWARD[order]
            offsets, weights = tuple(-o for o in fo), tuple(-w for w in fw)
    return _apply_stencil(fn, s, h, offsets, weights)


def derivative_many(fn, s, h=FD_STEP, order=2, domain=None):
    """Vectorized-input variant of :func:`derivative` (``fn`` must broadcast)."""
    s = np.asarray(s, dtype=float)
    if s.ndim == 0:
        return derivative(fn, float(s), h, order, domain)
    offsets, weights = _CENTERED[order]
    reach = max(abs(o) for o in offsets) * h
    if domain is None:
        return _apply_stencil(fn, s, h, offsets, weights)
    a, b = domain
    interior = (s - reach >= a) & (s + reach <= b)
    if np.all(interior):
        return _apply_stencil(fn, s, h, offsets, weights)
    parts = [derivative(fn, float(x), h, order, domain) for x in s.ravel()]
    return np.stack(parts).reshape(s.shape + np.shape(parts[0]))


def step_count(span, step):
    """Number of equal RK4 steps covering ``span`` with steps no longer than ``step``."""
    if not (np.isfinite(step) and step > 0):
        raise IntegrationError(f"integrator step must be positive and finite, got {step!r}")
    span = abs(float(span))
    if span == 0.0:
        return 0
    n = max(1, math.ceil(span / step - 1e-9))
    if n > MAX_STEPS:
        raise IntegrationError(f"step underflow: {n} steps requested (cap {MAX_STEPS})")
    return n


def rk4_step(rhs, s, y, h):
    k1 = rhs(s, y)
    k2 = rhs(s + 0.5 * h, y + (0.5 * h) * k1)
    k3 = rhs(s + 0.5 * h, y + (0.5 * h) * k2)
    k4 = rhs(s + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_linear_batch(coefficients, y0, s0, s1, step, block_floats=4_000_000):
    """Integrate ``dY/du = -Gamma(u) Y`` from ``s0`` to ``s1`` for a batch.

    ``s0`` and ``s1`` have shape ``(B,)``, ``y0`` has shape ``(B, n, k)`` and
    ``coefficients`` maps a parameter array of any shape ``S`` to
    ``S + (n, n)``. Each batch member takes its own number of equal steps;
    members that finish early idle with zero step length, which leaves their
    state untouched. The whole batch advances together; coefficients at the
    RK4 stage nodes are evaluated one block of steps at a time, in one call
    per block.
    """
    s0 = np.asarray(s0, dtype=float)
    s1 = np.asarray(s1, dtype=float)
    y = np.array(y0, dtype=float)
    counts = np.array([step_count(b - a, step) for a, b in zip(s0, s1)], dtype=int)
    total = int(counts.max()) if counts.size else 0
    if total == 0:
        return y
    batch, n = y.shape[0], y.shape[-2]
    h_full = np.where(counts > 0, (s1 - s0) / np.maximum(counts, 1), 0.0)
    block = max(1, min(total, block_floats // (batch * 2 * n * n)))
    for k0 in range(0, total, block):
        k1 = min(k0 + block, total)
        m = np.arange(2 * k0, 2 * k1 + 1)
        nodes = s0[:, None] + (0.5 * m[None, :]) * h_full[:, None]
        nodes = np.where(m[None, :] <= 2 * counts[:, None], nodes, s1[:, None])
        gamma = np.asarray(coefficients(nodes), dtype=float)
        if not np.all(np.isfinite(gamma)):
            raise IntegrationError("non-finite transport coefficients encountered")
        for k in range(k0, k1):
            j = 2 * (k - k0)
            hy = np.where(k < counts, h_full, 0.0)[:, None, None]
            g0, gm, g1 = gamma[:, j], gamma[:, j + 1], gamma[:, j + 2]
            d1 = -(g0 @ y)
            d2 = -(gm @ (y + (0.5 * hy) * d1))
            d3 = -(gm @ (y + (0.5 * hy) * d2))
            d4 = -(g1 @ (y + hy * d3))
            y = y + (hy / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
    if not np.all(np.isfinite(y)):
        raise IntegrationError("integration produced non-finite values")
    return y
