"""Test fixtures shared across modules: random smooth generators and closed forms."""

import numpy as np

from pathlift.transport import TransportGenerator

E1 = 0.36787944117144233  # exp(-1)
E2 = 0.1353352832366127  # exp(-2)
ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


def _exp_family(M):
    """``u -> expm(u M)`` for arrays of ``u``, through one eigendecomposition of ``M``."""
    lam, V = np.linalg.eig(M)
    Vinv = np.linalg.inv(V)

    def exp(u):
        u = np.asarray(u, dtype=float)[..., None]
        return ((V * np.exp(u * lam)[..., None, :]) @ Vinv).real

    return exp


def random_generator(rng, dim, domain=(0.0, 1.0), scale=0.6):
    """``F(s) = expm(s A) expm(sin(s) B)`` with ``dF = A F + cos(s) F B``.

    Always invertible, smooth, and with an exact derivative.
    """
    A = scale * rng.standard_normal((dim, dim))
    B = scale * rng.standard_normal((dim, dim))
    exp_a, exp_b = _exp_family(A), _exp_family(B)

    def F(s):
        s = np.asarray(s, dtype=float)
        return exp_a(s) @ exp_b(np.sin(s))

    def dF(s):
        f = F(s)
        c = np.cos(np.asarray(s, dtype=float))[..., None, None]
        return A @ f + c * (f @ B)

    return TransportGenerator(F, dim, domain, dF, vectorized=True)


def diag_generator(domain=(0.0, 1.0), analytic=True):
    def F(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape + (2, 2))
        out[..., 0, 0] = np.exp(s)
        out[..., 1, 1] = np.exp(2 * s)
        return out

    def dF(s):
        out = F(s)
        out[..., 1, 1] *= 2
        return out

    return TransportGenerator(F, 2, domain, dF if analytic else None, vectorized=True)


def rotation(angle):
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def rotation_generator(domain=(0.0, 2 * np.pi)):
    return TransportGenerator(rotation, 2, domain, lambda s: rotation(s) @ ROT, vectorized=True)
