"""The invariant suite behind ``pathlift check``.

Each law is measured as a max-abs deviation and compared with a tolerance;
tolerances can be overridden per law by the scene's ``check`` section.
"""

import numpy as np

from .errors import SceneError
from .scene import CHECK_DEFAULTS
from .tensors import PRODUCT, LawCheck, check_consistency
from ._numerics import checked_inv
from .transport import change_transport_frame, coefficients_in_frame, matrix_from_coefficients

# scene key -> law name as reported
LAW_NAMES = {
    "cocycle": "cocycle",
    "identity": "identity at coincident parameters",
    "inverse": "inverse transport",
    "round_trip": "generator/coefficient round trip",
    "special_frame": "special frame",
    "tensor_product": "tensor product",
    "contraction": "contraction commutation",
    "inverse_pair": "mutually inverse slot matrices",
    "scalar_invariance": "scalar invariance",
    "scalar_cocycle": "scalar cocycle",
}
_CONSISTENCY_KEYS = {
    "tensor product": "tensor_product",
    "contraction commutation": "contraction",
    "mutually inverse slot matrices": "inverse_pair",
    "scalar invariance": "scalar_invariance",
}


def _tolerance(key, overrides, family):
    if key in overrides:
        return overrides[key]
    if key == "cocycle":
        return family.tolerance
    return CHECK_DEFAULTS[key]


def _max_dev(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def run_checks(model, rng, overrides=None, trials=None):
    """Run every law applicable to the scene's transport; returns a list of :class:`LawCheck`."""
    overrides = dict(model.scene.checks if overrides is None else overrides)
    trials = trials or model.scene.trials or 200
    family = model.family
    a, b = model.domain
    n = model.n
    results = []

    def record(key, deviation, detail=""):
        results.append(LawCheck(LAW_NAMES[key], float(deviation), _tolerance(key, overrides, family), detail))

    r, s, t = (rng.uniform(a, b, trials) for _ in range(3))
    lhs = family(r, t) @ family(t, s)
    record("cocycle", _max_dev(lhs, family(r, s)), f"{trials} random triples, {family.provenance}")

    raw = family._H(s, s)
    record("identity", _max_dev(raw, np.broadcast_to(np.eye(n), raw.shape)),
           f"{trials} random parameters, raw {family.provenance} matrices")

    prod = family(s, t) @ family(t, s)
    record("inverse", _max_dev(prod, np.broadcast_to(np.eye(n), prod.shape)), f"{trials} random pairs")

    gen = model.generator
    if gen is not None:
        pairs = min(trials, 50)
        tt, ss = t[:pairs], s[:pairs]
        ode = matrix_from_coefficients(family.coefficients, tt, ss, model.step)
        record("round_trip", _max_dev(ode, family(tt, ss)), f"{pairs} pairs, RK4 step {model.step:g}")

        def A(u):
            return checked_inv(gen(u), what="generator F(s)")

        def dA(u):
            inv = A(u)
            return -inv @ gen.derivative(u) @ inv

        grid = np.linspace(a, b, 21)
        moved = change_transport_frame(family, A, dA)
        tg, sg = np.meshgrid(grid, grid, indexing="ij")
        dev_h = _max_dev(moved(tg, sg), np.broadcast_to(np.eye(n), tg.shape + (n, n)))
        dev_c = float(np.max(np.abs(coefficients_in_frame(family.coefficients, A, dA, (a, b))(grid))))
        record("special_frame", max(dev_h, dev_c),
               f"transport deviation {dev_h:.3g}, coefficient size {dev_c:.3g} on 21 nodes")

    report = check_consistency(model.rule, t=b, s=a, rng=rng)
    for law in report.checks:
        key = _CONSISTENCY_KEYS[law.name]
        results.append(LawCheck(law.name, law.max_deviation, _tolerance(key, overrides, family), law.detail))

    rule = model.rule
    if rule.mode == PRODUCT and rule.scalar_potential is not None:
        worst = 0.0
        for ri, si, ti in zip(r, s, t):
            h = rule.scalar_factor
            worst = max(worst, abs(h(ri, ti) * h(ti, si) - h(ri, si)), abs(h(si, si) - 1.0))
        record("scalar_cocycle", worst, f"{trials} random triples")
    return results


def check_report(model, rng, seed, tolerance=None):
    """Run the suite and assemble a JSON-ready report."""
    overrides = dict(model.scene.checks)
    if tolerance is not None:
        overrides = {key: tolerance for key in CHECK_DEFAULTS}
    if model.scene.transport.kind == "connection" and model.path is None:
        raise SceneError("checking a connection transport needs a path section")
    laws = run_checks(model, rng, overrides)
    return {
        "command": "check",
        "seed": seed,
        "provenance": model.family.provenance,
        "laws": [
            {"name": law.name, "max_deviation": law.max_deviation, "tolerance": law.tolerance,
             "passed": law.passed, "detail": law.detail}
            for law in laws
        ],
        "passed": all(law.passed for law in laws),
    }, laws
