"""Command-line interface.

``pathlift <subcommand> --scene FILE [--step H] [--out PATH] [--format csv|json] [--tolerance X]``

Exit status: 0 on success, 1 on invalid input, 2 on numerical failure
(singular matrices, integrator failure, leaving the chart), 3 when the check
suite finds a violated law.
"""

import argparse
import json
import os
import sys

import numpy as np

from .checks import check_report
from .derivation import solve_transport_equation
from .errors import NumericalError, ValidationError
from .geometry import sphere_rotation_angle
from .lpath import lpath_residual, solve_lpath
from .model import SceneModel
from .scene import load_scene
from .tensors import transport_tensor
from .transport import (
    TransportGenerator,
    TransportMatrixFamily,
    change_transport_frame,
    holonomy,
    special_frame,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_CHECK = 0, 1, 2, 3
DEFAULT_SEED = 42
DEFAULT_FORMATS = {
    "transport": "json",
    "solve-section": "csv",
    "lpath": "csv",
    "frame": "json",
    "holonomy": "json",
    "check": "json",
}


class Result:
    """Command output: a JSON document and, when tabular, a CSV table."""

    def __init__(self, document, header=None, rows=None):
        self.document = document
        self.header = header
        self.rows = rows

    def render(self, fmt):
        if fmt == "json":
            return json.dumps(self.document, indent=2, allow_nan=False) + "\n"
        lines = [",".join(self.header)]
        lines += [",".join(format(float(x), ".17g") for x in row) for row in self.rows]
        return "\n".join(lines) + "\n"


def _seed():
    raw = os.environ.get("PATHLIFT_SEED")
    if raw is None or raw == "":
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"PATHLIFT_SEED must be an integer, got {raw!r}") from None


def _matrix_rows(m):
    n = m.shape[0]
    header = ["row"] + [f"c{j + 1}" for j in range(n)]
    return header, [[i + 1, *m[i]] for i in range(n)]


def cmd_transport(model, args):
    s, t = model.s0(), model.t()
    T = model.tensor(s)
    moved = transport_tensor(model.rule, T, t, s)
    H = model.family(t, s)
    doc = {
        "command": "transport",
        "s": s,
        "t": t,
        "matrix": H.tolist(),
        "tensor": {"p": T.p, "q": T.q, "components": moved.components.tolist()},
    }
    comps = moved.components
    rows = [[*(k + 1 for k in idx), comps[idx]] for idx in np.ndindex(comps.shape)]
    header = [f"i{k + 1}" for k in range(comps.ndim)] + ["value"]
    return Result(doc, header, rows)


def cmd_solve_section(model, args):
    s0 = model.s0()
    sigma0 = model.task_value("vector")
    grid = model.grid()
    section = solve_transport_equation(model.coefficients, sigma0, s0, grid, model.step)
    values = section(grid)
    doc = {"command": "solve-section", "s0": s0, "step": model.step,
           "s": grid.tolist(), "values": values.tolist()}
    header = ["s"] + [f"sigma{k + 1}" for k in range(model.n)]
    return Result(doc, header, np.column_stack([grid, values]))


def cmd_lpath(model, args):
    problem = model.lpath_problem()
    solution = solve_lpath(problem, model.step)
    doc = {
        "command": "lpath",
        "step": model.step,
        "truncated": solution.truncated,
        "message": solution.message,
        "s": solution.s.tolist(),
        "positions": solution.positions.tolist(),
        "velocities": solution.velocities.tolist(),
    }
    if solution.s.size >= 3:
        doc["residual"] = lpath_residual(solution, problem.provider)
    header = ["s"] + [f"x{k + 1}" for k in range(model.n)] + [f"v{k + 1}" for k in range(model.n)]
    return Result(doc, header, solution.rows()), solution


def cmd_frame(model, args):
    gen = model.generator
    if gen is None:
        gen = TransportGenerator.from_family(model.family)
    family = TransportMatrixFamily.from_generator(gen)
    frame = special_frame(gen)
    grid = model.grid()
    basis = frame(grid)
    moved = change_transport_frame(family, frame)
    tg, sg = np.meshgrid(grid, grid, indexing="ij")
    deviation = float(np.max(np.abs(moved(tg, sg) - np.eye(model.n))))
    doc = {"command": "frame", "s": grid.tolist(), "basis": basis.tolist(),
           "transport_deviation_from_identity": deviation}
    header = ["s"] + [f"e{j + 1}_{i + 1}" for j in range(model.n) for i in range(model.n)]
    # columns of each basis matrix are the frame vectors
    rows = [[s, *np.asarray(m).T.reshape(-1)] for s, m in zip(grid, basis)]
    return Result(doc, header, rows)


def cmd_holonomy(model, args):
    loop = model.require_path("holonomy")
    tol = 1e-9 if args.tolerance is None else args.tolerance
    M = holonomy(model.family, loop, tol)
    doc = {"command": "holonomy", "provenance": model.family.provenance, "matrix": M.tolist()}
    if model.scene.chart.preset == "sphere":
        doc["rotation_angle"] = sphere_rotation_angle(M, float(loop.position(loop.domain[0])[0]))
    header, rows = _matrix_rows(M)
    return Result(doc, header, rows)


def cmd_check(model, args, seed):
    rng = np.random.default_rng(seed)
    doc, laws = check_report(model, rng, seed, args.tolerance)
    rows = [[k + 1, law.max_deviation, law.tolerance, float(law.passed)] for k, law in enumerate(laws)]
    return Result(doc, ["law", "max_deviation", "tolerance", "passed"], rows), laws


class _Parser(argparse.ArgumentParser):
    """Usage errors count as invalid input, not as argparse's status 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def build_parser():
    parser = _Parser(
        prog="pathlift", description="Linear transports along paths in vector and tensor bundles.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "transport": "transport a vector, scalar or tensor from s0 to t",
        "solve-section": "solve the transport equation for a section on a grid",
        "lpath": "integrate the path whose velocity is transported along itself",
        "frame": "special frame in which the transport matrix is the identity",
        "holonomy": "transport matrix once around a closed path",
        "check": "run the invariant suite on the scene's transport",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--scene", required=True, help="scene file (text or JSON encoding)")
        p.add_argument("--step", type=float, help="RK4 step (default: task.step or 1e-3)")
        p.add_argument("--out", help="output file (default: output.path or stdout)")
        p.add_argument("--format", choices=("csv", "json"), help="output format")
        p.add_argument("--tolerance", type=float,
                       help="check: tolerance for every law; holonomy: loop-closure tolerance")
    return parser


def _write(text, destination):
    if destination is None:
        sys.stdout.write(text)
        return
    with open(destination, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def run(argv=None):
    args = build_parser().parse_args(argv)
    scene = load_scene(args.scene)
    if args.tolerance is not None and args.command not in ("check", "holonomy"):
        raise ValidationError("--tolerance applies to the check and holonomy commands only")
    if args.step is not None and not (np.isfinite(args.step) and args.step > 0):
        raise ValidationError("--step must be positive")
    model = SceneModel(scene, args.step)
    fmt = args.format or scene.output.format or DEFAULT_FORMATS[args.command]
    destination = args.out or scene.output.path
    status, message = EXIT_OK, None
    if args.command == "check":
        result, laws = cmd_check(model, args, _seed())
        failed = [law for law in laws if not law.passed]
        if failed:
            status = EXIT_CHECK
            message = "; ".join(
                f"law violated: {law.name} (max deviation {law.max_deviation:.3g} > tolerance {law.tolerance:.3g})"
                for law in failed)
    elif args.command == "lpath":
        result, solution = cmd_lpath(model, args)
        if solution.truncated:
            status, message = EXIT_NUMERICAL, f"L-path truncated: {solution.message}"
    else:
        handler = {"transport": cmd_transport, "solve-section": cmd_solve_section,
                   "frame": cmd_frame, "holonomy": cmd_holonomy}[args.command]
        result = handler(model, args)
    _write(result.render(fmt), destination)
    if message:
        print(f"pathlift: {message}", file=sys.stderr)
    return status


def main(argv=None):
    try:
        return run(argv)
    except ValidationError as exc:
        print(f"pathlift: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"pathlift: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
