"""Command-line front end: mesh generation, the three solvers, oracles.

Subcommands
-----------
mesh      generate a tagged mesh file
            robineig mesh --shape square|disk|annulus --n N [--r0 R] --out PATH
solve     run an inverse iteration, writing trace.csv, solution.txt and
          manifest.txt into --out DIR
            robineig solve --problem robin|mixed|insulation
                           (--mesh PATH | --shape S --n N [--r0 R])
                           [--h C | --h-file PATH | --mass M]
                           [--rtol T] [--max-steps K] [--initial constant|affine]
                           --out DIR
            robineig solve --from-manifest PATH --out DIR
oracle    dense smallest generalized eigenvalue (robin/mixed only)
baseline  analytic reference eigenvalues

Exit codes: 0 success (solve: converged), 2 invalid arguments or
problem/mesh mismatch, 3 iteration hit max steps without converging,
4 linear solver failure.

The trace CSV has header ``k,rayleigh,l2_norm,energy_norm,step_residual``
plus a ``profile_mass`` column for insulation runs.  Identical invocations
produce byte-identical trace and solution files; the manifest records all
resolved parameters and re-running from it reproduces the trace.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import __version__
from .assembly import BoundaryProfile
from .baselines import mixed_annulus_lambda, robin_disk_lambda, robin_square_lambda
from .iteration import IterationConfig, ProblemKind, ProblemSpec, run
from .linalg import DENSE_EIG_MAX_DIM, SolverError, dense_smallest_eigpair
from .mesh import (
    Mesh,
    MeshFormatError,
    MeshTopologyError,
    generate_annulus,
    generate_disk,
    generate_unit_square,
    read_mesh,
    write_mesh,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_SOLVER_FAILURE = 4


class UsageError(Exception):
    """Invalid arguments or inconsistent problem data (exit code 2)."""


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _build_shape_mesh(shape: str, n: int, r0) -> Mesh:
    if shape == "square":
        return generate_unit_square(n)
    if shape == "disk":
        return generate_disk(n)
    if shape == "annulus":
        if r0 is None:
            raise UsageError("annulus requires --r0")
        if not (0.0 < r0 < 1.0):
            raise UsageError(f"annulus inner radius r0 must lie in (0, 1), got {r0}")
        return generate_annulus(r0, n)
    raise UsageError(f"unknown shape {shape!r}")


def _load_mesh(args) -> tuple:
    """Resolve a mesh from --mesh or --shape; returns (mesh, source dict)."""
    if getattr(args, "mesh", None):
        try:
            mesh = read_mesh(args.mesh)
        except (MeshFormatError, MeshTopologyError, OSError) as exc:
            raise UsageError(f"cannot read mesh {args.mesh}: {exc}") from exc
        return mesh, {"mesh_file": args.mesh}
    if getattr(args, "shape", None):
        if args.n is None:
            raise UsageError("--shape requires --n")
        mesh = _build_shape_mesh(args.shape, args.n, args.r0)
        source = {"shape": args.shape, "n": str(args.n)}
        if args.shape == "annulus":
            source["r0"] = _fmt(args.r0)
        return mesh, source
    raise UsageError("one of --mesh or --shape is required")


def _read_h_file(path, mesh: Mesh) -> BoundaryProfile:
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read profile file {path}: {exc}") from exc
    for ln, line in enumerate(lines, start=1):
        tokens = line.split("#")[0].split()
        if not tokens:
            continue
        if len(tokens) != 2:
            raise UsageError(f"{path} line {ln}: expected '<vertex> <h>'")
        try:
            idx, val = int(tokens[0]), float(tokens[1])
        except ValueError:
            raise UsageError(f"{path} line {ln}: bad entry {tokens}") from None
        values[idx] = val
    boundary = mesh.boundary_vertices()
    missing = [int(v) for v in boundary if int(v) not in values]
    if missing:
        raise UsageError(
            f"profile file {path} misses {len(missing)} boundary vertices "
            f"(first: {missing[0]})"
        )
    vals = np.array([values[int(v)] for v in boundary])
    if np.any(vals <= 0.0):
        bad = boundary[np.nonzero(vals <= 0.0)[0][0]]
        raise UsageError(f"profile file {path}: nonpositive h at vertex {int(bad)}")
    return BoundaryProfile(boundary, vals, mesh.tags_present())


def _build_problem(args, mesh: Mesh) -> tuple:
    """Build a ProblemSpec; returns (spec, data dict for the manifest)."""
    problem = args.problem
    try:
        if problem == "robin":
            if args.h is not None:
                if args.h <= 0.0:
                    raise UsageError(f"--h must be positive, got {args.h}")
                profile = BoundaryProfile.constant(mesh, args.h)
                data = {"h": _fmt(args.h)}
            elif args.h_file is not None:
                profile = _read_h_file(args.h_file, mesh)
                data = {"h_file": args.h_file}
            else:
                raise UsageError("robin requires --h or --h-file")
            return ProblemSpec.robin(mesh, profile), data
        if problem == "mixed":
            return ProblemSpec.mixed(mesh), {}
        if problem == "insulation":
            if args.mass is None:
                raise UsageError("insulation requires --mass")
            return ProblemSpec.insulation(mesh, args.mass), {"mass": _fmt(args.mass)}
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    raise UsageError(f"unknown problem {problem!r}")


def write_trace_csv(trace, path) -> None:
    cols = ["k", "rayleigh", "l2_norm", "energy_norm", "step_residual"]
    if trace.profile_mass is not None:
        cols.append("profile_mass")
    rows = [",".join(cols)]
    for k in range(len(trace)):
        row = [
            str(k),
            _fmt(trace.rayleigh[k]),
            _fmt(trace.l2_norm[k]),
            _fmt(trace.energy_norm[k]),
            _fmt(trace.step_residual[k]),
        ]
        if trace.profile_mass is not None:
            row.append(_fmt(trace.profile_mass[k]))
        rows.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def _write_vector(path, u: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(_fmt(x) for x in u) + "\n")


def _write_manifest(path, entries: dict) -> None:
    with open(path, "w") as fh:
        for key, val in entries.items():
            fh.write(f"{key} {val}\n")


def _read_manifest(path) -> dict:
    entries = {}
    try:
        with open(path) as fh:
            for line in fh:
                tokens = line.split(None, 1)
                if tokens:
                    entries[tokens[0]] = tokens[1].strip() if len(tokens) > 1 else ""
    except OSError as exc:
        raise UsageError(f"cannot read manifest {path}: {exc}") from exc
    return entries


def _cmd_mesh(args) -> int:
    mesh, _ = _load_mesh(args)
    write_mesh(mesh, args.out)
    print(f"wrote {args.out}: {mesh.num_vertices} vertices, "
          f"{mesh.num_triangles} triangles, {len(mesh.boundary_edges)} boundary edges")
    return EXIT_OK


def _apply_manifest(args) -> None:
    entries = _read_manifest(args.from_manifest)

    def need(key):
        if key not in entries:
            raise UsageError(f"manifest misses required key {key!r}")
        return entries[key]

    args.problem = need("problem")
    args.mesh = entries.get("mesh_file")
    args.shape = entries.get("shape")
    args.n = int(entries["n"]) if "n" in entries else None
    args.r0 = float(entries["r0"]) if "r0" in entries else None
    args.h = float(entries["h"]) if "h" in entries else None
    args.h_file = entries.get("h_file")
    args.mass = float(entries["mass"]) if "mass" in entries else None
    args.rtol = float(need("rtol"))
    args.max_steps = int(need("max_steps"))
    args.initial = need("initial")


def _cmd_solve(args) -> int:
    import os

    if args.from_manifest:
        _apply_manifest(args)
    mesh, source = _load_mesh(args)
    spec, data = _build_problem(args, mesh)
    config = IterationConfig(rtol=args.rtol, max_steps=args.max_steps,
                             initial=args.initial)

    os.makedirs(args.out, exist_ok=True)
    t0 = time.perf_counter()
    lam, u, trace = run(spec, config)
    duration = time.perf_counter() - t0

    write_trace_csv(trace, os.path.join(args.out, "trace.csv"))
    _write_vector(os.path.join(args.out, "solution.txt"), u)
    manifest = {"tool": f"robineig {__version__}", "problem": args.problem}
    manifest.update(source)
    manifest.update(data)
    manifest.update(
        {
            "rtol": _fmt(args.rtol),
            "max_steps": str(args.max_steps),
            "initial": args.initial,
            "steps": str(trace.steps),
            "converged": str(trace.converged).lower(),
            "lambda": _fmt(lam),
            "duration_s": f"{duration:.3f}",
        }
    )
    _write_manifest(os.path.join(args.out, "manifest.txt"), manifest)
    print(f"lambda {_fmt(lam)} after {trace.steps} steps "
          f"({'converged' if trace.converged else 'max steps reached'})")
    return EXIT_OK if trace.converged else EXIT_NO_CONVERGENCE


def _cmd_oracle(args) -> int:
    from .assembly import (
        DirichletConstraint,
        apply_constraint,
        assemble_boundary_mass,
        assemble_mass,
        assemble_stiffness,
    )

    if args.problem == "insulation":
        raise UsageError("no linear oracle for insulation")
    mesh, _ = _load_mesh(args)
    spec, _ = _build_problem(args, mesh)
    if mesh.num_vertices > DENSE_EIG_MAX_DIM:
        raise UsageError(
            f"mesh dimension {mesh.num_vertices} exceeds oracle cap "
            f"{DENSE_EIG_MAX_DIM}"
        )
    K = assemble_stiffness(mesh)
    M = assemble_mass(mesh)
    if spec.kind is ProblemKind.ROBIN:
        A = K + assemble_boundary_mass(mesh, spec.profile)
        lam, u = dense_smallest_eigpair(A, M)
    else:
        c = DirichletConstraint.from_mesh(mesh)
        lam, u = dense_smallest_eigpair(apply_constraint(K, c), M, c)
    print(_fmt(lam))
    _write_vector(args.out, u)
    return EXIT_OK


def _cmd_baseline(args) -> int:
    if args.case == "robin-disk":
        if args.h is None:
            raise UsageError("robin-disk requires --h")
        value = robin_disk_lambda(args.h)
    elif args.case == "robin-square":
        if args.h is None:
            raise UsageError("robin-square requires --h")
        value = robin_square_lambda(args.h)
    elif args.case == "mixed-annulus":
        if args.r0 is None:
            raise UsageError("mixed-annulus requires --r0")
        if not (0.0 < args.r0 < 1.0):
            raise UsageError(f"inner radius r0 must lie in (0, 1), got {args.r0}")
        value = mixed_annulus_lambda(args.r0)
    else:
        raise UsageError(f"unknown case {args.case!r}")
    print(_fmt(value))
    return EXIT_OK


def _add_mesh_source(parser, require_out=False):
    parser.add_argument("--mesh", help="path to a mesh file")
    parser.add_argument("--shape", choices=["square", "disk", "annulus"])
    parser.add_argument("--n", type=int, help="refinement level")
    parser.add_argument("--r0", type=float, help="annulus inner radius")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robineig",
        description="Inverse-iteration eigensolvers for Robin, mixed, and "
                    "optimal-insulation Laplace eigenproblems",
    )
    parser.add_argument("--version", action="version",
                        version=f"robineig {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_mesh = sub.add_parser("mesh", help="generate a mesh file")
    _add_mesh_source(p_mesh)
    p_mesh.add_argument("--out", required=True, help="output mesh path")
    p_mesh.set_defaults(func=_cmd_mesh)

    p_solve = sub.add_parser("solve", help="run an inverse iteration")
    p_solve.add_argument("--problem", choices=["robin", "mixed", "insulation"])
    _add_mesh_source(p_solve)
    p_solve.add_argument("--h", type=float, help="constant insulation value")
    p_solve.add_argument("--h-file", help="per-vertex insulation profile file")
    p_solve.add_argument("--mass", type=float, help="insulation mass")
    p_solve.add_argument("--rtol", type=float, default=1e-10,
                         help="relative Rayleigh-decrement stopping tolerance")
    p_solve.add_argument("--max-steps", type=int, default=500)
    p_solve.add_argument("--initial", choices=["constant", "affine"],
                         default="constant")
    p_solve.add_argument("--from-manifest", help="re-run from a manifest file")
    p_solve.add_argument("--out", required=True, help="output directory")
    p_solve.set_defaults(func=_cmd_solve)

    p_oracle = sub.add_parser("oracle", help="dense smallest eigenvalue")
    p_oracle.add_argument("--problem", choices=["robin", "mixed", "insulation"],
                          required=True)
    _add_mesh_source(p_oracle)
    p_oracle.add_argument("--h", type=float, help="constant insulation value")
    p_oracle.add_argument("--h-file", help="per-vertex insulation profile file")
    p_oracle.add_argument("--mass", type=float)
    p_oracle.add_argument("--out", default="eigenvector.txt",
                          help="eigenvector output path")
    p_oracle.set_defaults(func=_cmd_oracle)

    p_base = sub.add_parser("baseline", help="analytic reference eigenvalue")
    p_base.add_argument("--case",
                        choices=["robin-disk", "robin-square", "mixed-annulus"],
                        required=True)
    p_base.add_argument("--h", type=float)
    p_base.add_argument("--r0", type=float)
    p_base.set_defaults(func=_cmd_baseline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # post-parse validation errors share argparse's usage exit code
    if args.command == "solve" and not args.from_manifest and args.problem is None:
        print("robineig solve: --problem is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"robineig {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"robineig {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"robineig {args.command}: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE


if __name__ == "__main__":
    sys.exit(main())
