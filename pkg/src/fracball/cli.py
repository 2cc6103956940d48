"""Command line entry point ``fracball``.

Subcommands: constants, kernel, greenop, fracop, solve, experiment.
The exit code is 0 when every pass flag of the command is true.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import EXPERIMENTS, default_config, emit_config, load_config, with_output
from .constants import normalization_constant, symbol_constant
from .errors import FracballError
from .experiments import fmt, run_experiment, write_csv
from .fracop import frac_laplacian_point, power_function
from .geometry import ProblemParams, mesh_for, unit_ball
from .greenop import cached_assemble, torsion
from .kernels import gamma_source, green_kernel, poisson_kernel, torsion_exact
from .solver import SolveOptions, limit_solution, solve_exterior_dirac


def _point(text):
    return np.array([float(c) for c in text.replace(",", " ").split()])


def _params(a) -> ProblemParams:
    return ProblemParams(a.dim, a.alpha, a.p, a.s, a.resolution, a.grading, a.clustering)


def _add_problem(sp, p=3.0, s=0.0):
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--p", type=float, default=p)
    sp.add_argument("--s", type=float, default=s)
    sp.add_argument("--resolution", type=int, default=32)
    sp.add_argument("--grading", type=float, default=2.0)
    sp.add_argument("--clustering", type=float, default=0.0)


def cmd_constants(a):
    c = normalization_constant(a.dim, a.alpha)
    print(f"c_{{N,alpha}} = {fmt(c)}")
    if a.sigma is not None:
        sv = symbol_constant(a.sigma, a.dim, a.alpha)
        print(f"c(sigma, alpha) = {fmt(sv.value)}  (est. error {sv.est_error:.3g})")
    return True


def cmd_kernel(a):
    x = _point(a.x)
    ball = unit_ball(len(x))
    if a.kind == "green":
        v = green_kernel(x, _point(a.y), ball, a.alpha)
    elif a.kind == "poisson":
        v = poisson_kernel(x, _point(a.y), ball, a.alpha)
    elif a.kind == "torsion":
        v = torsion_exact(x, ball, a.alpha)
    else:
        N = len(x)
        v = gamma_source(x, a.s, ProblemParams(N, a.alpha, 3.0), normalization_constant(N, a.alpha))
    print(fmt(float(np.asarray(v))))
    return True


def cmd_greenop(a):
    pr = _params(a)
    mesh = mesh_for(pr)
    K = cached_assemble(mesh, pr.alpha, path=a.matrix_cache)
    V = torsion(mesh, K).values
    ex = torsion_exact(mesh.nodes, mesh.domain, pr.alpha)
    err = float(np.max(np.abs(V - ex)) / np.max(ex))
    print(f"nodes = {mesh.n}\nmesh_hash = {mesh.mesh_hash}\ntorsion_sup_rel_error = {fmt(err)}")
    return True


def cmd_fracop(a):
    x = _point(a.x)
    N = len(x)
    cN = normalization_constant(N, a.alpha)
    v = frac_laplacian_point(power_function(a.sigma, N), x, a.alpha, cN)
    ref = symbol_constant(a.sigma, N, a.alpha).value * np.linalg.norm(x) ** (-a.sigma - 2 * a.alpha)
    print(f"operator = {fmt(v)}\nsymbol   = {fmt(ref)}")
    return True


def cmd_solve(a):
    pr = _params(a)
    cN = normalization_constant(pr.dim, pr.alpha)
    mesh = mesh_for(pr)
    K = cached_assemble(mesh, pr.alpha, path=a.matrix_cache)
    opts = SolveOptions(tol_residual=a.tol, tol_sandwich=a.tol)
    if pr.s > 0:
        u, rep = solve_exterior_dirac(mesh, K, pr, cN, opts)
    else:
        u, rep = limit_solution(mesh, K, pr, cN, opts)
    out = Path(a.out)
    write_csv(out / "solution.csv", [f"x{k + 1}" for k in range(pr.dim)] + ["u"],
              (list(x) + [v] for x, v in zip(mesh.nodes, u.values)))
    rows = [("iterations", rep.iterations), ("final_residual", rep.final_residual),
            ("sandwich_gap", rep.sandwich_gap), ("converged", rep.converged)]
    rows += [(k, v) for k, v in sorted(rep.extra.items()) if np.isscalar(v)]
    write_csv(out / "report.csv", ["key", "value"], rows)
    print(f"converged = {rep.converged}  residual = {rep.final_residual:.3e}  -> {out}")
    return rep.converged


def cmd_experiment(a):
    if a.config:
        cfg = load_config(a.config)
        if cfg.experiment_id != a.id:
            raise FracballError(f"config is for {cfg.experiment_id}, not {a.id}")
    else:
        cfg = default_config(a.id)
    if a.out:
        cfg = with_output(cfg, a.out)
    if a.emit_config:
        sys.stdout.write(emit_config(cfg))
        return True
    rep = run_experiment(cfg, matrix_cache=a.matrix_cache)
    for k in sorted(rep.checks):
        print(f"{'PASS' if rep.checks[k] else 'FAIL'}  {k}")
    print(f"{rep.experiment_id}: {'PASS' if rep.passed else 'FAIL'}  ({rep.elapsed:.1f} s) "
          f"-> {cfg.output_dir}")
    return rep.passed


def build_parser():
    ap = argparse.ArgumentParser(prog="fracball", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("constants", help="normalisation constant and symbol")
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--sigma", type=float)
    sp.set_defaults(fn=cmd_constants)

    sp = sub.add_parser("kernel", help="evaluate a kernel at a point")
    sp.add_argument("kind", choices=("green", "poisson", "torsion", "gamma"))
    sp.add_argument("--x", required=True, help="point, e.g. '0 0.5'")
    sp.add_argument("--y", default="0 1.5", help="second point (green, poisson)")
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--s", type=float, default=0.1)
    sp.set_defaults(fn=cmd_kernel)

    sp = sub.add_parser("greenop", help="assemble (or load) the Green matrix")
    _add_problem(sp)
    sp.add_argument("--matrix-cache")
    sp.set_defaults(fn=cmd_greenop)

    sp = sub.add_parser("fracop", help="(-Delta)^alpha |x|^-sigma at a point")
    sp.add_argument("--x", required=True)
    sp.add_argument("--sigma", type=float, required=True)
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.set_defaults(fn=cmd_fracop)

    sp = sub.add_parser("solve", help="solve for one Dirac offset s (s = 0: limit problem)")
    _add_problem(sp, s=0.1)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.add_argument("--out", default="out/solve")
    sp.add_argument("--matrix-cache")
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("experiment", help="run a named experiment")
    sp.add_argument("id", choices=EXPERIMENTS)
    sp.add_argument("--config")
    sp.add_argument("--out")
    sp.add_argument("--matrix-cache")
    sp.add_argument("--emit-config", action="store_true",
                    help="print the effective configuration and exit")
    sp.set_defaults(fn=cmd_experiment)
    return ap


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    try:
        ok = a.fn(a)
    except FracballError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
