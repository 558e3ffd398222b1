"""Command-line interface.

Commands
  eigs    eigenvalue table (E_n, multiplicity, residual)
  count   counting-function sweep (secular values plus N columns)
  trace   counting sweep with the full term breakdown
  verify  symmetry / identity residual report over a sweep
  orbits  primitive-orbit dump plus per-n trace residuals

Output is CSV (default) or JSON with a metadata header.  Floats are
printed with 17 significant digits so identical configs give
byte-identical files.  Warnings go to stderr only.

Exit codes: 0 ok, 1 validation/IO error, 2 flagged results (trapped-state
intervals, residuals over threshold), 3 orbit budget exceeded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import OrbitBudgetExceeded, QGraphError
from .graph_model import build_graph, load_graph
from .quantum_map import (
    assemble,
    det_identities_residuals,
    quantum_map_symmetry_residuals,
    reduce,
    trapped_state_check,
    unitarity_residual,
)
from .scattering import vertex_symmetry_residuals
from .spectra import find_eigenvalues, nudge_off_thresholds, secular_sweep
from .trace_formula import orbit_sum, trace_sweep

VERIFY_TOL = 1e-8


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.17g}"
    if isinstance(x, complex):
        return f"{x.real:.17g}{x.imag:+.17g}j"
    return str(x)


def _graph_hash(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()[:16]


def _emit(columns, rows, args, metadata):
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        if args.format == "json":
            payload = {
                "metadata": metadata,
                "columns": columns,
                "rows": [[_fmt(x) for x in row] for row in rows],
            }
            json.dump(payload, out, indent=1)
            out.write("\n")
        else:
            out.write(",".join(columns) + "\n")
            for row in rows:
                out.write(",".join(_fmt(x) for x in row) + "\n")
    finally:
        if args.out:
            out.close()


def _metadata(args, eps, mode):
    return {
        "version": __version__,
        "graph": os.path.basename(args.graph) if args.graph else None,
        "graph_hash": _graph_hash(args.graph) if args.graph else None,
        "epsilon": eps if eps is not None else "default",
        "mode": mode,
        "command": args.command,
    }


def _grid(args):
    return np.linspace(args.emin, args.emax, args.grid)


def _mode_args(args):
    if args.mode == "fixed_partition":
        if args.fixed_partition_below is None:
            raise QGraphError("--mode fixed_partition needs --fixed-partition-below")
        return args.mode, args.fixed_partition_below
    return args.mode, None


def cmd_eigs(args, graph):
    result = find_eigenvalues(graph, args.emin, args.emax, grid_n=args.grid,
                              eps=args.epsilon)
    rows = [(E, m, r) for E, m, r in result.eigenvalues]
    _emit(["E", "multiplicity", "residual"], rows, args,
          _metadata(args, args.epsilon, "reduced"))
    if result.flags.get("trapped"):
        print(f"warning: trapped-state intervals near "
              f"{result.flags['trapped']}", file=sys.stderr)
        return 2
    return 0


def _count_rows(args, graph, with_terms):
    mode, fpb = _mode_args(args)
    energies = _grid(args)
    reports = trace_sweep(graph, energies, mode=mode, eps=args.epsilon,
                          fixed_partition_below=fpb,
                          floor_count=args.floor_count)
    columns = ["E", "N_mean", "N_osc", "N_total", "N_exact", "mode", "flags"]
    if with_terms:
        columns += ["weyl", "det_s_phase", "ev_term_inverse", "ev_term_direct",
                    "c", "re_xi", "im_xi", "abs_xi",
                    "re_xi_red", "im_xi_red", "abs_xi_red"]
        xi_rows = secular_sweep(graph, energies, eps=args.epsilon or 0.0)
    rows = []
    flagged_any = False
    for i, rep in enumerate(reports):
        row = [rep.E, rep.N_mean, rep.N_osc, rep.N_total, rep.N_exact,
               rep.mode, int(rep.flagged)]
        if with_terms:
            _, xi, xi_red = xi_rows[i]
            row += [rep.weyl, rep.det_s_phase, rep.ev_term_inverse,
                    rep.ev_term_direct, rep.c, xi.real, xi.imag, abs(xi),
                    xi_red.real, xi_red.imag, abs(xi_red)]
        rows.append(row)
        flagged_any = flagged_any or rep.flagged
    _emit(columns, rows, args, _metadata(args, args.epsilon, mode))
    if flagged_any:
        print("warning: trapped-state flags on some grid points", file=sys.stderr)
        return 2
    return 0


def cmd_count(args, graph):
    return _count_rows(args, graph, with_terms=False)


def cmd_trace(args, graph):
    return _count_rows(args, graph, with_terms=True)


def _fuzz_graph(rng, degree):
    """Random self-adjoint vertex pair from a Haar-ish unitary:
    A = i(I - S), B = I + S gives sigma(I) = S exactly."""
    X = rng.standard_normal((degree, degree)) + 1j * rng.standard_normal((degree, degree))
    Q, R = np.linalg.qr(X)
    S = Q * (np.diag(R) / np.abs(np.diag(R)))
    A = 1j * (np.eye(degree) - S)
    B = np.eye(degree) + S
    return A, B


def _random_star_spec(rng):
    n_e = int(rng.integers(2, 5))
    d = n_e
    A, B = _fuzz_graph(rng, d)
    vertices = [{"id": "c", "matching": {
        "A": [[[z.real, z.imag] for z in row] for row in A],
        "B": [[[z.real, z.imag] for z in row] for row in B],
    }}]
    edges = []
    for i in range(n_e):
        vertices.append({"id": f"l{i}", "matching": {"kind": "dirichlet"}})
        edges.append({"id": f"e{i}", "from": "c", "to": f"l{i}",
                      "length": float(rng.uniform(0.4, 2.0)),
                      "potential": float(rng.uniform(0.0, 50.0))})
    return {"vertices": vertices, "edges": edges}


def _verify_one(graph, E, eps):
    E = nudge_off_thresholds(E, graph)
    bundle = assemble(graph, E, eps=eps)
    worst = 0.0
    for v, vs in enumerate(bundle.vertex_scatterings):
        star = graph.vertices[v].matching.ordering
        osc_mask = np.array([j in set(bundle.osc) for j in star])
        res = vertex_symmetry_residuals(vs, osc_mask)
        worst = max(worst, *res.values())
    worst = max(worst, *quantum_map_symmetry_residuals(bundle).values())
    if bundle.ev.size and not trapped_state_check(bundle)["flag"]:
        worst = max(worst, *det_identities_residuals(bundle).values())
        worst = max(worst, unitarity_residual(reduce(bundle)))
    elif bundle.ev.size == 0:
        worst = max(worst, unitarity_residual(bundle.U))
    return worst


def cmd_verify(args, graph):
    rows = []
    worst = 0.0
    if graph is not None:
        for E in _grid(args):
            r = _verify_one(graph, E, eps=0.0)
            rows.append([E, r])
            worst = max(worst, r)
    if args.fuzz:
        rng = np.random.default_rng(20260823)
        for trial in range(args.fuzz):
            g = build_graph(_random_star_spec(rng))
            V = g.potentials()
            E = float(rng.uniform(min(V) + 1.0, max(V) + 60.0))
            r = _verify_one(g, E, eps=0.0)
            rows.append([float(-1 - trial), r])
            worst = max(worst, r)
    _emit(["E", "max_residual"], rows, args,
          _metadata(args, 0.0, "reduced"))
    print(f"max residual over sweep: {worst:.3e}", file=sys.stderr)
    return 0 if worst < VERIFY_TOL else 2


def cmd_orbits(args, graph):
    E = 0.5 * (args.emin + args.emax) if args.emax > args.emin else args.emin
    E = nudge_off_thresholds(E, graph)
    res = orbit_sum(graph, E, args.nmax, r_max=args.rmax,
                    eps=args.epsilon or 0.0)
    rows = []
    for oc in res["orbits"]:
        rows.append(["orbit", "-".join(str(j) for j in oc.orbit.sequence),
                     oc.orbit.n_p, oc.classification,
                     abs(oc.A_p), oc.W_p.real, oc.W_p.imag])
    for r in res["residuals"]:
        rows.append(["trace_residual", str(r["n"]), r["n"], "",
                     r["full_residual"], r["ev_residual"],
                     r["primed_residual"]])
    _emit(["kind", "sequence_or_n", "n_p", "classification",
           "abs_A_or_res_full", "re_W_or_res_ev", "im_W_or_res_primed"],
          rows, args, _metadata(args, args.epsilon, "reduced"))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="qgs", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=["eigs", "count", "trace", "verify", "orbits"])
    p.add_argument("--graph", help="graph description file (JSON)")
    p.add_argument("--emin", type=float, default=1.0)
    p.add_argument("--emax", type=float, default=100.0)
    p.add_argument("--grid", type=int, default=1000)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--mode", default="reduced",
                   choices=["reduced", "above_threshold", "fixed_partition"])
    p.add_argument("--fixed-partition-below", type=float, default=None)
    p.add_argument("--nmax", type=int, default=6)
    p.add_argument("--rmax", type=int, default=50)
    p.add_argument("--out", default=None)
    p.add_argument("--format", default="csv", choices=["csv", "json"])
    p.add_argument("--floor-count", type=int, default=0)
    p.add_argument("--fuzz", type=int, default=0)
    return p


def main(argv=None):
    # cap BLAS parallelism before heavy linear algebra
    threads = os.environ.get("QGS_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)
    args = build_parser().parse_args(argv)
    if args.emin >= args.emax and args.command != "orbits":
        print("error: --emin must be below --emax", file=sys.stderr)
        return 1
    if args.grid < 2:
        print("error: --grid must be at least 2", file=sys.stderr)
        return 1
    try:
        graph = load_graph(args.graph) if args.graph else None
        if graph is None and args.command != "verify":
            raise QGraphError("--graph is required")
        handler = {
            "eigs": cmd_eigs,
            "count": cmd_count,
            "trace": cmd_trace,
            "verify": cmd_verify,
            "orbits": cmd_orbits,
        }[args.command]
        return handler(args, graph)
    except OrbitBudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (QGraphError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
