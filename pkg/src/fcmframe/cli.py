"""Command-line interface.

Exit codes: 0 success, 1 validation or physics failure, 2 input error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

_THREAD_VARS = ("OMP_NUM_THREADS", "MKL_NUM_THREADS", "OPENBLAS_NUM_THREADS")


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--threads", type=int, default=None,
                        help="threads for BLAS and the sparse solver")
    common.add_argument("--cache", default=None,
                        help="directory of the content-addressed matrix cache")

    p = argparse.ArgumentParser(prog="fcmframe", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("condense", parents=[common], help="condense one node model")
    c.add_argument("--job", required=True)
    c.add_argument("--node", required=True, help="substructure name in the job file")

    g = sub.add_parser("solve-global", parents=[common], help="assemble and solve the frame")
    g.add_argument("--job", required=True)

    s = sub.add_parser("local-stress", parents=[common],
                       help="map a stored global solution onto a node model")
    s.add_argument("--job", required=True)
    s.add_argument("--node", required=True, help="substructure name in the job file")

    v = sub.add_parser("verify-cantilever", parents=[common],
                       help="two-scale cantilever against the all-beam reference")
    v.add_argument("--refined", action="store_true", help="finer grid and octree depth 4")
    v.add_argument("--threshold", type=float, default=None,
                   help="pass bound on the max pointwise error "
                        "(default 5e-3, or 1e-3 with --refined)")
    v.add_argument("--ab", type=float, default=None, help="length AB (mm)")
    v.add_argument("--bc", type=float, default=None, help="length BC (mm)")
    v.add_argument("--cd", type=float, default=None, help="length CD (mm)")
    return p


def _stl_inputs(doc):
    out = []

    def walk(shape):
        (kind, v), = shape.items()
        if kind == "stl":
            p = os.path.join(doc.base, v["path"]) if not os.path.isabs(v["path"]) else v["path"]
            out.append(p)
        elif kind in ("union", "intersection", "difference"):
            for s in v:
                walk(s)

    for s in doc.data.get("substructures", []):
        walk(s["geometry"])
    return out


def _finish(args, command, inputs, params, outputs, timings):
    from .io.manifest import build_manifest, write_json

    path = os.path.join(args.out, "manifest.json")
    write_json(build_manifest(command, inputs, params, outputs, timings), path)
    return path


def _cache(args):
    if not args.cache:
        return None
    from .io.cache import MatrixCache

    return MatrixCache(args.cache)


def _load(args):
    from .io.jobfile import build_job, echo, load_job

    doc = load_job(args.job)
    return doc, build_job(doc), echo(doc)


def _get_sub(job, name):
    for s in job.substructures:
        if s.name == name:
            return s
    from .io.jobfile import JobFileError

    raise JobFileError(f"no substructure named {name!r}", "substructures")


def cmd_condense(args):
    from .condense import compute_change_of_basis, condense, validate_condensed
    from .io.manifest import write_json
    from .io.matrix_text import write_condensed

    t0 = time.perf_counter()
    doc, job, params = _load(args)
    sub = _get_sub(job, args.node)
    cache = _cache(args)
    digest = sub.spec.digest()
    K = cache.load(digest) if cache is not None else None
    timings = {}
    if K is None:
        cob = compute_change_of_basis(sub.spec)
        K = condense(cob.system.K, cob.N, sub.spec.dof_order, digest, cob.centroids)
        timings.update(cob.timings)
        if cache is not None:
            cache.store(K)
    report = validate_condensed(K)
    mpath = write_condensed(K, os.path.join(args.out, f"{args.node}.ktxt"))
    rpath = write_json(report.to_dict(), os.path.join(args.out, f"{args.node}.validation.json"))
    timings["total_s"] = time.perf_counter() - t0
    _finish(args, "condense", [args.job, *_stl_inputs(doc)],
            {"job": params, "node": args.node}, [mpath, rpath], timings)
    if not report.passed:
        print(f"validation failed ({'; '.join(report.messages)}); report: {rpath}",
              file=sys.stderr)
        return EXIT_FAIL
    print(f"wrote {mpath} (k={K.k})")
    return EXIT_OK


def _write_csv(path, header, rows):
    import csv
    import io

    from .io.vtk import write_text

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if not isinstance(v, str) else v for v in r])
    return write_text(buf.getvalue(), path)


def _global_outputs(args, report):
    import numpy as np

    from .beam import internal_actions
    from .io.manifest import write_json
    from .io.vtk import frame_vtk, write_text

    sol = report.solution
    out = []
    dof = ["ux_mm", "uy_mm", "uz_mm", "rx_rad", "ry_rad", "rz_rad"]
    out.append(_write_csv(os.path.join(args.out, "displacements.csv"), ["node", *dof],
                          [[n, *sol.displacements[i]] for i, n in enumerate(sol.node_ids)]))
    rdof = ["Fx_N", "Fy_N", "Fz_N", "Mx_Nmm", "My_Nmm", "Mz_Nmm"]
    out.append(_write_csv(os.path.join(args.out, "reactions.csv"), ["node", *rdof],
                          [[n, *sol.reactions[i]] for i, n in enumerate(sol.node_ids)
                           if sol.fixed[i].any()]))
    ia = []
    for el in report.model.elements:
        f = internal_actions(el, sol)
        ia.append([el.id, *f])
    ends = [f"{e}_{k}" for k in ("a", "b") for e in
            ("N_N", "Vy_N", "Vz_N", "T_Nmm", "My_Nmm", "Mz_Nmm")]
    out.append(_write_csv(os.path.join(args.out, "internal_actions.csv"),
                          ["element", *ends], ia))
    out.append(write_text(frame_vtk(sol), os.path.join(args.out, "frame.vtk")))
    state = {"node_ids": list(sol.node_ids),
             "displacements": np.asarray(sol.displacements).tolist(),
             "units": {"u": "mm", "theta": "rad"}}
    out.append(write_json(state, os.path.join(args.out, "global_solution.json")))
    summary = report.summary()
    summary["units"] = {"displacement": "mm", "stress": "MPa"}
    out.append(write_json(summary, os.path.join(args.out, "summary.json")))
    return out


def cmd_solve_global(args):
    from .twoscale import run_job

    t0 = time.perf_counter()
    doc, job, params = _load(args)
    job.local_stress = []
    report = run_job(job, cache=_cache(args), keep_systems=False)
    outputs = _global_outputs(args, report)
    timings = dict(report.timings, total_s=time.perf_counter() - t0)
    _finish(args, "solve-global", [args.job, *_stl_inputs(doc)], {"job": params}, outputs,
            timings)
    bad = [n for n, r in report.validation.items() if not r.passed]
    if bad:
        print(f"condensed matrices failed validation: {', '.join(bad)}", file=sys.stderr)
        return EXIT_FAIL
    s = report.summary()
    print(f"max displacement {s['max_displacement_mm']:.6g} mm at node "
          f"{s['max_displacement_node']}")
    return EXIT_OK


def cmd_local_stress(args):
    import json

    import numpy as np

    from .io.manifest import write_json
    from .io.vtk import field_vtk, write_text
    from .twoscale import LocalBoundaryData, local_stress_analysis

    t0 = time.perf_counter()
    doc, job, params = _load(args)
    sub = _get_sub(job, args.node)
    gpath = os.path.join(args.out, "global_solution.json")
    if not os.path.exists(gpath):
        print(f"missing global solution {gpath}; run solve-global first", file=sys.stderr)
        return EXIT_INPUT
    with open(gpath, encoding="utf-8") as fh:
        state = json.load(fh)
    index = {n: i for i, n in enumerate(state["node_ids"])}
    disp = np.asarray(state["displacements"], dtype=float)
    try:
        values = np.array([disp[index[n]] for n in sub.nodes])
    except KeyError as exc:
        print(f"global solution has no node {exc}", file=sys.stderr)
        return EXIT_INPUT
    data = LocalBoundaryData(list(sub.nodes), values)
    res = local_stress_analysis(sub.spec, data)
    subdiv = doc.data.get("outputs", {}).get("vtk_subdivisions", 1)
    vpath = write_text(field_vtk(res.field, subdiv, sub.spec.domain),
                       os.path.join(args.out, f"{args.node}.local.vtk"))
    summary = dict(res.summary(), node=args.node, units={"stress": "MPa", "length": "mm"},
                   boundary_data=values.tolist())
    spath = write_json(summary, os.path.join(args.out, f"{args.node}.local_summary.json"))
    _finish(args, "local-stress", [args.job, gpath, *_stl_inputs(doc)],
            {"job": params, "node": args.node}, [vpath, spath],
            {"total_s": time.perf_counter() - t0})
    print(f"max von Mises {res.max_von_mises:.6g} MPa at {np.round(res.location, 3).tolist()}")
    return EXIT_OK


def cmd_verify_cantilever(args):
    from dataclasses import replace

    from .io.manifest import write_json
    from .scenarios import CantileverOptions, verify_cantilever

    t0 = time.perf_counter()
    opts = CantileverOptions(refined=args.refined)
    for key in ("ab", "bc", "cd"):
        if getattr(args, key) is not None:
            opts = replace(opts, **{key: getattr(args, key)})
    if args.threshold is not None and args.threshold < 0:
        print("threshold must be non-negative", file=sys.stderr)
        return EXIT_INPUT
    res = verify_cantilever(opts, args.threshold, cache=_cache(args))
    ppath = _write_csv(os.path.join(args.out, "cantilever_error.csv"),
                       ["scale", "x_mm", "error"],
                       [[r["scale"], r["x_mm"], "undefined" if r["error"] is None
                         else repr(r["error"])] for r in res.table()])
    x, e = res.worst
    summary = {"passed": bool(res.passed), "threshold": res.threshold,
               "max_error": res.max_error, "worst_x_mm": x, "refined": bool(args.refined),
               "options": {k: (list(v) if isinstance(v, tuple) else v)
                           for k, v in opts.__dict__.items()},
               "profile": res.table()}
    spath = write_json(summary, os.path.join(args.out, "cantilever_summary.json"))
    _finish(args, "verify-cantilever", [], summary["options"], [ppath, spath],
            dict(res.timings, total_s=time.perf_counter() - t0))
    status = "PASS" if res.passed else "FAIL"
    print(f"{status}: max pointwise error {res.max_error:.3e} at x = {x:g} mm "
          f"(threshold {res.threshold:.1e})")
    return EXIT_OK if res.passed else EXIT_FAIL


_COMMANDS = {
    "condense": cmd_condense,
    "solve-global": cmd_solve_global,
    "local-stress": cmd_local_stress,
    "verify-cantilever": cmd_verify_cantilever,
}


def main(argv=None):
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if args.threads:
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
    os.makedirs(args.out, exist_ok=True)

    from .beam import AssemblyError, SingularSystemError
    from .fcm.solver import FactorizationError
    from .geometry.stl import GeometryError
    from .io.jobfile import JobFileError
    from .io.matrix_text import MatrixFormatError
    from .twoscale import StageError

    input_errors = (JobFileError, MatrixFormatError, GeometryError, FileNotFoundError,
                    AssemblyError)
    try:
        return _COMMANDS[args.command](args)
    except input_errors as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except StageError as exc:
        if isinstance(exc.cause, input_errors):
            print(f"input error: {exc}", file=sys.stderr)
            return EXIT_INPUT
        if isinstance(exc.cause, SingularSystemError):
            print(f"singular system: {exc.cause.n_modes} zero-energy mode(s) ({exc})",
                  file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (SingularSystemError, FactorizationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
