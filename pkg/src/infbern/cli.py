"""Command-line front end: solves, verification batteries, scenario runs,
and FIELD/CSV/JSON emission.

Exit codes: 0 when every verification in the run passes, 2 when a
verification fails (a scientific outcome), 1 on usage or input errors (an
engineering outcome).  All tolerances appear inside the emitted reports.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bernoulli as bn
from . import fieldio, radial
from . import solver as sv
from .geometry import (CompactMask, GeometryError, Grid, build_domain,
                       check_connected, connected_components, distance_field,
                       inradius, parallel_mask)
from .reports import VerificationReport, all_pass, report_json


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_domain(path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read domain spec: {e}") from e
    from .geometry import parse_domain_spec
    dom, gridp = parse_domain_spec(text)
    return dom, gridp


def _grid_for(dom, gridp, args):
    h = args.h if args.h is not None else gridp.get("h")
    if h is None:
        raise UsageError("grid spacing missing: pass --h or put grid.h in the spec")
    margin = getattr(args, "margin", None) or gridp.get("margin") or 4
    return dom.grid_for(float(h), margin=int(margin))


def _outdir(args):
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UsageError(f"cannot create output directory: {e}") from e
    return out


def _write_json(path, payload):
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _report_payloads(reports):
    return [r.to_dict() for r in reports]


def cmd_distance(args):
    dom, gridp = _load_domain(args.spec)
    grid = _grid_for(dom, gridp, args)
    d = distance_field(dom, grid)
    out = _outdir(args)
    fieldio.emit_field(out / "distance.field", d)
    fieldio.emit_field(out / "inside.field", CompactMask(grid, d.inside))
    ok, count = check_connected(dom, grid)
    payload = {"inradius": inradius(d), "h_uncertainty": grid.h,
               "connected": ok, "components": count}
    _write_json(out / "distance.json", payload)
    print(f"inradius = {inradius(d):.9g} +- {grid.h:.3g}  "
          f"(components: {count})")
    return 0


def cmd_potential(args):
    dom, gridp = _load_domain(args.spec)
    grid = _grid_for(dom, gridp, args)
    d = distance_field(dom, grid)
    if args.level is not None:
        from .geometry import closed_parallel_component_union
        K = closed_parallel_component_union(d, float(args.level))
    elif args.k_mask:
        K = fieldio.read_mask(args.k_mask, grid=grid)
    else:
        raise UsageError("potential needs --level or --k-mask")
    opts = sv.SolveOptions(mode=args.mode)
    pot = sv.solve_potential(dom, K, grid, opts=opts, d=d)
    out = _outdir(args)
    fieldio.emit_field(out / "potential.field", pot.field)
    fieldio.emit_field(out / "zero_set.field", K)
    payload = {"residual": pot.residual, "sweeps": pot.sweeps_used,
               "tol_residual": opts.tol_residual}
    _write_json(out / "potential.json", payload)
    print(f"solved in {pot.sweeps_used} sweeps, residual {pot.residual:.3e}")
    return 0


def cmd_bernoulli_solve(args):
    dom, gridp = _load_domain(args.spec)
    grid = _grid_for(dom, gridp, args)
    d = distance_field(dom, grid)
    opts = sv.SolveOptions(mode=args.mode)
    out = _outdir(args)
    try:
        sol = bn.solve_interior_bernoulli(dom, args.lam, grid, opts=opts, d=d)
    except bn.NonexistenceError as e:
        _write_json(out / "nonexistence.json", e.certificate)
        print(f"refused: {e}")
        print(json.dumps(e.certificate, sort_keys=True))
        return 1
    from .geometry import minimal_ray_mask, parallel_distance_field
    dpar = parallel_distance_field(d, 1.0 / args.lam)
    rays = minimal_ray_mask(d, dpar, 1.0 / args.lam)
    reports = [bn.verify_gradient_bound(sol), bn.verify_fb_location(sol),
               bn.verify_sandwich(sol, dpar=dpar, ray_mask=rays)]
    fieldio.emit_field(out / "solution.field", sol.u)
    fieldio.emit_field(out / "zero_set.field", sol.zero_set)
    (out / "report.json").write_text(report_json(
        reports, extra={"lambda": args.lam, "kind": sol.kind,
                        "residual": sol.potential.residual,
                        "sweeps": sol.potential.sweeps_used}) + "\n")
    for r in reports:
        print(r)
    return 0 if all_pass(reports) else 2


def cmd_bernoulli_verify(args):
    dom, gridp = _load_domain(args.spec)
    fld = fieldio.read_field(args.field, quantity="loaded solution")
    grid = fld.grid
    d = distance_field(dom, grid)
    K = fieldio.read_mask(args.k_mask, grid=grid) if args.k_mask else None
    if K is None:
        tau = 10.0 * sv.SolveOptions().tol_residual
        K = CompactMask(grid, d.inside & (fld.values <= tau))
    pot = sv.wrap_field(dom, K, grid, fld.values, d=d)
    opts = sv.SolveOptions()
    sol = bn._classify(pot, d, args.lam, opts)
    reports = [bn.verify_gradient_bound(sol), bn.verify_fb_location(sol)]
    if sol.kind == "nontrivial":
        reports.append(bn.verify_sandwich(sol))
    out = _outdir(args)
    (out / "verify.json").write_text(report_json(
        reports, extra={"lambda": args.lam, "kind": sol.kind,
                        "residual": pot.residual}) + "\n")
    for r in reports:
        print(r)
    return 0 if all_pass(reports) else 2


def cmd_characterize(args):
    dom, gridp = _load_domain(args.spec)
    grid = _grid_for(dom, gridp, args)
    d = distance_field(dom, grid)
    K = fieldio.read_mask(args.k_mask, grid=grid, level=args.level)
    out = _outdir(args)
    conds = bn.admissible_family_check(dom, args.lam, K, d=d)
    membership = {k: bool(conds[k]) for k in ("cond_i", "cond_ii", "cond_iii")}
    if not all(membership.values()):
        _write_json(out / "characterize.json",
                    {"membership": membership, "solved": False})
        print(f"membership failed: {membership}")
        return 2
    sol, reports = bn.characterize(dom, args.lam, K, grid, d=d)
    fieldio.emit_field(out / "solution.field", sol.u)
    reps = list(reports.values())
    (out / "characterize.json").write_text(report_json(
        reps, extra={"membership": membership, "kind": sol.kind}) + "\n")
    for r in reps:
        print(r)
    return 0 if all_pass(reps) else 2


def cmd_trivial(args):
    dom, gridp = _load_domain(args.spec)
    grid = _grid_for(dom, gridp, args)
    d = distance_field(dom, grid)
    K = fieldio.read_mask(args.k_mask, grid=grid)
    out = _outdir(args)
    try:
        sol = bn.make_trivial_solution(dom, args.lam, K, grid, d=d)
    except bn.MembershipError as e:
        print(f"rejected: {e}")
        return 2
    reports = [bn.verify_gradient_bound(sol), bn.verify_fb_location(sol)]
    fieldio.emit_field(out / "solution.field", sol.u)
    (out / "trivial.json").write_text(report_json(
        reports, extra={"lambda": args.lam, "kind": sol.kind}) + "\n")
    for r in reports:
        print(r)
    return 0 if all_pass(reports) else 2


def cmd_radial(args):
    rb = radial.radial_solve(args.n, args.p, args.R, args.lam)
    payload = {"n": rb.n, "p": rb.p, "R": rb.R, "lambda": rb.lam,
               "alpha": rb.alpha, "lambda_p": rb.lambda_p,
               "m_alpha": rb.m_alpha, "rho_hyper": rb.rho_hyper,
               "rho_ell": rb.rho_ell}
    if rb.rho_hyper is not None and rb.rho_hyper > 0:
        payload["gradient_check_hyper"] = radial.gradient_check(rb, "hyper")
    if rb.rho_ell is not None:
        payload["gradient_check_ell"] = radial.gradient_check(rb, "ell")
    out = _outdir(args)
    _write_json(out / "radial.json", payload)
    print(f"alpha = {rb.alpha:.9g}")
    print(f"lambda_p = {rb.lambda_p:.9g}")
    print(f"m_alpha = {rb.m_alpha:.9g}")
    if rb.rho_hyper is None:
        print("no free-boundary radii (lambda below the critical constant)")
    else:
        print(f"rho_hyper = {rb.rho_hyper:.9g}")
        print(f"rho_ell = {rb.rho_ell:.9g}")
    return 0


def _parse_plist(text):
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError as e:
        raise UsageError(f"bad p list: {e}") from e


def cmd_sweep_p(args):
    p_list = _parse_plist(args.p_list)
    rows = radial.sweep_p(args.n, args.R, args.lam, p_list)
    out = _outdir(args)
    fieldio.emit_csv(out / "sweep_p.csv",
                     ["p", "rho_hyper", "rho_ell", "sup_diff"], rows)
    last = rows[-1]
    checks = {
        "rho_hyper_final": last[1],
        "rho_ell_final": last[2],
        "rho_ell_target": args.R - 1.0 / args.lam,
        "sup_diff_final": last[3],
    }
    _write_json(out / "sweep_p.json", checks)
    for row in rows:
        print("p=%-8g rho'=%-12.6g rho''=%-12.6g sup|u_p-limit|=%.6g" % row)
    return 0


def cmd_constants(args):
    p_list = _parse_plist(args.p_list)
    rows = radial.bernoulli_constant_limit(args.n, args.R, p_list)
    out = _outdir(args)
    fieldio.emit_csv(out / "constants.csv", ["p", "lambda_p"], rows)
    vals = [v for _, v in rows]
    checks = {"decreasing": all(a > b for a, b in zip(vals, vals[1:])),
              "limit": 1.0 / args.R, "final_gap": vals[-1] - 1.0 / args.R}
    _write_json(out / "constants.json", checks)
    for p, v in rows:
        print(f"p={p:<8g} lambda_p={v:.9g}")
    return 0 if checks["decreasing"] else 2


def cmd_scenario(args):
    try:
        bundle = bn.scenario(args.name, lam=args.lam, h=args.h)
    except ValueError as e:
        raise UsageError(str(e)) from e
    out = _outdir(args)
    reports = []
    for tag, sol in bundle["solutions"].items():
        fieldio.emit_field(out / f"{args.name}_{tag}.field", sol.u)
        reports.extend(bundle["reports"][tag].values())
    extras = {}
    for key, val in bundle["extras"].items():
        if isinstance(val, (int, float, bool, str, dict)):
            extras[key] = val
    (out / f"{args.name}.json").write_text(report_json(
        reports, extra={"scenario": args.name, "lambda": bundle["lambda"],
                        "h": bundle["h"], "extras": extras}) + "\n")
    for r in reports:
        print(r)
    return 0 if all_pass(reports) else 2


def cmd_jfunc(args):
    fld = fieldio.read_field(args.field, quantity="energy input")
    if args.spec:
        dom, _ = _load_domain(args.spec)
        d = distance_field(dom, fld.grid)
        fld.inside = d.inside
    jp = radial.j_p(fld, args.lam, args.p)
    ji = radial.j_inf(fld, args.lam)
    payload = {"J_p": jp, "J_inf": (None if math.isinf(ji) else ji),
               "p": args.p, "lambda": args.lam}
    out = _outdir(args)
    _write_json(out / "jfunc.json", payload)
    print(f"J_p = {jp:.9g}")
    print("J_inf = " + ("inf (gradient exceeds lambda)" if math.isinf(ji)
                        else f"{ji:.9g}"))
    return 0


def build_parser():
    ap = _Parser(prog="infbern",
                 description="interior Bernoulli laboratory for the "
                             "infinity Laplacian")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, spec=True, needs_lambda=False, grid=True):
        if spec:
            p.add_argument("spec", help="domain spec JSON file")
        if needs_lambda:
            p.add_argument("--lambda", dest="lam", type=float, required=True)
        if grid:
            p.add_argument("--h", type=float, default=None)
            p.add_argument("--margin", type=int, default=None)
        p.add_argument("-o", "--out", default=".")

    p = sub.add_parser("distance", help="distance field and inradius")
    common(p)
    p.set_defaults(fn=cmd_distance)

    p = sub.add_parser("potential", help="potential of a zero set")
    common(p)
    p.add_argument("--level", type=float, default=None,
                   help="use the closed parallel set at this distance")
    p.add_argument("--k-mask", default=None, help="FIELD mask file for K")
    p.add_argument("--mode", default="deterministic-serial",
                   choices=["deterministic-serial", "parallel-jacobi"])
    p.set_defaults(fn=cmd_potential)

    p = sub.add_parser("bernoulli-solve", help="canonical non-trivial solution")
    common(p, needs_lambda=True)
    p.add_argument("--mode", default="deterministic-serial",
                   choices=["deterministic-serial", "parallel-jacobi"])
    p.set_defaults(fn=cmd_bernoulli_solve)

    p = sub.add_parser("bernoulli-verify", help="verify a solved field")
    common(p, grid=False, needs_lambda=True)
    p.add_argument("--field", required=True)
    p.add_argument("--k-mask", default=None)
    p.set_defaults(fn=cmd_bernoulli_verify)

    p = sub.add_parser("characterize", help="membership check + full battery")
    common(p, needs_lambda=True)
    p.add_argument("--k-mask", required=True)
    p.add_argument("--level", type=float, default=None,
                   help="parallel level carried by the mask, if any")
    p.set_defaults(fn=cmd_characterize)

    p = sub.add_parser("trivial", help="trivial solution from a thin K")
    common(p, needs_lambda=True)
    p.add_argument("--k-mask", required=True)
    p.set_defaults(fn=cmd_trivial)

    p = sub.add_parser("radial", help="radial free-boundary radii")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--R", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("-o", "--out", default=".")
    p.set_defaults(fn=cmd_radial)

    p = sub.add_parser("sweep-p", help="large-p sweep of the radial radii")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--R", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--p-list", required=True, help="comma-separated p values")
    p.add_argument("-o", "--out", default=".")
    p.set_defaults(fn=cmd_sweep_p)

    p = sub.add_parser("constants", help="critical constants along p")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--R", type=float, required=True)
    p.add_argument("--p-list", required=True)
    p.add_argument("-o", "--out", default=".")
    p.set_defaults(fn=cmd_constants)

    p = sub.add_parser("scenario", help="named example domain with its "
                                        "solution family")
    p.add_argument("name", choices=["ball", "square", "nonconn", "nonreg"])
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--h", type=float, default=None)
    p.add_argument("-o", "--out", default=".")
    p.set_defaults(fn=cmd_scenario)

    p = sub.add_parser("jfunc", help="energy functionals of a field")
    p.add_argument("--field", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--spec", default=None)
    p.add_argument("-o", "--out", default=".")
    p.set_defaults(fn=cmd_jfunc)

    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        return args.fn(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (GeometryError, fieldio.FieldFormatError, OSError, ValueError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
