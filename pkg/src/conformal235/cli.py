from __future__ import annotations
import argparse
import sys
from pathlib import Path

import numpy as np
from rich.console import Console

from .cone import conformal_residual, signature, xi_closed_form, xi_geometric
from .errors import Conformal235Error, ExpressionSyntaxError, GrowthVectorError, ModelFileError
from .frame import build_adapted_frame, frame_matrix, growth_vector, reconstruction_residual
from .models import Model, load_corpus, load_model
from .quartic import cartan_quartic_at, cartan_quartic_via_w2, quartic_polynomial
from .report import save_csv, summary_frame, summary_table, write_report
from .utils import (CONE_TOL, CORPUS_DIR, DEFAULT_SEED, HELDOUT_TOL, MIN_N_CONE, MIN_N_FIBER,
                    N_CONE, N_FIBER, QUARTIC_ROUTE_TOL, QUARTIC_ZERO_TOL, RECONSTRUCTION_TOL,
                    configure_logging, get_logger, parse_floats, scaled)

console = Console(stderr=True)
log = get_logger(__name__)

QUARTIC_NORMALIZATION = "-1/5 x derivative of the first invariant of the reduced fiber curve"
RANDOM_SAMPLES = 5          # seeded perturbations per point for the reconstruction check
SAMPLE_RADIUS = 0.1


def _tolerances(args) -> dict:
    return {"cone": args.tol, "quartic_route": QUARTIC_ROUTE_TOL, "quartic_zero": QUARTIC_ZERO_TOL,
            "heldout": HELDOUT_TOL, "reconstruction": RECONSTRUCTION_TOL}


def _points(model: Model, args) -> list[tuple[float, ...]]:
    if getattr(args, "point", None):
        return [parse_floats(args.point, 5)]
    return list(model.points)


# ---------------------------
# Commands
# ---------------------------

def cmd_check(model: Model, points, seed: int = DEFAULT_SEED) -> tuple[dict, bool]:
    """Growth vectors and frame-reconstruction residuals per point."""
    F = build_adapted_frame(model.distribution)
    rng = np.random.default_rng(seed)
    rows, ok = [], True
    for q in points:
        gv = growth_vector(F, q)
        entry = {"point": list(q), "growth": list(gv), "generic": gv == (2, 3, 5)}
        if gv == (2, 3, 5):
            nearby = [np.asarray(q) + SAMPLE_RADIUS * rng.uniform(-1, 1, 5) for _ in range(RANDOM_SAMPLES)]
            residuals = [reconstruction_residual(F, q)]
            residuals += [reconstruction_residual(F, p) for p in nearby
                          if growth_vector(F, p) == (2, 3, 5)]
            entry["reconstruction"] = max(residuals)
            entry["frame"] = frame_matrix(F, q)
            good = entry["reconstruction"] <= RECONSTRUCTION_TOL
        else:
            good = False
        entry["pass"] = good
        ok = ok and good
        rows.append(entry)
    return {"command": "check", "model": model.name, "seed": seed, "points": rows, "pass": ok}, ok


def cmd_cone(model: Model, points, route: str = "closed", n_fiber: int = N_FIBER,
             n_cone: int = N_CONE, tol: float = CONE_TOL) -> tuple[dict, bool]:
    F = build_adapted_frame(model.distribution)
    rows, ok = [], True
    for q in points:
        entry = {"point": list(q), "frame": frame_matrix(F, q)}
        closed = geometric = None
        if route in ("closed", "both"):
            closed = xi_closed_form(F, q)
            entry["closed"] = closed
            entry["signature"] = list(signature(closed))
        if route in ("geometric", "both"):
            geometric, fit = xi_geometric(F, q, n_fiber, n_cone)
            entry["geometric"] = geometric
            entry["fit"] = {"gap": fit.gap, "null_dim": fit.null_dim,
                            "singular_values": fit.singular_values, "n_points": fit.n_points}
            entry.setdefault("signature", list(signature(geometric)))
        good = tuple(entry["signature"]) == (3, 2, 0)
        if closed is not None and geometric is not None:
            entry["residual"] = conformal_residual(closed, geometric)
            good = good and entry["residual"] <= tol
        entry["pass"] = good
        ok = ok and good
        rows.append(entry)
    report = {"command": "cone", "model": model.name, "route": route, "n_fiber": n_fiber,
              "n_cone": n_cone, "tolerance": tol, "basis": "adapted frame X1..X5",
              "points": rows, "pass": ok}
    return report, ok


def cmd_quartic(model: Model, points, direction=None) -> tuple[dict, bool]:
    F = build_adapted_frame(model.distribution)
    rows, ok = [], True
    for q in points:
        entry = {"point": list(q)}
        if direction is not None:
            a = cartan_quartic_at(F, q, direction)
            b = cartan_quartic_via_w2(F, q, direction)
            gap = scaled(a - b, max(abs(a), abs(b)))
            entry.update(direction=list(direction), value=a, value_w2=b, route_gap=gap)
        else:
            qa = quartic_polynomial(F, q, "w1")
            qb = quartic_polynomial(F, q, "w2")
            gap = max(scaled(x - y, max(abs(x), abs(y))) for x, y in zip(qa.coeffs, qb.coeffs))
            entry.update(coefficients=list(qa.coeffs), coefficients_w2=list(qb.coeffs),
                         route_gap=gap, heldout=qa.heldout_residual, zero=qa.is_zero())
        good = gap <= QUARTIC_ROUTE_TOL and entry.get("heldout", 0.0) <= HELDOUT_TOL
        entry["pass"] = good
        ok = ok and good
        rows.append(entry)
    report = {"command": "quartic", "model": model.name, "normalization": QUARTIC_NORMALIZATION,
              "basis": "(X1, X2)", "points": rows, "pass": ok}
    return report, ok


def _corpus_point(model: Model, q, args) -> tuple[dict, dict]:
    F = build_adapted_frame(model.distribution)
    row = {"model": model.name, "point": ",".join(f"{x:g}" for x in q)}
    gv = growth_vector(F, q)
    row["growth"] = "".join(str(d) for d in gv)
    detail = {"point": list(q), "growth": list(gv)}
    expected = model.expected_growth
    if not model.expects_valid:
        good = gv != (2, 3, 5) if expected is None else gv == expected
        row["verdict"] = "pass" if good else "unexpected growth"
        detail["pass"] = good
        return row, detail
    if gv != expected:
        row["verdict"] = "unexpected growth"
        detail["pass"] = False
        return row, detail

    problems = []
    row["reconstruction"] = reconstruction_residual(F, q)
    if row["reconstruction"] > RECONSTRUCTION_TOL:
        problems.append("reconstruction")

    closed = xi_closed_form(F, q)
    geometric, fit = xi_geometric(F, q, args.n_fiber, args.n_cone)
    row["signature"] = "".join(str(d) for d in signature(closed))
    row["cone_residual"] = conformal_residual(closed, geometric)
    row["fit_gap"] = fit.gap
    if signature(closed) != (3, 2, 0):
        problems.append("signature")
    if row["cone_residual"] > args.tol:
        problems.append("cone")

    qa = quartic_polynomial(F, q, "w1")
    qb = quartic_polynomial(F, q, "w2")
    row["quartic_route_gap"] = max(scaled(x - y, max(abs(x), abs(y))) for x, y in zip(qa.coeffs, qb.coeffs))
    row["heldout"] = qa.heldout_residual
    row["quartic_zero"] = qa.is_zero()
    if row["quartic_route_gap"] > QUARTIC_ROUTE_TOL:
        problems.append("quartic routes")
    if qa.heldout_residual > HELDOUT_TOL:
        problems.append("held-out")
    if "flat" in model.expect and bool(model.expect["flat"]) != qa.is_zero():
        problems.append("flatness")

    row["verdict"] = "pass" if not problems else ", ".join(problems)
    detail.update(closed=closed, geometric=geometric, quartic=list(qa.coeffs),
                  quartic_w2=list(qb.coeffs), problems=problems)
    detail["pass"] = not problems
    return row, detail


def cmd_corpus(directory, args) -> tuple[dict, bool]:
    models = load_corpus(directory)
    if not models:
        console.print(f"[yellow]warning:[/yellow] no model files in {directory}")
    rows, details, ok = [], [], True
    for model in sorted(models, key=lambda m: m.name):
        per_model = []
        for q in model.points:
            try:
                row, detail = _corpus_point(model, q, args)
            except Conformal235Error as err:
                row = {"model": model.name, "point": ",".join(f"{x:g}" for x in q),
                       "verdict": f"error: {type(err).__name__}"}
                detail = {"point": list(q), "error": str(err), "pass": False}
            rows.append(row)
            per_model.append(detail)
            ok = ok and detail["pass"]
            console.print(f"{model.name} @ {row['point']}: "
                          + ("[green]pass[/green]" if detail["pass"] else f"[red]{row['verdict']}[/red]"))
        details.append({"model": model.name, "source": model.source, "expect": model.expect,
                        "points": per_model})
    df = summary_frame(rows)
    if not df.empty:
        console.print(summary_table(df))
    if args.summary:
        save_csv(df, args.summary)
        console.print(f"[green]Saved:[/green] {args.summary}")
    report = {"command": "corpus", "directory": str(directory), "models": details,
              "tolerances": _tolerances(args), "normalization": QUARTIC_NORMALIZATION, "pass": ok}
    return report, ok


# ---------------------------
# Entry point
# ---------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="conformal235",
                                 description="Conformal cone and Cartan quartic of (2,3,5) distributions")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, model_required=True):
        if model_required:
            p.add_argument("--model", required=True, help="Path to a model JSON file")
            p.add_argument("--point", help="Base point a,b,c,d,e (default: the model's points)")
        p.add_argument("--out", help="Report path (default: stdout)")
        p.add_argument("-v", "--verbose", action="store_true")

    def sampling(p):
        p.add_argument("--n-fiber", type=int, default=N_FIBER)
        p.add_argument("--n-cone", type=int, default=N_CONE)
        p.add_argument("--tol", type=float, default=CONE_TOL,
                       help="Closed-form vs geometric cone tolerance")

    ch = sub.add_parser("check", help="Growth vector and frame reconstruction")
    common(ch)
    ch.add_argument("--seed", type=int, default=DEFAULT_SEED,
                    help="Seed for the perturbed reconstruction samples")
    c = sub.add_parser("cone", help="Conformal cone by closed form and/or quadric fit")
    common(c)
    sampling(c)
    c.add_argument("--route", choices=["closed", "geometric", "both"], default="closed")
    x = sub.add_parser("crosscheck", help="Alias of cone --route both")
    common(x)
    sampling(x)
    qp = sub.add_parser("quartic", help="Cartan quartic on D(q)")
    common(qp)
    qp.add_argument("--direction", help="v1,v2 in the basis (X1, X2)")
    k = sub.add_parser("corpus", help="Run every suite on a directory of models")
    common(k, model_required=False)
    sampling(k)
    k.add_argument("--dir", default=str(CORPUS_DIR))
    k.add_argument("--summary", help="Write the summary table as CSV")
    return ap


def _validate(ap: argparse.ArgumentParser, args) -> None:
    if hasattr(args, "n_fiber") and args.n_fiber < MIN_N_FIBER:
        ap.error(f"--n-fiber must be at least {MIN_N_FIBER}")
    if hasattr(args, "n_cone") and args.n_cone < MIN_N_CONE:
        ap.error(f"--n-cone must be at least {MIN_N_CONE}")
    if getattr(args, "point", None):
        try:
            parse_floats(args.point, 5)
        except ValueError as err:
            ap.error(f"--point: {err}")
    if getattr(args, "direction", None):
        try:
            v = parse_floats(args.direction, 2)
        except ValueError as err:
            ap.error(f"--direction: {err}")
        if v == (0.0, 0.0):
            ap.error("--direction must be nonzero")


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    _validate(ap, args)
    configure_logging(args.verbose)
    try:
        if args.cmd == "corpus":
            report, ok = cmd_corpus(Path(args.dir), args)
        else:
            model = load_model(args.model)
            points = _points(model, args)
            if args.cmd == "check":
                report, ok = cmd_check(model, points, args.seed)
            elif args.cmd in ("cone", "crosscheck"):
                route = "both" if args.cmd == "crosscheck" else args.route
                report, ok = cmd_cone(model, points, route, args.n_fiber, args.n_cone, args.tol)
            else:
                direction = parse_floats(args.direction, 2) if args.direction else None
                report, ok = cmd_quartic(model, points, direction)
        write_report(report, args.out)
    except (ModelFileError, ExpressionSyntaxError, OSError) as err:
        console.print(f"[red]input error:[/red] {err}")
        return 2
    except GrowthVectorError as err:
        console.print(f"[red]not a (2,3,5) point:[/red] {err}")
        return 1
    except Conformal235Error as err:
        console.print(f"[red]failed:[/red] {err}")
        return 1
    console.print(f"{args.cmd}: " + ("[green]pass[/green]" if ok else "[red]fail[/red]"))
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
