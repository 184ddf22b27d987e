"""Command line front end: ``converge``, ``adapt`` and ``solve``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import export
from .assembly import AssemblyVariant, SolverError, assemble, solve
from .convergence import run_convergence
from .estimator import EstimatorConfig, adaptive_loop, global_estimate, indicators
from .fe_space import interpolate
from .mesh import MAX_LEVEL, build_structured
from .norms import difference, relative_errors, triple_norm
from .problem import ProblemSpec

log = logging.getLogger(__name__)

DEFAULTS = {
    "m": "2",
    "levels": "1:6",
    "s": "1.0",
    "bc": "dirichlet0",
    "variant": "literal",
    "alpha": "1.0",
    "beta": "1.0",
    "theta": "0.5",
    "tol": None,
    "max_iter": "10",
    "out": "out",
    "formats": None,
    "jumps": "false",
}
DEFAULT_FORMATS = {
    "converge": "csv,markdown",
    "adapt": "csv,vtk",
    "solve": "csv,vtk",
}
FORMATS = {"csv", "markdown", "vtk", "matrixmarket"}
BC_CHOICES = {"dirichlet0": "dirichlet0", "neumann0": "neumann0", "robin": "robin"}


class UsageError(Exception):
    pass


def parse_levels(text):
    a, _, b = str(text).partition(":")
    try:
        lo, hi = int(a), int(b or a)
    except ValueError:
        raise UsageError(f"bad level range {text!r}; expected A:B") from None
    if not 1 <= lo <= hi <= MAX_LEVEL:
        raise UsageError(f"level range {text!r} must lie within [1, {MAX_LEVEL}]")
    return list(range(lo, hi + 1))


def parse_m(text):
    try:
        ms = [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad exponent list {text!r}") from None
    if not ms or any(m < 2 for m in ms):
        raise UsageError(f"exponent m must be >= 2, got {text!r}")
    return ms


def parse_formats(text):
    fmts = [f.strip() for f in str(text).split(",") if f.strip()]
    bad = set(fmts) - FORMATS
    if bad:
        raise UsageError(f"unknown output format(s): {', '.join(sorted(bad))}")
    return fmts


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; flags override it")
    common.add_argument("--m", help="permittivity exponent(s), comma separated")
    common.add_argument("--levels", help="level range A:B")
    common.add_argument("--s", help="pseudo-frequency")
    common.add_argument("--bc", choices=sorted(BC_CHOICES))
    common.add_argument("--variant", choices=[v.value for v in AssemblyVariant])
    common.add_argument("--alpha")
    common.add_argument("--beta")
    common.add_argument("--theta")
    common.add_argument("--tol")
    common.add_argument("--max-iter", dest="max_iter")
    common.add_argument("--jumps", help="include interior edge jumps in the estimator (true/false)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--formats", help="comma separated subset of csv,markdown,vtk,matrixmarket")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="laplace-maxwell", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("converge", parents=[common], help="convergence tables on uniform meshes")
    sub.add_parser("adapt", parents=[common], help="adaptive refinement driven by the estimator")
    sub.add_parser("solve", parents=[common], help="single solve with field export")
    return parser


def resolve(args):
    """Merge flags over config file over defaults; everything stays a string."""
    cfg = dict(DEFAULTS)
    cfg["formats"] = DEFAULT_FORMATS[args.command]
    if args.config:
        cfg.update(export.read_config(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _outdir(path):
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc.strerror or exc}") from exc
    return out


def cmd_converge(cfg):
    ms = parse_m(cfg["m"])
    levels = parse_levels(cfg["levels"])
    fmts = parse_formats(cfg["formats"])
    out = _outdir(cfg["out"])
    variant = AssemblyVariant(cfg["variant"])
    status = 0
    md = []
    for m in ms:
        stem = out / f"convergence_m{m}"

        def flush(records, stem=stem):
            if "csv" in fmts:
                export.write_table_csv(stem.with_suffix(".csv"), records)
                export.write_table_csv(stem.with_suffix(".raw.csv"), records, raw=True)

        try:
            records = run_convergence(m, levels, float(cfg["s"]), cfg["bc"], variant, on_record=flush)
        except SolverError as exc:
            print(f"m={m}: solver failed: {exc}", file=sys.stderr)
            status = 2
            continue
        md.append(export.markdown_table(records, f"m = {m}"))
        print(export.markdown_table(records, f"m = {m}"))
    if "markdown" in fmts and md:
        (out / "convergence.md").write_text("\n".join(md))
    return status


def _config_to_estimator(cfg):
    tol = cfg.get("tol")
    if tol is None:
        raise UsageError("adapt requires --tol (use 'inf' to accept the first solve)")
    return EstimatorConfig(alpha=float(cfg["alpha"]), beta=float(cfg["beta"]),
                           theta=float(cfg["theta"]), tol=float(tol),
                           include_edge_jumps=str(cfg["jumps"]).lower() in ("1", "true", "yes"),
                           max_iter=int(cfg["max_iter"]),
                           initial_level=parse_levels(cfg["levels"])[0],
                           variant=cfg["variant"])


def cmd_adapt(cfg):
    est_cfg = _config_to_estimator(cfg)
    fmts = parse_formats(cfg["formats"])
    out = _outdir(cfg["out"])
    m = parse_m(cfg["m"])[0]
    spec = ProblemSpec.manufactured(m=m, s=float(cfg["s"]), bc_mode=cfg["bc"])
    hist = adaptive_loop(spec, est_cfg)
    if "csv" in fmts:
        export.write_history_csv(out / "adapt_history.csv", hist)
        with open(out / "adapt_regions.csv", "w") as fh:
            fh.write("iter,n_omega1,n_omega2\n")
            for s in hist.steps:
                fh.write(f"{s.iteration},{s.n_omega1},{s.n_omega2}\n")
    if "vtk" in fmts:
        for s, mesh, uh in zip(hist.steps, hist.meshes, hist.solutions):
            export.write_vtk(out / f"adapt_{s.iteration:03d}.vtk", mesh,
                             point_vectors={"E_h": uh.nodal},
                             point_scalars={"abs_E_h": uh.magnitude()})
    for s in hist.steps:
        print(f"iter {s.iteration}: nel={s.nel} ndof={s.ndof} estimate={s.estimate:.4e}"
              + (f" error={s.true_error:.4e}" if s.true_error is not None else ""))
    print(f"stopped: {hist.stop_reason}")
    if hist.error:
        print(hist.error, file=sys.stderr)
        return 2
    return 0


def cmd_solve(cfg):
    m = parse_m(cfg["m"])[0]
    level = parse_levels(cfg["levels"])[-1]
    fmts = parse_formats(cfg["formats"])
    out = _outdir(cfg["out"])
    variant = AssemblyVariant(cfg["variant"])
    spec = ProblemSpec.manufactured(m=m, s=float(cfg["s"]), bc_mode=cfg["bc"])
    mesh = build_structured(level)
    system = assemble(mesh, spec, variant)
    uh, iters, res = solve(system)
    exact = interpolate(spec.exact, mesh)
    e1, e2 = relative_errors(spec.exact, uh)
    err = triple_norm(difference(spec.exact, uh), mesh, spec)
    est = global_estimate(indicators(uh, spec, EstimatorConfig(variant=variant)))
    stem = out / f"solve_m{m}_l{level}"
    if "vtk" in fmts:
        export.write_vtk(stem.with_suffix(".vtk"), mesh,
                         point_vectors={"E_h": uh.nodal, "E": exact.nodal},
                         point_scalars={"abs_E_h": uh.magnitude(), "abs_E": exact.magnitude()})
    if "csv" in fmts:
        export.write_field_csv(stem.with_suffix(".csv"), uh)
    if "matrixmarket" in fmts:
        export.write_matrix_market(stem.with_suffix(".mtx"), system)
    diag = "\n".join([
        f"m = {m}", f"level = {level}", f"s = {spec.s}", f"bc = {cfg['bc']}",
        f"variant = {variant.value}", f"dofs = {2 * mesh.nno}", f"free_dofs = {system.size}",
        f"iterations = {iters}", f"relative_residual = {res:.3e}",
        f"e1 = {e1:.6e}", f"e2 = {e2:.6e}", f"triple_norm_error = {err:.6e}",
        f"estimate = {est:.6e}",
    ]) + "\n"
    (stem.parent / (stem.name + "_diagnostics.txt")).write_text(diag)
    print(diag, end="")
    return 0


COMMANDS = {"converge": cmd_converge, "adapt": cmd_adapt, "solve": cmd_solve}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
