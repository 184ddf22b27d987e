"""Manufactured-solution convergence study on the structured mesh family."""
from __future__ import annotations

import logging

from .assembly import AssemblyVariant, assemble, solve
from .mesh import build_structured
from .norms import ErrorRecord, difference, rate, relative_errors, triple_norm
from .problem import ProblemSpec

log = logging.getLogger(__name__)

# published reference values (e1, e2) for levels 1..6, keyed by m
REFERENCE_TABLES = {
    2: [(2.71e-2, 8.60e-2), (6.66e-3, 3.25e-2), (1.78e-3, 1.75e-2),
        (4.13e-4, 1.02e-2), (1.05e-4, 5.29e-3), (2.65e-5, 2.70e-3)],
    5: [(2.35e-2, 1.20e-1), (5.02e-3, 5.18e-2), (1.24e-3, 2.69e-2),
        (2.95e-4, 1.06e-2), (7.67e-5, 5.40e-3), (1.94e-5, 2.72e-3)],
    7: [(2.28e-2, 1.15e-1), (4.45e-3, 4.47e-2), (1.09e-3, 2.41e-2),
        (2.62e-4, 1.08e-2), (6.76e-5, 5.32e-3), (1.71e-5, 2.66e-3)],
    9: [(1.73e-2, 7.29e-2), (3.33e-3, 3.57e-2), (8.98e-4, 2.15e-2),
        (2.36e-4, 1.08e-2), (6.09e-5, 5.26e-3), (1.55e-5, 2.62e-3)],
}
REFERENCE_COUNTS = [(8, 9), (32, 25), (128, 81), (512, 289), (2048, 1089), (8192, 4225)]


def run_convergence(m=2, levels=range(1, 7), s=1.0, bc="dirichlet0",
                    variant=AssemblyVariant.PAPER_LITERAL, on_record=None, solver_kw=None):
    """Solve on each level and return one :class:`ErrorRecord` per level.

    ``on_record`` is called after every level so callers can flush partial
    output before a later level fails.
    """
    spec = ProblemSpec.manufactured(m=m, s=s, bc_mode=bc)
    records = []
    for l in levels:
        mesh = build_structured(l)
        uh, iters, res = solve(assemble(mesh, spec, variant), **(solver_kw or {}))
        e1, e2 = relative_errors(spec.exact, uh)
        rec = ErrorRecord(l, mesh.nel, mesh.nno, e1, e2,
                          triple_norm_error=triple_norm(difference(spec.exact, uh), mesh, spec))
        if records and records[-1].level == l - 1:
            rec.q1 = rate(e1, records[-1].e1)
            rec.q2 = rate(e2, records[-1].e2)
        log.info("m=%d l=%d: e1=%.3e e2=%.3e (%d iterations)", m, l, e1, e2, iters)
        records.append(rec)
        if on_record is not None:
            on_record(records)
    return records
