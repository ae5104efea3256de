"""Command-line surface: build, transform, pipeline, measure, verify, sweep, report.

Exit codes: 0 when every check passed, 1 when some check failed, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys

from . import __version__
from .characteristics import Report, ap_components, measure_quad, smoothness_node
from .dyadic import AdaptiveTree, DEFAULT_CAP, dumps, frozen_measure, from_dag_json, to_dag_json

SCHEMA_VERSION = 1
CSV_COLUMNS = ("p", "M", "value", "ratio", "leftover", "seed")
log = logging.getLogger("cexlab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from exc


def _common(sp):
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--cap", type=int, default=DEFAULT_CAP)
    sp.add_argument("--json", metavar="PATH")
    sp.add_argument("--csv", metavar="PATH")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cexlab", description="Dyadic counterexample laboratory.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("build", help="build a seed tree")
    b.add_argument("kind", choices=("large-step", "two-valued-seed"))
    b.add_argument("--p", type=float, default=2.0)
    b.add_argument("--M", type=float, default=4.0)
    b.add_argument("--Q", type=float, default=4.0)
    b.add_argument("--variant", choices=("mult", "shift"), default="mult")
    b.add_argument("--tree", metavar="PATH", help="write the tree (shared-node JSON)")
    _common(b)

    t = sub.add_parser("transform", help="transform a tree read from JSON")
    t.add_argument("kind", choices=("small-step", "triangle", "remodel"))
    t.add_argument("--input", required=True, metavar="PATH")
    t.add_argument("--tree", metavar="PATH")
    t.add_argument("--p", type=float, default=2.0)
    t.add_argument("--d", type=int, default=8)
    t.add_argument("--steps", type=int, default=2)
    t.add_argument("--chase-bits", type=int, default=30)
    t.add_argument("--frequency", type=int, default=3)
    _common(t)

    p = sub.add_parser("pipeline", help="end-to-end constructions")
    p.add_argument("kind", choices=("hilbert", "direct-sum", "two-valued"))
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--M", type=float, default=4.0)
    p.add_argument("--Q", type=float, default=4.0)
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--steps", type=int, default=2)
    p.add_argument("--budget", type=int, default=2 ** 14)
    p.add_argument("--kmax", type=int, default=4)
    p.add_argument("--d-max", type=int, default=8)
    _common(p)

    m = sub.add_parser("measure", help="characteristics of a tree read from JSON")
    m.add_argument("--input", required=True, metavar="PATH")
    m.add_argument("--p", type=float, default=2.0)
    _common(m)

    v = sub.add_parser("verify", help="standalone lemma checks")
    v.add_argument("target", choices=("appendix", "hilbert-lemma"))
    v.add_argument("--section", choices=("walks", "hyperbola", "twoweight", "transfer"), default="walks")
    v.add_argument("--p", type=float, default=2.0)
    v.add_argument("--n", type=int, default=100_000)
    _common(v)

    s = sub.add_parser("sweep", help="run a pipeline over a grid of M")
    s.add_argument("--pipeline", choices=("hilbert", "large-step"), default="hilbert")
    s.add_argument("--p", type=float, default=2.0)
    s.add_argument("--M", type=_floats, default=[4.0, 8.0])
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--steps", type=int, default=2)
    s.add_argument("--budget", type=int, default=2 ** 14)
    _common(s)

    r = sub.add_parser("report", help="summarize saved JSON reports")
    r.add_argument("paths", nargs="+", metavar="PATH")
    _common(r)
    return ap


# --------------------------------------------------------------------------
# commands


def _load_tree(path: str) -> AdaptiveTree:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return from_dag_json(obj.get("tree", obj))


def _write_tree(path: str | None, tree: AdaptiveTree):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(dumps(to_dag_json(tree)) + "\n")


def _weights_report(tree: AdaptiveTree, p: float, kind: str, params: dict) -> Report:
    if tree.dim >= 4:
        return measure_quad(tree, p, kind, params)
    rep = Report(kind, dict(params, p=p))
    rep.ap_dyadic, rep.ap_argmax = ap_components(tree, p)
    rep.s_dyadic = max(smoothness_node(tree.root, "dyadic", k) for k in (0, 1))
    rep.s_strong_dyadic = max(smoothness_node(tree.root, "strong_dyadic", k) for k in (0, 1))
    rep.leftover_measure = frozen_measure(tree)
    rep.check("ap_at_least_one", rep.ap_dyadic >= 1 - 1e-12)
    return rep


def cmd_build(a) -> list[Report]:
    if a.kind == "large-step":
        from .large_step import LargeStepParams, build_quad, large_step_report
        params = LargeStepParams(a.p, a.M)
        rep = large_step_report(params, a.variant, a.cap)
        _write_tree(a.tree, build_quad(params, a.variant, a.cap))
        return [rep]
    from .pipelines import two_valued_seed
    seed, vals = two_valued_seed(a.p, a.Q, a.cap)
    rep = _weights_report(seed, a.p, "two_valued_seed", {"Q": a.Q})
    rep.values["leaf_values"] = list(vals)
    rep.check("seed_characteristic", abs(rep.ap_dyadic - a.Q) <= 1e-12 * a.Q)
    _write_tree(a.tree, seed)
    return [rep]


def cmd_transform(a) -> list[Report]:
    tree = _load_tree(a.input)
    params = {"input": os.path.basename(a.input), "d": a.d, "steps": a.steps}
    if a.kind == "small-step":
        from .small_step import small_step_transform
        out = small_step_transform(tree, a.d)
    elif a.kind == "triangle":
        from .small_step import small_step_triangle_transform
        out = small_step_triangle_transform(tree, a.d)
    else:
        from .remodel import Schedule, remodel_iterate
        st = remodel_iterate(tree, Schedule(a.frequency), a.steps, a.chase_bits)
        out = st.tree
        params.update(chase_bits=a.chase_bits, frequency=a.frequency)
    rep = _weights_report(out, a.p, a.kind, params)
    inp = _weights_report(tree, a.p, "input", {})
    rep.values.update(ap_input=inp.ap_dyadic, s_dyadic_input=inp.s_dyadic)
    if a.kind == "remodel":
        rep.values.update(residual_measure=st.residual_measure,
                          decomposition_defect=st.stats.get("decomposition_defect", []))
        rep.check("characteristic_preserved", abs(rep.ap_dyadic - inp.ap_dyadic) <= 1e-12 * inp.ap_dyadic)
    _write_tree(a.tree, out)
    return [rep]


def cmd_pipeline(a) -> list[Report]:
    from . import pipelines
    if a.kind == "hilbert":
        rep, _ = pipelines.hilbert_example(a.p, a.M, a.d or 2, a.steps, a.budget, cap=a.cap, seed=a.seed)
    elif a.kind == "direct-sum":
        rep, _ = pipelines.direct_sum_example(a.p, a.kmax, a.d or 2, a.steps, a.budget, cap=a.cap, seed=a.seed)
    else:
        rep, _ = pipelines.two_valued_weight(a.p, a.Q, a.eps, a.d, a.d_max, cap=a.cap)
    return [rep]


def cmd_measure(a) -> list[Report]:
    tree = _load_tree(a.input)
    return [_weights_report(tree, a.p, "measure", {"input": os.path.basename(a.input)})]


def cmd_verify(a) -> list[Report]:
    if a.target == "hilbert-lemma":
        from .hilbert import hilbert_lemma_report
        return [hilbert_lemma_report(a.seed)]
    from . import appendix
    if a.section == "walks":
        return [appendix.walks_report(a.seed, a.n, a.threads)]
    if a.section == "hyperbola":
        return [appendix.hyperbola_report(a.seed)]
    if a.section == "twoweight":
        return [appendix.two_weight_counterexample(a.p, seed=a.seed)]
    return [appendix.transfer_report(a.seed)]


def _sweep_row(rep: Report, p: float, M: float, seed: int) -> dict:
    if rep.kind == "hilbert":
        value = rep.values["normalized_pairing"]
    else:
        value = rep.values["normalized_damage"]
    return {"p": p, "M": M, "value": value, "ratio": value / M, "leftover": rep.leftover_measure, "seed": seed}


def cmd_sweep(a) -> tuple[list[Report], list[dict]]:
    reps, rows = [], []
    for M in a.M:
        if a.pipeline == "hilbert":
            from .pipelines import hilbert_example
            rep, _ = hilbert_example(a.p, M, a.d, a.steps, a.budget, cap=a.cap, seed=a.seed)
        else:
            from .large_step import LargeStepParams, large_step_report
            rep = large_step_report(LargeStepParams(a.p, M), "mult", a.cap)
        reps.append(rep)
        rows.append(_sweep_row(rep, a.p, M, a.seed))
    return reps, rows


def cmd_report(a) -> list[dict]:
    out = []
    for path in a.paths:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        for rep in obj.get("reports", []):
            failed = sorted(k for k, v in rep.get("checks", {}).items() if not v)
            out.append({"path": path, "kind": rep.get("kind"), "pass": not failed, "failed": failed})
    return out


# --------------------------------------------------------------------------
# output


def _clean(obj):
    """Non-finite floats become strings so the JSON stays valid."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _fmt_csv(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _emit(doc: dict, path: str | None):
    text = dumps(_clean(doc)) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_csv(path: str, rows: list[dict]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt_csv(r[c]) for c in CSV_COLUMNS])


def _report_rows(reps: list[Report], seed: int) -> list[dict]:
    rows = []
    for rep in reps:
        p = rep.params.get("p", float("nan"))
        M = rep.params.get("M", float("nan"))
        value = rep.values.get("normalized_pairing", rep.values.get("normalized_damage", rep.ap_dyadic))
        value = float("nan") if value is None else float(value)
        ratio = value / M if isinstance(M, (int, float)) and M == M and M else float("nan")
        rows.append({"p": p, "M": M, "value": value, "ratio": ratio, "leftover": rep.leftover_measure,
                     "seed": seed})
    return rows


def _setup_logging():
    level = os.environ.get("CEXLAB_LOG", "error").lower()
    if level not in ("error", "info", "debug"):
        level = "error"
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level.upper()),
                        format="%(levelname)s %(name)s: %(message)s")


def run(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        if getattr(a, "threads", 1) < 1:
            raise UsageError("--threads must be at least 1")
        if a.command == "report":
            summary = cmd_report(a)
            _emit({"schema_version": SCHEMA_VERSION, "command": "report", "summary": summary}, a.json)
            return 0 if all(s["pass"] for s in summary) else 1
        rows = None
        if a.command == "sweep":
            reps, rows = cmd_sweep(a)
        else:
            reps = {"build": cmd_build, "transform": cmd_transform, "pipeline": cmd_pipeline,
                    "measure": cmd_measure, "verify": cmd_verify}[a.command](a)
    except UsageError as exc:
        sys.stderr.write(str(exc) if str(exc).endswith("\n") else str(exc) + "\n")
        return 2
    except ValueError as exc:
        # violated hypotheses of a construction (e.g. M <= 2) are usage errors
        sys.stderr.write(f"cexlab: {exc}\n{parser.format_usage()}")
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"cexlab: {exc}\n")
        return 2
    doc = {"schema_version": SCHEMA_VERSION, "command": a.command,
           "argv": list(argv if argv is not None else sys.argv[1:]), "seed": a.seed,
           "reports": [r.to_dict() for r in reps], "pass": all(r.passed for r in reps)}
    _emit(doc, a.json)
    if a.csv:
        _write_csv(a.csv, rows if rows is not None else _report_rows(reps, a.seed))
    for r in reps:
        log.info("%s: %s", r.kind, "pass" if r.passed else "FAIL")
    return 0 if doc["pass"] else 1


def main() -> None:
    sys.exit(run())
