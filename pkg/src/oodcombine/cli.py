"""``oodcombine`` command line: split, eval, search, synth.

Every option that can also come from a ``--config`` file is resolved as
flag > config file > built-in default, and the resolved values are echoed
in the JSON output.  Failures exit nonzero with a JSON error on stderr.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .combiners import SCHEMA_VERSION
from .metrics import (
    auroc_family,
    auroc_scalar,
    curve_fpr_at_tpr,
    curve_tpr_at_fpr,
    default_grid,
    family_roc,
    fpr_at_tpr,
    tpr_at_fpr,
)
from .scores import ID_ORIGIN, ScoreMatrix, SplitSpec, format_scores, load_scores, split_id, split_ood
from .search import (
    COMBINER_KINDS,
    CandidateSet,
    SearchReport,
    beam_search,
    best_pairs,
    make_combiner,
    pareto_csv,
    proxy_select,
    rank_records,
    sensitivity_search,
    top_fraction,
)
from .utils import atomic_write_text, dumps_json


class CliError(Exception):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in str(text).split(",") if x.strip())


def _names(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in str(text).split(",") if x.strip())


def _opt_str(text):
    text = str(text).strip()
    return None if text.lower() in ("", "none", "auto") else text


def _opt_int(text):
    text = _opt_str(text)
    return None if text is None else int(text)


# dest -> (parser, default); these may be set by flag or config file
OPTIONS = {
    "combiner": (str, "ecdf"),
    "columns": (_names, None),
    "strategy": (str, "pairs"),
    "seed": (int, 42),
    "grid": (int, 1001),
    "rule": (str, "loose"),
    "marginal": (str, "uniform"),
    "copula": (_opt_str, None),
    "variant": (str, "knn"),
    "n_reference": (_opt_int, None),
    "n_spheres": (int, 100),
    "epsilon": (float, 0.01),
    "k_neighbors": (int, 5),
    "width": (int, 3),
    "depth": (int, 4),
    "n_samples": (int, 1000),
    "percentile": (float, 90.0),
    "top_frac": (float, 0.05),
    "top_k": (_opt_int, None),
    "fractions": (_floats, None),
    "n_id": (int, 1000),
    "n_ood": (int, 1000),
    "d": (int, 2),
    "mu": (_floats, (1.0,)),
    "rho": (float, 0.0),
}


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment; dashes in keys become underscores."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in OPTIONS:
            raise CliError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = value
    return out


def resolve(args, keys) -> dict:
    file_cfg = read_config(args.config) if getattr(args, "config", None) else {}
    cfg = {}
    for key in keys:
        conv, default = OPTIONS[key]
        val = getattr(args, key, None)
        if val is None and key in file_cfg:
            try:
                val = conv(file_cfg[key])
            except ValueError as exc:
                raise CliError(f"bad config value for {key}: {exc}") from None
        cfg[key] = default if val is None else val
    for key, val in cfg.items():
        if isinstance(val, tuple):
            cfg[key] = list(val)
    return cfg


COMBINER_KEYS = ("combiner", "rule", "marginal", "copula", "variant", "n_reference", "n_spheres", "epsilon", "k_neighbors")


def combiner_params(cfg: dict) -> dict:
    kind = cfg["combiner"]
    if kind not in COMBINER_KINDS:
        raise CliError(f"unknown combiner {kind!r}; choose from {list(COMBINER_KINDS)}")
    if kind == "vote":
        return {"rule": cfg["rule"]}
    if kind == "copula":
        return {"marginal": cfg["marginal"], "copula": cfg["copula"]}
    if kind == "centerout":
        return {
            "variant": cfg["variant"],
            "n_reference": cfg["n_reference"],
            "n_spheres": cfg["n_spheres"],
            "seed": cfg["seed"],
            "epsilon": cfg["epsilon"],
            "k_neighbors": cfg["k_neighbors"],
        }
    return {}


_TAG_SPLIT = re.compile(r"[._\-]+")


def is_test_tagged(path) -> bool:
    """True when a token of the file name (split on ``._-``) is ``test``."""
    return "test" in (tok.lower() for tok in _TAG_SPLIT.split(Path(path).name))


def _load(path, what: str) -> ScoreMatrix:
    if path is None:
        raise CliError(f"missing {what} file")
    if not Path(path).is_file():
        raise CliError(f"{what} file not found: {path}")
    return load_scores(path)


def _restrict(matrix: ScoreMatrix, columns) -> ScoreMatrix:
    if not columns:
        return matrix
    missing = [c for c in columns if c not in matrix.detector_names]
    if missing:
        raise CliError(f"unknown columns {missing}; available: {list(matrix.detector_names)}")
    return matrix.select(tuple(columns))


def _emit(doc: dict, out) -> None:
    text = dumps_json(doc)
    if out:
        atomic_write_text(out, text)
    sys.stdout.write(text)


# ------------------------------------------------------------------ split


def cmd_split(args) -> dict:
    cfg = resolve(args, ("seed", "fractions"))
    matrix = _load(args.input, "input")
    is_id = [o == ID_ORIGIN for o in matrix.origin]
    if all(is_id):
        fr = cfg["fractions"] or [0.25, 0.25, 0.5]
        bundle = split_id(matrix, SplitSpec(tuple(fr), cfg["seed"]))
    elif not any(is_id):
        fr = cfg["fractions"] or [0.5, 0.5]
        bundle = split_ood(matrix, SplitSpec(tuple(fr), cfg["seed"]))
    else:
        raise CliError("input mixes ID and OOD rows; split them into separate files first")
    cfg["fractions"] = list(fr)
    outputs = {}
    for name in bundle.names:
        path = f"{args.out}_{name}.csv"
        atomic_write_text(path, format_scores(matrix.take(bundle[name])))
        outputs[name] = {"path": path, "rows": int(len(bundle[name]))}
    return {"command": "split", "config": dict(cfg, input=args.input, out=args.out), "outputs": outputs}


# ------------------------------------------------------------------ eval


def _chosen_from_report(path) -> list[str]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if "chosen" not in doc:
        raise CliError(f"{path} has no 'chosen' set")
    return list(doc["chosen"])


def cmd_eval(args) -> dict:
    cfg = resolve(args, ("columns", "grid", "seed") + COMBINER_KEYS)
    if args.from_report:
        if cfg["columns"]:
            raise CliError("--columns and --from-report are mutually exclusive")
        cfg["columns"] = _chosen_from_report(args.from_report)
    params = combiner_params(cfg)
    cal = _restrict(_load(args.cal, "calibration"), cfg["columns"])
    test_id = _restrict(_load(args.id, "ID"), cal.detector_names)
    test_ood = _restrict(_load(args.ood, "OOD"), cal.detector_names)
    grid = default_grid(cfg["grid"])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = make_combiner(cfg["combiner"], params).fit(cal)
        curve = family_roc(model, test_id, test_ood, grid)
    combined = {
        "auroc": auroc_family(curve),
        "fpr_at_95tpr": curve_fpr_at_tpr(curve, 0.95),
        "tpr_at_5fpr": curve_tpr_at_fpr(curve, 0.05),
    }
    individual = {}
    for name in cal.detector_names:
        i, o = test_id.column(name), test_ood.column(name)
        individual[name] = {
            "auroc": auroc_scalar(i, o),
            "fpr_at_95tpr": fpr_at_tpr(i, o, 0.95),
            "tpr_at_5fpr": tpr_at_fpr(i, o, 0.05),
        }
    if args.roc:
        atomic_write_text(args.roc, curve.to_csv())
    doc = {
        "command": "eval",
        "config": dict(cfg, cal=args.cal, id=args.id, ood=args.ood, from_report=args.from_report),
        "detectors": list(cal.detector_names),
        "combined": combined,
        "individual": individual,
        "rows": {"cal": cal.n, "id": test_id.n, "ood": test_ood.n},
        "warnings": sorted({str(w.message) for w in caught}),
    }
    info = getattr(model, "sinkhorn_info", None)
    if info:
        doc["sinkhorn"] = info
    if cfg["combiner"] == "copula":
        doc["copula"] = model.copula.to_dict()
    return doc


# ------------------------------------------------------------------ search


SEARCH_KEYS = ("strategy", "columns", "grid", "seed", "width", "depth", "n_samples", "percentile", "top_frac", "top_k")


def cmd_search(args) -> dict:
    cfg = resolve(args, SEARCH_KEYS + COMBINER_KEYS)
    inputs = {"cal": args.cal, "id": args.id, "ood": args.ood, "proxy": args.proxy,
              "pareto_id": args.pareto_id, "near": args.near, "far": args.far}
    if not args.final_eval:
        tagged = sorted(k for k, p in inputs.items() if p and is_test_tagged(p))
        if tagged:
            raise CliError(f"refusing test-tagged input for {tagged}; pass --final-eval to allow it")
    if args.ood is None and args.proxy is None:
        raise CliError("search needs --ood or --proxy")
    params = combiner_params(cfg)
    kind = cfg["combiner"]
    cal = _restrict(_load(args.cal, "calibration"), cfg["columns"])
    names = cal.detector_names
    val_id = _restrict(_load(args.id, "ID"), names)
    val_ood = _restrict(_load(args.ood, "OOD"), names) if args.ood else None
    proxy = _restrict(_load(args.proxy, "proxy"), names) if args.proxy else None
    select_ood = proxy if proxy is not None else val_ood
    tag = "proxy" if proxy is not None else "val"
    grid = default_grid(cfg["grid"])
    strategy = cfg["strategy"]
    extra: dict = {}
    if strategy == "pairs":
        records = best_pairs(cal, val_id, select_ood, kind, params, grid, tag)
        survivors = [r.candidate for r in top_fraction(records, cfg["top_frac"])]
        extra["n_pairs"] = len(records)
    elif strategy == "sensitivity":
        rep = sensitivity_search(cal, val_id, select_ood, kind, cfg["n_samples"], cfg["percentile"], cfg["seed"],
                                 params, grid, tag)
        records = rank_records(rep.samples)
        survivors = rep.candidate_sets
        extra["sensitivity"] = {
            "coefficients": dict(zip(rep.detector_names, rep.coefficients.tolist())),
            "intercept": rep.intercept,
            "top_detectors": list(rep.top_detectors),
            **rep.diagnostics(),
        }
    elif strategy == "beam":
        res = beam_search(cal, val_id, select_ood, kind, cfg["width"], cfg["depth"], params, grid, tag)
        records = res.evaluated
        survivors = res.survivors()
        extra["beam"] = {
            "best_overall": res.best_overall.to_dict(),
            "levels": [[r.to_dict() for r in lvl] for lvl in res.levels],
            "level_best": [r.to_dict() for r in res.level_best],
            "n_evaluations": res.n_evaluations,
        }
    else:
        raise CliError(f"unknown strategy {strategy!r}; choose pairs, sensitivity or beam")

    if proxy is not None:
        top_k = cfg["top_k"] or len(survivors)
        sel = proxy_select(survivors, cal, proxy, val_id, val_ood, kind, top_k, params, grid)
        chosen = sel.chosen
        extra["proxy_select"] = {
            "top_k": top_k,
            "proxy_ranking": [r.to_dict() for r in sel.proxy_ranking],
            "val_ranking": [r.to_dict() for r in sel.val_ranking],
        }
    else:
        chosen = _best_of(survivors, cal, val_id, val_ood, kind, params, grid)

    if args.pareto:
        extra["pareto"] = _write_pareto(args, cal, survivors, kind, params, grid)

    report = SearchReport(strategy, kind, {}, records, survivors, chosen, extra)
    doc = report.to_dict()
    doc.pop("parameters")
    doc.update(command="search", config=dict(cfg, **inputs, final_eval=bool(args.final_eval)))
    return doc


def _best_of(cands, cal, val_id, val_ood, kind, params, grid) -> CandidateSet:
    from .search import Evaluator

    ev = Evaluator(cal, val_id, kind, params, grid)
    return rank_records(ev.evaluate(c, val_ood) for c in cands)[0].candidate


def _write_pareto(args, cal, survivors, kind, params, grid) -> str:
    if not (args.pareto_id and args.near and args.far):
        raise CliError("--pareto needs --pareto-id, --near and --far")
    from .search import Evaluator

    names = cal.detector_names
    pid = _restrict(_load(args.pareto_id, "Pareto ID"), names)
    near = _restrict(_load(args.near, "near OOD"), names)
    far = _restrict(_load(args.far, "far OOD"), names)
    ev = Evaluator(cal, pid, kind, params, grid)
    rows = []
    for cand in [CandidateSet((n,)) for n in names] + list(survivors):
        if any(r[0] == cand for r in rows):
            continue
        rows.append((cand, ev.evaluate(cand, near, "test").auroc, ev.evaluate(cand, far, "test").auroc))
    atomic_write_text(args.pareto, pareto_csv(rows))
    return args.pareto


# ------------------------------------------------------------------ synth


def cmd_synth(args) -> dict:
    from .synth import GaussianScoreSpec, equicorrelation, gen_gaussian_scores, normal_shift_auroc

    cfg = resolve(args, ("n_id", "n_ood", "d", "mu", "rho", "seed"))
    d = cfg["d"]
    mu = cfg["mu"]
    if len(mu) == 1:
        mu = mu * d
    if len(mu) != d:
        raise CliError(f"--mu needs 1 or {d} values, got {len(mu)}")
    cfg["mu"] = list(mu)
    spec = GaussianScoreSpec(cfg["n_id"], cfg["n_ood"], d, tuple(mu), equicorrelation(d, cfg["rho"]), cfg["seed"])
    id_m, ood_m = gen_gaussian_scores(spec)
    paths = {"id": f"{args.out}_id.csv", "ood": f"{args.out}_ood.csv"}
    atomic_write_text(paths["id"], format_scores(id_m))
    atomic_write_text(paths["ood"], format_scores(ood_m))
    per_col = {
        name: {"analytic_auroc": normal_shift_auroc(m), "empirical_auroc": auroc_scalar(id_m.column(name), ood_m.column(name))}
        for name, m in zip(id_m.detector_names, mu)
    }
    return {"command": "synth", "config": dict(cfg, out=args.out), "outputs": paths, "columns": per_col}


# ------------------------------------------------------------------ parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _combiner_flags(p):
    p.add_argument("--combiner", choices=COMBINER_KINDS, default=None)
    p.add_argument("--columns", type=_names, default=None, help="comma-separated detector columns")
    p.add_argument("--grid", type=int, default=None, help="level-grid size (default 1001)")
    p.add_argument("--rule", default=None, help="vote rule: all, any, loose, strict")
    p.add_argument("--marginal", default=None, help="copula marginals: uniform, gaussian, beta")
    p.add_argument("--copula", type=_opt_str, default=None, help="copula family (default frank for pairs)")
    p.add_argument("--variant", default=None, help="center-outward generaliser: knn or hull")
    p.add_argument("--n-reference", type=_opt_int, default=None)
    p.add_argument("--n-spheres", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--k-neighbors", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oodcombine", description="Combine OOD detector scores.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", default=None, help="key = value file; flags take precedence")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("split", help="seeded cal/val/test (ID) or val/test (OOD) split")
    common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="output prefix; writes PREFIX_<part>.csv")
    p.add_argument("--fractions", type=_floats, default=None)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("eval", help="fit on calibration scores, report test metrics")
    common(p)
    _combiner_flags(p)
    p.add_argument("--cal", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--ood", required=True)
    p.add_argument("--from-report", default=None, help="use the chosen set of a search report")
    p.add_argument("--roc", default=None, help="write the ROC curve CSV here")
    p.add_argument("--out", default=None, help="report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("search", help="select detector subsets on validation or proxy data")
    common(p)
    _combiner_flags(p)
    p.add_argument("--strategy", choices=("pairs", "sensitivity", "beam"), default=None)
    p.add_argument("--cal", required=True)
    p.add_argument("--id", required=True, help="validation ID scores")
    p.add_argument("--ood", default=None, help="validation OOD scores")
    p.add_argument("--proxy", default=None, help="proxy OOD scores (outlier exposure)")
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--n-samples", type=int, default=None)
    p.add_argument("--percentile", type=float, default=None)
    p.add_argument("--top-frac", type=float, default=None)
    p.add_argument("--top-k", type=_opt_int, default=None)
    p.add_argument("--pareto", default=None, help="write a set,near_auroc,far_auroc CSV")
    p.add_argument("--pareto-id", default=None)
    p.add_argument("--near", default=None)
    p.add_argument("--far", default=None)
    p.add_argument("--final-eval", action="store_true", help="allow test-tagged inputs")
    p.add_argument("--out", default=None, help="report JSON path")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("synth", help="Gaussian synthetic scores with known AUROC")
    common(p)
    p.add_argument("--n-id", type=int, default=None)
    p.add_argument("--n-ood", type=int, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--mu", type=_floats, default=None, help="OOD mean shift, one value or one per column")
    p.add_argument("--rho", type=float, default=None, help="equicorrelation of the columns")
    p.add_argument("--out", required=True, help="output prefix; writes PREFIX_id.csv and PREFIX_ood.csv")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        doc = args.func(args)
        doc = {"schema_version": SCHEMA_VERSION, **doc}
        _emit(doc, getattr(args, "out", None) if args.command in ("eval", "search") else None)
        return 0
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - reported as JSON
        err = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
        return 2 if isinstance(exc, CliError) else 1


if __name__ == "__main__":
    raise SystemExit(main())
