"""``onsetml`` command line: synth, correlate, train-*, pca, kmeans, crossval, sweep, report.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from . import classify, dataset, regression, sensitivity, unsupervised, validation
from .dataset import FEATURE_NAMES, Layout, Soil
from .errors import LayoutMismatch, MissingArtifact, NoClassVariation, OnsetError, UsageError

DEFAULT_SEED = 42
SEED_ENV = "ONSETML_SEED"
CORRELATION_COLUMNS = dataset.NUMERIC_COLUMNS


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"usage error: {message}")


# -- file helpers ------------------------------------------------------------


def write_atomic(path, text: str) -> None:
    """Write via a temp file in the target directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise MissingArtifact(f"MissingArtifact: {path} does not exist")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MissingArtifact(f"MissingArtifact: {path} is not valid JSON ({exc})") from None


def load_table(path, layout: Layout | None = None) -> dataset.ExperimentTable:
    path = Path(path)
    if not path.is_file():
        raise MissingArtifact(f"MissingArtifact: {path} does not exist")
    table = dataset.load_experiments(path)
    if layout is None:
        return table
    sub = table.select_layout(layout)
    if len(sub) == 0:
        raise LayoutMismatch(f"LayoutMismatch: {path} has no {layout.value} rows")
    return sub


def _columns(text: str | None, default: Sequence[str]) -> list[str]:
    if not text:
        return list(default)
    return [dataset.canonical_column(c) for c in text.split(",") if c.strip()]


def _pairs(items: Sequence[str] | None, flag: str) -> dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"usage error: {flag} expects col=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _fnum(v) -> float | str:
    return str(v) if v is classify.UNDEFINED else float(v)


# -- commands ----------------------------------------------------------------


def cmd_synth(args) -> str:
    wev = dict(dataset.DEFAULT_WEV_KPA)
    for soil, value in _pairs(args.wev, "--wev").items():
        try:
            wev[Soil(soil.lower())] = float(value)
        except ValueError:
            raise UsageError(f"usage error: bad --wev entry {soil}={value}") from None
    table = dataset.synth_generate(wev_by_soil=wev, noise_scale=args.noise, seed=args.seed)
    if args.layout:
        table = table.select_layout(args.layout)
    write_atomic(args.out, table.to_csv())
    return f"synth: wrote {len(table)} records to {args.out} (seed {args.seed})"


def cmd_correlate(args) -> str:
    table = load_table(args.inp, Layout(args.layout))
    corr = dataset.correlation_matrix(table, _columns(args.columns, CORRELATION_COLUMNS))
    write_atomic(args.out, corr.to_csv())
    return f"correlate: {len(corr.labels)}x{len(corr.labels)} matrix over {len(table)} rows -> {args.out}"


def _split(table, fraction, seed, stratify):
    strata = list(table.labels()) if stratify else None
    return dataset.split_indices(len(table), fraction, seed, strata)


def _mlr_metrics(model, table, rows) -> dict:
    sub = table.subset(rows)
    y = sub.column(model.target)
    pred = model.predict_many(sub.features())
    return {"r2": regression.r2(y, pred), "mse": regression.mse(y, pred), "mae": regression.mae(y, pred),
            "negative_predictions": int(np.sum(pred < 0))}


def cmd_train_mlr(args) -> str:
    table = load_table(args.inp, Layout.H_TOP)
    target = dataset.canonical_column(args.target)
    train, test = _split(table, args.test_fraction, args.seed, False)
    tr = table.subset(train)
    model = regression.fit_mlr(tr.features(), tr.column(target), FEATURE_NAMES, target)
    fit = _mlr_metrics(model, table, train)
    held = _mlr_metrics(model, table, test)
    doc = model.to_dict(
        train_r2=fit["r2"],
        train_mse=fit["mse"],
        test_r2=held["r2"],
        test_mse=held["mse"],
        negative_predictions=fit["negative_predictions"] + held["negative_predictions"],
        split={"seed": args.seed, "test_fraction": args.test_fraction, "train_rows": train, "test_rows": test},
    )
    write_atomic(args.out, dump_json(doc))
    return f"train-mlr: {target} R2 train {fit['r2']:.3f} test {held['r2']:.3f} -> {args.out}"


def _class_metrics(predict, table, rows) -> dict:
    sub = table.subset(rows)
    cm = classify.confusion(sub.labels(), predict(sub))
    m = classify.metrics(cm)
    return {**cm.to_dict(), **{k: _fnum(v) for k, v in (("precision", m.precision), ("accuracy", m.accuracy), ("threat_score", m.threat_score))}}


def cmd_train_lr(args) -> str:
    table = load_table(args.inp, Layout.H_SUB)
    labels = table.labels()
    if np.all(labels == labels[0]):
        raise NoClassVariation("NoClassVariation: the failure column holds a single class")
    train, test = _split(table, args.test_fraction, args.seed, not args.no_stratify)
    model = classify.train_logistic(table.subset(train), eta=args.eta, max_iter=args.max_iter, tol=args.tol, threshold=args.threshold)
    predict = model.predict_table
    doc = model.to_dict(
        train_metrics=_class_metrics(predict, table, train),
        test_metrics=_class_metrics(predict, table, test),
        split={"seed": args.seed, "test_fraction": args.test_fraction, "stratified": not args.no_stratify,
               "train_rows": train, "test_rows": test},
    )
    write_atomic(args.out, dump_json(doc))
    status = "converged" if model.converged else "hit max_iter"
    return f"train-lr: {model.iterations} iterations ({status}), test accuracy {doc['test_metrics']['accuracy']:.3f} -> {args.out}"


def _svc_pipeline_predict(doc):
    pca = unsupervised.PcaModel.from_dict(doc["pca"])
    model = classify.SvcModel.from_dict(doc)
    n = int(doc["n_components"])

    def predict(sub):
        return model.predict_many(unsupervised.project(pca, sub.matrix(pca.columns), n))

    return predict


def cmd_train_svc(args) -> str:
    table = load_table(args.inp, Layout.H_SUB)
    columns = _columns(args.columns, unsupervised.PCA_COLUMNS)
    train, test = _split(table, args.test_fraction, args.seed, not args.no_stratify)
    tr = table.subset(train)
    pca = unsupervised.fit_pca(tr, columns)
    scores = unsupervised.project_table(pca, tr, args.components)
    model = classify.fit_svc(scores, tr.labels(), args.C)
    doc = model.to_dict(pca=pca.to_dict(), n_components=args.components)
    predict = _svc_pipeline_predict(doc)
    doc["train_metrics"] = _class_metrics(predict, table, train)
    doc["test_metrics"] = _class_metrics(predict, table, test)
    doc["split"] = {"seed": args.seed, "test_fraction": args.test_fraction, "stratified": not args.no_stratify,
                    "train_rows": train, "test_rows": test}
    write_atomic(args.out, dump_json(doc))
    return f"train-svc: C={args.C}, {len(model.support)} support vectors, margin {model.margin_width:.4f} -> {args.out}"


def cmd_pca(args) -> str:
    table = load_table(args.inp, Layout(args.layout))
    pca = unsupervised.fit_pca(table, _columns(args.columns, unsupervised.PCA_COLUMNS))
    write_atomic(args.out, unsupervised.pca_report_csv(pca))
    return f"pca: first two components explain {pca.cumulative[min(1, len(pca.cumulative) - 1)]:.3f} of variance -> {args.out}"


def cmd_kmeans(args) -> str:
    table = load_table(args.inp, Layout.H_SUB)
    pca = unsupervised.fit_pca(table, _columns(args.columns, unsupervised.PCA_COLUMNS))
    scores = unsupervised.project_table(pca, table, args.components)
    result = unsupervised.kmeans(scores, args.k, seed=args.seed, restarts=args.restarts)
    labels = table.labels()
    if args.k == 2:
        align = unsupervised.align_clusters_to_labels(result.assignments, labels)
    else:
        align = unsupervised.ClusterAlignment({}, 0, ())
    write_atomic(args.out, unsupervised.assignment_csv(scores, result, labels, align))
    return f"kmeans: k={args.k} inertia {result.inertia:.4f}, {align.mismatches} rows disagree with labels -> {args.out}"


def cmd_crossval(args) -> str:
    table = load_table(args.inp, Layout.H_SUB)
    if args.model == "svc":
        x = table.matrix(_columns(args.columns, unsupervised.PCA_COLUMNS))
        trainer = validation.SvcTrainer(C=args.C, n_components=args.components or None)
    else:
        x = table.raw_features()
        trainer = validation.LogisticTrainer(eta=args.eta, max_iter=args.max_iter, tol=args.tol, threshold=args.threshold)
    report = validation.cross_validate(trainer, x, table.labels(), args.folds, args.runs, args.seed)
    write_atomic(args.out, report.to_csv())
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return f"crossval: {args.model} {args.folds}-fold x {args.runs} runs, mean accuracy {report.overall_mean:.3f} -> {args.out}"


def cmd_sweep(args) -> str:
    model = classify.LogisticModel.from_dict(read_json(args.model))
    table = load_table(args.inp, Layout.H_SUB)
    filters = _pairs(args.filter, "--filter")
    names = args.var or ["all"]
    if any(v.lower() == "all" for v in names):
        curves = sensitivity.sweep_all(model, table, args.range, args.step, filters)
    else:
        curves = [sensitivity.sweep(model, table, v, args.range, args.step, filters) for v in names]
    write_atomic(args.out, sensitivity.curves_csv(curves))
    rows = sum(len(c.samples) for c in curves)
    return f"sweep: {len(curves)} curve(s), {rows} rows -> {args.out}"


def build_report(model_docs: Sequence[tuple[str, dict]], table: dataset.ExperimentTable) -> dict:
    """Coefficient / evaluation summary for fitted MLR, logistic and SVC documents."""
    out = {"mlr": [], "logistic": [], "svc": []}
    for source, doc in model_docs:
        kind = doc.get("model_type")
        split = doc.get("split")
        if kind not in out or split is None:
            raise MissingArtifact(f"MissingArtifact: {source} is not a model document produced by train-*")
        coeffs = {f"lambda{i}": v for i, v in enumerate([doc.get("intercept", doc.get("b"))] + list(doc.get("coefficients", doc.get("w", []))))}
        if kind == "mlr":
            sub = table.select_layout(Layout.H_TOP)
            model = regression.LinearModel.from_dict(doc)
            tr = _mlr_metrics(model, sub, split["train_rows"])
            te = _mlr_metrics(model, sub, split["test_rows"])
            evaluation = {"r2_train": tr["r2"], "r2_test": te["r2"], "mse_train": tr["mse"], "mse_test": te["mse"],
                          "negative_predictions": tr["negative_predictions"] + te["negative_predictions"]}
            out["mlr"].append({"source": source, "target": doc["target"], "features": doc["features"],
                               "coefficients": coeffs, "evaluation": evaluation})
            continue
        sub = table.select_layout(Layout.H_SUB)
        if kind == "logistic":
            predict = classify.LogisticModel.from_dict(doc).predict_table
        else:
            predict = _svc_pipeline_predict(doc)
            coeffs = {"w": doc["w"], "b": doc["b"], "C": doc["C"], "margin_width": doc["margin_width"]}
        tr = _class_metrics(predict, sub, split["train_rows"])
        te = _class_metrics(predict, sub, split["test_rows"])
        evaluation = {f"{m}_{part}": d[m] for part, d in (("train", tr), ("test", te)) for m in ("precision", "accuracy", "threat_score")}
        out[kind].append({"source": source, "coefficients": coeffs, "evaluation": evaluation,
                          "confusion": {"train": {k: tr[k] for k in ("tp", "fp", "fn", "tn")},
                                        "test": {k: te[k] for k in ("tp", "fp", "fn", "tn")}}})
    return out


def cmd_report(args) -> str:
    docs = [(str(p), read_json(p)) for p in args.model]
    table = load_table(args.inp)
    doc = build_report(docs, table)
    write_atomic(args.out, dump_json(doc))
    return f"report: {sum(len(v) for v in doc.values())} model(s) summarised -> {args.out}"


# -- parser ------------------------------------------------------------------


def _seed_default() -> int:
    env = os.environ.get(SEED_ENV)
    if env is None or not env.strip():
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"usage error: {SEED_ENV}={env!r} is not an integer") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="onsetml", description="Mudflow-onset statistical learning toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_text, needs_in=True):
        p = sub.add_parser(name, help=help_text)
        if needs_in:
            p.add_argument("--in", dest="inp", required=True, help="experiment CSV")
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=None, help=f"random seed (default ${SEED_ENV} or {DEFAULT_SEED})")
        p.set_defaults(func=func)
        return p

    def lr_options(p):
        p.add_argument("--eta", type=float, default=classify.DEFAULT_ETA)
        p.add_argument("--max-iter", type=int, default=classify.DEFAULT_MAX_ITER)
        p.add_argument("--tol", type=float, default=classify.DEFAULT_TOL)
        p.add_argument("--threshold", type=float, default=classify.DEFAULT_THRESHOLD)

    p = command("synth", cmd_synth, "generate the synthetic 36-test design", needs_in=False)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--layout", choices=[l.value for l in Layout])
    p.add_argument("--wev", action="append", metavar="SOIL=KPA")

    p = command("correlate", cmd_correlate, "correlation matrix CSV")
    p.add_argument("--columns")
    p.add_argument("--layout", choices=[l.value for l in Layout], default=Layout.H_TOP.value)

    p = command("train-mlr", cmd_train_mlr, "fit TD / TE regression on H-Top rows")
    p.add_argument("--target", default="td")
    p.add_argument("--test-fraction", type=float, default=0.35)

    p = command("train-lr", cmd_train_lr, "fit logistic failure model on H-Sub rows")
    lr_options(p)
    p.add_argument("--test-fraction", type=float, default=0.35)
    p.add_argument("--no-stratify", action="store_true")

    p = command("train-svc", cmd_train_svc, "fit linear SVC on PCA scores of H-Sub rows")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--test-fraction", type=float, default=0.35)
    p.add_argument("--columns")
    p.add_argument("--components", type=int, default=2)
    p.add_argument("--no-stratify", action="store_true")

    p = command("pca", cmd_pca, "explained variance and loadings CSV")
    p.add_argument("--columns")
    p.add_argument("--layout", choices=[l.value for l in Layout], default=Layout.H_SUB.value)

    p = command("kmeans", cmd_kmeans, "cluster PCA scores of H-Sub rows")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--columns")
    p.add_argument("--components", type=int, default=2)

    p = command("crossval", cmd_crossval, "repeated K-fold cross-validation")
    p.add_argument("--model", choices=["svc", "lr"], default="svc")
    p.add_argument("--folds", type=int, default=7)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--columns")
    p.add_argument("--components", type=int, default=2)
    lr_options(p)

    p = command("sweep", cmd_sweep, "standard-deviation sensitivity curves")
    p.add_argument("--model", required=True, help="logistic model JSON from train-lr")
    p.add_argument("--var", action="append", help="D50, WEV, SLOPE, RI or all (repeatable)")
    p.add_argument("--filter", action="append", metavar="COL=VALUE")
    p.add_argument("--range", type=float, default=sensitivity.DEFAULT_RANGE_SD)
    p.add_argument("--step", type=float, default=sensitivity.DEFAULT_STEP)

    p = command("report", cmd_report, "coefficient and evaluation summary (JSON)")
    p.add_argument("--model", action="append", required=True, help="model JSON (repeatable)")
    return parser


def _validate(args) -> None:
    frac = getattr(args, "test_fraction", None)
    if frac is not None and not 0 < frac < 1:
        raise UsageError("usage error: --test-fraction must lie in (0, 1)")
    if getattr(args, "C", 1.0) <= 0:
        raise UsageError("usage error: --C must be > 0")
    if getattr(args, "eta", 1.0) <= 0:
        raise UsageError("usage error: --eta must be > 0")
    if getattr(args, "max_iter", 1) < 1:
        raise UsageError("usage error: --max-iter must be >= 1")
    thr = getattr(args, "threshold", 0.5)
    if not 0 < thr < 1:
        raise UsageError("usage error: --threshold must lie in (0, 1)")
    if args.command == "sweep" and (args.range <= 0 or args.step <= 0):
        raise UsageError("usage error: --range and --step must be > 0")
    if args.command == "synth" and args.noise < 0:
        raise UsageError("usage error: --noise must be >= 0")
    if args.command in ("crossval",) and args.folds < 2:
        raise UsageError("usage error: --folds must be >= 2")
    if getattr(args, "runs", 1) < 1 or getattr(args, "restarts", 1) < 1 or getattr(args, "k", 1) < 1:
        raise UsageError("usage error: counts must be >= 1")


def run(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.seed is None:
            args.seed = _seed_default()
        _validate(args)
        print(args.func(args))
        return 0
    except OnsetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
