"""``uqbench`` command-line tool.

Subcommands read and write NDJSON prediction files (``-`` for stdin/stdout)
and JSON reports. Exit status is 0 on success, 1 when a computation cannot be
completed and 2 for invalid input or usage.

Any flag may also come from a JSON ``--config`` file (keys are flag names,
with ``-`` or ``_``); explicit flags win. ``UQBENCH_SEED`` supplies the seed
when neither gives one.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from . import recalibration as rc
from . import synth
from .aggregation import (AggregatedClassification, MemberOutputsClassification, MemberOutputsRegression,
                          aggregate_classification, aggregate_regression, members_from_dict)
from .conversion import LEVEL_NAMES
from .core import (ClassBatch, GaussianBatch, LabeledSplit, QuantileBatch, RecordError, ValidationError,
                   ingest, iter_ndjson, serialize)
from .report import (CLASS_METRICS, SCHEMA, Options, UsageError, diagram_csv, diagram_data,
                     evaluate_report, resolve_metrics)
from .stratify import BootstrapError, paired_compare

EXIT_OK, EXIT_COMPUTE, EXIT_INPUT = 0, 1, 2
METHODS = ("ts", "vs", "ir", "cqr", "cmap", "venn-abers")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _read_lines(path: str) -> list[str]:
    if path == "-":
        return sys.stdin.read().splitlines(keepends=True)
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.readlines()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}") from None


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as e:
        raise CliError(f"cannot write {path}: {e.strerror}") from None


def _load(path: str, role: str = "test") -> LabeledSplit:
    return ingest(_read_lines(path), role=role)


def _seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    env = os.environ.get("UQBENCH_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise CliError(f"UQBENCH_SEED must be an integer, got {env!r}") from None


def _map(fn, items, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# aggregate


def cmd_aggregate(args) -> int:
    members = []
    for lineno, obj in iter_ndjson(_read_lines(args.input)):
        try:
            m = members_from_dict(obj) if isinstance(obj, dict) else None
            if m is None:
                raise ValidationError("record must be a JSON object")
        except ValidationError as e:
            raise RecordError(lineno, str(e)) from None
        want = MemberOutputsClassification if args.kind == "class" else MemberOutputsRegression
        if not isinstance(m, want):
            raise RecordError(lineno, f"record is not a {args.kind} member record")
        if members and isinstance(m, MemberOutputsClassification) \
                and m.logit_means.shape[1] != members[0].logit_means.shape[1]:
            raise RecordError(lineno, "class count differs from earlier records")
        members.append(m)
    seed = _seed(args)
    if args.kind == "class":
        out = _map(lambda m: aggregate_classification(m, args.k_samples, seed), members, args.threads)
    else:
        out = _map(aggregate_regression, members, args.threads)
    _write(args.output, "".join(json.dumps(_agg_dict(r), allow_nan=False) + "\n" for r in out))
    return EXIT_OK


def _agg_dict(r) -> dict:
    d = r.to_dict()
    if isinstance(r, AggregatedClassification):
        d["H_epi"] = r.h_epi
    return d


# ---------------------------------------------------------------------------
# recalibrate


def _split_check(split: LabeledSplit, kinds: tuple[str, ...], method: str) -> None:
    if split.kind not in kinds:
        hint = " (use vs for Gaussian predictions)" if method == "ts" and split.kind == "gaussian" else ""
        raise UsageError(f"method {method} does not apply to {split.kind} predictions{hint}")


def cmd_recalibrate(args) -> int:
    if not args.cal:
        raise UsageError("--cal FILE is required")
    test = _load(args.input)
    cal = _load(args.cal, role="calibration")
    if cal.kind != test.kind:
        raise UsageError(f"calibration set is {cal.kind} but test set is {test.kind}")
    coverage, pair = LEVEL_NAMES[args.level]
    method = args.method
    if method == "ts":
        _split_check(test, ("class",), method)
        model = rc.fit_temperature(cal.batch)
        out, params = rc.apply_temperature(model, test.batch), model.to_dict()
    elif method == "vs":
        _split_check(test, ("gaussian",), method)
        model = rc.fit_variance_scale(cal.batch)
        out, params = rc.apply_variance_scale(model, test.batch), model.to_dict()
    elif method == "ir":
        _split_check(test, ("class", "gaussian"), method)
        if test.kind == "class":
            models = rc.fit_isotonic_classifier(cal.batch)
            out = rc.apply_isotonic_classifier(models, test.batch)
            params = {"classes": [g.to_dict() for g in models]}
        else:
            model = rc.fit_quantile_recalibrator(cal.batch)
            out = rc.apply_quantile_recalibrator(model, test.batch, pair)
            params = {"pit_map": None if model is None else model.to_dict(), "pair": list(pair)}
    elif method == "cqr":
        _split_check(test, ("quantile",), method)
        offset = rc.cqr_fit(cal.batch, pair)
        out, params = rc.cqr_apply(offset, test.batch, pair), {**offset.to_dict(), "pair": list(pair)}
    elif method == "cmap":
        _split_check(test, ("gaussian",), method)
        offset = rc.cmap_fit(cal.batch, coverage)
        out, params = rc.cmap_apply(offset, test.batch), offset.to_dict()
    else:
        _split_check(test, ("class",), method)
        out, res = rc.venn_abers_batch(cal.batch, test.batch)
        meta = tuple({**m, "p0": float(a), "p1": float(b), "p": float(p)}
                     for m, a, b, p in zip(out.meta, res.p0, res.p1, res.p))
        out = ClassBatch(out.probs, out.labels, None, out.ids, meta)
        params = {"cal_scores": cal.batch.probs[:, 1].tolist(),
                  "cal_labels": cal.batch.require_labels().tolist()}
    model_doc = _dump_json({"schema": SCHEMA, "method": method, "level": args.level, "params": params})
    _write(args.output, serialize(out))
    if args.model_out:
        _write(args.model_out, model_doc)
    elif args.output != "-":
        _write(args.output + ".model.json", model_doc)
    else:
        sys.stderr.write(model_doc)
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate / diagram / compare


def _options(args) -> Options:
    if args.bins < 1:
        raise UsageError("--bins must be at least 1")
    return Options(bins=args.bins, level=args.level, baseline_mae=getattr(args, "baseline_mae", None))


def _metric_list(text: str | None) -> list[str] | None:
    if not text:
        return None
    return [m.strip().lower() for m in text.split(",") if m.strip()]


def cmd_evaluate(args) -> int:
    split = _load(args.input)
    if args.bootstrap and args.bootstrap < 100:
        raise UsageError("--bootstrap needs at least 100 resamples")
    rep = evaluate_report(split, _metric_list(args.metrics), _options(args), args.stratify,
                          args.bootstrap or 0, _seed(args), args.threads)
    _write(args.output, _dump_json(rep))
    return EXIT_OK


def cmd_diagram(args) -> int:
    data = diagram_data(_load(args.input), args.type, _options(args))
    _write(args.output, diagram_csv(data) if args.format == "csv" else _dump_json(data))
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = _load(args.input_a), _load(args.input_b)
    if a.kind != b.kind:
        raise UsageError(f"cannot compare {a.kind} with {b.kind} predictions")
    opts = _options(args)
    fn = resolve_metrics(a, [args.metric.lower()], opts)[args.metric.lower()]
    rep = paired_compare(a.batch, b.batch, fn, B=args.bootstrap, seed=_seed(args), name=args.metric,
                         workers=args.threads)
    doc = {"schema": SCHEMA, "metric": args.metric, "n": len(a), **rep.to_dict()}
    doc["difference"] = doc.pop("value")
    _write(args.output, _dump_json(doc))
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    seed = _seed(args)
    tag = {"group": args.group} if args.group is not None else None
    if args.kind == "class":
        out = serialize(synth.gen_classifier(args.n, args.temperature, args.n_classes, args.scale,
                                             seed, tag=tag))
    elif args.kind == "reg":
        out = serialize(synth.gen_regression(args.n, args.s_true, tuple(args.sigma_range), seed,
                                             measurand=args.measurand, tag=tag))
    else:
        kind = "class" if args.kind == "members-class" else "reg"
        ms = synth.gen_members(args.n, args.members, args.v_e, args.v_a, seed, kind, args.n_classes,
                               args.measurand)
        out = "".join(json.dumps(m.to_dict(), allow_nan=False) + "\n" for m in ms)
    _write(args.output, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of flag defaults")
    common.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    common.add_argument("--seed", type=int, default=None, help="random seed (falls back to $UQBENCH_SEED, then 0)")
    common.add_argument("-o", "--output", default="-", help="output path (default stdout)")

    p = argparse.ArgumentParser(prog="uqbench", description="Calibration and uncertainty evaluation.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("aggregate", parents=[common], help="collapse member outputs into predictions")
    a.add_argument("input")
    a.add_argument("--kind", choices=("class", "reg"), required=True)
    a.add_argument("--k-samples", type=int, default=100)
    a.set_defaults(func=cmd_aggregate)

    r = sub.add_parser("recalibrate", parents=[common], help="fit on --cal and transform the input")
    r.add_argument("input")
    r.add_argument("--method", choices=METHODS, required=True)
    r.add_argument("--cal")
    r.add_argument("--level", choices=tuple(LEVEL_NAMES), default="1sigma")
    r.add_argument("--model-out", help="fitted-model JSON path (default OUTPUT.model.json, or stderr)")
    r.set_defaults(func=cmd_recalibrate)

    e = sub.add_parser("evaluate", parents=[common], help="metric report as JSON")
    e.add_argument("input")
    e.add_argument("--metrics", help="comma-separated metric names")
    e.add_argument("--bins", type=int, default=15)
    e.add_argument("--stratify", help="true-class, predicted-class, measurand or tag:NAME")
    e.add_argument("--bootstrap", type=int, default=0, help="bootstrap resamples (0 = none)")
    e.add_argument("--baseline-mae", type=float)
    e.add_argument("--level", choices=tuple(LEVEL_NAMES), default="1sigma")
    e.set_defaults(func=cmd_evaluate)

    d = sub.add_parser("diagram", parents=[common], help="plot data for reliability-style diagrams")
    d.add_argument("input")
    d.add_argument("--type", choices=("reliability", "vce", "uce", "ence", "bivariate"), required=True)
    d.add_argument("--bins", type=int, default=15)
    d.add_argument("--format", choices=("json", "csv"), default="json")
    d.add_argument("--level", choices=tuple(LEVEL_NAMES), default="1sigma")
    d.set_defaults(func=cmd_diagram)

    s = sub.add_parser("synth", parents=[common], help="synthetic predictions with known calibration")
    s.add_argument("--kind", choices=("class", "reg", "members-reg", "members-class"), required=True)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--temperature", type=float, default=1.0)
    s.add_argument("--scale", type=float, default=synth.DEFAULT_LOGIT_SCALE)
    s.add_argument("--n-classes", type=int, default=2)
    s.add_argument("--s-true", type=float, default=1.0)
    s.add_argument("--sigma-range", type=float, nargs=2, default=list(synth.DEFAULT_SIGMA_RANGE))
    s.add_argument("--measurand", default="y")
    s.add_argument("--members", type=int, default=5)
    s.add_argument("--v-e", type=float, default=1.0)
    s.add_argument("--v-a", type=float, default=1.0)
    s.add_argument("--group", help="value of a 'group' tag attached to every record")
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("compare", parents=[common], help="paired bootstrap comparison of two files")
    c.add_argument("input_a")
    c.add_argument("input_b")
    c.add_argument("--metric", default="ece")
    c.add_argument("--bootstrap", type=int, default=1000)
    c.add_argument("--bins", type=int, default=15)
    c.add_argument("--level", choices=tuple(LEVEL_NAMES), default="1sigma")
    c.add_argument("--baseline-mae", type=float)
    c.set_defaults(func=cmd_compare)
    return p


def _config_defaults(argv: Sequence[str]) -> dict:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    try:
        with open(known.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise CliError(f"cannot read config {known.config}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise CliError(f"config {known.config} is not valid JSON ({e.msg})") from None
    if not isinstance(cfg, dict):
        raise CliError("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        cfg = _config_defaults(argv)
        if cfg:
            for sp in parser._subparsers._group_actions[0].choices.values():
                sp.set_defaults(**cfg)
        args = parser.parse_args(argv)
    except CliError as e:
        print(f"uqbench: error: {e}", file=sys.stderr)
        return e.code
    except SystemExit as e:
        return int(e.code or 0)
    if args.threads < 1:
        print("uqbench: error: --threads must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    warnings.simplefilter("default")
    try:
        with np.errstate(all="ignore"):
            return args.func(args)
    except CliError as e:
        msg, code = str(e), e.code
    except (rc.InsufficientCalibrationData, BootstrapError, ZeroDivisionError, FloatingPointError) as e:
        msg, code = str(e), EXIT_COMPUTE
    except (ValidationError, KeyError) as e:
        msg, code = str(e).strip("'\""), EXIT_INPUT
    print(f"uqbench: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
