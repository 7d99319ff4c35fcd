"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from .baselines import BaselineConfig, train_baseline
from .data import (
    AuxDataset, CsvSchema, FullDataset, LabeledDataset, StandardizationStats, fit_standardization,
    gen_synthetic, load_csv, write_csv,
)
from .errors import DataError, NumericalError
from .fairness import FairnessConfig, train_fair, unfairness_of
from .geometry import NormSpec, build_match_set, check_feasibility, feasibility_witness_coupling
from .harness import ExperimentSpec, dumps, evaluate, format_float, format_table, run_experiment, write_json
from .objective import SolverConfig
from .solver import TrainedModel, decision_scores, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _cols(text: str) -> list[str]:
    return [c.strip() for c in text.split(",") if c.strip()] if text else []


# --------------------------------------------------------------------------
# Data arguments
# --------------------------------------------------------------------------


def _add_data_args(p, labeled=True, aux=True):
    p.add_argument("--features", required=True, help="comma-separated shared feature columns")
    if labeled:
        p.add_argument("--labeled", required=True, help="CSV with the shared features and the label")
        p.add_argument("--label", default="y", help="label column (default: y)")
    if aux:
        p.add_argument("--aux", required=True, help="CSV with the shared and auxiliary features")
        p.add_argument("--aux-features", default="", help="comma-separated auxiliary columns")


def _load_pair(args):
    feats = _cols(args.features)
    lab = load_csv(args.labeled, CsvSchema(feats, args.label)) if hasattr(args, "labeled") else None
    aux = None
    if hasattr(args, "aux"):
        aux = load_csv(args.aux, CsvSchema(feats, None, _cols(args.aux_features)))
    return lab, aux


def _standardize_pair(lab: LabeledDataset, aux: AuxDataset | None):
    X_all = lab.X if aux is None else np.vstack([lab.X, aux.X])
    sx = fit_standardization(X_all)
    sa = fit_standardization(aux.A) if aux is not None and aux.m2 else None
    lab2 = LabeledDataset(sx.apply(lab.X), lab.y)
    aux2 = None if aux is None else AuxDataset(sx.apply(aux.X), sa.apply(aux.A) if sa else aux.A)
    stats = {"x": sx.to_dict(), "a": None if sa is None else sa.to_dict()}
    return lab2, aux2, stats


def _apply_stats(stats, X, A):
    if not stats:
        return X, A
    X = StandardizationStats.from_dict(stats["x"]).apply(X)
    if A is not None and stats.get("a"):
        A = StandardizationStats.from_dict(stats["a"]).apply(A)
    return X, A


def _emit(obj, output):
    if output:
        write_json(obj, output)
    else:
        print(dumps(obj))


def _add_solver_args(p):
    p.add_argument("--r-A", type=float, default=0.65)
    p.add_argument("--r-P", type=float, default=0.65)
    p.add_argument("--kappa-A", type=float, default=5.0)
    p.add_argument("--kappa-P", type=float, default=5.0)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--T", type=int, default=1500)
    p.add_argument("--step", type=float, default=7e-2)
    p.add_argument("--p", type=float, default=2.0, help="norm exponent on shared features")
    p.add_argument("--p-aux", type=float, default=2.0, help="norm exponent on auxiliary features")
    p.add_argument("--normalization", choices=("product", "matches"), default="product")
    p.add_argument("--iterate", choices=("last", "averaged"), default="last")
    p.add_argument("--step-schedule", choices=("constant", "sqrt"), default="constant")
    p.add_argument("--flip-cost-doubling", action="store_true")
    p.add_argument("--standardize", action="store_true", help="standardize using training statistics")
    p.add_argument("--output", "-o", help="write the model JSON here instead of stdout")
    p.add_argument("--trace-limit", type=int, default=None, help="keep only the last N trace values")


def _solver_config(args) -> SolverConfig:
    return SolverConfig(r_A=args.r_A, r_P=args.r_P, kappa_A=args.kappa_A, kappa_P=args.kappa_P,
                        k=args.k, T=args.T, step=args.step, norm=NormSpec(args.p, args.p_aux),
                        normalization=args.normalization, iterate=args.iterate,
                        step_schedule=args.step_schedule, flip_cost_doubling=args.flip_cost_doubling)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_match(args):
    lab, aux = _load_pair(args)
    M = build_match_set(aux.X, lab.X, args.k, NormSpec(args.p))
    _emit(M.to_dict(), args.output)


def cmd_feasibility(args):
    lab, aux = _load_pair(args)
    spec = NormSpec(args.p)
    cert = check_feasibility(aux.X, lab.X, args.r_A, args.r_P, spec)
    out = cert.to_dict()
    if cert.feasible and args.r_A + args.r_P > 0:
        w = feasibility_witness_coupling(cert.witness, aux.X, lab.X, args.r_A, args.r_P, spec)
        out["witness_costs"] = {"A": w.cost_A, "P": w.cost_P}
    _emit(out, args.output)


def cmd_train(args):
    lab, aux = _load_pair(args)
    stats = None
    if args.standardize:
        lab, aux, stats = _standardize_pair(lab, aux)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = train(aux, lab, _solver_config(args))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    model.stats = stats
    _emit(model.to_dict(args.trace_limit), args.output)


def cmd_train_fair(args):
    lab, aux = _load_pair(args)
    if aux.m2 != 1:
        raise UsageError("train-fair needs exactly one auxiliary column (the binary group)")
    stats = None
    if args.standardize:
        std_lab, std_aux, stats = _standardize_pair(lab, AuxDataset(aux.X, np.zeros((aux.n, 0))))
        lab, aux = std_lab, AuxDataset(std_aux.X, aux.A)
        stats["a"] = None
    fcfg = FairnessConfig(eta=args.eta, p0=args.p0, p1=args.p1, freeze_gamma=args.freeze_gamma)
    model = train_fair(aux, lab, _solver_config(args), fcfg)
    model.stats = stats
    out = model.to_dict(args.trace_limit)
    if args.test:
        test = load_csv(args.test, CsvSchema(_cols(args.features), args.label, _cols(args.aux_features)))
        X, _ = _apply_stats(stats, test.X, None)
        out["test_unfairness"] = unfairness_of(model, FullDataset(X, test.A, test.y))
    _emit(out, args.output)


def cmd_baseline(args):
    lab, _ = _load_pair(args)
    stats = None
    if args.standardize:
        lab, _, stats = _standardize_pair(lab, None)
    cfg = BaselineConfig(kind=args.kind, lam=args.lam, r=args.r, kappa=args.kappa, T=args.T,
                         step=args.step, squared=args.squared)
    model = train_baseline(lab.X, lab.y, cfg)
    model.stats = stats
    _emit(model.to_dict(args.trace_limit), args.output)


def _load_model(path) -> TrainedModel:
    import json

    try:
        with open(path, encoding="utf-8") as fh:
            return TrainedModel.from_dict(json.load(fh))
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: not a model file ({exc})")


def _load_inputs(args, model: TrainedModel, with_label: bool):
    feats = _cols(args.features)
    aux_cols = _cols(args.aux_features) if model.uses_aux else []
    if model.uses_aux and len(aux_cols) != model.model.m2:
        raise UsageError(f"model needs {model.model.m2} auxiliary columns, got {len(aux_cols)}")
    ds = load_csv(args.input, CsvSchema(feats, args.label if with_label else None, aux_cols))
    X = ds.X
    A = ds.A if hasattr(ds, "A") else np.zeros((X.shape[0], 0))
    y = ds.y if with_label else None
    X, A = _apply_stats(model.stats, X, A)
    return X, A, y


def cmd_predict(args):
    model = _load_model(args.model)
    X, A, _ = _load_inputs(args, model, with_label=False)
    s = decision_scores(model, X, A if model.uses_aux else None)
    lines = ["score,label"] + [f"{format_float(v)},{1 if v >= 0 else -1}" for v in s]
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_evaluate(args):
    model = _load_model(args.model)
    X, A, y = _load_inputs(args, model, with_label=True)
    acc = evaluate(model, FullDataset(X, A, y))
    _emit({"version": 1, "accuracy": acc, "n": int(y.size)}, args.output)


def cmd_synth(args):
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    sp, sa, te = gen_synthetic(args.seed)
    xs = [f"x{i + 1}" for i in range(sp.m1)]
    aa = [f"a{i + 1}" for i in range(sa.m2)]
    write_csv(out / "labeled.csv", xs + ["y"], np.column_stack([sp.X, sp.y]))
    write_csv(out / "aux.csv", xs + aa, np.column_stack([sa.X, sa.A]))
    write_csv(out / "test.csv", xs + aa + ["y"], np.column_stack([te.X, te.A, te.y]))
    print(dumps({"labeled": str(out / "labeled.csv"), "aux": str(out / "aux.csv"),
                 "test": str(out / "test.csv"), "features": ",".join(xs), "aux_features": ",".join(aa)}))


def cmd_experiment(args):
    spec = ExperimentSpec.from_file(args.spec)
    progress = None
    if args.verbose:
        def progress(r, name, res):
            print(f"rep {r} {name}: {res.get('accuracy', res.get('error'))}", file=sys.stderr)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = run_experiment(spec, progress)
    output = args.output or spec.output
    if output:
        write_json(report, output)
        print(format_table(report))
    else:
        print(dumps(report))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="drdj", description="Distributionally robust data join for binary classification.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("match", help="emit the kNN match set as JSON")
    _add_data_args(p)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("feasibility", help="transport-distance certificate for the two radii")
    _add_data_args(p)
    p.add_argument("--r-A", type=float, required=True)
    p.add_argument("--r-P", type=float, required=True)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_feasibility)

    p = sub.add_parser("train", help="fit the data-join classifier")
    _add_data_args(p)
    _add_solver_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-fair", help="fit the fairness-regularized data-join classifier")
    _add_data_args(p)
    _add_solver_args(p)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--p0", type=float, required=True, help="P(group=0, y=+1)")
    p.add_argument("--p1", type=float, required=True, help="P(group=1, y=+1)")
    p.add_argument("--freeze-gamma", action="store_true")
    p.add_argument("--test", help="CSV with features, group and label to report unfairness on")
    p.set_defaults(func=cmd_train_fair)

    p = sub.add_parser("baseline", help="fit LR, RLR or DRLR on the labeled sample")
    _add_data_args(p, labeled=True, aux=False)
    p.add_argument("--kind", choices=("lr", "rlr", "drlr"), required=True)
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--r", type=float, default=0.0)
    p.add_argument("--kappa", type=float, default=0.0)
    p.add_argument("--squared", action="store_true")
    p.add_argument("--T", type=int, default=1500)
    p.add_argument("--step", type=float, default=7e-2)
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--output", "-o")
    p.add_argument("--trace-limit", type=int, default=None)
    p.set_defaults(func=cmd_baseline)

    for name, func, with_label in (("predict", cmd_predict, False), ("evaluate", cmd_evaluate, True)):
        p = sub.add_parser(name, help=f"{name} with a saved model")
        p.add_argument("--model", required=True)
        p.add_argument("--input", required=True)
        p.add_argument("--features", required=True)
        p.add_argument("--aux-features", default="")
        if with_label:
            p.add_argument("--label", default="y")
        p.add_argument("--output", "-o")
        p.set_defaults(func=func)

    p = sub.add_parser("synth", help="write the synthetic shift data as CSV files")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("experiment", help="run an experiment from a JSON spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--output", "-o")
    p.add_argument("--verbose", "-v", action="store_true")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, IsADirectoryError, UnicodeDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
