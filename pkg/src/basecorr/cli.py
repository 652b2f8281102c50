"""Command-line interface.

Four subcommands: ``baseline`` (correct a spectra file), ``benchmark`` (the
full splits/methods/penalties sweep), ``eigen`` (dump the penalty
eigenstructure and filter factors), and ``synth`` (generate a synthetic
dataset with ground truth).  Exit codes: 0 success, 2 validation failure,
3 numerical degeneracy, 4 I/O failure.

A config file given via ``--config`` holds ``key=value`` lines (keys are the
long flag names without dashes); explicit flags win over the file.
"""

import argparse
import os
import sys

import numpy as np

from . import evaluation
from .datasets import (
    Dataset,
    DatasetSchema,
    SpectraMatrix,
    SynthSpec,
    load_dataset,
    save_dataset,
    save_spectra_table,
    synth_generate,
)
from .errors import NumericalError, ParameterError, ValidationError
from .evaluation import SchemeConfig, run_benchmark, write_records, write_summary
from .operators import cached_eigensystem, filter_bank
from .smoothers import AirplsConfig, airpls_baseline, eilers_baseline_multi_lambda
from .spbc import SpbcConfig, spbc_i, spbc_n

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _read_config(path):
    values = {}
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{line_no}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _merge_config(args):
    if getattr(args, "config", None):
        for key, value in _read_config(args.config).items():
            if getattr(args, key, None) is None:
                setattr(args, key, value)
    return args


def _require(args, name):
    value = getattr(args, name, None)
    if value is None:
        raise ParameterError(f"--{name.replace('_', '-')} is required for this command")
    return value


def _parse_lambdas(text):
    try:
        lams = [float(v) for v in str(text).split(",") if v != ""]
    except ValueError:
        raise ParameterError(f"--lambda must be a comma list of numbers, got {text!r}") from None
    if not lams:
        raise ParameterError("--lambda list is empty")
    return lams


def _parse_exclusions(text):
    if text is None:
        return []
    try:
        return sorted({int(v) for v in str(text).split(",") if v != ""})
    except ValueError:
        raise ParameterError(
            f"--exclude-samples must be a comma list of row indices, got {text!r}"
        ) from None


def _load(args, analyte_names):
    dataset = load_dataset(_require(args, "input"), DatasetSchema(analytes=tuple(analyte_names)))
    drop = _parse_exclusions(getattr(args, "exclude_samples", None))
    if drop:
        m = dataset.spectra.m
        bad = [i for i in drop if not 0 <= i < m]
        if bad:
            raise ParameterError(f"--exclude-samples indices out of range [0, {m}): {bad}")
        keep = np.setdiff1d(np.arange(m), drop)
        dataset = Dataset(
            spectra=SpectraMatrix(dataset.spectra.values[keep], dataset.wavelengths),
            analytes={k: v[keep] for k, v in dataset.analytes.items()},
            provenance=dataset.provenance + f" (excluded rows {drop})",
        )
    return dataset


def cmd_baseline(args):
    args = _merge_config(args)
    method = _require(args, "method").upper()
    if method not in evaluation.METHODS or method == "NONE":
        raise ParameterError(
            f"--method must be one of EILERS, AIRPLS, SPBC_N, SPBC_I, got {method!r}"
        )
    lams = _parse_lambdas(_require(args, "lam"))
    order = int(args.order or 1)
    out_prefix = _require(args, "output")
    analyte_name = getattr(args, "analyte", None)
    if method in evaluation.SPBC_METHODS and analyte_name is None:
        raise ParameterError(f"--analyte is required for method {method}")
    if method != "EILERS" and len(lams) != 1:
        raise ParameterError(f"{method} takes a single --lambda value, got {lams}")
    if method == "EILERS" and any(lam == 0 for lam in lams):
        print("warning: lambda=0 returns the spectra themselves as baseline; "
              "small penalties are not recommended", file=sys.stderr)

    dataset = _load(args, (analyte_name,) if analyte_name else ())
    x = dataset.spectra.values
    eig = cached_eigensystem(order, x.shape[1])

    outputs = []
    if method == "EILERS":
        bank = filter_bank(eig, lams)
        results = eilers_baseline_multi_lambda(x, eig, bank)
        for lam, res in zip(lams, results):
            outputs.append((lam, res.baseline, res.corrected,
                            f"converged (direct solve, lambda={lam:g})"))
    elif method == "AIRPLS":
        res = airpls_baseline(x, AirplsConfig(lam=lams[0], order=order), eig)
        outputs.append((lams[0], res.baseline, res.corrected,
                        f"stopped after {res.iterations} reweighting iteration(s)"))
    else:
        a = dataset.analyte(analyte_name)
        cfg = SpbcConfig(lam=lams[0], order=order)
        res = spbc_n(x, a, cfg, eig) if method == "SPBC_N" else spbc_i(x, a, cfg, eig)
        status = "converged" if res.converged else "hit max_iter"
        outputs.append((lams[0], res.baseline, x - res.baseline,
                        f"{status} after {res.iterations} iteration(s), "
                        f"final objective {res.objective_trace[-1]:.6g}"))

    suffix = len(outputs) > 1
    for lam, baseline, corrected, message in outputs:
        tag = f"_lam{lam:g}" if suffix else ""
        save_spectra_table(f"{out_prefix}{tag}_baseline.csv", baseline, dataset.wavelengths)
        save_spectra_table(f"{out_prefix}{tag}_corrected.csv", corrected, dataset.wavelengths)
        print(f"{method} lambda={lam:g} order={order}: {message}; "
              f"wrote {out_prefix}{tag}_baseline.csv and {out_prefix}{tag}_corrected.csv")
    return EXIT_OK


def _parse_methods(text):
    configs = []
    for chunk in str(text).split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        name, _, scheme = chunk.partition(":")
        name = name.upper()
        scheme = scheme.lower() or None
        if name in evaluation.SPBC_METHODS and scheme is None:
            scheme = "full"
        configs.append(SchemeConfig(method=name, scheme=scheme,
                                    lam=None if name == "NONE" else 1.0))
    if not configs:
        raise ParameterError("--methods list is empty")
    return configs


def cmd_benchmark(args):
    args = _merge_config(args)
    methods = _parse_methods(_require(args, "methods"))
    analyte = _require(args, "analyte")
    response = _require(args, "response")
    lams = _parse_lambdas(args.lam or "1,10,100,1000")
    n_splits = int(args.splits or 200)
    seed = int(args.seed or 0)
    order = int(args.order or 1)
    n_jobs = int(args.jobs or 1)
    out_dir = _require(args, "output")
    methods = [
        SchemeConfig(method=c.method, scheme=c.scheme, order=order,
                     lam=None if c.method == "NONE" else 1.0)
        for c in methods
    ]
    dataset = _load(args, {analyte, response})
    report = run_benchmark(
        dataset, methods, analyte=analyte, response=response, lambdas=lams,
        n_splits=n_splits, seed=seed, n_jobs=n_jobs,
    )
    os.makedirs(out_dir, exist_ok=True)
    records_path = os.path.join(out_dir, "records.csv")
    summary_path = os.path.join(out_dir, "summary.csv")
    write_records(report, records_path)
    write_summary(report, summary_path)

    print(f"benchmark: {len(report.records)} records over {n_splits} split(s), "
          f"{report.n_failed} failed; wrote {records_path} and {summary_path}")
    print(f"{'method':<10}{'scheme':<9}{'lambda':>8}  {'median MARD':>12}  {'median R2':>10}")
    by_cell = {}
    for s in report.summaries:
        by_cell.setdefault((s.method, s.scheme, s.lam), {})[s.metric] = s.median
    for (method, scheme, lam), medians in by_cell.items():
        lam_text = f"{lam:g}" if lam is not None else "-"
        print(f"{method:<10}{scheme or '-':<9}{lam_text:>8}  "
              f"{medians['mard']:>12.4f}  {medians['r2']:>10.4f}")
    return EXIT_OK


def cmd_eigen(args):
    args = _merge_config(args)
    n = int(_require(args, "n"))
    if n < 2:
        raise ParameterError(f"--n must be >= 2, got {n}")
    order = int(args.order or 1)
    lams = _parse_lambdas(args.lam or "0.001,0.01,0.1,1,10,100,1000")
    out_prefix = _require(args, "output")
    solver = (args.solver or "closed-form").lower()
    if solver not in ("closed-form", "numerical"):
        raise ParameterError(f"--solver must be closed-form or numerical, got {solver!r}")
    if solver == "numerical" or order == 2:
        from .operators import make_operator

        d = make_operator(order, n).dense()
        evals, evecs = np.linalg.eigh(d.T @ d)
        eig_values = evals[::-1].copy()
        eig_values[-order:] = 0.0
        loadings = evecs[:, ::-1].copy()
        from .operators import _fix_signs

        loadings = _fix_signs(loadings)
    else:
        eig = cached_eigensystem(order, n)
        eig_values, loadings = eig.values, eig.loadings
    bank_factors = 1.0 / (1.0 + np.asarray(lams)[:, None] ** 2 * eig_values[None, :])

    values_path = f"{out_prefix}_values.csv"
    loadings_path = f"{out_prefix}_loadings.csv"
    filters_path = f"{out_prefix}_filters.csv"
    with open(values_path, "w") as fh:
        fh.write("j,s_squared\n")
        for j, s2 in enumerate(eig_values, start=1):
            fh.write(f"{j},{s2:.17g}\n")
    with open(loadings_path, "w") as fh:
        fh.write(",".join(f"v{j}" for j in range(1, n + 1)) + "\n")
        for row in loadings:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    with open(filters_path, "w") as fh:
        fh.write("j,s_squared," + ",".join(f"lambda_{lam:g}" for lam in lams) + "\n")
        for j in range(n):
            factors = ",".join(f"{bank_factors[k, j]:.17g}" for k in range(len(lams)))
            fh.write(f"{j + 1},{eig_values[j]:.17g},{factors}\n")
    print(f"eigen: order={order} n={n} solver={solver}; wrote {values_path}, "
          f"{loadings_path}, {filters_path}")
    return EXIT_OK


def cmd_synth(args):
    args = _merge_config(args)
    out_path = _require(args, "output")
    spec = SynthSpec(
        m=int(args.m or 120),
        n=int(args.n or 150),
        baseline_amplitude=float(args.baseline_amplitude or 5.0),
        baseline_smoothness=int(args.smoothness or 3),
        target_r=float(args.target_r if args.target_r is not None else 0.9),
        noise_sigma=float(args.noise_sigma if args.noise_sigma is not None else 0.1),
        seed=int(args.seed or 0),
        signal_amplitude=float(args.signal_amplitude or 1.0),
    )
    dataset = synth_generate(spec)
    save_dataset(dataset, out_path)
    stem, _, _ = out_path.rpartition(".")
    stem = stem or out_path
    baseline_path = f"{stem}_true_baseline.csv"
    signal_path = f"{stem}_true_signal.csv"
    save_spectra_table(baseline_path, dataset.true_baseline, dataset.wavelengths)
    save_spectra_table(signal_path, dataset.true_signal, dataset.wavelengths)
    achieved = np.corrcoef(dataset.analytes["analyte"], dataset.analytes["response"])[0, 1]
    print(f"synth: m={spec.m} n={spec.n} target_r={spec.target_r:g} "
          f"achieved_r={achieved:.4f} seed={spec.seed}; wrote {out_path}, "
          f"{baseline_path}, {signal_path}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="basecorr",
        description="Penalized baseline correction and benchmarking for spectra tables.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; flags override its entries")
    common.add_argument("--seed", help="root random seed (integer, default 0)")

    p = sub.add_parser("baseline", parents=[common],
                       help="estimate baselines and write corrected spectra")
    p.add_argument("--input", help="input dataset file (CSV with wl_* columns)")
    p.add_argument("--output", help="output file prefix")
    p.add_argument("--method", help="EILERS, AIRPLS, SPBC_N or SPBC_I")
    p.add_argument("--lambda", dest="lam",
                   help="penalty value; EILERS accepts a comma list (unitless, default none)")
    p.add_argument("--order", help="difference order, 1 or 2 (default 1)")
    p.add_argument("--analyte", help="analyte column name (required for SPBC methods)")
    p.add_argument("--exclude-samples", dest="exclude_samples",
                   help="comma list of 0-based sample rows to drop")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("benchmark", parents=[common],
                       help="run the split/method/penalty sweep and write records + summary")
    p.add_argument("--input", help="input dataset file")
    p.add_argument("--output", help="output directory for records.csv and summary.csv")
    p.add_argument("--methods", help="comma list like SPBC_N:full,SPBC_I:partial,EILERS")
    p.add_argument("--lambda", dest="lam", help="penalty grid, comma list (default 1,10,100,1000)")
    p.add_argument("--order", help="difference order, 1 or 2 (default 1)")
    p.add_argument("--analyte", help="analyte column used to build baselines")
    p.add_argument("--response", help="response column to predict")
    p.add_argument("--splits", help="number of random splits (default 200)")
    p.add_argument("--jobs", help="parallel worker count (default 1)")
    p.add_argument("--exclude-samples", dest="exclude_samples",
                   help="comma list of 0-based sample rows to drop")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("eigen", parents=[common],
                       help="dump penalty eigenvalues, loading vectors and filter factors")
    p.add_argument("--n", help="channel count (>= 2)")
    p.add_argument("--order", help="difference order, 1 or 2 (default 1)")
    p.add_argument("--lambda", dest="lam",
                   help="penalty list for filter factors (default 0.001..1000 decades)")
    p.add_argument("--solver", help="closed-form (default) or numerical")
    p.add_argument("--output", help="output file prefix")
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic dataset with ground-truth companions")
    p.add_argument("--output", help="output dataset path (.csv)")
    p.add_argument("--m", help="sample count (default 120)")
    p.add_argument("--n", help="channel count (default 150)")
    p.add_argument("--target-r", dest="target_r",
                   help="desired corr(analyte, response) in [-1, 1] (default 0.9)")
    p.add_argument("--noise-sigma", dest="noise_sigma",
                   help="noise standard deviation (default 0.1)")
    p.add_argument("--baseline-amplitude", dest="baseline_amplitude",
                   help="baseline strength multiplier (default 5.0)")
    p.add_argument("--signal-amplitude", dest="signal_amplitude",
                   help="response peak strength (default 1.0)")
    p.add_argument("--smoothness", help="number of low-frequency components (default 3)")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
