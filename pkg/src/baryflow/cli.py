"""Command-line interface: dataset generation, solving, time-series filtering.

Subcommands:

* ``gen {ellipses,sphere-patches,hidden-signal}`` writes a dataset CSV (or a
  time-series CSV for ``hidden-signal``).
* ``solve`` reads a dataset CSV and writes the mapped points, the iteration
  history and a run summary.
* ``filter-timeseries`` turns a time-series CSV into a lagged-covariate
  dataset and solves it.

Dataset CSV format: header row, numeric columns ``x1..xd``, and either a
single ``z`` column (categorical labels, read as strings) or numeric columns
``z1..zm`` (continuous covariates).  Numbers are serialized with 17
significant digits, so re-running with the same configuration and seed
reproduces outputs byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
import time

import numpy as np

from . import __version__
from .costs import parse_cost_spec
from .couplings import Covariates
from .datagen import (
    Dataset,
    TimeSeriesSample,
    cart2sph,
    gen_ellipses,
    gen_hidden_signal,
    gen_sphere_patches,
    lagged_dataset,
    sph2cart,
)
from .errors import BaryflowError, InvalidInputError
from .solver import SolverConfig, solve

__all__ = ["load_dataset", "main", "save_dataset"]

_X_COL = re.compile(r"^x(\d+)$")
_Z_COL = re.compile(r"^z(\d+)$")


def _fmt(value):
    return format(float(value), ".17g")


def _open_input(path):
    if path == "-":
        return sys.stdin, False
    return open(path, "r", newline=""), True


def _open_output(path):
    if path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def load_dataset(source):
    """Parse a dataset CSV from a path, ``-`` (stdin), or a file object."""
    if isinstance(source, (str, os.PathLike)):
        fileobj, should_close = _open_input(os.fspath(source))
    else:
        fileobj, should_close = source, False
    try:
        reader = csv.reader(fileobj)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidInputError("missing header row") from None
        header = [h.strip() for h in header]
        x_cols, z_num_cols = {}, {}
        z_cat_col = None
        for pos, name in enumerate(header):
            m = _X_COL.match(name)
            if m:
                x_cols[int(m.group(1))] = pos
                continue
            m = _Z_COL.match(name)
            if m:
                z_num_cols[int(m.group(1))] = pos
                continue
            if name == "z":
                z_cat_col = pos
                continue
            raise InvalidInputError(f"unexpected column {name!r} in dataset header")
        if not x_cols or sorted(x_cols) != list(range(1, len(x_cols) + 1)):
            raise InvalidInputError("dataset needs contiguous columns x1..xd")
        if z_cat_col is not None and z_num_cols:
            raise InvalidInputError("ambiguous covariates: both 'z' and 'z1..' present")
        if z_cat_col is None and not z_num_cols:
            raise InvalidInputError("dataset needs a 'z' column or columns z1..zm")
        if z_num_cols and sorted(z_num_cols) != list(range(1, len(z_num_cols) + 1)):
            raise InvalidInputError("continuous covariates need contiguous columns z1..zm")

        x_positions = [x_cols[i] for i in sorted(x_cols)]
        z_positions = [z_num_cols[i] for i in sorted(z_num_cols)]
        rows_x, rows_z, labels = [], [], []
        for row in reader:
            if not row:
                continue
            try:
                rows_x.append([float(row[pos]) for pos in x_positions])
            except (ValueError, IndexError):
                raise InvalidInputError(
                    f"non-numeric or missing x value in row {len(rows_x) + 2}"
                ) from None
            if z_cat_col is not None:
                try:
                    labels.append(row[z_cat_col].strip())
                except IndexError:
                    raise InvalidInputError(
                        f"missing covariate in row {len(rows_x) + 1}"
                    ) from None
            else:
                try:
                    rows_z.append([float(row[pos]) for pos in z_positions])
                except (ValueError, IndexError):
                    raise InvalidInputError(
                        f"non-numeric or missing z value in row {len(rows_x) + 1}"
                    ) from None
        if len(rows_x) < 2:
            raise InvalidInputError("dataset needs at least 2 rows")
        x = np.asarray(rows_x, dtype=float)
        if z_cat_col is not None:
            covariates = Covariates.categorical(np.asarray(labels))
        else:
            covariates = Covariates.continuous(np.asarray(rows_z, dtype=float))
        return Dataset(x=x, covariates=covariates)
    finally:
        if should_close:
            fileobj.close()


def _covariate_header_and_rows(covariates):
    if covariates.kind == "categorical":
        return ["z"], [[str(v)] for v in covariates.labels]
    m = covariates.values.shape[1]
    return [f"z{j + 1}" for j in range(m)], [
        [_fmt(v) for v in row] for row in covariates.values
    ]


def save_dataset(dataset, fileobj):
    """Write a dataset CSV (header plus one row per sample)."""
    writer = csv.writer(fileobj, lineterminator="\n")
    d = dataset.dim
    z_header, z_rows = _covariate_header_and_rows(dataset.covariates)
    writer.writerow([f"x{j + 1}" for j in range(d)] + z_header)
    for xi, zi in zip(dataset.x, z_rows):
        writer.writerow([_fmt(v) for v in xi] + zi)


def _write_series_csv(series, fileobj):
    _, phi_x, theta_x = cart2sph(series.x)
    _, phi_w, theta_w = cart2sph(series.w_hidden)
    writer = csv.writer(fileobj, lineterminator="\n")
    writer.writerow(["t", "x_theta", "x_phi", "w_theta", "w_phi"])
    for k in range(series.x.shape[0]):
        writer.writerow([
            str(int(series.t[k])),
            _fmt(theta_x[k]), _fmt(phi_x[k]),
            _fmt(theta_w[k]), _fmt(phi_w[k]),
        ])


def load_series(source):
    """Read a time-series CSV (columns t, x_theta, x_phi[, w_theta, w_phi])."""
    if isinstance(source, (str, os.PathLike)):
        fileobj, should_close = _open_input(os.fspath(source))
    else:
        fileobj, should_close = source, False
    try:
        reader = csv.DictReader(fileobj)
        if reader.fieldnames is None or not {"x_theta", "x_phi"} <= set(reader.fieldnames):
            raise InvalidInputError("time-series CSV needs columns x_theta and x_phi")
        has_w = {"w_theta", "w_phi"} <= set(reader.fieldnames)
        theta, phi, w_theta, w_phi = [], [], [], []
        for row in reader:
            theta.append(float(row["x_theta"]))
            phi.append(float(row["x_phi"]))
            if has_w:
                w_theta.append(float(row["w_theta"]))
                w_phi.append(float(row["w_phi"]))
        if len(theta) < 2:
            raise InvalidInputError("time series needs at least 2 steps")
        x = sph2cart(1.0, np.asarray(phi), np.asarray(theta))
        if has_w:
            w = sph2cart(1.0, np.asarray(w_phi), np.asarray(w_theta))
        else:
            w = np.full_like(x, np.nan)
        return TimeSeriesSample(x=x, w_hidden=w, t=np.arange(len(theta)))
    finally:
        if should_close:
            fileobj.close()


def _write_result_csv(dataset, y, fileobj):
    writer = csv.writer(fileobj, lineterminator="\n")
    d = dataset.dim
    z_header, z_rows = _covariate_header_and_rows(dataset.covariates)
    writer.writerow(
        [f"x{j + 1}" for j in range(d)] + z_header + [f"y{j + 1}" for j in range(d)]
    )
    for xi, zi, yi in zip(dataset.x, z_rows, y):
        writer.writerow([_fmt(v) for v in xi] + zi + [_fmt(v) for v in yi])


def _write_history_csv(history, fileobj):
    writer = csv.writer(fileobj, lineterminator="\n")
    writer.writerow(["iter", "L", "L_C", "L_F", "lambda", "eta", "eta_halvings"])
    for rec in history:
        writer.writerow([
            str(rec.n), _fmt(rec.L), _fmt(rec.L_C), _fmt(rec.L_F),
            _fmt(rec.lam), _fmt(rec.eta), str(rec.eta_halvings),
        ])


def _resolve_seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("BARYFLOW_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InvalidInputError(f"BARYFLOW_SEED must be an integer, got {env!r}") from None
    return 0


def _positive_or_auto(text):
    if text == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError("value must be positive")
    return value


def _cost_spec(text):
    try:
        return parse_cost_spec(text)
    except InvalidInputError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def _add_solver_flags(parser):
    parser.add_argument("--cost", type=_cost_spec, default=parse_cost_spec("l2"),
                        help="l2 | pnorm:<p> | geodesic-sphere | distortion:<omega>")
    parser.add_argument("--problem", choices=("kde", "features"), default="kde")
    parser.add_argument("--feature-degree", type=int, default=2)
    parser.add_argument("--bandwidth-a", type=_positive_or_auto, default="auto")
    parser.add_argument("--bandwidth-b", type=_positive_or_auto, default="auto")
    parser.add_argument("--update", choices=("explicit", "implicit"), default="explicit")
    parser.add_argument("--eta0", type=float, default=0.1)
    parser.add_argument("--niter", type=int, default=2000)
    parser.add_argument("--lambda0", type=_positive_or_auto, default="auto")
    parser.add_argument("--lambda-max", type=float, default=1e6)
    parser.add_argument("--omega-alpha", type=float, default=0.5)
    parser.add_argument("--tol-y", type=float, default=1e-6)
    parser.add_argument("--tol-lf", type=float, default=1e-6)
    parser.add_argument("--precondition", action="store_true")
    parser.add_argument("--seed", type=int, default=None,
                        help="defaults to $BARYFLOW_SEED, else 0")
    parser.add_argument("--output", default="result.csv",
                        help="result CSV path ('-' for stdout)")
    parser.add_argument("--history", default="history.csv", help="history CSV path")
    parser.add_argument("--summary", default="summary.json", help="run summary JSON path")


def _solver_config(args, seed):
    return SolverConfig(
        problem=args.problem,
        update=args.update,
        eta0=args.eta0,
        niter=args.niter,
        lambda0=args.lambda0,
        lambda_max=args.lambda_max,
        omega_alpha=args.omega_alpha,
        tol_y=args.tol_y,
        tol_lf=args.tol_lf,
        precondition=args.precondition,
        bandwidth_a=args.bandwidth_a,
        feature_degree=args.feature_degree,
        seed=seed,
    )


def _config_echo(args, seed, extra=None):
    echo = {
        "cost": args.cost_text,
        "problem": args.problem,
        "feature_degree": args.feature_degree,
        "bandwidth_a": args.bandwidth_a,
        "bandwidth_b": args.bandwidth_b,
        "update": args.update,
        "eta0": args.eta0,
        "niter": args.niter,
        "lambda0": args.lambda0,
        "lambda_max": args.lambda_max,
        "omega_alpha": args.omega_alpha,
        "tol_y": args.tol_y,
        "tol_lf": args.tol_lf,
        "precondition": args.precondition,
        "seed": seed,
        "input": args.input,
        "output": args.output,
        "history": args.history,
        "summary": args.summary,
    }
    if extra:
        echo.update(extra)
    return echo


def _run_solve(args, dataset, config_extra=None):
    seed = _resolve_seed(args)
    if dataset.covariates.kind == "continuous" and args.bandwidth_b != "auto":
        dataset = Dataset(
            x=dataset.x,
            covariates=Covariates.continuous(dataset.covariates.values,
                                             bandwidth_b=args.bandwidth_b),
        )
    config = _solver_config(args, seed)
    started = time.perf_counter()
    result = solve(dataset.x, dataset.covariates, args.cost, config)
    wall = time.perf_counter() - started

    summary = {
        "config": _config_echo(args, seed, config_extra),
        "converged": result.converged,
        "iterations": result.iterations,
        "final_L_C": result.final_L_C,
        "final_L_F": result.final_L_F,
        "final_lambda": result.final_lambda,
        "lambda0": result.lambda0,
        "bandwidth_a": result.bandwidth_a,
        "wall_time_s": wall,
        "version": __version__,
    }

    created = []
    try:
        out, close_out = _open_output(args.output)
        try:
            if close_out:
                created.append(args.output)
            _write_result_csv(dataset, result.y_final, out)
        finally:
            if close_out:
                out.close()
        with open(args.history, "w", newline="") as fh:
            created.append(args.history)
            _write_history_csv(result.history, fh)
        with open(args.summary, "w") as fh:
            created.append(args.summary)
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except BaseException:
        for path in created:
            try:
                os.unlink(path)
            except OSError:
                pass
        raise
    return 0


def _default_n_per_class(args):
    if args.n_per_class is not None:
        return args.n_per_class
    return 250 if args.what == "sphere-patches" else 100


def _cmd_gen(args):
    seed = _resolve_seed(args)
    out, should_close = _open_output(args.output)
    try:
        if args.what == "ellipses":
            save_dataset(gen_ellipses(seed, n_per_class=_default_n_per_class(args)), out)
        elif args.what == "sphere-patches":
            save_dataset(
                gen_sphere_patches(seed, n_per_class=_default_n_per_class(args),
                                   antipodal=not args.same_hemisphere),
                out,
            )
        else:
            _write_series_csv(gen_hidden_signal(seed, steps=args.steps), out)
    finally:
        if should_close:
            out.close()
    return 0


def _cmd_solve(args):
    args.cost_text = args.cost_raw
    dataset = load_dataset(args.input)
    return _run_solve(args, dataset)


def _cmd_filter_timeseries(args):
    args.cost_text = args.cost_raw
    series = load_series(args.input)
    dataset = lagged_dataset(series, space=args.lag_space,
                             bandwidth_b=args.bandwidth_b)
    return _run_solve(args, dataset, config_extra={"lag_space": args.lag_space})


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="baryflow",
        description="Distributional barycenters of conditional samples via penalized gradient flows.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic dataset")
    gen.add_argument("what", choices=("ellipses", "sphere-patches", "hidden-signal"))
    gen.add_argument("--n-per-class", type=int, default=None)
    gen.add_argument("--same-hemisphere", action="store_true",
                     help="sphere-patches: place both patches in one hemisphere")
    gen.add_argument("--steps", type=int, default=1000, help="hidden-signal length")
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--output", default="-", help="output CSV path ('-' for stdout)")
    gen.set_defaults(func=_cmd_gen)

    slv = sub.add_parser("solve", help="solve a dataset CSV")
    slv.add_argument("--input", default="-", help="dataset CSV path ('-' for stdin)")
    _add_solver_flags(slv)
    slv.set_defaults(func=_cmd_solve)

    flt = sub.add_parser("filter-timeseries",
                         help="build lagged covariates from a time-series CSV and solve")
    flt.add_argument("--input", default="-", help="time-series CSV path ('-' for stdin)")
    flt.add_argument("--lag-space", choices=("spherical", "cartesian"), default="spherical")
    _add_solver_flags(flt)
    flt.set_defaults(func=_cmd_filter_timeseries)
    return parser


def main(argv=None):
    """Entry point; returns the process exit status."""
    parser = _build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    # Keep the raw cost string for the summary echo before argparse converts it.
    args = parser.parse_args(argv)
    args.cost_raw = _extract_cost_text(argv)
    try:
        return args.func(args)
    except (BaryflowError, OSError) as err:
        print(f"baryflow: error: {err}", file=sys.stderr)
        return 1


def _extract_cost_text(argv):
    for k, token in enumerate(argv):
        if token == "--cost" and k + 1 < len(argv):
            return argv[k + 1]
        if token.startswith("--cost="):
            return token.split("=", 1)[1]
    return "l2"


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
