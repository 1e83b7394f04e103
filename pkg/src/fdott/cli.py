"""Command-line front end: ``fdott {test,posthoc,simulate,local-power,oracle}``.

Count data is read from CSV.  A single file holds either long-form counts
(``group,category,count``) or raw observations (``group,category``).  Several
files are read as one group each, in the order given, with ``category,count``
or ``category`` columns.  Group labels that are all integers are ordered
numerically, otherwise lexicographically; column ``k`` of the design matrix
refers to the ``k``-th label in that order.

Exit codes: 0 success, 2 input error, 3 solver or convergence failure,
4 oracle mismatch.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import checks
from ._version import __version__
from .design import parse_design
from .errors import ConvergenceError, InputError, SolverError
from .inference import NULL_METHODS, local_power, normalize_method, run_test
from .measures import CostMatrix, GroupSamples, grid_euclidean_cost
from .posthoc import tukey_hsd
from .sim import ExperimentConfig, local_alternative, run_experiment

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_ORACLE = 0, 2, 3, 4
METHOD_CHOICES = ("plugin", "plugin-pooled", "boot-m", "boot-deriv", "perm") + NULL_METHODS


# -- input ------------------------------------------------------------------

def _read_rows(path):
    """Header and data rows of a CSV file, with 1-based line numbers."""
    try:
        with open(path, newline="") as fh:
            rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1)
                    if r and any(x.strip() for x in r)]
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip().lower() for h in rows[0][1]]
    return header, rows[1:]


def _int_field(path, line, col, value, minimum=0):
    try:
        x = int(value.strip())
    except ValueError:
        raise InputError(f"{path}: row {line}, column {col!r}: expected an integer, got {value!r}")
    if x < minimum:
        raise InputError(f"{path}: row {line}, column {col!r}: must be >= {minimum}, got {x}")
    return x


def _columns(path, header, wanted, optional=()):
    missing = [w for w in wanted if w not in header]
    if missing:
        raise InputError(f"{path}: row 1: missing column(s) {', '.join(missing)}")
    return {w: header.index(w) for w in list(wanted) + [o for o in optional if o in header]}


def _get(path, line, row, idx, name):
    j = idx[name]
    if j >= len(row):
        raise InputError(f"{path}: row {line}, column {name!r}: missing value")
    return row[j]


def _label_order(labels):
    labels = sorted(set(labels))
    try:
        return sorted(labels, key=int)
    except ValueError:
        return labels


def _accumulate(path, rows, idx, n_points, group_of):
    """Sum counts per (group, category) from parsed rows."""
    cells = []
    for line, row in rows:
        g = group_of(line, row)
        cat = _int_field(path, line, "category", _get(path, line, row, idx, "category"))
        if cat >= n_points:
            raise InputError(f"{path}: row {line}, column 'category': {cat} outside 0..{n_points - 1}"
                             " of the ground space")
        cnt = 1
        if "count" in idx:
            cnt = _int_field(path, line, "count", _get(path, line, row, idx, "count"))
        cells.append((g, cat, cnt))
    return cells


def load_counts(paths, n_points) -> tuple[GroupSamples, list]:
    """Read count data from one long-form file or one file per group.

    Returns the samples and the ordered group labels.
    """
    paths = list(paths)
    if not paths:
        raise InputError("no input files")
    cells = []
    if len(paths) == 1:
        path = paths[0]
        header, rows = _read_rows(path)
        idx = _columns(path, header, ("group", "category"), ("count",))
        labels = _label_order(_get(path, ln, r, idx, "group").strip() for ln, r in rows)
        pos = {lab: k for k, lab in enumerate(labels)}
        cells = _accumulate(path, rows, idx, n_points,
                            lambda ln, r: pos[_get(path, ln, r, idx, "group").strip()])
    else:
        labels = [str(p) for p in paths]
        for k, path in enumerate(paths):
            header, rows = _read_rows(path)
            idx = _columns(path, header, ("category",), ("count",))
            cells += _accumulate(path, rows, idx, n_points, lambda ln, r, k=k: k)
    if not labels:
        raise InputError("no observations found")
    counts = np.zeros((len(labels), n_points), dtype=np.int64)
    for g, cat, cnt in cells:
        counts[g, cat] += cnt
    return GroupSamples(counts), labels


def load_cost(args) -> CostMatrix:
    """Cost from ``--grid L[,d]`` or an N x N CSV matrix in ``--cost``."""
    if (args.grid is None) == (args.cost is None):
        raise InputError("give exactly one of --grid and --cost")
    if args.grid is not None:
        parts = args.grid.split(",")
        try:
            side, dims = int(parts[0]), int(parts[1]) if len(parts) > 1 else 2
        except (ValueError, IndexError):
            raise InputError(f"--grid expects L or L,d, got {args.grid!r}")
        if len(parts) > 2 or side < 1 or dims < 1:
            raise InputError(f"--grid expects positive L or L,d, got {args.grid!r}")
        return grid_euclidean_cost(side, dims)
    try:
        with open(args.cost, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(x.strip() for x in r)]
    except OSError as exc:
        raise InputError(f"{args.cost}: {exc.strerror}") from exc
    matrix = []
    for i, r in enumerate(rows, start=1):
        try:
            matrix.append([float(x) for x in r])
        except ValueError:
            raise InputError(f"{args.cost}: row {i}: non-numeric entry")
    widths = {len(r) for r in matrix}
    if len(widths) != 1 or widths.pop() != len(matrix):
        raise InputError(f"{args.cost}: cost matrix must be square")
    C = CostMatrix(np.array(matrix))
    if not C.is_identifiable:
        raise InputError(f"{args.cost}: cost needs zero diagonal and positive off-diagonal entries")
    return C


# -- output -----------------------------------------------------------------

def _cell(v):
    if isinstance(v, (list, tuple)):
        return ";".join(str(x) for x in v)
    if isinstance(v, dict):
        return json.dumps(v, sort_keys=True)
    return v


def _csv_text(rows):
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(v) for k, v in r.items()})
    return buf.getvalue()


def _emit(args, payload, rows):
    """Write ``payload`` as JSON or ``rows`` as CSV to ``--out`` or stdout."""
    if args.format == "csv":
        text = _csv_text(rows)
    else:
        text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- subcommands ------------------------------------------------------------

def _design(args, K):
    return parse_design(args.design, n_groups=K)


def cmd_test(args):
    C = load_cost(args)
    data, labels = load_counts(args.inputs, C.n_points)
    L = _design(args, data.n_groups)
    rep = run_test(data, C, L, method=normalize_method(args.method), alpha=args.alpha,
                   J=args.draws, seed=args.seed, gamma=args.gamma, workers=args.threads,
                   statistic=args.statistic)
    d = rep.to_dict()
    d.update(J=args.draws, groups=labels, design=args.design)
    _emit(args, d, [d])
    return EXIT_OK


def cmd_posthoc(args):
    C = load_cost(args)
    data, labels = load_counts(args.inputs, C.n_points)
    L = _design(args, data.n_groups)
    rep = tukey_hsd(data, C, L, alpha=args.alpha, J=args.draws, weighted=args.weighted,
                    seed=args.seed, workers=args.threads)
    d = rep.to_dict()
    d.update(J=args.draws, method="plugin-max", version=__version__, groups=labels,
             design=args.design)
    rows = []
    for m, lab in enumerate(rep.labels):
        name = f"{labels[lab[0]]}-{labels[lab[1]]}" if isinstance(lab, tuple) else str(lab)
        rows.append({"row": name, "statistic": rep.statistics[m], "weight": rep.weights[m],
                     "p_value": rep.p_values[m], "reject": rep.reject[m],
                     "critical_value": rep.critical_value, "alpha": rep.alpha,
                     "J": args.draws, "seed": args.seed, "method": "plugin-max",
                     "weighted": rep.weighted, "version": __version__})
    _emit(args, d, rows)
    return EXIT_OK


def _int_list(text, name):
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise InputError(f"{name} expects comma-separated integers, got {text!r}")


def cmd_simulate(args):
    methods = tuple(m.strip() for m in args.methods.split(","))
    sizes = _int_list(args.sizes, "--sizes")
    layout = args.layout
    try:
        lambdas = tuple(float(x) for x in args.lambdas.split(",")) if args.lambdas else ()
    except ValueError:
        raise InputError(f"--lambdas expects comma-separated numbers, got {args.lambdas!r}")
    if len(sizes) == 1:
        # one size for every group of the layout
        if lambdas:
            sizes = sizes * len(lambdas)
        elif layout == "two-way":
            sizes = sizes * int(np.prod(_int_list(args.shape, "--shape")))
        else:
            sizes = sizes * (4 if layout == "hsd" else 6)
    cfg = ExperimentConfig(layout=layout, setting=args.setting, side=args.side, sizes=sizes,
                           methods=methods, alpha=args.alpha, J=args.draws, R=args.reps,
                           seed=args.seed, lambdas=lambdas,
                           shape=_int_list(args.shape, "--shape"), law=args.law)
    rows = run_experiment(cfg, workers=args.threads)
    for r in rows:
        r["version"] = __version__
    _emit(args, {"config": cfg.to_dict(), "rows": rows, "version": __version__}, rows)
    return EXIT_OK


def cmd_local_power(args):
    sizes = _int_list(args.sizes, "--sizes") if args.sizes else None
    la = local_alternative(args.setting, args.side, sizes)
    C = grid_euclidean_cost(args.side)
    res = local_power(la, C, alpha=args.alpha, J=args.draws, seed=args.seed,
                      flavor=args.statistic, workers=args.threads)
    d = {"power": res.power, "quantile": res.quantile, "setting": args.setting,
         "statistic": args.statistic, "alpha": args.alpha, "J": args.draws, "seed": args.seed,
         "method": "local_shift", "sizes": list(sizes) if sizes else None,
         "version": __version__}
    _emit(args, d, [d])
    return EXIT_OK


def cmd_oracle(args):
    results = checks.run_all(seed=args.seed, scale=args.scale)
    d = {"checks": results, "seed": args.seed, "version": __version__,
         "passed": all(r["passed"] for r in results)}
    _emit(args, d, results)
    return EXIT_OK if d["passed"] else EXIT_ORACLE


# -- parser -----------------------------------------------------------------

def _common(p, fmt="json"):
    p.add_argument("--alpha", type=float, default=0.05, help="significance level")
    p.add_argument("--draws", "-J", type=int, default=1000, help="number of limit draws J")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default=fmt)


def _data_args(p):
    p.add_argument("inputs", nargs="+", help="count CSV file(s)")
    p.add_argument("--design", default="one-way",
                   help="'one-way' or e.g. '2x3:interaction', '2x3:main:A'")
    g = p.add_argument_group("ground cost")
    g.add_argument("--grid", help="Euclidean grid {1..L}^d as 'L' or 'L,d'")
    g.add_argument("--cost", help="CSV file with an N x N cost matrix")


def build_parser():
    parser = argparse.ArgumentParser(prog="fdott", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"fdott {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="test a linear relation among the group distributions")
    _data_args(p)
    p.add_argument("--method", choices=METHOD_CHOICES, default="plugin")
    p.add_argument("--gamma", type=float, default=0.5, help="m-out-of-n exponent")
    p.add_argument("--statistic", choices=("fdott", "barycenter"), default="fdott")
    _common(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("posthoc", help="simultaneous max-test over the rows of the design")
    _data_args(p)
    p.add_argument("--weighted", action="store_true", help="size-balancing pair weights")
    _common(p)
    p.set_defaults(func=cmd_posthoc)

    p = sub.add_parser("simulate", help="rejection frequencies over repeated samples")
    p.add_argument("--layout", choices=("one-way", "two-way", "hsd"), default="one-way")
    p.add_argument("--setting", default="i", help="named setting (i, ii, ...) or 'custom'")
    p.add_argument("--sizes", default="500", help="group size(s), comma separated")
    p.add_argument("--methods", default="plugin",
                   help="comma list, e.g. 'plugin,boot_m_of_n@0.8,barycenter:plugin'")
    p.add_argument("--reps", "-R", type=int, default=250, help="replications R")
    p.add_argument("--side", type=int, default=5, help="grid side L")
    p.add_argument("--lambdas", help="Poisson parameters for --setting custom")
    p.add_argument("--shape", default="2,3", help="two-way factor sizes")
    p.add_argument("--law", choices=("dirichlet1", "normalized_uniform"), default="dirichlet1")
    _common(p, fmt="csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("local-power", help="asymptotic power against a local alternative")
    p.add_argument("--setting", default="v", help="named local setting (i..vi)")
    p.add_argument("--statistic", choices=("fdott", "barycenter"), default="fdott")
    p.add_argument("--sizes", help="group sizes fixing the size ratios (default equal)")
    p.add_argument("--side", type=int, default=5, help="grid side L")
    _common(p)
    p.set_defaults(func=cmd_local_power)

    p = sub.add_parser("oracle", help="cross-check exact solvers against generic LPs")
    p.add_argument("--scale", type=float, default=1.0, help="fraction of the default instance counts")
    _common(p)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "draws", 1) < 1:
            raise InputError("--draws must be at least 1")
        if getattr(args, "threads", 1) < 1:
            raise InputError("--threads must be at least 1")
        return args.func(args)
    except InputError as exc:
        print(f"fdott: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, ConvergenceError) as exc:
        print(f"fdott: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
