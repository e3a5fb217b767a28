"""Command-line front end.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or validation error.

Any long flag can also come from a ``--config`` file of ``key = value``
lines (``#`` comments allowed); flags on the command line win. The
``APC_THREADS`` environment variable overrides ``--threads``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import costmodel, formats
from .awc import ClusteringConfig, cluster_awc, nearest_assign
from .baselines import BaselineConfig, cluster_bmf, cluster_brb_kmeans, hamming_assign
from .codebook import Assignment
from .errors import ApcError, DimensionError, FormatError, InvalidConfigError
from .metrics import CSV_FIELDS, build_report, format_value
from .synthetic import SyntheticSpec, generate_synthetic

log = logging.getLogger("apclust")

ALGORITHMS = ("awc", "bmf", "brbk")
SWEEP_FIELDS = ("algorithm", "density", "seed", *CSV_FIELDS, "mean_row_recall", "error")
TIMING_FIELDS = ("algorithm", "k", "density", "seed", "wall_time_s")


class UsageError(Exception):
    """Bad flags or values that fail validation; exit code 2."""


def _int_list(text):
    return [int(x) for x in str(text).replace(",", " ").split()]


def _float_list(text):
    return [float(x) for x in str(text).replace(",", " ").split()]


def _str_list(text):
    return [x for x in str(text).replace(",", " ").split()]


def thread_count(args) -> int:
    env = os.environ.get("APC_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"APC_THREADS must be an integer, got {env!r}")
    else:
        n = args.threads
    if n < 1:
        raise UsageError("thread count must be >= 1")
    return n


def run_algorithm(name, data, k, density, seed, n_workers, max_iters=50, trace_path=None):
    if name == "awc":
        config = ClusteringConfig(
            k=k, density_p=density, seed=seed, max_iters=max_iters, n_workers=n_workers
        )
        result = cluster_awc(data, config)
        if trace_path:
            with open(trace_path, "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(("iter", "reassigned", "precision"))
                for rec in result.trace:
                    w.writerow((rec.iteration, rec.reassigned, repr(rec.precision)))
        return result
    config = BaselineConfig(k=k, seed=seed, max_iters=max_iters, n_workers=n_workers)
    if name == "bmf":
        return cluster_bmf(data, config)
    if name == "brbk":
        return cluster_brb_kmeans(data, config)
    raise UsageError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")


def _check_k(k, n_rows):
    if k < 1 or k > n_rows:
        raise UsageError(f"k must satisfy 1 <= k <= N, got k = {k} with N = {n_rows}")


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_generate(args):
    spec = SyntheticSpec(
        n_prototypes=args.n_prototypes,
        dim_D=args.dim,
        n_rows=args.n_rows,
        proto_density=tuple(args.proto_density) if len(args.proto_density) > 1 else args.proto_density[0],
        flip_noise=args.flip_noise,
        seed=args.seed,
    )
    try:
        spec.validate()
    except InvalidConfigError as e:
        raise UsageError(str(e))
    data = generate_synthetic(spec, n_workers=thread_count(args))
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    matrix_path = prefix.with_name(prefix.name + ".apcf")
    formats.write_real_matrix(data.matrix, matrix_path)
    formats.write_codebook(data.prototypes, prefix.with_name(prefix.name + ".planted.apcc"))
    formats.DatasetManifest(
        sublayer_label="synthetic",
        dim=spec.dim_D,
        n_rows=spec.n_rows,
        source="planted-prototype generator",
        extra={
            "n_prototypes": spec.n_prototypes,
            "proto_density": list(spec.densities()),
            "flip_noise": spec.flip_noise,
            "seed": spec.seed,
            "planted_assignment": "row i -> prototype i % n_prototypes",
        },
    ).write(formats.manifest_path(matrix_path))
    return 0


def cmd_cluster(args):
    data = formats.read_matrix(args.input)
    _check_k(args.k, data.n_rows)
    if not 0 < args.density <= 1:
        raise UsageError(f"--density must be in (0, 1], got {args.density}")
    result = run_algorithm(
        args.algorithm, data, args.k, args.density, args.seed, thread_count(args),
        args.max_iters, args.trace,
    )
    formats.write_codebook(result.codebook, args.out_codebook)
    report = result.report
    report.extra = {"algorithm": args.algorithm, "seed": args.seed, "iterations": len(result.trace)}
    _write_json(report.to_dict(), args.out_report)
    return 0


def evaluate(data, codebook, distance="overlap", n_workers=1):
    """Nearest-centroid (capacity-free) assignment and its report."""
    if codebook.dim != data.n_cols:
        raise DimensionError(f"codebook dim {codebook.dim} != data dim {data.n_cols}")
    if distance == "overlap":
        assignment = nearest_assign(data, codebook, n_workers)
    else:
        labels, _ = hamming_assign(data.support(), codebook.indicator(), n_workers)
        assignment = Assignment(labels, codebook.k)
    return build_report(data, codebook, assignment), assignment


def cmd_eval(args):
    data = formats.read_matrix(args.input)
    codebook = formats.read_codebook(args.codebook)
    try:
        report, _ = evaluate(data, codebook, args.distance, thread_count(args))
    except DimensionError as e:
        raise UsageError(str(e))
    _write_json(report.to_dict(), args.out)
    return 0


def _sweep(data, algorithms, k_values, densities, seeds, n_workers, max_iters, out, codebook_dir):
    for a in algorithms:
        if a not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {a!r}; choose from {', '.join(ALGORITHMS)}")
    for k in k_values:
        _check_k(k, data.n_rows)
    if not (algorithms and k_values and densities and seeds):
        raise UsageError("every sweep axis needs at least one value")
    if codebook_dir:
        Path(codebook_dir).mkdir(parents=True, exist_ok=True)

    rows, timings = [], []
    cache = {}
    failed = False
    for algorithm in algorithms:
        for k in k_values:
            for density in densities:
                for seed in seeds:
                    # baselines ignore density; run them once per (k, seed)
                    key = (algorithm, k, density if algorithm == "awc" else None, seed)
                    t0 = time.perf_counter()
                    try:
                        if key not in cache:
                            cache[key] = run_algorithm(algorithm, data, k, density, seed, n_workers, max_iters)
                        result = cache[key]
                        report = result.report
                        cells = {name: format_value(getattr(report, name)) for name in CSV_FIELDS}
                        cells["mean_row_recall"] = format_value(report.mean_row_recall)
                        cells["error"] = ""
                        if codebook_dir:
                            name = f"{algorithm}_k{k}_p{density!r}_s{seed}.apcc"
                            formats.write_codebook(result.codebook, Path(codebook_dir) / name)
                    except (ApcError, ValueError) as e:
                        failed = True
                        cells = {name: "" for name in SWEEP_FIELDS}
                        cells["k"] = str(k)
                        cells["error"] = f"{type(e).__name__}: {e}"
                    cells.update(algorithm=algorithm, density=repr(density), seed=str(seed))
                    rows.append([cells[f] for f in SWEEP_FIELDS])
                    timings.append([algorithm, k, repr(density), seed, repr(time.perf_counter() - t0)])

    with open(out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SWEEP_FIELDS)
        w.writerows(rows)
    with open(str(out) + ".timing.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TIMING_FIELDS)
        w.writerows(timings)
    return 1 if failed else 0


def cmd_sweep(args):
    data = formats.read_matrix(args.input)
    return _sweep(
        data, args.algorithms, args.k_values, args.densities, args.seeds,
        thread_count(args), args.max_iters, args.out, args.codebook_dir,
    )


def cmd_compare(args):
    data = formats.read_matrix(args.input)
    return _sweep(
        data, args.algorithms, [args.k], [args.density], args.seeds,
        thread_count(args), args.max_iters, args.out, args.codebook_dir,
    )


def cmd_cost(args):
    try:
        params = costmodel.CostModelParams(
            total_params=args.total_params,
            ffn_fraction=args.ffn_fraction,
            layers_L=args.layers,
            tokens_T=args.tokens,
            per_neuron_cost_C=args.per_neuron_cost,
            clusters_per_sublayer=args.clusters_per_sublayer,
            sublayers=args.sublayers,
        )
    except InvalidConfigError as e:
        raise UsageError(str(e))
    out = costmodel.summary(params)
    out["n_ffn_3sf"] = costmodel.round_sig(out["n_ffn"], 3)
    _write_json(out, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apclust", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="file of key = value lines supplying flag defaults")
        p.add_argument("--threads", type=int, default=1, help="worker threads (APC_THREADS overrides)")
        return p

    p = add("generate", cmd_generate, "write a planted-prototype dataset (APCF + planted APCC + manifest)")
    p.add_argument("--out", default="synthetic", help="output path prefix")
    p.add_argument("--n-prototypes", type=int, default=32)
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--n-rows", type=int, default=10_000)
    p.add_argument("--proto-density", type=_float_list, default=[0.5],
                   help="one density, or a comma list cycled over prototypes")
    p.add_argument("--flip-noise", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=0)

    p = add("cluster", cmd_cluster, "cluster a matrix and write its codebook and report")
    p.add_argument("--input", required=True, help="APCF or APCB file")
    p.add_argument("--algorithm", choices=ALGORITHMS, default="awc")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--density", type=float, default=0.6, help="AWC centroid density p")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--out-codebook", required=True)
    p.add_argument("--out-report", default="-")
    p.add_argument("--trace", help="AWC only: per-iteration CSV (iter, reassigned, precision)")

    p = add("eval", cmd_eval, "assign rows to their nearest centroid and report precision")
    p.add_argument("--input", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--distance", choices=("overlap", "hamming"), default="overlap")
    p.add_argument("--out", default="-")

    p = add("sweep", cmd_sweep, "run algorithms over a grid of k, density and seed")
    p.add_argument("--input", required=True)
    p.add_argument("--algorithms", type=_str_list, default=list(ALGORITHMS))
    p.add_argument("--k-values", type=_int_list, required=True)
    p.add_argument("--densities", type=_float_list, default=[0.4, 0.3, 0.2])
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--out", required=True, help="CSV report (timings go to <out>.timing.csv)")
    p.add_argument("--codebook-dir", help="also write one APCC per cell here")

    p = add("compare", cmd_compare, "all algorithms at a single k and density")
    p.add_argument("--input", required=True)
    p.add_argument("--algorithms", type=_str_list, default=list(ALGORITHMS))
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--density", type=float, default=0.6)
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--out", required=True)
    p.add_argument("--codebook-dir")

    defaults = costmodel.CostModelParams()
    p = add("cost", cmd_cost, "activation-prediction cost: per neuron vs per cluster")
    p.add_argument("--total-params", type=float, default=defaults.total_params)
    p.add_argument("--ffn-fraction", type=float, default=defaults.ffn_fraction)
    p.add_argument("--layers", type=int, default=defaults.layers_L)
    p.add_argument("--tokens", type=int, default=defaults.tokens_T)
    p.add_argument("--per-neuron-cost", type=float, default=defaults.per_neuron_cost_C)
    p.add_argument("--clusters-per-sublayer", type=float, default=defaults.clusters_per_sublayer)
    p.add_argument("--sublayers", type=int, default=defaults.sublayers)
    p.add_argument("--out", default="-")
    return parser


def read_config_file(path) -> dict:
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.lstrip("-").replace("-", "_")] = value
    return out


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            values = read_config_file(args.config)
        except OSError as e:
            raise UsageError(f"cannot read config: {e}")
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in subparser._actions}
        for key in values:
            if key not in known or key in ("config", "help"):
                raise UsageError(f"unknown config key {key!r} for {args.command}")
        # string defaults go through each flag's type converter at parse time
        subparser.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = _parse(argv)
    except SystemExit as e:
        return int(e.code or 0)
    except UsageError as e:
        print(f"apclust: error: {e}", file=sys.stderr)
        return 2
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as e:
        print(f"apclust {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (FormatError, OSError) as e:
        print(f"apclust {args.command}: {e}", file=sys.stderr)
        return 1
    except (InvalidConfigError, DimensionError) as e:
        print(f"apclust {args.command}: error: {e}", file=sys.stderr)
        return 2
    except ApcError as e:
        print(f"apclust {args.command}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
