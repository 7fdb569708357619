import argparse
import os
import sys

from src import logs
from src.errors import DimsumError, ParameterError, RegimeError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SUITE_FAILED = 4


class CliParser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this CLI reserves 2 for parameter errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -----------------------------------------------------------------------------
# SHARED ARGUMENTS
# -----------------------------------------------------------------------------
def add_matrix_args(parser, allow_input=True):
    group = parser.add_argument_group("matrix source")
    if allow_input:
        group.add_argument("--input", help="MatrixMarket (.mtx) or TSV triples (.tsv) file")
        group.add_argument("--format", choices=["matrix-market", "tsv"],
                           help="Input format (default: from the file extension)")
    group.add_argument("--m", type=int, help="Rows of a generated matrix")
    group.add_argument("--n", type=int, help="Columns of a generated matrix")
    group.add_argument("--L", type=int, help="Nonzeros per row of a generated matrix")
    values = group.add_mutually_exclusive_group()
    values.add_argument("--binary", dest="value_dist", action="store_const", const="binary",
                        help="Generated values are 1 (default)")
    values.add_argument("--uniform", dest="value_dist", action="store_const", const="uniform01",
                        help="Generated values uniform in (0, 1]")
    values.add_argument("--signs", dest="value_dist", action="store_const", const="signs",
                        help="Generated values are -1 or +1 with equal probability")
    group.add_argument("--lowerbound", action="store_true",
                       help="Generate the lower-bound dataset (needs --n and --L with L | n)")
    # generate has no sampling seed, so --seed names the matrix seed there
    seed_flags = ["--matrix-seed"] if allow_input else ["--matrix-seed", "--seed"]
    group.add_argument(*seed_flags, dest="matrix_seed", type=int, default=0, help="Seed of the matrix generator")


def add_sampling_args(parser):
    parser.add_argument("--algorithm", choices=["naive", "dimsum", "lean"], default="dimsum")
    budget = parser.add_mutually_exclusive_group()
    budget.add_argument("--gamma", type=float, help="Oversampling parameter")
    budget.add_argument("--epsilon", type=float, help="Target relative spectral error; gamma = c*n/epsilon^2")
    parser.add_argument("--c", type=float, default=None, help="Calibration constant used with --epsilon")
    parser.add_argument("--seed", type=int, default=0, help="Master seed for all sampling randomness")
    parser.add_argument("--raw-diagonal", action="store_true",
                        help="Keep the sampled b_jj in DBD instead of the exact 1")


def matrix_spec_from_args(args):
    if getattr(args, "input", None):
        return {"path": args.input, "format": args.format}
    if args.lowerbound:
        return {"generator": "lowerbound", "n": args.n, "L": args.L}
    return {"generator": "random", "m": args.m, "n": args.n, "L": args.L,
            "value_dist": args.value_dist or "binary", "seed": args.matrix_seed}


def describe_source(spec):
    if spec.get("path"):
        return spec["path"]
    return ", ".join(f"{k}={v}" for k, v in spec.items())


def resolve_gamma(args, parser, n):
    """Exactly one of --gamma / --epsilon for sampled algorithms; neither for naive."""
    from src.config import DEFAULT_CALIBRATION_C
    from src.pipelines import gamma_for_epsilon

    if args.algorithm == "naive":
        if args.gamma is not None or args.epsilon is not None:
            parser.error("--algorithm naive takes neither --gamma nor --epsilon")
        return None
    if args.gamma is None and args.epsilon is None:
        parser.error(f"--algorithm {args.algorithm} needs --gamma or --epsilon")
    if args.c is not None and args.epsilon is None:
        parser.error("--c only applies together with --epsilon")
    if args.gamma is not None:
        return args.gamma
    if args.c is None:
        args.c = DEFAULT_CALIBRATION_C
    return gamma_for_epsilon(n, args.epsilon, args.c)


def ensure_dir(path):
    if not os.path.exists(path):
        os.makedirs(path)
    return path


# -----------------------------------------------------------------------------
# COMMANDS
# -----------------------------------------------------------------------------
def cmd_generate(args, parser):
    from src.matrix_core import generate_lowerbound_dataset, generate_random_sparse, validate_matrix, write_matrix
    from src.report import ReportGenerator

    if args.n is None or args.L is None or (not args.lowerbound and args.m is None):
        parser.error("generate needs --n and --L, plus --m unless --lowerbound")

    if args.lowerbound:
        A = generate_lowerbound_dataset(args.n, args.L)
    else:
        A = generate_random_sparse(args.m, args.n, args.L, args.value_dist or "binary", args.matrix_seed)
    validate_matrix(A)

    output = args.output or os.path.join(args.output_dir, "matrix.mtx")
    ensure_dir(os.path.dirname(os.path.abspath(output)))
    write_matrix(A, output, args.format)

    ReportGenerator.print_effective_config("generate", {**vars(args), "output": output})
    ReportGenerator.print_matrix_summary(A.summary(), output)
    logs.info(f"Matrix saved to: {output}")
    return EXIT_OK


def _load_input(args, parser):
    from src.matrix_core import matrix_from_spec

    spec = matrix_spec_from_args(args)
    if not spec.get("path") and (spec["n"] is None or spec["L"] is None
                                 or (spec["generator"] == "random" and spec["m"] is None)):
        parser.error("give --input PATH or generator flags (--m --n --L, or --lowerbound --n --L)")
    A = matrix_from_spec(spec)
    if getattr(args, "require_nonnegative", False) and not A.is_nonnegative:
        raise RegimeError("--require-nonnegative: the input has negative entries")
    return A, spec


def _pipeline(A, args, gamma, engine, keep_log=False):
    """Run the chosen pipeline. Sampled algorithms work on the scaled matrix."""
    from src.matrix_core import column_stats, scale_entries
    from src.pipelines import run_pipeline

    if args.algorithm == "naive":
        return run_pipeline(A, "naive", engine=engine, keep_log=keep_log), None, 1.0, A

    scaled, scale = scale_entries(A)
    stats = column_stats(scaled, engine)
    result = run_pipeline(scaled, args.algorithm, stats, gamma, args.seed, engine, keep_log)
    return result, stats, scale, scaled


def cmd_run(args, parser):
    import pandas as pd

    from src.mr_engine import MapReduceEngine
    from src.report import ReportGenerator, save_json
    from src.spectral import unnormalize, write_dense_tsv, write_similarity

    A, spec = _load_input(args, parser)
    gamma = resolve_gamma(args, parser, A.n_cols)
    if args.algorithm == "lean" and not A.is_nonnegative:
        logs.warn("lean on negative entries: estimates stay unbiased off the diagonal but no tail bound is claimed")

    ReportGenerator.print_effective_config("run", {**vars(args), "gamma": gamma, "source": describe_source(spec)})
    ReportGenerator.print_matrix_summary(A.summary(), describe_source(spec))

    engine = MapReduceEngine(threads=args.threads)
    result, stats, scale, _ = _pipeline(A, args, gamma, engine, keep_log=bool(args.emission_log))
    B = result.similarity

    out_dir = ensure_dir(args.output_dir)
    similarity_path = write_similarity(B, os.path.join(out_dir, "similarity.mtx"))
    save_json(result.stats.to_dict(), os.path.join(out_dir, "run_stats.json"))

    metadata = {
        **B.metadata,
        "source": describe_source(spec),
        "n": B.n,
        "epsilon": args.epsilon,
        "c": args.c,
        "scale_factor": scale,
        "exact_diagonal": False,
        "raw_diagonal": args.raw_diagonal,
        "threads": args.threads,
    }
    if args.unnormalized:
        if stats is None:
            gram = B.entries
        else:
            gram = unnormalize(B, stats, exact_diagonal=not args.raw_diagonal).values * scale ** 2
            metadata["exact_diagonal"] = not args.raw_diagonal
        metadata["unnormalized_path"] = write_dense_tsv(gram, os.path.join(out_dir, "unnormalized.tsv"))
    save_json(metadata, os.path.join(out_dir, "metadata.json"))

    if args.emission_log:
        ensure_dir(os.path.dirname(os.path.abspath(args.emission_log)))
        rows = [(e.key[0], e.key[1], e.value) for e in result.log]
        pd.DataFrame(rows, columns=["j", "k", "value"]).to_csv(args.emission_log, sep="\t", index=False,
                                                              float_format="%.17g")
        if len(rows) != result.stats.shuffle_size:
            logs.warn(f"Emission log holds {len(rows)} rows but shuffle size is {result.stats.shuffle_size}")
        logs.info(f"Emission log saved to: {args.emission_log}")

    ReportGenerator.print_run_stats(result.stats)
    logs.info(f"Similarity matrix saved to: {similarity_path}")
    return EXIT_OK


def cmd_svd(args, parser):
    import numpy as np

    from src.mr_engine import MapReduceEngine
    from src.report import ReportGenerator, save_json
    from src.spectral import (DenseSymmetric, exact_gram, read_dense_tsv, recover_singular_values,
                              relative_spectral_error, unnormalize, write_dense_tsv)

    has_matrix = bool(args.input) or args.n is not None
    if args.estimate is None and not has_matrix:
        parser.error("svd needs an input matrix or --estimate PATH")
    if args.with_oracle and not has_matrix:
        parser.error("--with-oracle needs the input matrix")

    A, spec = _load_input(args, parser) if has_matrix else (None, None)
    scale, error, exact_diagonal, gamma = 1.0, None, None, None
    config = {**vars(args), "source": describe_source(spec) if spec else args.estimate}

    if args.estimate:
        G = DenseSymmetric(read_dense_tsv(args.estimate))
        ReportGenerator.print_effective_config("svd", config)
        truth = exact_gram(A) if args.with_oracle else None
    else:
        gamma = resolve_gamma(args, parser, A.n_cols)
        config["gamma"] = gamma
        ReportGenerator.print_effective_config("svd", config)
        result, stats, scale, scaled = _pipeline(A, args, gamma, MapReduceEngine(threads=args.threads))
        if stats is None:
            G = DenseSymmetric(result.similarity.entries)
            truth = exact_gram(A) if args.with_oracle else None
        else:
            exact_diagonal = not args.raw_diagonal
            G = unnormalize(result.similarity, stats, exact_diagonal=exact_diagonal)
            truth = exact_gram(scaled) if args.with_oracle else None
        ReportGenerator.print_run_stats(result.stats)

    if truth is not None:
        if truth.n != G.n:
            raise ParameterError(f"estimate is {G.n}x{G.n} but the input has {truth.n} columns")
        error = relative_spectral_error(G, truth)

    svd = recover_singular_values(G, method=args.method)
    sigma = svd.sigma * scale

    out_dir = ensure_dir(args.output_dir)
    v_path = write_dense_tsv(svd.V, os.path.join(out_dir, "V.tsv"))
    payload = {
        "sigma": sigma,
        "gamma": gamma,
        "clamped_negative_eigenvalues": svd.clamped_negative,
        "scale_factor": scale,
        "relative_spectral_error": error,
        "exact_diagonal": exact_diagonal,
        "method": args.method,
        "V_path": v_path,
    }
    json_path = save_json(payload, os.path.join(out_dir, "singular_values.json"))

    ReportGenerator.print_singular_values(np.asarray(sigma))
    if error is not None:
        logs.info(f"Relative spectral error vs exact A^T A: {error:.6g}")
    logs.info(f"Singular values saved to: {json_path}")
    return EXIT_OK


def cmd_verify(args, parser):
    from src.report import ReportGenerator, save_json
    from src.verify import SuiteRunner

    runner = SuiteRunner(config_path=args.config, threads=args.threads, progress=args.progress)
    overrides = {"trials": args.trials, "seed": args.seed, "gamma": args.gamma,
                 "m": args.m, "n": args.n, "L": args.L}
    report_dir = ensure_dir(os.path.join(args.output_dir, "verify"))

    reports = []
    for suite in runner.expand(args.suite):
        cfg, report = runner.run(suite, overrides)
        ReportGenerator.print_effective_config(f"verify --suite {suite}", cfg)
        ReportGenerator.print_suite_report(report)
        save_json(report.to_dict(), os.path.join(report_dir, f"{suite}.json"))
        reports.append(report)

    ReportGenerator.save_summary_csv(reports, os.path.join(report_dir, "summary.csv"))
    failed = [r.suite for r in reports if r.status == "FAIL"]
    if failed:
        logs.error(f"Suites failed: {', '.join(failed)}")
        return EXIT_SUITE_FAILED
    logs.info(f"All {len(reports)} suite(s) passed or were skipped.")
    return EXIT_OK


# -----------------------------------------------------------------------------
# MAIN EXECUTION
# -----------------------------------------------------------------------------
def build_parser():
    from src.config import DEFAULT_OUTPUT_DIR, SUITE_DEFAULTS, THREADS_ENV

    parser = CliParser(description="DIMSUM: sampled A^T A on a simulated MapReduce engine")
    parser.add_argument("--quiet", action="store_true", help="Only warnings and errors")
    parser.add_argument("--debug", action="store_true", help="Verbose diagnostics")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"Worker threads (default: ${THREADS_ENV} or 1)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    gen = sub.add_parser("generate", help="Write a synthetic matrix")
    add_matrix_args(gen, allow_input=False)
    gen.add_argument("--output", help="Output file (.mtx or .tsv)")
    gen.add_argument("--format", choices=["matrix-market", "tsv"], help="Output format (default: from extension)")

    run = sub.add_parser("run", help="Run a similarity pipeline")
    add_matrix_args(run)
    add_sampling_args(run)
    run.add_argument("--emission-log", help="Write every map emission as TSV")
    run.add_argument("--unnormalized", action="store_true", help="Also write DBD (Gram estimate) as dense TSV")
    run.add_argument("--require-nonnegative", action="store_true", help="Reject inputs with negative entries")

    svd = sub.add_parser("svd", help="Recover singular values and V")
    add_matrix_args(svd)
    add_sampling_args(svd)
    svd.add_argument("--estimate", help="Precomputed dense TSV estimate of A^T A")
    svd.add_argument("--with-oracle", action="store_true", help="Report error against the exact A^T A")
    svd.add_argument("--method", choices=["eigh", "jacobi"], default="eigh", help="Eigensolver")
    svd.add_argument("--require-nonnegative", action="store_true", help="Reject inputs with negative entries")

    ver = sub.add_parser("verify", help="Run verification suites")
    ver.add_argument("--suite", choices=sorted(SUITE_DEFAULTS) + ["all"], default="all")
    ver.add_argument("--config", help="JSON file with suite parameters")
    ver.add_argument("--trials", type=int)
    ver.add_argument("--seed", type=int)
    ver.add_argument("--gamma", type=float)
    ver.add_argument("--m", type=int)
    ver.add_argument("--n", type=int)
    ver.add_argument("--L", type=int)
    ver.add_argument("--progress", action="store_true", help="Show trial progress bars")

    for command in (gen, run, svd, ver):
        command.add_argument("--output-dir", default=DEFAULT_OUTPUT_DIR, help="Directory for output files")
    return parser


COMMANDS = {
    "generate": cmd_generate,
    "run": cmd_run,
    "svd": cmd_svd,
    "verify": cmd_verify,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.quiet and args.debug:
        parser.error("--quiet and --debug are mutually exclusive")
    logs.set_verbosity("quiet" if args.quiet else "debug" if args.debug else "normal")

    try:
        if args.threads is None:
            from src.config import default_threads
            args.threads = default_threads()
        elif args.threads < 1:
            raise ParameterError(f"--threads must be >= 1, got {args.threads}")
        return COMMANDS[args.command](args, parser)
    except DimsumError as e:
        logs.error(str(e))
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
