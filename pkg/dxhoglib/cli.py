"""Command-line entry point: `dxhog bounds|trial|spoof|optimize|verify|selftest ...`.

Results go to stdout with 10 significant digits; logs and progress bars go to stderr. Exit code 0
means success, 1 a usage or input error, 2 a numeric or verification failure.
"""

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import NoReturn

import pydantic

from dxhoglib.bounds import (
    EnsembleName,
    get_ensemble,
    hm_lb_bits,
    lb_eps_opt,
    lb_min_m,
    norm_bounds,
    sweep_table,
    ub_eps,
    ub_min_m,
    write_table,
)
from dxhoglib.config_definition.dxhog import DxhogConfig
from dxhoglib.exceptions import (
    BoundUnreachableError,
    DxhogError,
    ParamsFileError,
    UsageError,
    VerificationError,
)
from dxhoglib.protocol import (
    XebSummary,
    certify,
    make_instance,
    parse_trial_mode,
    read_records,
    run_batch,
    summarize,
    verify_records,
)
from dxhoglib.selftest import CheckLevel, run_selftest
from dxhoglib.spoof import run_spoof
from dxhoglib.util.logger import get_logger, set_verbosity
from dxhoglib.util.random import INIT_OFFSET, child_stream, os_seed
from dxhoglib.variational import (
    build_layout,
    optimize_ansatz,
    params_record,
    write_params,
)

logger = get_logger("cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _fmt(value: float) -> str:
    return f"{value:.10g}"


def _print_summary(summary: XebSummary) -> None:
    print(f"trials  {summary.k}")
    print(f"mean    {_fmt(summary.mean)}")
    print(f"stderr  {_fmt(summary.stderr)}")
    for mode, part in summary.per_mode.items():
        print(f"  {mode}: mean {_fmt(part.mean)} stderr {_fmt(part.stderr)} ({part.k} trials)")


def _seed(args: argparse.Namespace, config: DxhogConfig) -> int:
    """The explicit master seed: --seed, else the configured seed; `os` draws a fresh one."""
    raw = args.seed if args.seed is not None else config.seed
    if raw is None:
        raise UsageError("This command needs an explicit --seed (an integer or `os`).")
    if raw == "os":
        seed = os_seed()
        print(f"seed {seed}", file=sys.stderr)
        return seed
    try:
        seed = int(raw)
    except ValueError as err:
        raise UsageError(f"--seed must be a non-negative integer or `os`, got {raw!r}.") from err
    if seed < 0:
        raise UsageError(f"--seed must be non-negative, got {seed}.")
    return seed


def _threads(args: argparse.Namespace, config: DxhogConfig) -> int | None:
    return args.threads if args.threads is not None else config.trial.threads


def _out_path(args: argparse.Namespace, config: DxhogConfig, default_name: str) -> Path:
    return Path(args.out) if args.out else Path(config.trial.out_dir) / default_name


def _ensemble(name: str, t_max: int, delta: float):
    kwargs = {"t_max": t_max, "delta": delta} if name == EnsembleName.DESIGN else {}
    return get_ensemble(EnsembleName(name), **kwargs)


def _bounds_lower(args: argparse.Namespace, config: DxhogConfig) -> int:
    ensemble = _ensemble(args.ensemble, args.t_max, args.delta)
    if args.m is not None:
        eps, a_star = lb_eps_opt(args.n, args.m, norm_bounds(ensemble, args.n))
        print(f"{_fmt(eps)} {_fmt(a_star)}")
    else:
        print(lb_min_m(args.n, ensemble, args.eps))
    return EXIT_OK


def _bounds_upper(args: argparse.Namespace, config: DxhogConfig) -> int:
    if args.m is not None:
        print(_fmt(ub_eps(args.n, args.m)))
    else:
        print(ub_min_m(args.n, args.eps))
    return EXIT_OK


def _bounds_sweep(args: argparse.Namespace, config: DxhogConfig) -> int:
    ensembles = [_ensemble(name, args.t_max, args.delta) for name in args.ensemble]
    rows = sweep_table(args.n, ensembles, eps=args.eps, m_values=args.m)
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as f:
            write_table(rows, f)
        logger.info("Wrote %d rows to %s", len(rows), path)
    else:
        write_table(rows, sys.stdout)
    return EXIT_OK


def _bounds_hm(args: argparse.Namespace, config: DxhogConfig) -> int:
    print(_fmt(hm_lb_bits(args.n, args.eps)))
    return EXIT_OK


def _trial_run(args: argparse.Namespace, config: DxhogConfig) -> int:
    seed = _seed(args, config)
    mode = parse_trial_mode(args.mode)
    out = _out_path(args, config, f"trials-n{args.n}-seed{seed}.jsonl")
    summary, _ = run_batch(
        args.n,
        args.trials,
        mode,
        seed,
        out=out,
        threads=_threads(args, config),
        progress=not args.quiet,
    )
    _print_summary(summary)

    if args.certify is None:
        return EXIT_OK
    k_sigma = args.k_sigma if args.k_sigma is not None else config.trial.k_sigma
    result = certify(summary, args.certify, k_sigma)
    verdict = "PASS" if result.passed else "FAIL"
    print(f"certify eps={_fmt(args.certify)} k_sigma={_fmt(k_sigma)}: {verdict}")
    print(f"margin  {_fmt(result.margin)}")
    return EXIT_OK if result.passed else EXIT_FAILURE


def _spoof_run(args: argparse.Namespace, config: DxhogConfig) -> int:
    seed = _seed(args, config)
    out = _out_path(args, config, f"spoof-n{args.n}-m{args.m}-seed{seed}.jsonl")
    summary, _ = run_spoof(
        args.n,
        args.m,
        args.trials,
        seed,
        rerandomize=args.rerandomize,
        out=out,
        threads=_threads(args, config),
        progress=not args.quiet,
    )
    _print_summary(summary)
    return EXIT_OK


def _optimize(args: argparse.Namespace, config: DxhogConfig) -> int:
    seed = _seed(args, config)
    layout = build_layout(args.n, args.depth)
    constants = config.noise.constants()
    optimizer = config.optimizer
    if args.max_iter is not None:
        optimizer = optimizer.model_copy(update={"max_iter": args.max_iter})
    opts = optimizer.options(progress=not args.quiet)

    indices = [args.index] if args.index is not None else range(args.instances)
    records = []
    for index in indices:
        instance = make_instance(args.n, seed, index)
        result = optimize_ansatz(
            layout, instance.state, constants, opts, child_stream(seed, INIT_OFFSET + index)
        )
        records.append(params_record(layout, result, seed=seed, index=index))
        print(
            f"{index} F={_fmt(result.predicted_fidelity)} overlap={_fmt(result.overlap)} "
            f"noise={_fmt(result.noise_factor)} iterations={result.iterations} "
            f"converged={result.converged}"
        )

    out = _out_path(args, config, f"params-n{args.n}-d{args.depth}-seed{seed}.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_params(records, out)
    logger.info("Wrote %d parameter records to %s", len(records), out)
    return EXIT_OK


def _verify_records(args: argparse.Namespace, config: DxhogConfig) -> int:
    path = Path(args.path)
    if not path.is_file():
        raise UsageError(f"Records file {path} not found.")
    records = read_records(path)
    atol = args.atol if args.atol is not None else config.tolerance.verify_atol
    mismatches = verify_records(records, atol=atol)
    for mismatch in mismatches:
        outcome = ""
        if mismatch.replayed_z != mismatch.logged_z:
            outcome = f", outcome {mismatch.logged_z} replays as {mismatch.replayed_z}"
        print(
            f"line {mismatch.line}: logged {mismatch.logged!r} "
            f"recomputed {mismatch.recomputed!r}{outcome}"
        )
    if mismatches:
        raise VerificationError(f"{len(mismatches)} of {len(records)} records do not verify.")

    print(f"{len(records)} records verified")
    if len(records) >= 2:
        _print_summary(summarize(records))
    return EXIT_OK


def _selftest(args: argparse.Namespace, config: DxhogConfig) -> int:
    results = run_selftest(CheckLevel(args.level))
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        detail = f": {result.detail}" if result.detail else ""
        print(f"{status} {result.name} ({result.seconds:.2f} s){detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_FAILURE if failed else EXIT_OK


def _common_parser() -> argparse.ArgumentParser:
    common = _ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file overriding the packaged defaults.")
    common.add_argument("--seed", help="Master seed (non-negative integer, or `os`).")
    common.add_argument("--threads", type=int, help="Worker threads for trial pools.")
    common.add_argument("--quiet", action="store_true", help="Only warnings on stderr.")
    common.add_argument("--verbose", action="store_true", help="Debug logging on stderr.")
    return common


def _add_ensemble_args(parser: argparse.ArgumentParser, many: bool = False) -> None:
    choices = [str(name) for name in EnsembleName]
    if many:
        parser.add_argument("--ensemble", nargs="+", choices=choices, default=["clifford"])
    else:
        parser.add_argument("--ensemble", choices=choices, default="clifford")
    parser.add_argument("--t-max", type=int, default=1, help="Design order (design ensemble).")
    parser.add_argument("--delta", type=float, default=0.0, help="Design error (design ensemble).")


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = _ArgumentParser(prog="dxhog", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True)

    # bounds
    bounds = commands.add_parser("bounds", help="Classical communication bounds.")
    bounds_cmds = bounds.add_subparsers(dest="bounds_command", required=True)

    lower = bounds_cmds.add_parser("lower", parents=[common], help="Lower bound (Clifford etc.).")
    lower.add_argument("--n", type=int, required=True)
    _add_ensemble_args(lower)
    target = lower.add_mutually_exclusive_group(required=True)
    target.add_argument("--eps", type=float, help="Print the minimal m reaching this XEB.")
    target.add_argument("--m", type=int, help="Print eps_lb_opt and a* at this m.")
    lower.set_defaults(handler=_bounds_lower)

    upper = bounds_cmds.add_parser("upper", parents=[common], help="Codebook protocol bound.")
    upper.add_argument("--n", type=int, required=True)
    target = upper.add_mutually_exclusive_group(required=True)
    target.add_argument("--eps", type=float, help="Print the m the codebook needs for this XEB.")
    target.add_argument("--m", type=float, help="Print the XEB the codebook reaches with m bits.")
    upper.set_defaults(handler=_bounds_upper)

    sweep = bounds_cmds.add_parser("sweep", parents=[common], help="CSV table of both bounds.")
    sweep.add_argument("--n", type=int, nargs="+", required=True)
    _add_ensemble_args(sweep, many=True)
    target = sweep.add_mutually_exclusive_group(required=True)
    target.add_argument("--eps", type=float)
    target.add_argument("--m", type=int, nargs="+")
    sweep.add_argument("--out", help="CSV path (stdout if omitted).")
    sweep.set_defaults(handler=_bounds_sweep)

    hm = bounds_cmds.add_parser("hm", parents=[common], help="Hidden Matching lower bound.")
    hm.add_argument("--n", type=int, required=True)
    hm.add_argument("--eps", type=float, required=True)
    hm.set_defaults(handler=_bounds_hm)

    # trial
    trial = commands.add_parser("trial", help="Simulated DXHOG trials.")
    trial_cmds = trial.add_subparsers(dest="trial_command", required=True)
    trial_run = trial_cmds.add_parser("run", parents=[common], help="Run a batch of trials.")
    trial_run.add_argument("--n", type=int, required=True)
    trial_run.add_argument("--trials", type=int, required=True)
    trial_run.add_argument(
        "--mode",
        default="ideal",
        help="ideal | depolarizing:F | ansatz:PARAMS.jsonl | noisy_ansatz:PARAMS.jsonl",
    )
    trial_run.add_argument("--out", help="JSONL records path.")
    trial_run.add_argument("--certify", type=float, metavar="EPS", help="Certify mean >= EPS.")
    trial_run.add_argument("--k-sigma", type=float, help="Standard errors of certification slack.")
    trial_run.set_defaults(handler=_trial_run)

    # spoof
    spoof = commands.add_parser("spoof", help="Codebook spoofing with Haar measurements.")
    spoof_cmds = spoof.add_subparsers(dest="spoof_command", required=True)
    spoof_run = spoof_cmds.add_parser("run", parents=[common], help="Run spoofed trials.")
    spoof_run.add_argument("--n", type=int, required=True)
    spoof_run.add_argument("--m", type=int, required=True, help="Codebook bits.")
    spoof_run.add_argument("--trials", type=int, required=True)
    spoof_run.add_argument("--rerandomize", action="store_true", help="Shared Haar V per trial.")
    spoof_run.add_argument("--out", help="JSONL records path.")
    spoof_run.set_defaults(handler=_spoof_run)

    # optimize
    optimize = commands.add_parser("optimize", parents=[common], help="Train brickwork ansatze.")
    optimize.add_argument("--n", type=int, required=True)
    optimize.add_argument("--depth", type=int, required=True)
    which = optimize.add_mutually_exclusive_group()
    which.add_argument("--instances", type=int, default=1, help="Train instances 0..K-1.")
    which.add_argument("--index", type=int, help="Train a single instance.")
    optimize.add_argument("--max-iter", type=int)
    optimize.add_argument("--out", help="Params JSONL path.")
    optimize.set_defaults(handler=_optimize)

    # verify
    verify = commands.add_parser("verify", help="Recompute logged scores.")
    verify_cmds = verify.add_subparsers(dest="verify_command", required=True)
    verify_run = verify_cmds.add_parser("records", parents=[common], help="Verify a JSONL file.")
    verify_run.add_argument("path")
    verify_run.add_argument("--atol", type=float, help="Allowed score difference (0: bitwise).")
    verify_run.set_defaults(handler=_verify_records)

    # selftest
    selftest = commands.add_parser("selftest", help="Built-in consistency checks.")
    selftest_cmds = selftest.add_subparsers(dest="level", required=True)
    for level in CheckLevel:
        selftest_cmds.add_parser(str(level), parents=[common]).set_defaults(handler=_selftest)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        set_verbosity(quiet=args.quiet, verbose=args.verbose)
        config = DxhogConfig.load(args.config)
        return args.handler(args, config)
    except (UsageError, ParamsFileError, NameError, pydantic.ValidationError) as err:
        print(f"dxhog: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (BoundUnreachableError, VerificationError) as err:
        print(f"dxhog: {err}", file=sys.stderr)
        return EXIT_FAILURE
    except (DxhogError, ValueError) as err:
        print(f"dxhog: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
