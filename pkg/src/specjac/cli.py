"""Command-line harness: configured decoder runs, losslessness verification,
coupling statistics, and parameter sweeps.

All commands are driven by one YAML config plus dotted-path overrides; every
emitted file starts with a header row and carries the master seed and config
fingerprint, so paired-seed comparisons across couplers keep their
provenance.  Wall-clock timings go to stderr only: output files are
byte-identical across repeated runs of the same config and seed.

Exit codes: 0 success / all tests passed, 1 test failure, 2 configuration
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from typing import Any, Iterable, Sequence

import numpy as np

from .config import (
    FIELD_TYPES,
    ExperimentConfig,
    build_config,
    load_config_file,
)
from .couplers import maximal_coupling_cost
from .decoder import CouplerKind, DecodeStats, decode_sjd, decode_vanilla
from .errors import BudgetError, ConfigError
from .model import TabularModel, TargetSampler, TokenSequence
from .oracle import (
    TestReport,
    estimate_gumbel_collision,
    estimate_independent_collision,
    generate_pairs,
    run_lossless_suite,
)
from .prob import independent_collision, renyi2_entropy, tv_distance
from .rng import RandomSource

EXIT_OK = 0
EXIT_TEST_FAILURE = 1
EXIT_CONFIG = 2
EXIT_IO = 3

SWEEP_AXES = {
    "L": ("decode.window", int),
    "cfg_scale": ("sampling.cfg_scale", float),
    "flatness": ("model.flatness", float),
    "coupler": ("decode.coupler", str),
}


def _add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="YAML experiment config")
    parser.add_argument("--seed", type=int, help="override run.seed")
    parser.add_argument("--out", metavar="PATH", help="override output.path")
    parser.add_argument(
        "--format", choices=("csv", "report"), help="override output.format"
    )
    for path in FIELD_TYPES:
        parser.add_argument(f"--{path}", dest=path, metavar="VALUE", help=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specjac",
        description="Speculative Jacobi decoding experiments on enumerable toy models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="run configured decodes, emit per-trial rows")
    _add_common_arguments(gen)

    ver = sub.add_parser(
        "verify-lossless",
        help="compare vanilla and all couplers to the exact sequence law",
    )
    _add_common_arguments(ver)

    stats = sub.add_parser(
        "coupling-stats", help="per-pair collision probabilities and bounds"
    )
    _add_common_arguments(stats)
    stats.add_argument("--pairs", type=int, default=50, help="number of random pairs")
    stats.add_argument("--vocab", type=int, default=16, help="pair vocabulary size")
    stats.add_argument(
        "--trials", type=int, default=20000, help="Monte Carlo draws per pair"
    )
    stats.add_argument(
        "--sharpness-range",
        type=float,
        nargs=2,
        default=(0.25, 3.0),
        metavar=("LO", "HI"),
        help="logit sharpness range controlling the entropy regime",
    )

    sweep = sub.add_parser("sweep", help="sweep one axis with paired seeds")
    _add_common_arguments(sweep)
    sweep.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    sweep.add_argument(
        "--values", required=True, nargs="+", help="axis values (space or comma separated)"
    )
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    data = load_config_file(args.config) if args.config else None
    overrides: dict[str, Any] = {}
    arg_map = vars(args)
    for path in FIELD_TYPES:
        value = arg_map.get(path)
        if value is not None:
            overrides[path] = value
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if args.out is not None:
        overrides["output.path"] = args.out
    if args.format is not None:
        overrides["output.format"] = args.format
    return build_config(data, overrides)


# ---------------------------------------------------------------------------
# Output writers
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)  # shortest exact round-trip representation
    return str(value)


def write_csv(path: str | None, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    def emit(handle) -> None:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])

    if path is None:
        emit(sys.stdout)
    else:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            emit(handle)


def write_reports(
    path: str | None,
    reports: Sequence[TestReport],
    master_seed: int,
    fingerprint: str,
    fmt: str,
) -> None:
    if fmt == "csv":
        header = (
            "name", "value", "threshold", "passed", "samples", "notes",
            "master_seed", "fingerprint",
        )
        rows = [
            (r.name, r.value, r.threshold, r.passed, r.samples, r.notes,
             master_seed, fingerprint)
            for r in reports
        ]
        write_csv(path, header, rows)
        return

    def emit(handle) -> None:
        for report in reports:
            handle.write(f"report={report.name}\n")
            handle.write(f"value={_fmt(report.value)}\n")
            handle.write(f"threshold={_fmt(report.threshold)}\n")
            handle.write(f"passed={_fmt(report.passed)}\n")
            handle.write(f"samples={report.samples}\n")
            handle.write(f"notes={report.notes}\n")
            handle.write(f"master_seed={master_seed}\n")
            handle.write(f"fingerprint={fingerprint}\n")
            handle.write("\n")

    if path is None:
        emit(sys.stdout)
    else:
        with open(path, "w", encoding="utf-8") as handle:
            emit(handle)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _run_decoder(
    config: ExperimentConfig,
    model: TabularModel,
    sampler: TargetSampler,
    trial_rng: RandomSource,
) -> tuple[TokenSequence, DecodeStats]:
    decode = config.decode
    if decode.coupler == "vanilla":
        return decode_vanilla(
            model, config.sampling, decode.length, trial_rng, sampler=sampler
        )
    return decode_sjd(
        model,
        config.sampling,
        decode.length,
        decode.window,
        CouplerKind(decode.coupler),
        trial_rng,
        redraft=decode.redraft,
        sampler=sampler,
    )


GENERATE_HEADER = (
    "row", "fingerprint", "master_seed", "coupler", "window", "cfg_scale",
    "flatness", "trials", "nfe", "nfe_std", "iterations",
    "accepted_per_iteration", "mean_hamming", "mean_beta", "sequence",
)


def cmd_generate(config: ExperimentConfig) -> int:
    model = TabularModel(config.model)
    sampler = TargetSampler(model, config.sampling)
    master = RandomSource(config.run.seed)
    fingerprint = config.fingerprint()
    started = time.perf_counter()

    rows = []
    all_stats: list[DecodeStats] = []
    for k in range(config.run.trials):
        sequence, stats = _run_decoder(config, model, sampler, master.derive("trial", k))
        all_stats.append(stats)
        rows.append((
            f"trial-{k:06d}", fingerprint, config.run.seed, config.decode.coupler,
            config.decode.window, config.sampling.cfg_scale, config.model.flatness,
            1, stats.nfe, None, stats.iterations,
            "|".join(str(c) for c in stats.finalized_counts()),
            stats.mean_hamming(), stats.mean_beta(),
            " ".join(str(t) for t in sequence),
        ))

    nfes = np.array([s.nfe for s in all_stats], dtype=np.float64)
    hammings = [s.mean_hamming() for s in all_stats]
    hammings = [h for h in hammings if h is not None]
    betas = [s.mean_beta() for s in all_stats]
    betas = [b for b in betas if b is not None]
    rows.append((
        "aggregate", fingerprint, config.run.seed, config.decode.coupler,
        config.decode.window, config.sampling.cfg_scale, config.model.flatness,
        config.run.trials, float(nfes.mean()), float(nfes.std()),
        float(np.mean([s.iterations for s in all_stats])),
        _fmt(float(np.mean([s.mean_finalized_per_iteration() for s in all_stats]))),
        float(np.mean(hammings)) if hammings else None,
        float(np.mean(betas)) if betas else None,
        None,
    ))
    write_csv(config.output.path, GENERATE_HEADER, rows)
    elapsed = time.perf_counter() - started
    print(
        f"generate: {config.run.trials} trials, mean nfe {nfes.mean():.3f}, "
        f"wall {elapsed:.2f}s (timing not written to output)",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_verify_lossless(config: ExperimentConfig) -> int:
    total = config.model.vocab_size ** config.decode.length
    if total > 10**6:
        raise BudgetError(
            f"{config.model.vocab_size}^{config.decode.length} = {total} sequences "
            "exceed the enumeration budget of 1e6; reduce model.vocab_size or "
            "decode.length"
        )
    model = TabularModel(config.model)
    started = time.perf_counter()
    reports = run_lossless_suite(
        model,
        config.sampling,
        config.decode.length,
        config.decode.window,
        config.run.trials,
        RandomSource(config.run.seed).derive("lossless"),
        conventions=(config.decode.redraft,),
    )
    write_reports(
        config.output.path, reports, config.run.seed, config.fingerprint(),
        config.output.format,
    )
    passed = sum(1 for r in reports if r.passed)
    elapsed = time.perf_counter() - started
    verdict = "PASS" if passed == len(reports) else "FAIL"
    print(
        f"verify-lossless: {verdict} ({passed}/{len(reports)} reports passed, "
        f"wall {elapsed:.2f}s)",
        file=sys.stderr,
    )
    return EXIT_OK if passed == len(reports) else EXIT_TEST_FAILURE


COUPLING_HEADER = (
    "pair", "vocab", "master_seed", "trials", "tv",
    "independent_analytic", "independent_empirical", "maximal_cost",
    "gumbel_empirical", "gumbel_lower_bound", "renyi2_bound",
)


def cmd_coupling_stats(config: ExperimentConfig, args: argparse.Namespace) -> int:
    seed = config.run.seed
    master = RandomSource(seed)
    pairs = generate_pairs(
        args.vocab, args.pairs, master.derive("pairs"),
        sharpness_range=tuple(args.sharpness_range),
    )
    rows = []
    for i, (p, q) in enumerate(pairs):
        sub = master.derive("estimate", i)
        tv = tv_distance(p, q)
        rows.append((
            i, args.vocab, seed, args.trials, tv,
            independent_collision(p, q),
            estimate_independent_collision(p, q, args.trials, sub.derive("independent")),
            maximal_coupling_cost(p, q),
            estimate_gumbel_collision(p, q, args.trials, sub.derive("gumbel")),
            (1.0 - tv) / (1.0 + tv),
            float(np.exp(-0.5 * (renyi2_entropy(p) + renyi2_entropy(q)))),
        ))
    write_csv(config.output.path, COUPLING_HEADER, rows)
    return EXIT_OK


SWEEP_HEADER = (
    "axis", "value", "fingerprint", "master_seed", "coupler", "window",
    "cfg_scale", "flatness", "trials", "nfe_mean", "nfe_std",
    "accepted_per_iteration_mean", "mean_hamming", "mean_beta",
)


def _parse_axis_values(axis: str, raw_values: Sequence[str]) -> list:
    _, converter = SWEEP_AXES[axis]
    tokens: list[str] = []
    for chunk in raw_values:
        tokens.extend(t for t in chunk.split(",") if t)
    if not tokens:
        raise ConfigError("sweep.values: at least one value required")
    try:
        return [converter(t) for t in tokens]
    except ValueError as exc:
        raise ConfigError(f"sweep.values: {exc}") from exc


def cmd_sweep(config: ExperimentConfig, args: argparse.Namespace) -> int:
    path, _ = SWEEP_AXES[args.axis]
    values = _parse_axis_values(args.axis, args.values)
    master = RandomSource(config.run.seed)
    rows = []
    for value in values:
        varied = config.replace_field(path, value)
        model = TabularModel(varied.model)
        sampler = TargetSampler(model, varied.sampling)
        stats_list = []
        # the k-th trial shares its master key across every sweep value
        for k in range(varied.run.trials):
            _, stats = _run_decoder(varied, model, sampler, master.derive("trial", k))
            stats_list.append(stats)
        nfes = np.array([s.nfe for s in stats_list], dtype=np.float64)
        hammings = [h for h in (s.mean_hamming() for s in stats_list) if h is not None]
        betas = [b for b in (s.mean_beta() for s in stats_list) if b is not None]
        rows.append((
            args.axis, value, varied.fingerprint(), varied.run.seed,
            varied.decode.coupler, varied.decode.window,
            varied.sampling.cfg_scale, varied.model.flatness, varied.run.trials,
            float(nfes.mean()), float(nfes.std()),
            float(np.mean([s.mean_finalized_per_iteration() for s in stats_list])),
            float(np.mean(hammings)) if hammings else None,
            float(np.mean(betas)) if betas else None,
        ))
    write_csv(config.output.path, SWEEP_HEADER, rows)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args)
        if args.command == "generate":
            return cmd_generate(config)
        if args.command == "verify-lossless":
            return cmd_verify_lossless(config)
        if args.command == "coupling-stats":
            return cmd_coupling_stats(config, args)
        if args.command == "sweep":
            return cmd_sweep(config, args)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, BudgetError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def entrypoint() -> None:  # console-script shim
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
