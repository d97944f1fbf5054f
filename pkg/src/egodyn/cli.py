"""Command-line entry point: ``egodyn ingest | analyze | synth``.

Exit codes: 0 success, 1 data error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import METRICS, RunConfig, load_config
from .errors import AnalysisError, ConfigError, IngestError
from .ingest import (
    OUTGOING,
    build_networks,
    parse_call_records,
    parse_trait_profiles,
    read_snapshot,
    retain_active_egos,
    write_snapshot,
)
from .rank_dynamics import (
    aggregate,
    ego_matrices,
    stability,
    transition_points,
    write_matrix,
    write_stability,
)
from .signatures import (
    REFERENCE,
    SELF,
    build_signatures,
    reference_distances,
    self_distances,
    write_distances,
)
from .stats import (
    compare_subgroups,
    kde_1d,
    kde_2d,
    kde_grid,
    percentile_split,
    render_table,
    write_kde_1d,
    write_kde_2d,
    write_report,
)
from .synth import GeneratorConfig, TraitEffect, effect_recovery_trial, generate, write_dataset
from .turnover import pooled_by_ego, turnover_series, write_turnover

EXIT_OK, EXIT_DATA, EXIT_CONFIG = 0, 1, 2


def _require(path: Path | None, what: str) -> Path:
    if path is None:
        raise ConfigError(f"no {what} path configured")
    if not path.exists():
        raise ConfigError(f"{what} file not found: {path}")
    return path


def _warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


def cmd_ingest(cfg: RunConfig) -> dict:
    calls_path = _require(cfg.calls, "calls")
    intervals = cfg.intervals()
    window = (intervals[0].start, intervals[-1].end)
    report = parse_call_records(calls_path, window=window, max_malformed=cfg.max_malformed)
    if report.rows_read == 0:
        raise IngestError(f"{calls_path}: no call records (empty input file)")

    networks = build_networks(report.records, intervals)
    retained = retain_active_egos(
        networks, cfg.min_calls, cfg.min_alters, [iv.index for iv in intervals]
    )
    egos_seen = sorted({r.ego_id for r in report.records})
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_snapshot(networks, cfg.snapshot_path)
    with open(cfg.out_dir / "rejected_rows.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["line", "reason"])
        for err in report.errors:
            writer.writerow([err.line, err.reason])
    summary = {
        "records_read": report.rows_read,
        "records_accepted": len(report.records),
        "records_rejected": len(report.errors),
        "records_out_of_window": report.out_of_window,
        "outgoing_records": sum(r.direction == OUTGOING for r in report.records),
        "egos_total": len(egos_seen),
        "egos_retained": len(retained),
        "retained": sorted(retained),
        "min_calls": cfg.min_calls,
        "min_alters": cfg.min_alters,
        "intervals": [
            {"index": iv.index, "start": iv.start.isoformat(), "end": iv.end.isoformat()}
            for iv in intervals
        ],
    }
    with open(cfg.out_dir / "retention.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"records read: {report.rows_read}")
    print(f"records rejected: {len(report.errors)}")
    print(f"records outside study window: {report.out_of_window}")
    print(f"egos retained: {len(retained)} retained of {len(egos_seen)}")
    return summary


def _kde_file(sample, grid, path: Path) -> None:
    try:
        write_kde_1d(grid, kde_1d(sample, grid), path)
    except AnalysisError as exc:
        _warn(f"skipping {path.name}: {exc}")


def _subgroup_outputs(name, samples, partitions, cfg, out: Path) -> None:
    rows = []
    for trait, part in partitions.items():
        try:
            trait_rows = compare_subgroups(samples, part)
        except AnalysisError as exc:
            _warn(f"{name}/{trait}: {exc}")
            continue
        rows.extend(trait_rows)
        high = [v for e in sorted(part.high) for v in samples[e]]
        low = [v for e in sorted(part.low) for v in samples[e]]
        if len(high) + len(low) > 1:
            grid = kde_grid(high + low, cfg.kde_points)
            _kde_file(high, grid, out / f"kde_{name}_{trait}_high.csv")
            _kde_file(low, grid, out / f"kde_{name}_{trait}_low.csv")
    if rows:
        write_report(rows, out / f"report_{name}.csv")
        (out / f"report_{name}.txt").write_text(render_table(rows, title=name), encoding="utf-8")


def cmd_analyze(cfg: RunConfig) -> list[str]:
    snapshot = _require(cfg.snapshot_path, "snapshot")
    networks = read_snapshot(snapshot)
    intervals = cfg.intervals()
    idx = [iv.index for iv in intervals]
    networks = {k: v for k, v in networks.items() if k[1] in idx}
    retained = sorted(retain_active_egos(networks, cfg.min_calls, cfg.min_alters, idx))
    if not retained:
        raise AnalysisError("no ego passes the retention thresholds")
    networks = {k: v for k, v in networks.items() if k[0] in retained}

    partitions = {}
    profiles = {}
    if cfg.traits is not None:
        trait_report = parse_trait_profiles(_require(cfg.traits, "traits"))
        for err in trait_report.errors:
            _warn(f"traits line {err.line}: {err.reason}")
        profiles = trait_report.profiles
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            for trait in cfg.traits_selected:
                partitions[trait] = percentile_split(
                    profiles, trait, cfg.low_q, cfg.high_q, egos=retained
                )
        for w in caught:
            _warn(str(w.message))

    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)

    if partitions:
        with open(out / "subgroups.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["trait", "low_cut", "high_cut", "n_low", "n_middle", "n_high"])
            for trait, p in partitions.items():
                writer.writerow([
                    trait, f"{p.low_cut:.6f}", f"{p.high_cut:.6f}",
                    len(p.low), len(p.middle), len(p.high),
                ])
        for trait in partitions:
            scores = [profiles[e].score(trait) for e in retained if e in profiles]
            if len(scores) > 1:
                _kde_file(scores, kde_grid(scores, cfg.kde_points), out / f"kde_trait_{trait}.csv")

    if "persistence" in cfg.metrics:
        sigs = build_signatures(networks)
        d_self = self_distances(sigs, retained, intervals)
        d_ref = reference_distances(sigs, retained, intervals, cfg.reference_mode, cfg.workers)
        write_distances(d_self + d_ref, out / "distances.csv")
        self_vals = [r.value for r in d_self]
        ref_vals = [r.value for r in d_ref]
        if len(self_vals) + len(ref_vals) > 1:
            grid = kde_grid(self_vals + ref_vals, cfg.kde_points)
            _kde_file(self_vals, grid, out / f"kde_distances_{SELF}.csv")
            _kde_file(ref_vals, grid, out / f"kde_distances_{REFERENCE}.csv")
        samples: dict[str, list[float]] = {}
        for r in d_self:
            samples.setdefault(r.ego_id, []).append(r.value)
        _subgroup_outputs("persistence", samples, partitions, cfg, out)

    if "turnover" in cfg.metrics:
        records = turnover_series(networks, retained, intervals)
        write_turnover(records, out / "turnover.csv")
        values = [r.jaccard for r in records]
        if len(values) > 1:
            _kde_file(values, kde_grid(values, cfg.kde_points), out / "kde_turnover.csv")
        _subgroup_outputs("turnover", pooled_by_ego(records), partitions, cfg, out)

    if "netsize" in cfg.metrics:
        samples = {e: [float(networks[(e, i)].size) for i in idx] for e in retained}
        values = [v for e in retained for v in samples[e]]
        if len(values) > 1:
            _kde_file(values, kde_grid(values, cfg.kde_points), out / "kde_netsize.csv")
        _subgroup_outputs("netsize", samples, partitions, cfg, out)

    if "rankdyn" in cfg.metrics:
        matrices = ego_matrices(networks, retained, intervals, cfg.max_rank)
        by_ego: dict[str, list] = {}
        for m in matrices:
            by_ego.setdefault(m.ego_id, []).append(m)
        groups = [("population", "all", retained)]
        for trait, p in partitions.items():
            for label, members in (("high", p.high), ("low", p.low), ("middle", p.middle)):
                groups.append((trait, label, sorted(members)))
        entries = []
        for trait, label, members in groups:
            if not members:
                _warn(f"rankdyn: subgroup {trait}/{label} is empty")
                continue
            chosen = [m for e in members for m in by_ego[e]]
            b = aggregate(chosen, f"{trait}/{label}", cfg.normalizer)
            stem = "population" if trait == "population" else f"{trait}_{label}"
            write_matrix(b, out / f"transition_{stem}.csv")
            entries.append({
                "trait": trait,
                "subgroup": label,
                "C": stability(b, cfg.stability_n),
                "n_matrices": b.n_matrices,
                "n_egos": b.n_egos,
            })
            points = transition_points(chosen, cfg.stability_n)
            n = cfg.stability_n
            axis = np.linspace(0.5, n + 0.5, 4 * n + 1)
            try:
                write_kde_2d(axis, axis, kde_2d(points, axis, axis), out / f"kde2d_rankdyn_{stem}.csv")
            except AnalysisError as exc:
                _warn(f"skipping 2-D KDE for {stem}: {exc}")
        write_stability(entries, out / "stability.json")

    files = sorted(p for p in out.iterdir() if p.is_file() and p.name != "run_manifest.json")
    manifest = {
        "tool": "egodyn",
        "version": __version__,
        "config_sha256": cfg.config_hash(),
        "metrics": list(cfg.metrics),
        "egos_retained": len(retained),
        "files": {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in files},
    }
    with open(out / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"analyzed {len(retained)} egos; wrote {len(files) + 1} files to {out}")
    return [p.name for p in files]


def generator_config(cfg: RunConfig) -> GeneratorConfig:
    effects = {
        trait: TraitEffect(churn_slope=v.get("churn", 0.0), noise_slope=v.get("noise", 0.0))
        for trait, v in sorted(cfg.synth_effects.items())
    }
    try:
        return GeneratorConfig(
            seed=cfg.seed,
            n_intervals=cfg.n_intervals,
            study_start=cfg.study_start,
            interval_days=cfg.interval_days,
            trait_effect=effects,
            **cfg.synth,
        )
    except TypeError as exc:
        raise ConfigError(f"bad synth_* key: {exc}") from None


def cmd_synth(cfg: RunConfig, trial: bool = False):
    gen = generator_config(cfg)
    if trial:
        trait = cfg.traits_selected[0]
        result = effect_recovery_trial(
            gen,
            cfg.trial_metric,
            trait,
            min_calls=cfg.min_calls,
            min_alters=cfg.min_alters,
            low_q=cfg.low_q,
            high_q=cfg.high_q,
        )
        print(
            f"trial metric={cfg.trial_metric} trait={trait} seed={cfg.seed}: "
            f"KW H={result.statistic:.6f} p={result.p_value:.6f} {result.stars}"
        )
        return result
    data = generate(gen)
    paths = write_dataset(data, cfg.out_dir)
    print(f"generated {len(data.records)} call records for {len(data.profiles)} egos in {cfg.out_dir}")
    return paths


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="egodyn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"egodyn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="flat key = value config file")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--trait", help="one Big-Five trait or 'all'")
        p.add_argument("--workers", type=int)

    p = sub.add_parser("ingest", help="parse calls, build networks, apply retention filter")
    common(p)
    p.add_argument("--calls", type=Path)

    p = sub.add_parser("analyze", help="compute metrics, subgroup reports and KDE data")
    common(p)
    p.add_argument("--metrics", help=f"comma list from {','.join(METRICS)}")
    p.add_argument("--snapshot", type=Path)
    p.add_argument("--traits", type=Path)

    p = sub.add_parser("synth", help="generate a synthetic population (or run one trial)")
    common(p)
    p.add_argument("--trial", action="store_true", help="run one effect-recovery trial")
    return parser


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    if args.out is not None:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.trait is not None:
        cfg.trait = args.trait
    if args.workers is not None:
        cfg.workers = args.workers
    if getattr(args, "calls", None) is not None:
        cfg.calls = args.calls
    if getattr(args, "traits", None) is not None:
        cfg.traits = args.traits
    if getattr(args, "snapshot", None) is not None:
        cfg.snapshot = args.snapshot
    if getattr(args, "metrics", None) is not None:
        cfg.metrics = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    return cfg.validate()


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "ingest":
            cmd_ingest(cfg)
        elif args.command == "analyze":
            cmd_analyze(cfg)
        else:
            cmd_synth(cfg, trial=args.trial)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestError, AnalysisError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
