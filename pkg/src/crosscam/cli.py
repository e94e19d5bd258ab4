"""Command-line front end.

Subcommands mirror the library stages: ``generate`` (scenario only),
``run`` (full pipeline), ``sweep`` (config cross products), ``eval``
(re-score an existing run), ``query`` (metadata lookups against a run)
and ``report`` (human-readable run summary).

Exit codes: 0 success, 1 configuration problem, 2 stage failure,
3 infeasible tile cover. A relative --out is resolved under
$CROSSCAM_OUTPUT_ROOT when that is set.
"""

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from crosscam import scenario as scen
from crosscam.associate import build_tracklets, read_assignment
from crosscam.errors import ConfigError, CrosscamError, InfeasibleCoverError, StageFailure
from crosscam.evalmetrics import mtta
from crosscam.pipeline import PipelineConfig, run_pipeline, sweep
from crosscam.querysvc import QueryStore
from crosscam.roicover import read_masks

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_STAGE = 2
EXIT_COVER = 3


def _resolve_out(path_str: str) -> Path:
    path = Path(path_str)
    root = os.environ.get("CROSSCAM_OUTPUT_ROOT")
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _load_config(args) -> PipelineConfig:
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
    config = PipelineConfig.from_dict(doc)
    if args.seed is not None:
        config.seed = args.seed
    if getattr(args, "out", None):
        config.output_dir = str(_resolve_out(args.out))
    else:
        config.output_dir = str(_resolve_out(config.output_dir))
    return config


def _cmd_generate(args) -> int:
    config = _load_config(args)
    world = scen.generate_scenario(config.scenario, config.seed)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "scenario.json", "w") as fh:
        fh.write(scen.scenario_to_text(world))
    if args.frames:
        for cam in world.cameras:
            for t in range(world.duration_steps):
                frame = scen.render_frame(world, cam.id, t)
                scen.write_pgm(frame.pixels, out / f"cam{cam.id}_t{t:04d}.pgm")
    print(f"scenario written to {out / 'scenario.json'}")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = _load_config(args)
    result = run_pipeline(config)
    print(
        f"run complete: mtta={result.eval_report.mtta_pct:.1f}% "
        f"switches={result.eval_report.id_switches} "
        f"drop={100.0 * result.filter_report.drop_fraction:.1f}% "
        f"bitrate={result.transmission.bitrate_kbps:.1f}kbps "
        f"utilization={result.transmission.utilization_pct:.1f}% "
        f"manifest={result.manifest.manifest_hash[:12]}"
    )
    return EXIT_OK


def _parse_ranges(pairs) -> dict:
    ranges = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects knob=v1,v2,... got {pair!r}")
        knob, _, values = pair.partition("=")
        ranges[knob] = [json.loads(v) for v in values.split(",")]
    return ranges


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    ranges = _parse_ranges(args.set)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "sweep.csv"
    rows = sweep(config, ranges, csv_path, workers=args.workers)
    print(f"{len(rows)} cells -> {csv_path}")
    return EXIT_OK


def _kept_set(report_csv: Path):
    kept = set()
    with open(report_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["kept"] == "1":
                kept.add((int(row["camera_id"]), int(row["t"])))
    return kept


def _cmd_eval(args) -> int:
    run_dir = _resolve_out(args.run_dir)
    with open(run_dir / "scenario.json") as fh:
        world = scen.scenario_from_text(fh.read())
    gt = scen.ground_truth(world)
    report_csv = run_dir / "filter_report.csv"
    if report_csv.exists():
        kept = _kept_set(report_csv)
        gt = [rec for rec in gt if (rec.camera_id, rec.t) in kept]
    assignment = read_assignment(run_dir / "assignment.jsonl")
    config = _load_config(args)
    report = mtta(build_tracklets(assignment), gt, config.evaluation)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def _cmd_query(args) -> int:
    run_dir = _resolve_out(args.run_dir)
    masks = {}
    masks_path = run_dir / "masks.json"
    if masks_path.exists():
        masks = {m.camera_id: m for m in read_masks(masks_path)}
    provider = None
    scenario_path = run_dir / "scenario.json"
    if args.evidence and scenario_path.exists():
        with open(scenario_path) as fh:
            world = scen.scenario_from_text(fh.read())
        provider = lambda cam, t: scen.render_frame(world, cam, t)  # noqa: E731
    store = QueryStore.load(run_dir / "records.jsonl", masks=masks, frame_provider=provider)

    if args.kind == "appearances":
        result = store.query_appearances(args.global_id)
    elif args.kind == "distinct":
        result = store.query_distinct_count((args.t0, args.t1))
    else:
        result = store.query_first_entry(args.global_id)
    print(
        json.dumps(
            {
                "kind": result.kind,
                "value": result.value,
                "evidence_frames": len(result.evidence),
                "bytes_transmitted": result.bytes_transmitted,
            }
        )
    )
    return EXIT_OK


def _cmd_report(args) -> int:
    run_dir = _resolve_out(args.run_dir)
    docs = {}
    for name in ("eval", "transmission", "manifest"):
        path = run_dir / f"{name}.json"
        if path.exists():
            with open(path) as fh:
                docs[name] = json.load(fh)
    if args.json:
        print(json.dumps(docs, indent=2, sort_keys=True))
        return EXIT_OK
    if "eval" in docs:
        print(f"MTTA            {docs['eval']['mtta_pct']:.1f}%")
        print(f"id switches     {docs['eval']['id_switches']}")
    if "transmission" in docs:
        tr = docs["transmission"]
        print(f"transmitted     {tr['total_bytes']:.0f} bytes over {tr['duration_s']:.2f}s")
        print(f"bitrate         {tr['bitrate_kbps']:.1f} kbps")
        print(f"utilization     {tr['utilization_pct']:.1f}%")
        for stage, size in sorted(tr.get("per_stage_bytes", {}).items()):
            print(f"  {stage:<14}{size:.0f} bytes")
    if "manifest" in docs:
        print(f"manifest hash   {docs['manifest']['manifest_hash']}")
    if not docs:
        print(f"no reports found under {run_dir}")
        return EXIT_CONFIG
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crosscam",
        description="deterministic multi-camera tracking pipeline simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default=True):
        p.add_argument("--config", help="JSON config file; missing keys use defaults")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        if out_default:
            p.add_argument("--out", help="output directory (overrides config)")

    p_gen = sub.add_parser("generate", help="write a scenario (and optional frames)")
    common(p_gen)
    p_gen.add_argument("--frames", action="store_true", help="also write rendered PGM frames")
    p_gen.set_defaults(func=_cmd_generate)

    p_run = sub.add_parser("run", help="run the full pipeline")
    common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a config cross product")
    common(p_sweep)
    p_sweep.add_argument(
        "--set",
        action="append",
        metavar="KNOB=V1,V2",
        help="dotted knob and comma-separated JSON values; repeatable",
    )
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_eval = sub.add_parser("eval", help="re-score an existing run directory")
    common(p_eval, out_default=False)
    p_eval.add_argument("run_dir")
    p_eval.set_defaults(func=_cmd_eval)

    p_query = sub.add_parser("query", help="query run metadata")
    p_query.add_argument("run_dir")
    q_sub = p_query.add_subparsers(dest="kind", required=True)
    q_app = q_sub.add_parser("appearances")
    q_app.add_argument("global_id", type=int)
    q_dis = q_sub.add_parser("distinct")
    q_dis.add_argument("t0", type=int)
    q_dis.add_argument("t1", type=int)
    q_first = q_sub.add_parser("first")
    q_first.add_argument("global_id", type=int)
    for q in (q_app, q_dis, q_first):
        q.add_argument("--evidence", action="store_true", help="account evidence bytes")
    p_query.set_defaults(func=_cmd_query)

    p_report = sub.add_parser("report", help="summarize a run directory")
    p_report.add_argument("run_dir")
    p_report.add_argument("--json", action="store_true")
    p_report.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; remap
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return args.func(args)
    except InfeasibleCoverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COVER
    except StageFailure as exc:
        if isinstance(exc.cause, InfeasibleCoverError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_COVER
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ConfigError, FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CrosscamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
