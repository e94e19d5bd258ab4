"""End-to-end run orchestration.

``run_pipeline`` executes the stages in their dependency order —
scenario generation, rendering, frame filtering, stream encoding,
detection and embedding, association, RoI masking, evaluation,
bandwidth accounting, metadata export — writing every intermediate
artifact under ``output_dir`` and finishing with a manifest whose hash
covers the artifact bytes (wall-clock timings are recorded but excluded,
so two runs of the same config produce the same manifest hash).

``sweep`` expands dotted knob ranges into a config cross product, runs
each cell with its own output directory, and tabulates headline numbers
into one CSV.
"""

import csv
import hashlib
import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from crosscam import codec, percept, querysvc, roicover, scenario as scen
from crosscam.associate import (
    AssocConfig,
    associate_spatial,
    associate_temporal,
    build_tracklets,
    write_assignment,
)
from crosscam.codec import LinkModel
from crosscam.errors import ConfigError, StageFailure
from crosscam.evalmetrics import EvalConfig, mtta
from crosscam.filtering import FilterPolicy, FilterReport, filter_stream
from crosscam.percept import PerceptConfig
from crosscam.scenario import ScenarioConfig

COVER_MODES = roicover.COVER_MODES
CODEC_MODES = ("toy", "analytic")


@dataclass
class PipelineConfig:
    """Everything a run needs; ``seed`` is the single source of randomness
    (the perception seed is overridden with it at run time)."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    filter_policy: FilterPolicy = field(default_factory=FilterPolicy)
    percept: PerceptConfig = field(default_factory=PerceptConfig)
    assoc: AssocConfig = field(default_factory=AssocConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    link: LinkModel = field(default_factory=LinkModel)
    grid_rows: int = 4
    grid_cols: int = 6
    cover_mode: str = "full"
    filter_enabled: bool = True
    mask_enabled: bool = True
    codec_mode: str = "toy"
    quality_factor: float = 1.0
    seed: int = 0
    output_dir: str = "crosscam_run"

    def validate(self) -> None:
        self.scenario.validate()
        self.filter_policy.validate()
        self.percept.validate()
        self.assoc.validate()
        self.evaluation.validate()
        self.link.validate()
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ConfigError("grid must have at least one row and one column")
        if self.cover_mode not in COVER_MODES:
            raise ConfigError(f"unknown cover mode {self.cover_mode!r}")
        if self.codec_mode not in CODEC_MODES:
            raise ConfigError(f"unknown codec mode {self.codec_mode!r}")
        if self.quality_factor <= 0:
            raise ConfigError("quality_factor must be > 0")

    def to_dict(self) -> dict:
        doc = {
            "scenario": asdict(self.scenario),
            "filter": asdict(self.filter_policy),
            "percept": asdict(self.percept),
            "assoc": asdict(self.assoc),
            "eval": asdict(self.evaluation),
            "link": asdict(self.link),
        }
        for name in _SCALAR_FIELDS:
            doc[name] = getattr(self, name)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        """Build a config from a (possibly partial) plain dict; everything
        not mentioned keeps its default."""
        known = set(_SECTIONS) | set(_SCALAR_FIELDS)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, (attr, section_cls) in _SECTIONS.items():
            sub = doc.get(key, {})
            names = {f.name for f in fields(section_cls)}
            bad = set(sub) - names
            if bad:
                raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
            kwargs[attr] = section_cls(**sub)
        for name in _SCALAR_FIELDS:
            if name in doc:
                kwargs[name] = doc[name]
        config = cls(**kwargs)
        config.validate()
        return config

    def config_hash(self) -> str:
        doc = self.to_dict()
        doc.pop("output_dir")  # where a run lands does not change what it is
        canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


_SECTIONS = {
    "scenario": ("scenario", ScenarioConfig),
    "filter": ("filter_policy", FilterPolicy),
    "percept": ("percept", PerceptConfig),
    "assoc": ("assoc", AssocConfig),
    "eval": ("evaluation", EvalConfig),
    "link": ("link", LinkModel),
}
_SCALAR_FIELDS = (
    "grid_rows",
    "grid_cols",
    "cover_mode",
    "filter_enabled",
    "mask_enabled",
    "codec_mode",
    "quality_factor",
    "seed",
    "output_dir",
)


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        return PipelineConfig.from_dict(json.load(fh))


@dataclass
class RunManifest:
    config_hash: str
    artifacts: dict  # relative path -> sha256 of the file bytes
    stage_seconds: dict  # wall-clock per stage; informational only
    kernel_backend: str
    manifest_hash: str = ""

    def compute_hash(self) -> str:
        lines = [f"config:{self.config_hash}"]
        lines += [f"{name}:{digest}" for name, digest in sorted(self.artifacts.items())]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "artifacts": dict(sorted(self.artifacts.items())),
            "stage_seconds": dict(sorted(self.stage_seconds.items())),
            "kernel_backend": self.kernel_backend,
            "manifest_hash": self.manifest_hash,
        }


@dataclass
class PipelineResult:
    config: PipelineConfig
    scenario: object
    ground_truth: list
    filter_report: FilterReport
    detections: list
    embeddings: list
    assignment: object
    tracklets: list
    masks: dict  # camera_id -> RoiMask; empty when masking is off
    eval_report: object
    transmission: object
    manifest: RunManifest
    output_dir: Path


@contextmanager
def _stage(name: str, timings: dict):
    start = time.perf_counter()
    try:
        yield
    except StageFailure:
        raise
    except Exception as exc:
        raise StageFailure(name, exc) from exc
    finally:
        timings[name] = time.perf_counter() - start


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Run every stage, write artifacts, and return the in-memory results.

    Any stage error is re-raised as StageFailure naming the stage;
    artifacts written before the failure stay on disk.
    """
    config.validate()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "streams").mkdir(exist_ok=True)
    timings = {}
    artifacts = {}

    def record(rel_path: str):
        artifacts[rel_path] = _sha256_file(out / rel_path)

    with _stage("generate", timings):
        world = scen.generate_scenario(config.scenario, config.seed)
        gt = scen.ground_truth(world)
        with open(out / "scenario.json", "w") as fh:
            fh.write(scen.scenario_to_text(world))
        record("scenario.json")

    with _stage("render", timings):
        frames = []
        for cam in world.cameras:
            for t in range(world.duration_steps):
                frames.append(scen.render_frame(world, cam.id, t))
        frame_sizes = {cam.id: (cam.image_width, cam.image_height) for cam in world.cameras}

    with _stage("filter", timings):
        if config.filter_enabled:
            filter_report = filter_stream(frames, config.filter_policy)
        else:
            filter_report = FilterReport(kept=sorted((f.camera_id, f.t) for f in frames))
        filter_report.to_csv(out / "filter_report.csv")
        record("filter_report.csv")
        kept = filter_report.kept_set()
        kept_frames = [f for f in frames if (f.camera_id, f.t) in kept]

    with _stage("encode", timings):
        total_pixels = sum(f.pixels.size for f in frames)
        kept_pixels = sum(f.pixels.size for f in kept_frames)
        encoded_bytes = 0
        streams = {}
        for cam in world.cameras:
            cam_frames = [f for f in kept_frames if f.camera_id == cam.id]
            encoded = codec.encode_stream(cam_frames)
            streams[cam.id] = encoded
            rel = f"streams/cam{cam.id}.ccs"
            codec.write_stream(encoded, out / rel)
            record(rel)
            encoded_bytes += codec.stream_bytes(encoded)

    with _stage("percept", timings):
        percept_cfg = replace(config.percept, seed=config.seed)
        kept_gt = [rec for rec in gt if (rec.camera_id, rec.t) in kept]
        detections = percept.simulate_detections(kept_gt, percept_cfg, frame_sizes)
        embeddings = percept.embed_all(detections, percept_cfg)
        percept.write_records(detections, embeddings, out / "detections.jsonl")
        record("detections.jsonl")

    with _stage("associate", timings):
        labels = associate_temporal(detections, embeddings, config.assoc)
        assignment = associate_spatial(detections, embeddings, labels, config.assoc)
        tracklets = build_tracklets(assignment)
        write_assignment(assignment, out / "assignment.jsonl")
        record("assignment.jsonl")

    with _stage("mask", timings):
        masks = {}
        masked_bytes = 0
        if config.mask_enabled:
            for cam in world.cameras:
                grid = roicover.partition_tiles(
                    cam.image_width, cam.image_height, config.grid_rows, config.grid_cols
                )
                labeled = [
                    ((d.t, d.index), d.bbox) for d in detections if d.camera_id == cam.id
                ]
                masks[cam.id] = roicover.make_mask(cam.id, labeled, grid, config.cover_mode)
            roicover.write_masks([masks[c] for c in sorted(masks)], out / "masks.json")
            record("masks.json")
            for cam in world.cameras:
                cam_frames = [
                    roicover.apply_mask(f, masks[cam.id])
                    for f in kept_frames
                    if f.camera_id == cam.id
                ]
                encoded = codec.encode_stream(cam_frames)
                rel = f"streams/cam{cam.id}_masked.ccs"
                codec.write_stream(encoded, out / rel)
                record(rel)
                masked_bytes += codec.stream_bytes(encoded)

    with _stage("evaluate", timings):
        eval_report = mtta(tracklets, kept_gt, config.evaluation)
        eval_report.write_json(out / "eval.json")
        record("eval.json")

    with _stage("transmit", timings):
        duration_s = world.duration_steps / config.link.fps
        per_stage = {"raw": total_pixels, "kept_raw": kept_pixels, "encoded": encoded_bytes}
        if config.mask_enabled:
            per_stage["masked"] = masked_bytes
        if config.codec_mode == "toy":
            total = masked_bytes if config.mask_enabled else encoded_bytes
        else:
            # analytic estimate: full-rate size scaled by the kept-frame
            # fraction and, when masking, by the masked pixel fraction
            full = codec.analytic_size(
                config.link.frame_width,
                config.link.frame_height,
                config.link.fps,
                duration_s,
                config.quality_factor,
            )
            kept_frac = kept_pixels / total_pixels if total_pixels else 0.0
            mask_frac = 1.0
            if config.mask_enabled and masks:
                covered = sum(
                    sum((x1 - x0) * (y1 - y0) for x0, y0, x1, y1 in m.merged_rects)
                    for m in masks.values()
                )
                mask_frac = covered / sum(
                    m.grid.width * m.grid.height for m in masks.values()
                )
            per_stage["analytic_full"] = full
            total = full * kept_frac * mask_frac
        transmission = codec.transmission_report(total, duration_s, config.link, per_stage)
        with open(out / "transmission.json", "w") as fh:
            json.dump(transmission.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        record("transmission.json")

    with _stage("metadata", timings):
        records = querysvc.records_from_assignment(assignment, masks)
        store = querysvc.QueryStore(masks=masks, log_path=out / "records.jsonl")
        (out / "records.jsonl").unlink(missing_ok=True)  # append-only log: start fresh
        store.ingest(records)
        record("records.jsonl")

    with _stage("manifest", timings):
        from crosscam import _kernels

        manifest = RunManifest(
            config_hash=config.config_hash(),
            artifacts=artifacts,
            stage_seconds=timings,
            kernel_backend=_kernels.backend(),
        )
        manifest.manifest_hash = manifest.compute_hash()
        with open(out / "manifest.json", "w") as fh:
            json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    return PipelineResult(
        config=config,
        scenario=world,
        ground_truth=gt,
        filter_report=filter_report,
        detections=detections,
        embeddings=embeddings,
        assignment=assignment,
        tracklets=tracklets,
        masks=masks,
        eval_report=eval_report,
        transmission=transmission,
        manifest=manifest,
        output_dir=out,
    )


# -- parameter sweeps ----------------------------------------------------------

SWEEP_METRICS = ("mtta_pct", "drop_pct", "bitrate_kbps", "utilization_pct", "num_global_ids")


def _set_dotted(doc: dict, knob: str, value) -> None:
    parts = knob.split(".")
    node = doc
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"unknown sweep knob {knob!r}")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown sweep knob {knob!r}")
    node[parts[-1]] = value


def _run_cell(doc: dict) -> list:
    result = run_pipeline(PipelineConfig.from_dict(doc))
    return [
        result.eval_report.mtta_pct,
        100.0 * result.filter_report.drop_fraction,
        result.transmission.bitrate_kbps,
        result.transmission.utilization_pct,
        result.assignment.num_global_ids(),
    ]


def sweep(template: PipelineConfig, ranges: dict, csv_path, workers: int = 1) -> list:
    """Cross-product runs over dotted knobs, e.g.
    ``{"percept.embed_noise_sigma": [0.1, 0.3], "seed": [0, 1]}``.

    Each cell runs under ``<template.output_dir>/cell_NNNN`` with the
    template's seed unless ``seed`` is itself swept. Returns the row
    dicts written to ``csv_path``.
    """
    if not ranges:
        raise ConfigError("sweep needs at least one knob range")
    knobs = list(ranges)
    root = Path(template.output_dir)
    docs = []
    for i, combo in enumerate(itertools.product(*(ranges[k] for k in knobs))):
        doc = template.to_dict()
        for knob, value in zip(knobs, combo):
            _set_dotted(doc, knob, value)
        doc["output_dir"] = str(root / f"cell_{i:04d}")
        docs.append((combo, doc))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            metrics = list(pool.map(_run_cell, [doc for _, doc in docs]))
    else:
        metrics = [_run_cell(doc) for _, doc in docs]

    rows = []
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([*knobs, *SWEEP_METRICS])
        for (combo, _), values in zip(docs, metrics):
            writer.writerow([*combo, *values])
            rows.append({**dict(zip(knobs, combo)), **dict(zip(SWEEP_METRICS, values))})
    return rows
