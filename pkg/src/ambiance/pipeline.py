"""Dataset layout, run configuration and the staged workflow behind the CLI.

Stages: extract -> aggregate -> cluster -> targets -> correlate -> predict -> compare.
Per-picture extraction is cached under ``<out>/cache`` keyed by image content,
manifest version and annotation, so reruns skip unchanged pictures.
Machine-readable outputs carry no timestamps or worker counts and are
byte-identical for a fixed dataset, configuration and seed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

from . import reports
from .aggregation import (
    GROUP_SIZE,
    MIN_PARTIAL,
    PictureFeatures,
    PlaceProfile,
    aggregate_place,
    attach_uniqueness,
    corpus_stats_of,
    extract_picture,
    save_profiles,
)
from .ambiance_model import (
    RATING_SETS,
    AmbianceRatings,
    TargetScores,
    apply_relabel,
    cluster_dimensions,
    default_relabel,
    load_ratings,
    parse_relabel,
    target_scores,
)
from .annotation import AnnotationSource, annotate, scan_annotation_file
from .clustering import K_CANDIDATES, ClusterArrangement
from .errors import AmbianceError, LayoutInvalid, StageError
from .imaging import JPEG_SIGNATURE, PNG_SIGNATURE, load_image
from .prediction import PredictionReport, compare, loo_evaluate
from .registry import N_FEATURES, PROFILE_LENGTH, default_registry, load_registry
from .stats import CorrelationMatrix, correlation_matrix, significant_cells

log = logging.getLogger(__name__)

PICTURE_SUFFIXES = (".png", ".jpg", ".jpeg")
EXIT_OK, EXIT_INVALID, EXIT_STAGE = 0, 1, 2


@dataclass(frozen=True)
class DatasetLayout:
    root: Path

    @property
    def places_dir(self) -> Path:
        return self.root / "places"

    @property
    def annotations(self) -> Path:
        return self.root / "annotations.jsonl"

    @property
    def ratings(self) -> Path:
        return self.root / "ratings.csv"

    @property
    def relabel(self) -> Path:
        return self.root / "relabel.conf"

    @property
    def manifest(self) -> Path:
        return self.root / "manifest.toml"

    def place_ids(self) -> list[str]:
        if not self.places_dir.is_dir():
            return []
        return sorted(p.name for p in self.places_dir.iterdir() if p.is_dir())

    def pictures(self, place_id: str) -> list[Path]:
        d = self.places_dir / place_id / "pics"
        if not d.is_dir():
            return []
        return sorted(p for p in d.iterdir() if p.suffix.lower() in PICTURE_SUFFIXES)


@dataclass(frozen=True)
class RunConfig:
    annotations: str = "auto"  # auto | remote | file | stub
    seed: int = 0
    k_candidates: tuple[int, ...] = K_CANDIDATES
    alpha: float = 0.05
    target_mode: str = "target"
    allow_partial: bool = False
    out: str = "out"
    workers: int = 1
    endpoint: str | None = None

    def summary(self) -> dict:
        d = asdict(self)
        # worker count and output location never change results
        d.pop("workers")
        d.pop("out")
        d["k_candidates"] = list(self.k_candidates)
        return d


def resolve_source(layout: DatasetLayout, config: RunConfig) -> AnnotationSource:
    kind = config.annotations
    if kind == "auto":
        kind = "file" if layout.annotations.is_file() else "stub"
    if kind == "file":
        return AnnotationSource("file", path=str(layout.annotations), seed=config.seed)
    if kind == "remote":
        return AnnotationSource.remote_from_env(config.endpoint, seed=config.seed)
    return AnnotationSource("stub", seed=config.seed)


# ---------------------------------------------------------------- validation

@dataclass
class Finding:
    where: str
    message: str

    def __str__(self):
        return f"{self.where}: {self.message}"


def validate_layout(layout: DatasetLayout, allow_partial: bool = False) -> list[Finding]:
    """Every layout, annotation, ratings and manifest problem, as data."""
    findings: list[Finding] = []
    if not layout.root.is_dir():
        return [Finding(str(layout.root), "dataset root does not exist")]
    places = layout.place_ids()
    if not places:
        findings.append(Finding("places", "no place directories"))
    minimum = MIN_PARTIAL if allow_partial else GROUP_SIZE
    for pid in places:
        pics = layout.pictures(pid)
        if len(pics) < minimum:
            findings.append(Finding(f"places/{pid}", f"{len(pics)} pictures, need at least {minimum}"))
        for pic in pics:
            head = pic.read_bytes()[:8]
            if not (head.startswith(PNG_SIGNATURE) or head.startswith(JPEG_SIGNATURE)):
                findings.append(Finding(str(pic.relative_to(layout.root)), "not a PNG or JPEG file"))
    if layout.annotations.is_file():
        table, problems = scan_annotation_file(layout.annotations)
        findings += [Finding(f"annotations.jsonl:{f.line}", f.message + (f" ({f.picture_id})" if f.picture_id else ""))
                     for f in problems]
        known = {f"{pid}/{p.stem}" for pid in places for p in layout.pictures(pid)}
        for pic_id in sorted(set(table) - known):
            findings.append(Finding("annotations.jsonl", f"annotation for unknown picture {pic_id!r}"))
    if not layout.ratings.is_file():
        findings.append(Finding("ratings.csv", "ratings not found"))
    else:
        try:
            ratings = load_ratings(layout.ratings)
        except AmbianceError as exc:
            findings.append(Finding("ratings.csv", str(exc)))
        else:
            for rs in RATING_SETS:
                have = {r.place_id for r in ratings if r.rating_set == rs}
                for pid in sorted(have - set(places)):
                    findings.append(Finding("ratings.csv", f"{rs} ratings for unknown place {pid!r}"))
                for pid in sorted(set(places) - have):
                    findings.append(Finding("ratings.csv", f"no {rs} ratings for place {pid!r}"))
    if layout.relabel.is_file():
        try:
            parse_relabel(layout.relabel.read_text(encoding="utf-8"))
        except AmbianceError as exc:
            findings.append(Finding("relabel.conf", str(exc)))
    if layout.manifest.is_file():
        try:
            reg = load_registry(layout.manifest)
            if reg.version != default_registry().version:
                findings.append(Finding("manifest.toml", f"manifest version {reg.version!r} differs from "
                                                         f"{default_registry().version!r}"))
        except Exception as exc:  # any parse failure is a finding, not a crash
            findings.append(Finding("manifest.toml", f"unreadable manifest: {exc}"))
    return findings


# ---------------------------------------------------------------- extraction

@dataclass(frozen=True)
class PictureTask:
    picture_id: str
    path: str
    source: AnnotationSource
    cache_dir: str


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def _cache_key(content_hash: str, source: AnnotationSource, annotation_record: dict) -> str:
    h = hashlib.sha256()
    h.update(default_registry().version.encode())
    h.update(content_hash.encode())
    h.update(source.kind.encode())
    h.update(json.dumps(annotation_record, sort_keys=True).encode())
    return h.hexdigest()


def _extract_one(task: PictureTask) -> tuple[dict, bool]:
    """Returns the picture record (before uniqueness) and whether it was computed afresh."""
    try:
        image = load_image(task.path)
        ann = annotate(image, task.source, task.picture_id)
    except AmbianceError as exc:
        raise StageError("extract", f"{task.picture_id}: {exc}") from exc
    key = _cache_key(image.content_hash, task.source, ann.to_record(task.picture_id))
    cache_file = Path(task.cache_dir) / key[:2] / f"{key}.json"
    if cache_file.is_file():
        rec = json.loads(cache_file.read_text(encoding="utf-8"))
        rec["picture_id"] = task.picture_id
        return rec, False
    try:
        pf = extract_picture(image, ann, picture_id=task.picture_id)
    except AmbianceError as exc:
        raise StageError("extract", f"{task.picture_id}: {exc}") from exc
    rec = pf.to_json()
    cache_file.parent.mkdir(parents=True, exist_ok=True)
    tmp = cache_file.with_suffix(f".tmp{os.getpid()}")
    tmp.write_text(_dump(rec), encoding="utf-8")
    tmp.replace(cache_file)  # atomic, so an interrupted run never leaves half a record
    return rec, True


@dataclass
class ExtractResult:
    pictures: dict[str, list[PictureFeatures]]
    computed: int
    reused: int


def run_extract(layout: DatasetLayout, config: RunConfig, out: Path) -> ExtractResult:
    problems = [f for f in validate_layout(layout, config.allow_partial) if f.where.startswith("places")]
    if problems:
        raise LayoutInvalid("; ".join(str(f) for f in problems))
    source = resolve_source(layout, config)
    cache = out / "cache"
    tasks = []
    for pid in layout.place_ids():
        pics = layout.pictures(pid)
        if len(pics) > GROUP_SIZE:
            pics = pics[:GROUP_SIZE]
        tasks += [PictureTask(f"{pid}/{p.stem}", str(p), source, str(cache)) for p in pics]
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_extract_one, tasks, chunksize=max(1, len(tasks) // (4 * config.workers))))
    else:
        results = [_extract_one(t) for t in tasks]
    records = [PictureFeatures.from_json(r) for r, _ in results]
    computed = sum(1 for _, fresh in results if fresh)
    stats = corpus_stats_of(records)
    records = [attach_uniqueness(r, stats) for r in records]
    grouped: dict[str, list[PictureFeatures]] = {}
    for r in records:
        grouped.setdefault(r.picture_id.split("/", 1)[0], []).append(r)
    feats = out / "features"
    feats.mkdir(parents=True, exist_ok=True)
    with open(feats / "pictures.jsonl", "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), sort_keys=True, allow_nan=False) + "\n")
    (feats / "corpus_stats.json").write_text(_dump(stats.to_json()), encoding="utf-8")
    (cache / "last_run.json").write_text(_dump({"computed": computed, "reused": len(results) - computed}),
                                         encoding="utf-8")
    return ExtractResult(grouped, computed, len(results) - computed)


# ---------------------------------------------------------------- later stages

@dataclass
class PipelineState:
    layout: DatasetLayout
    config: RunConfig
    out: Path
    extract: ExtractResult | None = None
    profiles: list[PlaceProfile] = field(default_factory=list)
    ratings: list[AmbianceRatings] = field(default_factory=list)
    arrangement: ClusterArrangement | None = None
    targets: dict[str, list[TargetScores]] = field(default_factory=dict)
    matrices: dict[str, CorrelationMatrix] = field(default_factory=dict)
    report: PredictionReport | None = None
    stages_done: list[str] = field(default_factory=list)


def stage_extract(st: PipelineState) -> None:
    st.extract = run_extract(st.layout, st.config, st.out)


def stage_aggregate(st: PipelineState) -> None:
    st.profiles = [aggregate_place(pics, pid, st.config.allow_partial)
                   for pid, pics in sorted(st.extract.pictures.items())]
    for p in st.profiles:
        assert p.flatten().shape == (PROFILE_LENGTH,)
    save_profiles(st.out / "profiles", st.profiles)


def stage_cluster(st: PipelineState) -> None:
    if not st.layout.ratings.is_file():
        raise StageError("ambiance-model", "ratings not found")
    st.ratings = load_ratings(st.layout.ratings)
    kmeans_arr = cluster_dimensions(st.ratings, "face_driven", st.config.k_candidates, st.config.seed)
    blocks = (parse_relabel(st.layout.relabel.read_text(encoding="utf-8"))
              if st.layout.relabel.is_file() else default_relabel())
    st.arrangement = apply_relabel(kmeans_arr, blocks)
    d = st.out / "clusters"
    d.mkdir(parents=True, exist_ok=True)
    (d / "kmeans.json").write_text(_dump({"seed": st.config.seed, **kmeans_arr.to_json()}), encoding="utf-8")
    (d / "arrangement.json").write_text(_dump({"seed": st.config.seed, **st.arrangement.to_json()}), encoding="utf-8")


def stage_targets(st: PipelineState) -> None:
    place_ids = {p.place_id for p in st.profiles} if st.profiles else None
    d = st.out / "targets"
    d.mkdir(parents=True, exist_ok=True)
    for rs in RATING_SETS:
        rows = sorted((r for r in st.ratings if r.rating_set == rs), key=lambda r: r.place_id)
        if place_ids is not None:
            have = {r.place_id for r in rows}
            if have != place_ids:
                raise StageError("ambiance-model", f"{rs} ratings cover {sorted(have ^ place_ids)} inconsistently")
        st.targets[rs] = [target_scores(r, st.arrangement, st.config.target_mode) for r in rows]
        lines = ["place_id," + ",".join(st.arrangement.clusters)]
        lines += [t.place_id + "," + ",".join(repr(v) for v in t.values) for t in st.targets[rs]]
        (d / f"{rs}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def stage_correlate(st: PipelineState) -> None:
    d = st.out / "correlations"
    for rs in RATING_SETS:
        m = correlation_matrix(st.profiles, st.targets[rs], st.config.alpha)
        st.matrices[rs] = m
        m.save(d, prefix=f"{rs}_")
        (d / f"{rs}_significant.csv").write_text(reports.significant_csv(significant_cells(m)), encoding="utf-8")
        title = {"face_driven": "Features vs face-driven ambiance", "on_the_spot": "Features vs on-the-spot ambiance"}[rs]
        (d / f"{rs}_heatmap.svg").write_text(reports.heatmap_svg(m, title), encoding="utf-8")


def stage_predict(st: PipelineState) -> None:
    import numpy as np

    truth = st.targets["on_the_spot"]
    by_id = {t.place_id: t for t in truth}
    X = np.stack([p.flatten() for p in st.profiles])
    Y = np.stack([by_id[p.place_id].as_array() for p in st.profiles])
    st.report = loo_evaluate(X, Y, default_registry().profile_labels(), list(st.arrangement.clusters),
                             [p.place_id for p in st.profiles])
    d = st.out / "prediction"
    d.mkdir(parents=True, exist_ok=True)
    (d / "report.json").write_text(_dump({"seed": st.config.seed, **st.report.to_json()}), encoding="utf-8")
    (d / "summary.csv").write_text(reports.prediction_csv(st.report), encoding="utf-8")
    (d / "errors.svg").write_text(reports.error_bars_svg(st.report, "percent_rmse", "Leave-one-out error (% RMSE)"),
                                  encoding="utf-8")


def stage_compare(st: PipelineState) -> None:
    table = compare(st.targets["face_driven"], st.targets["on_the_spot"], st.report,
                    st.matrices.get("face_driven"), st.matrices.get("on_the_spot"))
    d = st.out / "comparison"
    d.mkdir(parents=True, exist_ok=True)
    (d / "comparison.md").write_text(reports.comparison_markdown(table), encoding="utf-8")
    (d / "comparison.csv").write_text(reports.comparison_csv(table), encoding="utf-8")


STAGES: dict[str, tuple[str, Callable[[PipelineState], None]]] = {
    "extract": ("extract", stage_extract),
    "aggregate": ("place-aggregation", stage_aggregate),
    "cluster": ("ambiance-model", stage_cluster),
    "targets": ("ambiance-model", stage_targets),
    "correlate": ("stats-analysis", stage_correlate),
    "predict": ("prediction", stage_predict),
    "compare": ("prediction", stage_compare),
}

_FULL = ["extract", "aggregate", "cluster", "targets", "correlate", "predict", "compare"]
COMMAND_STAGES = {
    "extract": ["extract"],
    "aggregate": ["extract", "aggregate"],
    "cluster": ["cluster"],
    "correlate": ["extract", "aggregate", "cluster", "targets", "correlate"],
    "predict": ["extract", "aggregate", "cluster", "targets", "predict"],
    "compare": _FULL,
    "pipeline": _FULL,
}


def run_stages(layout: DatasetLayout, config: RunConfig, command: str) -> PipelineState:
    """Run the stages a command needs; on failure leave a FAILED marker and raise StageError."""
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    failed = out / "FAILED"
    if failed.exists():
        failed.unlink()
    assert len(default_registry()) == N_FEATURES
    st = PipelineState(layout, config, out)
    for name in COMMAND_STAGES[command]:
        label, fn = STAGES[name]
        try:
            fn(st)
        except (StageError, LayoutInvalid) as exc:
            failed.write_text(f"{exc}\n", encoding="utf-8")
            raise
        except AmbianceError as exc:
            err = StageError(label, str(exc))
            failed.write_text(f"{err}\n", encoding="utf-8")
            raise err from exc
        st.stages_done.append(name)
    summary = {
        "command": command,
        "seed": config.seed,
        "manifest_version": default_registry().version,
        "config": config.summary(),
        "stages": st.stages_done,
        "places": [p.place_id for p in st.profiles],
        "pictures": sum(len(v) for v in st.extract.pictures.values()) if st.extract else 0,
    }
    if st.report is not None:
        summary["percent_mse"] = {k: _round(v.percent_mse) for k, v in st.report.dimensions.items()}
        summary["percent_rmse"] = {k: _round(v.percent_rmse) for k, v in st.report.dimensions.items()}
    (out / "run_summary.json").write_text(_dump(summary), encoding="utf-8")
    return st


def _round(x: float):
    return None if math.isnan(x) else round(float(x), 6)
