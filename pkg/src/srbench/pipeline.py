"""Dataset manifests, LR-set generation, submission validation, evaluation
orchestration, and leaderboard persistence.

File formats (versioned headers, documented in docs/file_formats.md):
  - evaluation records: one JSON document per team;
  - leaderboards: machine-readable CSV (full precision) and an aligned
    human-readable table (4-decimal metrics, 2-decimal PSNR).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

from .image import (CorruptPngError, UnsupportedPngError, load_png, save_png,
                    shave_border, to_luma)
from .image import generate_lr as degrade_hr
from .metrics import psnr, quantize, ssim
from .niqe import NoSharpPatchesError, default_model, load_model, niqe
from .provider import (FULL_REFERENCE_METRICS, KNOWN_METRICS, ProviderDescriptor,
                       ProviderError, evaluate as provider_evaluate,
                       shutdown as provider_shutdown, spawn_and_handshake)
from .scoring import (LeaderboardEntry, METRIC_FIELDS, MetricVector, PERCEPTUAL_FIELDS,
                      aggregate_submission, combined_order, perceptual_score,
                      rank_track, round_half_away)


class ManifestError(Exception):
    pass


class PipelineError(Exception):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    hr_path: Path | None = None
    lr_path: Path | None = None


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    split: str
    expected_count: int
    entries: tuple[ManifestEntry, ...]

    def __post_init__(self):
        if self.split not in ("train", "val", "test"):
            raise ValueError(f"split must be train/val/test, got {self.split!r}")
        if len(self.entries) != self.expected_count:
            raise ValueError(f"{self.name}: {len(self.entries)} entries but "
                             f"expected_count {self.expected_count}")
        ids = [e.image_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError(f"{self.name}: duplicate image ids")

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(e.image_id for e in self.entries)


@dataclass(frozen=True)
class _Preset:
    split: str
    subdir: str
    expected_count: int
    ids: tuple[str, ...] | None  # None: glob the tree and count
    recursive: bool = False


PRESETS: dict[str, _Preset] = {
    "div2k-train": _Preset("train", "DIV2K_train_HR", 800,
                           tuple(f"{i:04d}" for i in range(1, 801))),
    "div2k-val": _Preset("val", "DIV2K_valid_HR", 100,
                         tuple(f"{i:04d}" for i in range(801, 901))),
    "div2k-test": _Preset("test", "DIV2K_test_HR", 100,
                          tuple(f"{i:04d}" for i in range(901, 1001))),
    "flickr2k": _Preset("train", "Flickr2K_HR", 2650,
                        tuple(f"{i:06d}" for i in range(1, 2651))),
    "lsdir-train": _Preset("train", "LSDIR/train_HR", 84991, None, recursive=True),
    "lsdir-val": _Preset("val", "LSDIR/val_HR", 1000, None, recursive=True),
    "lsdir-test": _Preset("test", "LSDIR/test_HR", 1000, None, recursive=True),
}


def _summarize_ids(ids, limit: int = 8) -> str:
    shown = ", ".join(sorted(ids)[:limit])
    more = len(ids) - min(len(ids), limit)
    return shown + (f", ... ({more} more)" if more > 0 else "")


def build_manifest(root, preset: str) -> DatasetManifest:
    """Manifest for a named dataset preset rooted at `root`, with verified counts."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; available: {sorted(PRESETS)}")
    spec = PRESETS[preset]
    tree = Path(root) / spec.subdir
    if not tree.is_dir():
        raise ManifestError(f"{preset}: directory {tree} does not exist")
    pattern = "**/*.png" if spec.recursive else "*.png"
    found = sorted(tree.glob(pattern))
    if spec.ids is not None:
        by_id = {p.stem: p for p in found}
        missing = [i for i in spec.ids if i not in by_id]
        extra = sorted(set(by_id) - set(spec.ids))
        if missing or extra:
            raise ManifestError(
                f"{preset}: tree does not match the preset"
                + (f"; missing ids: {_summarize_ids(missing)}" if missing else "")
                + (f"; extra ids: {_summarize_ids(extra)}" if extra else ""))
        entries = tuple(ManifestEntry(i, hr_path=by_id[i]) for i in spec.ids)
    else:
        ids = [p.stem for p in found]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ManifestError(f"{preset}: duplicate ids across shards: "
                                f"{_summarize_ids(dupes)}")
        if len(found) != spec.expected_count:
            raise ManifestError(f"{preset}: found {len(found)} images, expected "
                                f"{spec.expected_count}")
        entries = tuple(ManifestEntry(p.stem, hr_path=p) for p in found)
    return DatasetManifest(name=preset, split=spec.split,
                           expected_count=spec.expected_count, entries=entries)


def manifest_from_dir(directory, name: str = "custom", split: str = "test",
                      expected_count: int | None = None,
                      role: str = "hr") -> DatasetManifest:
    """Manifest over a flat directory of PNGs; ids are the file stems."""
    if role not in ("hr", "lr"):
        raise ValueError(f"role must be 'hr' or 'lr', got {role!r}")
    tree = Path(directory)
    if not tree.is_dir():
        raise ManifestError(f"{name}: directory {tree} does not exist")
    found = sorted(tree.glob("*.png"))
    if expected_count is not None and len(found) != expected_count:
        raise ManifestError(f"{name}: found {len(found)} images, expected "
                            f"{expected_count}")
    entries = tuple(ManifestEntry(p.stem, hr_path=p if role == "hr" else None,
                                  lr_path=p if role == "lr" else None)
                    for p in found)
    return DatasetManifest(name=name, split=split, expected_count=len(found),
                           entries=entries)


def generate_lr_set(manifest: DatasetManifest, out_dir, factor: int = 4) -> DatasetManifest:
    """Degrade every HR entry to `<out_dir>/<id>.png`; bit-identical across runs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for entry in manifest.entries:
        if entry.hr_path is None:
            raise PipelineError(f"{manifest.name}: entry {entry.image_id} has no HR path")
        lr_path = out / f"{entry.image_id}.png"
        save_png(degrade_hr(load_png(entry.hr_path), factor), lr_path)
        entries.append(ManifestEntry(entry.image_id, hr_path=entry.hr_path,
                                     lr_path=lr_path))
    return DatasetManifest(name=manifest.name, split=manifest.split,
                           expected_count=manifest.expected_count,
                           entries=tuple(entries))


@dataclass(frozen=True)
class SubmissionBundle:
    team: str
    track: int
    directory: Path
    image_ids: tuple[str, ...]

    @classmethod
    def from_directory(cls, team: str, directory, track: int = 2) -> "SubmissionBundle":
        d = Path(directory)
        if not d.is_dir():
            raise PipelineError(f"submission directory {d} does not exist")
        return cls(team=team, track=track, directory=d,
                   image_ids=tuple(sorted(p.stem for p in d.glob("*.png"))))


@dataclass(frozen=True)
class ValidationIssue:
    image_id: str
    kind: str      # missing | extra | undecodable | dim-mismatch
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    team: str
    checked: int
    issues: tuple[ValidationIssue, ...]

    @property
    def ok(self) -> bool:
        return not self.issues


def validate_submission(bundle: SubmissionBundle, manifest: DatasetManifest,
                        factor: int = 4) -> ValidationReport:
    """Exactly one decodable output per test id, each at factor x the LR size."""
    issues: list[ValidationIssue] = []
    expected = set(manifest.ids)
    for extra_id in sorted(set(bundle.image_ids) - expected):
        issues.append(ValidationIssue(extra_id, "extra",
                                      f"{extra_id}.png is not a test image id"))
    for entry in manifest.entries:
        if entry.lr_path is None:
            raise PipelineError(f"manifest {manifest.name} has no LR path for "
                                f"{entry.image_id}; validation needs LR dimensions")
        sr_path = bundle.directory / f"{entry.image_id}.png"
        if not sr_path.exists():
            issues.append(ValidationIssue(entry.image_id, "missing",
                                          f"no file {sr_path.name} in submission"))
            continue
        try:
            sr = load_png(sr_path)
        except (CorruptPngError, UnsupportedPngError, FileNotFoundError) as exc:
            issues.append(ValidationIssue(entry.image_id, "undecodable", str(exc)))
            continue
        lr_w, lr_h = _png_dims(entry.lr_path)
        if (sr.width, sr.height) != (factor * lr_w, factor * lr_h):
            issues.append(ValidationIssue(
                entry.image_id, "dim-mismatch",
                f"got {sr.width}x{sr.height}, expected "
                f"{factor * lr_w}x{factor * lr_h} (= {factor}x LR)"))
    return ValidationReport(team=bundle.team, checked=len(manifest.entries),
                            issues=tuple(issues))


def _png_dims(path) -> tuple[int, int]:
    import struct
    with open(path, "rb") as fh:
        head = fh.read(24)
    w, h = struct.unpack(">II", head[16:24])
    return w, h


@dataclass(frozen=True)
class ProtocolConfig:
    """Evaluation-protocol knobs; defaults match the challenge convention."""

    shave_margin: int = 4
    quantize_luma: bool = True
    # fidelity metrics use shaved luma; perceptual metrics see full images
    perceptual_unshaved: bool = True
    scale_factor: int = 4
    niqe_model_path: Path | None = None
    workers: int | None = None
    allow_partial: bool = False
    timestamps: bool = True

    def __post_init__(self):
        if self.shave_margin < 0:
            raise ValueError("shave_margin must be nonnegative")
        if self.workers is not None and self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class EvaluationRecord:
    team: str
    per_image: dict[str, MetricVector]
    aggregate: MetricVector
    score: float | None
    started: str | None = None
    finished: str | None = None
    providers: tuple[dict, ...] = ()
    dropped_metrics: tuple[str, ...] = ()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def evaluate_submission(bundle: SubmissionBundle, manifest: DatasetManifest,
                        providers: tuple[ProviderDescriptor, ...] = (),
                        config: ProtocolConfig = ProtocolConfig()) -> EvaluationRecord:
    """Score a validated submission: native PSNR/SSIM/NIQE plus provider metrics."""
    report = validate_submission(bundle, manifest, factor=config.scale_factor)
    if not report.ok:
        first = report.issues[0]
        raise PipelineError(f"submission {bundle.team!r} failed validation with "
                            f"{len(report.issues)} defect(s); first: "
                            f"[{first.kind}] {first.image_id}: {first.detail}")
    for entry in manifest.entries:
        if entry.hr_path is None:
            raise PipelineError(f"manifest {manifest.name} has no HR path for "
                                f"{entry.image_id}; evaluation needs ground truth")

    metric_owner: dict[str, ProviderDescriptor] = {}
    for desc in providers:
        for m in sorted(desc.metrics):
            metric_owner.setdefault(m, desc)
    uncovered = sorted(KNOWN_METRICS - set(metric_owner))
    if uncovered and not config.allow_partial:
        raise PipelineError(f"no provider covers {uncovered}; add providers or "
                            f"enable partial mode")

    model = (load_model(config.niqe_model_path) if config.niqe_model_path
             else default_model())

    started = _now() if config.timestamps else None
    local = threading.local()
    sessions: list = []
    lock = threading.Lock()
    failures: dict[str, str] = {}

    def session_for(desc: ProviderDescriptor):
        cache = getattr(local, "sessions", None)
        if cache is None:
            cache = local.sessions = {}
        if desc.name not in cache:
            s = spawn_and_handshake(desc)
            with lock:
                sessions.append(s)
            cache[desc.name] = s
        return cache[desc.name]

    def score_image(entry: ManifestEntry) -> tuple[str, dict[str, float]]:
        sr_path = bundle.directory / f"{entry.image_id}.png"
        sr_luma = to_luma(load_png(sr_path))
        hr_luma = to_luma(load_png(entry.hr_path))
        if config.quantize_luma:
            sr_luma = quantize(sr_luma)
            hr_luma = quantize(hr_luma)
        sr_shaved = shave_border(sr_luma, config.shave_margin)
        hr_shaved = shave_border(hr_luma, config.shave_margin)
        values: dict[str, float] = {
            "psnr": psnr(hr_shaved, sr_shaved),
            "ssim": ssim(hr_shaved, sr_shaved),
        }
        niqe_input = sr_luma if config.perceptual_unshaved else sr_shaved
        try:
            values["niqe"] = niqe(niqe_input, model)
        except (NoSharpPatchesError, ValueError) as exc:
            with lock:
                failures.setdefault("niqe", f"{entry.image_id}: {exc}")
        for metric in sorted(metric_owner):
            desc = metric_owner[metric]
            hr_arg = entry.hr_path if metric in FULL_REFERENCE_METRICS else None
            try:
                values[metric] = provider_evaluate(session_for(desc), metric,
                                                   sr_path, hr_arg)
            except ProviderError as exc:
                with lock:
                    failures.setdefault(metric, f"{entry.image_id}: {exc}")
        return entry.image_id, values

    workers = config.workers or os.cpu_count() or 1
    try:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(score_image, manifest.entries))
    finally:
        for s in sessions:
            provider_shutdown(s)

    if failures and not config.allow_partial:
        detail = "; ".join(f"{m} ({why})" for m, why in sorted(failures.items()))
        raise PipelineError(f"metric failures without partial mode: {detail}")
    dropped = tuple(sorted(failures))
    per_image = {
        image_id: MetricVector(**{k: v for k, v in values.items() if k not in dropped})
        for image_id, values in ((i, results[i]) for i in manifest.ids)
    }
    aggregate = aggregate_submission([per_image[i] for i in manifest.ids])
    have = set(aggregate.present())
    score = perceptual_score(aggregate) if set(PERCEPTUAL_FIELDS) <= have else None

    provider_info = []
    seen = set()
    for s in sessions:
        if s.descriptor.name in seen:
            for info in provider_info:
                if info["name"] == s.descriptor.name:
                    info["meta"].update(s.metadata)
            continue
        seen.add(s.descriptor.name)
        provider_info.append({"name": s.descriptor.name,
                              "command": list(s.descriptor.command),
                              "metrics": sorted(s.metrics),
                              "meta": dict(s.metadata)})
    provider_info.sort(key=lambda d: d["name"])

    return EvaluationRecord(team=bundle.team, per_image=per_image,
                            aggregate=aggregate, score=score,
                            started=started,
                            finished=_now() if config.timestamps else None,
                            providers=tuple(provider_info),
                            dropped_metrics=dropped)


_RECORD_FORMAT = "srbench-record"
_RECORD_VERSION = 1


def _num_out(x: float | None):
    if x is None:
        return None
    return "inf" if math.isinf(x) else x


def _num_in(x):
    if x is None:
        return None
    return math.inf if x == "inf" else float(x)


def _vector_out(v: MetricVector) -> dict:
    return {name: _num_out(getattr(v, name)) for name in METRIC_FIELDS
            if getattr(v, name) is not None}


def _vector_in(d: dict) -> MetricVector:
    return MetricVector(**{k: _num_in(v) for k, v in d.items()})


def save_record(record: EvaluationRecord, path) -> None:
    doc = {
        "format": _RECORD_FORMAT,
        "version": _RECORD_VERSION,
        "team": record.team,
        "started": record.started,
        "finished": record.finished,
        "providers": list(record.providers),
        "dropped_metrics": list(record.dropped_metrics),
        "per_image": {i: _vector_out(v) for i, v in record.per_image.items()},
        "aggregate": _vector_out(record.aggregate),
        "score": record.score,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def load_record(path) -> EvaluationRecord:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != _RECORD_FORMAT or doc.get("version") != _RECORD_VERSION:
        raise PipelineError(f"{path}: not a {_RECORD_FORMAT} v{_RECORD_VERSION} file")
    return EvaluationRecord(
        team=doc["team"],
        per_image={i: _vector_in(v) for i, v in doc["per_image"].items()},
        aggregate=_vector_in(doc["aggregate"]),
        score=doc.get("score"),
        started=doc.get("started"),
        finished=doc.get("finished"),
        providers=tuple(doc.get("providers", ())),
        dropped_metrics=tuple(doc.get("dropped_metrics", ())),
    )


@dataclass(frozen=True)
class Leaderboard:
    entries: tuple[LeaderboardEntry, ...]


def build_leaderboard(records: list[EvaluationRecord],
                      unranked_teams: frozenset[str] = frozenset()) -> Leaderboard:
    """Rank both tracks and apply the combined ordering rule."""
    if not records:
        raise PipelineError("cannot build a leaderboard from zero records")
    entries = []
    for r in records:
        ranked = r.team not in unranked_teams
        if ranked and r.aggregate.psnr is None:
            raise PipelineError(f"team {r.team!r} has no PSNR; cannot rank track 1")
        if ranked and r.score is None:
            raise PipelineError(f"team {r.team!r} has no perceptual score; "
                                f"cannot rank track 2")
        entries.append(LeaderboardEntry(team=r.team, metrics=r.aggregate,
                                        score=r.score, ranked=ranked))
    entries = rank_track(entries, 1)
    entries = rank_track(entries, 2)
    return Leaderboard(entries=tuple(combined_order(entries)))


_LEADERBOARD_HEADER = "# srbench-leaderboard v1"
_CSV_COLUMNS = ("team", "ranked", "rank_track1", "rank_track2", *METRIC_FIELDS, "score")


def render_leaderboard_csv(board: Leaderboard) -> str:
    """Machine-readable leaderboard; floats at full precision for round-tripping."""
    out = io.StringIO()
    out.write(_LEADERBOARD_HEADER + "\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for e in board.entries:
        row = [e.team, "true" if e.ranked else "false",
               e.rank_track1 if e.rank_track1 is not None else "",
               e.rank_track2 if e.rank_track2 is not None else ""]
        for name in METRIC_FIELDS:
            value = getattr(e.metrics, name)
            row.append("" if value is None else
                       ("inf" if math.isinf(value) else repr(value)))
        row.append("" if e.score is None else repr(e.score))
        writer.writerow(row)
    return out.getvalue()


def parse_leaderboard_csv(text: str) -> Leaderboard:
    lines = text.splitlines()
    if not lines or lines[0].strip() != _LEADERBOARD_HEADER:
        raise PipelineError(f"missing leaderboard header {_LEADERBOARD_HEADER!r}")
    reader = csv.DictReader(io.StringIO("\n".join(lines[1:])))
    missing = set(_CSV_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise PipelineError(f"leaderboard is missing columns: {sorted(missing)}")
    entries = []
    for row in reader:
        metrics = MetricVector(**{
            name: (math.inf if row[name] == "inf" else float(row[name]))
            for name in METRIC_FIELDS if row[name] != ""})
        entries.append(LeaderboardEntry(
            team=row["team"],
            metrics=metrics,
            score=float(row["score"]) if row["score"] != "" else None,
            rank_track1=int(row["rank_track1"]) if row["rank_track1"] != "" else None,
            rank_track2=int(row["rank_track2"]) if row["rank_track2"] != "" else None,
            ranked=row["ranked"] == "true"))
    return Leaderboard(entries=tuple(entries))


_TEXT_COLUMNS = (
    ("Team", "team", None),
    ("T1", "rank_track1", None),
    ("T2", "rank_track2", None),
    ("PSNR", "psnr", 2),
    ("SSIM", "ssim", 4),
    ("LPIPS", "lpips", 4),
    ("DISTS", "dists", 4),
    ("NIQE", "niqe", 4),
    ("ManIQA", "maniqa", 4),
    ("MUSIQ", "musiq", 4),
    ("CLIP-IQA", "clipiqa", 4),
    ("Score", "score", 4),
)


def render_leaderboard_text(board: Leaderboard) -> str:
    """Aligned table with challenge-style display rounding (half away from zero)."""
    def cell(entry: LeaderboardEntry, attr: str, decimals) -> str:
        if attr in ("rank_track1", "rank_track2"):
            value = getattr(entry, attr)
            return str(value) if entry.ranked and value is not None else "N/A"
        if attr == "team":
            return entry.team
        value = entry.score if attr == "score" else getattr(entry.metrics, attr)
        if value is None:
            return "-"
        if math.isinf(value):
            return "inf"
        return f"{round_half_away(value, decimals):.{decimals}f}"

    rows = [[cell(e, attr, dec) for _, attr, dec in _TEXT_COLUMNS]
            for e in board.entries]
    headers = [h for h, _, _ in _TEXT_COLUMNS]
    widths = [max(len(headers[c]), *(len(r[c]) for r in rows)) if rows else len(headers[c])
              for c in range(len(headers))]
    def fmt(cells):
        return "  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                         for i, (c, w) in enumerate(zip(cells, widths)))
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines += [fmt(r) for r in rows]
    return "\n".join(lines) + "\n"


def table1_fixture_path() -> Path:
    """Golden leaderboard shipped for scoring/ranking self-tests."""
    ref = resources.files("srbench").joinpath("data/table1.csv")
    with resources.as_file(ref) as path:
        return Path(path)
