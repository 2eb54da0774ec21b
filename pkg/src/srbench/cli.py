"""Command-line entry point.

Subcommands: degrade, validate, eval, score, rank, report, fit-niqe.
Exit codes: 0 success, 1 domain failure, 2 usage error. Diagnostics go to
stderr; data goes to stdout or to files under the workspace root.

Option precedence: command-line flag > --config file > SRBENCH_WORKSPACE
environment variable (workspace only) > built-in default.
"""

from __future__ import annotations

import argparse
import os
import shlex
import sys
from pathlib import Path

from .image import CorruptPngError, UnsupportedPngError, load_png, to_luma
from .niqe import fit_pristine_model, save_model
from .pipeline import (Leaderboard, ManifestError, PipelineError, ProtocolConfig,
                       SubmissionBundle, build_leaderboard, build_manifest,
                       evaluate_submission, generate_lr_set, load_record,
                       manifest_from_dir, parse_leaderboard_csv,
                       render_leaderboard_csv, render_leaderboard_text,
                       save_record, table1_fixture_path, validate_submission)
from .provider import KNOWN_METRICS, ProviderDescriptor, ProviderError
from .scoring import (MetricVector, PERCEPTUAL_FIELDS, combined_order,
                      perceptual_score, rank_track, round_half_away)

_CONFIG_KEYS = ("workspace", "shave", "workers", "allow_partial", "providers",
                "no_timestamps")


class UsageError(Exception):
    pass


def _read_config(path: Path) -> dict[str, str]:
    """Plain key = value document; # starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = (part.strip() for part in line.partition("="))
        if eq != "=" or not key:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        if key not in _CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}; "
                             f"known: {', '.join(_CONFIG_KEYS)}")
        values[key] = value
    return values


def parse_providers_file(path: Path) -> tuple[ProviderDescriptor, ...]:
    """One provider per line: name=<n> metrics=<a,b> [timeout=<s>] -- <command...>"""
    descriptors = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = shlex.split(line)
        if "--" not in tokens:
            raise UsageError(f"{path}:{lineno}: missing '--' before the command")
        split_at = tokens.index("--")
        fields = dict(t.partition("=")[::2] for t in tokens[:split_at])
        command = tuple(tokens[split_at + 1:])
        if not command:
            raise UsageError(f"{path}:{lineno}: empty provider command")
        try:
            descriptors.append(ProviderDescriptor(
                name=fields.get("name", command[0]),
                command=command,
                metrics=frozenset(m for m in fields.get("metrics", "").split(",") if m),
                timeout_seconds=int(fields.get("timeout", "300"))))
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from exc
    if not descriptors:
        raise UsageError(f"{path}: no providers defined")
    return tuple(descriptors)


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", type=Path, help="key=value config file")
    sub.add_argument("--workspace", type=Path,
                     help="root all outputs must stay under (default: cwd or "
                          "SRBENCH_WORKSPACE)")
    sub.add_argument("--shave", type=int, default=None,
                     help="border margin excluded before PSNR/SSIM (default 4)")
    sub.add_argument("--workers", type=int, default=None,
                     help="parallel per-image workers (default: logical cores)")
    sub.add_argument("--allow-partial", action="store_true", default=None,
                     help="tolerate missing/failing providers; skip the score")
    sub.add_argument("--providers", type=Path, default=None,
                     help="provider descriptor file")
    sub.add_argument("--no-timestamps", action="store_true", default=None,
                     help="omit timestamps so reruns are byte-identical")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srbench",
        description="Dual-track super-resolution benchmark toolkit")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("degrade", help="generate the LR set from HR images")
    p.add_argument("--hr-dir", type=Path, help="flat directory of HR PNGs")
    p.add_argument("--preset", help="named dataset preset (e.g. div2k-train)")
    p.add_argument("--root", type=Path, help="dataset root for --preset")
    p.add_argument("--out", type=Path, required=True, help="LR output directory")
    p.add_argument("--count", type=int, help="expected number of HR images")
    p.add_argument("--factor", type=int, default=4)
    _add_common(p)

    p = subs.add_parser("validate", help="check a submission against the LR set")
    p.add_argument("--team", required=True)
    p.add_argument("--submission", type=Path, required=True)
    p.add_argument("--lr-dir", type=Path, required=True)
    p.add_argument("--count", type=int, help="expected number of LR images")
    p.add_argument("--factor", type=int, default=4)
    _add_common(p)

    p = subs.add_parser("eval", help="evaluate a submission end to end")
    p.add_argument("--team", required=True)
    p.add_argument("--submission", type=Path, required=True)
    p.add_argument("--hr-dir", type=Path, required=True)
    p.add_argument("--lr-dir", type=Path, required=True)
    p.add_argument("--records-dir", type=Path, default=Path("records"))
    p.add_argument("--niqe-model", type=Path, help="pristine model file to use")
    p.add_argument("--factor", type=int, default=4)
    _add_common(p)

    p = subs.add_parser("score", help="perceptual score from metric values")
    p.add_argument("--metrics", required=True,
                   help="e.g. lpips=0.2113,dists=0.1082,niqe=2.9635,"
                        "maniqa=0.4939,musiq=71.4919,clipiqa=0.7543")
    _add_common(p)

    p = subs.add_parser("rank", help="rank a leaderboard CSV")
    p.add_argument("--from", dest="source", type=Path, required=True,
                   help="leaderboard CSV (use 'table1' for the shipped fixture)")
    p.add_argument("--recompute-ranks", action="store_true",
                   help="ignore stored rank columns; rank from psnr/score")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    _add_common(p)

    p = subs.add_parser("report", help="build a leaderboard from record files")
    p.add_argument("--records", type=Path, required=True,
                   help="directory of per-team record JSON files")
    p.add_argument("--unranked", default="",
                   help="comma-separated teams shown but not ranked")
    p.add_argument("--out", type=Path,
                   help="prefix for <prefix>.csv and <prefix>.txt")
    _add_common(p)

    p = subs.add_parser("fit-niqe", help="fit a pristine model from a corpus")
    p.add_argument("--corpus", type=Path, required=True,
                   help="directory of pristine PNG images")
    p.add_argument("--out", type=Path, required=True, help="model file to write")
    p.add_argument("--patch-size", type=int, default=96)
    p.add_argument("--threshold", type=float, default=0.75)
    p.add_argument("--min-count", type=int, default=50)
    _add_common(p)
    return parser


def _as_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    lowered = str(value).strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {value!r}")


def _resolve_settings(args) -> dict:
    config = _read_config(args.config) if getattr(args, "config", None) else {}
    def pick(flag_value, key, fallback):
        if flag_value is not None:
            return flag_value
        if key in config:
            return config[key]
        return fallback
    workspace = pick(getattr(args, "workspace", None), "workspace",
                     os.environ.get("SRBENCH_WORKSPACE", "."))
    providers = pick(getattr(args, "providers", None), "providers", None)
    workers = pick(getattr(args, "workers", None), "workers", None)
    return {
        "workspace": Path(workspace).resolve(),
        "shave": int(pick(getattr(args, "shave", None), "shave", 4)),
        "workers": int(workers) if workers is not None else None,
        "allow_partial": _as_bool(pick(getattr(args, "allow_partial", None),
                                       "allow_partial", False)),
        "providers": Path(providers) if providers else None,
        "no_timestamps": _as_bool(pick(getattr(args, "no_timestamps", None),
                                       "no_timestamps", False)),
    }


def _under_workspace(path: Path, workspace: Path) -> Path:
    """Resolve an output path inside the workspace root; refuse escapes."""
    resolved = path if path.is_absolute() else workspace / path
    resolved = resolved.resolve()
    if not resolved.is_relative_to(workspace):
        raise UsageError(f"output path {resolved} is outside the workspace "
                         f"{workspace}")
    return resolved


def _parse_metric_args(spec: str) -> MetricVector:
    values = {}
    for part in spec.split(","):
        if not part.strip():
            continue
        name, eq, raw = part.partition("=")
        name = name.strip()
        if eq != "=" or name not in MetricVector.__dataclass_fields__:
            raise UsageError(f"bad metric assignment {part!r}")
        try:
            values[name] = float(raw)
        except ValueError as exc:
            raise UsageError(f"bad value in {part!r}: {exc}") from exc
    return MetricVector(**values)


def _cmd_degrade(args, settings) -> int:
    if bool(args.hr_dir) == bool(args.preset):
        raise UsageError("give exactly one of --hr-dir or --preset/--root")
    if args.preset:
        if not args.root:
            raise UsageError("--preset requires --root")
        manifest = build_manifest(args.root, args.preset)
    else:
        manifest = manifest_from_dir(args.hr_dir, expected_count=args.count)
    out = _under_workspace(args.out, settings["workspace"])
    manifest = generate_lr_set(manifest, out, factor=args.factor)
    print(f"wrote {len(manifest.entries)} LR images to {out}")
    return 0


def _load_paired_manifest(hr_dir: Path, lr_dir: Path):
    from .pipeline import DatasetManifest, ManifestEntry
    hr = manifest_from_dir(hr_dir, role="hr")
    entries = []
    for e in hr.entries:
        lr_path = Path(lr_dir) / f"{e.image_id}.png"
        if not lr_path.exists():
            raise PipelineError(f"no LR image for id {e.image_id} in {lr_dir}")
        entries.append(ManifestEntry(e.image_id, hr_path=e.hr_path, lr_path=lr_path))
    return DatasetManifest(name=hr.name, split=hr.split,
                           expected_count=hr.expected_count, entries=tuple(entries))


def _cmd_validate(args, settings) -> int:
    manifest = manifest_from_dir(args.lr_dir, expected_count=args.count, role="lr")
    bundle = SubmissionBundle.from_directory(args.team, args.submission)
    report = validate_submission(bundle, manifest, factor=args.factor)
    for issue in report.issues:
        print(f"[{issue.kind}] {issue.image_id}: {issue.detail}")
    if report.ok:
        print(f"OK: {report.checked} images validated for team {report.team!r}")
        return 0
    print(f"FAIL: {len(report.issues)} defect(s) across {report.checked} images",
          file=sys.stderr)
    return 1


def _cmd_eval(args, settings) -> int:
    manifest = _load_paired_manifest(args.hr_dir, args.lr_dir)
    bundle = SubmissionBundle.from_directory(args.team, args.submission)
    providers = (parse_providers_file(settings["providers"])
                 if settings["providers"] else ())
    config = ProtocolConfig(shave_margin=settings["shave"],
                            scale_factor=args.factor,
                            niqe_model_path=args.niqe_model,
                            workers=settings["workers"],
                            allow_partial=settings["allow_partial"],
                            timestamps=not settings["no_timestamps"])
    record = evaluate_submission(bundle, manifest, providers, config)
    records_dir = _under_workspace(args.records_dir, settings["workspace"])
    records_dir.mkdir(parents=True, exist_ok=True)
    out_path = records_dir / f"{record.team}.json"
    save_record(record, out_path)
    parts = []
    for name in record.aggregate.present():
        value = getattr(record.aggregate, name)
        parts.append(f"{name}={'inf' if value == float('inf') else f'{value:.4f}'}")
    score = "n/a" if record.score is None else f"{round_half_away(record.score, 4):.4f}"
    print(f"team {record.team}: {' '.join(parts)} score={score}")
    print(f"record written to {out_path}")
    return 0


def _cmd_score(args, settings) -> int:
    vector = _parse_metric_args(args.metrics)
    missing = [f for f in PERCEPTUAL_FIELDS if getattr(vector, f) is None]
    if missing:
        raise PipelineError(f"missing metrics for the score: {', '.join(missing)}")
    print(f"{round_half_away(perceptual_score(vector), 4):.4f}")
    return 0


def _cmd_rank(args, settings) -> int:
    source = args.source
    if str(source) == "table1":
        source = table1_fixture_path()
    board = parse_leaderboard_csv(Path(source).read_text(encoding="utf-8"))
    entries = list(board.entries)
    stored = all(e.rank_track1 is not None and e.rank_track2 is not None
                 for e in entries if e.ranked)
    if args.recompute_ranks or not stored:
        entries = rank_track(entries, 1)
        entries = rank_track(entries, 2)
    board = Leaderboard(entries=tuple(combined_order(entries)))
    if args.format == "csv":
        sys.stdout.write(render_leaderboard_csv(board))
    else:
        sys.stdout.write(render_leaderboard_text(board))
    return 0


def _cmd_report(args, settings) -> int:
    records_dir = Path(args.records)
    paths = sorted(records_dir.glob("*.json"))
    if not paths:
        raise PipelineError(f"no record files in {records_dir}")
    records = [load_record(p) for p in paths]
    unranked = frozenset(t.strip() for t in args.unranked.split(",") if t.strip())
    board = build_leaderboard(records, unranked_teams=unranked)
    text = render_leaderboard_text(board)
    if args.out:
        prefix = _under_workspace(args.out, settings["workspace"])
        prefix.parent.mkdir(parents=True, exist_ok=True)
        prefix.with_suffix(".csv").write_text(render_leaderboard_csv(board),
                                              encoding="utf-8")
        prefix.with_suffix(".txt").write_text(text, encoding="utf-8")
        print(f"wrote {prefix.with_suffix('.csv')} and {prefix.with_suffix('.txt')}",
              file=sys.stderr)
    sys.stdout.write(text)
    return 0


def _cmd_fit_niqe(args, settings) -> int:
    corpus_dir = Path(args.corpus)
    paths = sorted(corpus_dir.glob("*.png"))
    if not paths:
        raise PipelineError(f"no PNG images in {corpus_dir}")
    corpus = [to_luma(load_png(p)) for p in paths]
    model = fit_pristine_model(corpus, patch_size=args.patch_size,
                               sharpness_threshold=args.threshold,
                               min_corpus=args.min_count)
    out = _under_workspace(args.out, settings["workspace"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    flag = " (degenerate)" if model.degenerate else ""
    print(f"fitted pristine model on {len(corpus)} images -> {out}{flag}")
    return 0


_COMMANDS = {
    "degrade": _cmd_degrade,
    "validate": _cmd_validate,
    "eval": _cmd_eval,
    "score": _cmd_score,
    "rank": _cmd_rank,
    "report": _cmd_report,
    "fit-niqe": _cmd_fit_niqe,
}


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse handled --help or a usage error
        return int(exc.code or 0)
    try:
        settings = _resolve_settings(args)
        return _COMMANDS[args.command](args, settings)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (PipelineError, ManifestError, ProviderError, CorruptPngError,
            UnsupportedPngError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
