"""Provider-protocol v1 server loop over stdin/stdout.

Frames are single-line JSON objects. The server answers `hello` with
`capabilities`, each `evaluate` with exactly one `result` or `error`
carrying the same id, and exits 0 on `shutdown`. Result frames carry the
backend checkpoint hash in the optional `meta` extension.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from .backends import BACKENDS, manifest_json
from .full_reference import DimensionMismatch
from .images import ImageLoadError

PROTOCOL_VERSION = 1


def _emit(frame: dict) -> None:
    sys.stdout.write(json.dumps(frame, separators=(",", ":")) + "\n")
    sys.stdout.flush()


def _error(frame_id, metric, message: str) -> None:
    payload = {"type": "error", "id": frame_id, "message": message}
    if metric:
        payload["metric"] = metric
    _emit(payload)


def _handle_evaluate(frame: dict, metrics: dict) -> None:
    frame_id = frame["id"]
    metric = frame.get("metric")
    backend = metrics.get(metric)
    if backend is None:
        _error(frame_id, metric, f"metric {metric!r} not supported "
                                 f"(have {sorted(metrics)})")
        return
    sr = frame.get("sr")
    hr = frame.get("hr")
    if not isinstance(sr, str):
        _error(frame_id, metric, "evaluate frame is missing the sr path")
        return
    if backend.full_reference and not isinstance(hr, str):
        _error(frame_id, metric, f"{metric} is full-reference and needs an hr path")
        return
    if not backend.full_reference and hr is not None:
        _error(frame_id, metric, f"{metric} is no-reference; hr path not allowed")
        return
    try:
        value = backend.compute(sr, hr) if backend.full_reference else backend.compute(sr)
    except (ImageLoadError, DimensionMismatch) as exc:
        _error(frame_id, metric, str(exc))
        return
    if not math.isfinite(value):
        _error(frame_id, metric, f"backend produced a non-finite value {value!r}")
        return
    _emit({"type": "result", "id": frame_id, "metric": metric, "value": value,
           "meta": {"model": backend.model_id,
                    "checkpoint_sha256": backend.checkpoint_hash()}})


def serve(metric_names: list[str]) -> int:
    metrics = {name: BACKENDS[name] for name in metric_names}
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            frame = json.loads(line)
        except json.JSONDecodeError:
            print(f"iqa-provider: dropping malformed frame {line!r}", file=sys.stderr)
            continue
        ftype = frame.get("type")
        frame_id = frame.get("id", 0)
        if ftype == "hello":
            if frame.get("protocol", PROTOCOL_VERSION) != PROTOCOL_VERSION:
                _error(frame_id, None,
                       f"unsupported protocol {frame.get('protocol')!r}")
                return 1
            _emit({"type": "capabilities", "id": frame_id,
                   "protocol": PROTOCOL_VERSION, "metric": sorted(metrics)})
        elif ftype == "evaluate":
            _handle_evaluate(frame, metrics)
        elif ftype == "shutdown":
            return 0
        else:
            _error(frame_id, None, f"unexpected frame type {ftype!r}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="iqa-provider",
        description="metric provider process speaking protocol v1 on stdio")
    parser.add_argument("--metrics", default=",".join(sorted(BACKENDS)),
                        help="comma-separated subset of metrics to serve")
    parser.add_argument("--manifest", action="store_true",
                        help="print the metric->checkpoint manifest and exit")
    args = parser.parse_args(argv)
    if args.manifest:
        sys.stdout.write(manifest_json())
        return 0
    names = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = [m for m in names if m not in BACKENDS]
    if unknown:
        parser.error(f"unknown metrics: {', '.join(unknown)} "
                     f"(available: {', '.join(sorted(BACKENDS))})")
    return serve(names)


if __name__ == "__main__":
    sys.exit(main())
