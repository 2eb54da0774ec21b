"""Mock metric provider for protocol conformance and fault-injection tests.

Speaks protocol v1 on stdin/stdout and returns canned values. Fault flags
simulate misbehaving providers: crashing mid-request, hanging, replying with
wrong ids or non-finite values.

Run as: python -m srbench.mock_provider --metrics lpips,dists --values lpips=0.2113
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time


def _emit(frame: dict) -> None:
    sys.stdout.write(json.dumps(frame) + "\n")
    sys.stdout.flush()


def _parse_values(spec: str) -> dict[str, float]:
    values = {}
    for part in spec.split(","):
        if not part:
            continue
        name, _, raw = part.partition("=")
        values[name.strip()] = float(raw)
    return values


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mock-provider")
    parser.add_argument("--metrics", default="lpips",
                        help="comma-separated metrics to advertise")
    parser.add_argument("--values", default="",
                        help="canned values, e.g. lpips=0.2113,dists=0.1082")
    parser.add_argument("--meta", default="",
                        help="key=value pairs attached to every result frame")
    parser.add_argument("--latency", type=float, default=0.0,
                        help="seconds to sleep before each reply")
    parser.add_argument("--check-paths", action="store_true",
                        help="answer with an error frame when sr/hr files are missing")
    parser.add_argument("--exit-immediately", action="store_true",
                        help="fault: exit before reading anything")
    parser.add_argument("--silent-handshake", action="store_true",
                        help="fault: consume hello, then exit without capabilities")
    parser.add_argument("--crash-after", type=int, default=-1, metavar="N",
                        help="fault: die without replying on the N-th evaluate (1-based)")
    parser.add_argument("--hang", action="store_true",
                        help="fault: never reply to evaluate requests")
    parser.add_argument("--non-finite", action="store_true",
                        help="fault: reply with a NaN value")
    parser.add_argument("--wrong-id", action="store_true",
                        help="fault: reply with a mismatched id")
    parser.add_argument("--error-metric", default=None,
                        help="reply with an error frame for this metric")
    args = parser.parse_args(argv)

    if args.exit_immediately:
        return 3

    advertised = [m.strip() for m in args.metrics.split(",") if m.strip()]
    values = _parse_values(args.values)
    meta = None
    if args.meta:
        meta = dict(part.partition("=")[::2] for part in args.meta.split(","))

    evaluations = 0
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        frame = json.loads(line)
        ftype = frame.get("type")
        fid = frame.get("id", 0)

        if ftype == "hello":
            if args.silent_handshake:
                return 5
            _emit({"type": "capabilities", "id": fid, "protocol": 1,
                   "metric": advertised})
            continue
        if ftype == "shutdown":
            return 0
        if ftype != "evaluate":
            _emit({"type": "error", "id": fid,
                   "message": f"unexpected frame type {ftype!r}"})
            continue

        evaluations += 1
        if args.crash_after >= 0 and evaluations >= args.crash_after:
            os._exit(9)
        if args.hang:
            time.sleep(3600)
        if args.latency:
            time.sleep(args.latency)

        metric = frame.get("metric")
        reply_id = fid + 1000 if args.wrong_id else fid
        if metric not in advertised:
            _emit({"type": "error", "id": reply_id, "metric": metric,
                   "message": f"metric {metric!r} not supported"})
            continue
        if args.error_metric == metric:
            _emit({"type": "error", "id": reply_id, "metric": metric,
                   "message": "injected failure"})
            continue
        if args.check_paths:
            missing = [p for p in (frame.get("sr"), frame.get("hr"))
                       if p is not None and not os.path.exists(p)]
            if missing:
                _emit({"type": "error", "id": reply_id, "metric": metric,
                       "message": f"missing image file: {missing[0]}"})
                continue
        value = float("nan") if args.non_finite else values.get(metric, 0.5)
        result = {"type": "result", "id": reply_id, "metric": metric, "value": value}
        if meta:
            result["meta"] = meta
        _emit(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
