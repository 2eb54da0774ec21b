"""Process-boundary plugin protocol for external metric providers.

A provider is a child process speaking line-delimited JSON frames on its
standard streams (protocol v1, documented with byte-level examples in
docs/provider_protocol.md). Frame vocabulary: hello, capabilities, evaluate,
result, error, shutdown; ids increase monotonically per session and every
evaluate is answered by exactly one result or error with the same id.
"""

from __future__ import annotations

import json
import math
import os
import queue
import subprocess
import threading
from dataclasses import dataclass, field

KNOWN_METRICS = frozenset({"lpips", "dists", "maniqa", "musiq", "clipiqa"})
FULL_REFERENCE_METRICS = frozenset({"lpips", "dists"})
NO_REFERENCE_METRICS = KNOWN_METRICS - FULL_REFERENCE_METRICS

PROTOCOL_VERSION = 1
_FRAME_TYPES = frozenset({"hello", "capabilities", "evaluate", "result", "error", "shutdown"})
_SHUTDOWN_GRACE_SECONDS = 5.0


class ProviderError(Exception):
    """Base class for provider-session failures."""


class SpawnError(ProviderError):
    pass


class HandshakeError(ProviderError):
    pass


class CapabilityError(ProviderError):
    pass


class ProtocolError(ProviderError):
    """Malformed frame, id mismatch, or non-finite value; the session is dead."""


class ProviderTimeout(ProviderError):
    """No response within the deadline (includes a provider dying mid-request)."""


class MetricError(ProviderError):
    """Provider answered with an error frame; the session remains usable."""


@dataclass(frozen=True)
class ProviderDescriptor:
    name: str
    command: tuple[str, ...]
    metrics: frozenset[str]
    timeout_seconds: int = 300

    def __post_init__(self):
        if not self.command:
            raise ValueError("provider command must not be empty")
        if not self.metrics:
            raise ValueError("provider must request at least one metric")
        if any(m != m.lower() for m in self.metrics):
            raise ValueError("metric names must be lowercase canonical")
        unknown = set(self.metrics) - KNOWN_METRICS
        if unknown:
            raise ValueError(f"unknown metrics {sorted(unknown)}; "
                             f"known: {sorted(KNOWN_METRICS)}")
        if self.timeout_seconds <= 0:
            raise ValueError("timeout_seconds must be positive")
        object.__setattr__(self, "command", tuple(self.command))
        object.__setattr__(self, "metrics", frozenset(self.metrics))


@dataclass
class ProviderSession:
    descriptor: ProviderDescriptor
    metrics: frozenset[str]
    _proc: subprocess.Popen
    _lines: queue.Queue
    _next_id: int = 1
    alive: bool = True
    metadata: dict = field(default_factory=dict)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        shutdown(self)


def _encode(frame: dict) -> str:
    return json.dumps(frame, separators=(",", ":")) + "\n"


def _decode(line: str) -> dict:
    try:
        frame = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"frame is not valid JSON: {line!r}") from exc
    if not isinstance(frame, dict):
        raise ProtocolError(f"frame is not an object: {line!r}")
    if frame.get("type") not in _FRAME_TYPES:
        raise ProtocolError(f"unknown frame type: {frame.get('type')!r}")
    if not isinstance(frame.get("id"), int) or frame["id"] < 0:
        raise ProtocolError(f"frame id must be a nonnegative integer: {line!r}")
    return frame


def _pump_lines(stream, out: queue.Queue) -> None:
    try:
        for line in stream:
            out.put(line)
    except (OSError, ValueError):
        pass
    finally:
        out.put(None)


def _send(session: ProviderSession, frame: dict) -> None:
    try:
        session._proc.stdin.write(_encode(frame))
        session._proc.stdin.flush()
    except (OSError, ValueError) as exc:
        _kill(session)
        raise ProviderTimeout(
            f"provider {session.descriptor.name}: pipe closed while sending") from exc


def _receive(session: ProviderSession, timeout: float) -> dict:
    try:
        line = session._lines.get(timeout=timeout)
    except queue.Empty:
        _kill(session)
        raise ProviderTimeout(
            f"provider {session.descriptor.name}: no response within {timeout:.0f}s")
    if line is None:
        _kill(session)
        raise ProviderTimeout(
            f"provider {session.descriptor.name}: process closed its output mid-request")
    try:
        return _decode(line)
    except ProtocolError:
        _kill(session)
        raise


def _kill(session: ProviderSession) -> None:
    session.alive = False
    if session._proc.poll() is None:
        session._proc.kill()
        session._proc.wait()


def spawn_and_handshake(desc: ProviderDescriptor) -> ProviderSession:
    """Start the provider, exchange hello/capabilities, intersect metric sets."""
    try:
        proc = subprocess.Popen(desc.command, stdin=subprocess.PIPE,
                                stdout=subprocess.PIPE, text=True, bufsize=1)
    except (OSError, ValueError) as exc:
        raise SpawnError(f"provider {desc.name}: cannot spawn {desc.command[0]}: {exc}") from exc
    lines: queue.Queue = queue.Queue()
    threading.Thread(target=_pump_lines, args=(proc.stdout, lines), daemon=True).start()
    session = ProviderSession(descriptor=desc, metrics=frozenset(), _proc=proc, _lines=lines)
    try:
        _send(session, {"type": "hello", "id": 0, "protocol": PROTOCOL_VERSION})
        frame = _receive(session, desc.timeout_seconds)
    except ProviderTimeout as exc:
        raise HandshakeError(f"provider {desc.name}: handshake failed: {exc}") from exc
    if frame["type"] != "capabilities" or frame["id"] != 0:
        _kill(session)
        raise HandshakeError(f"provider {desc.name}: expected capabilities frame with "
                             f"id 0, got {frame}")
    if frame.get("protocol", PROTOCOL_VERSION) != PROTOCOL_VERSION:
        _kill(session)
        raise HandshakeError(f"provider {desc.name}: protocol version "
                             f"{frame.get('protocol')} not supported")
    advertised = frame.get("metric")
    if (not isinstance(advertised, list)
            or not all(isinstance(m, str) for m in advertised)):
        _kill(session)
        raise HandshakeError(f"provider {desc.name}: capabilities frame must list "
                             f"metrics under 'metric'")
    granted = frozenset(advertised) & desc.metrics
    if not granted:
        _kill(session)
        raise CapabilityError(f"provider {desc.name}: advertised {sorted(advertised)} "
                              f"covers none of the requested {sorted(desc.metrics)}")
    session.metrics = granted
    return session


def _request(session: ProviderSession, payload: dict) -> dict:
    """Send one request frame and return its matching response frame."""
    if not session.alive:
        raise ProviderTimeout(f"provider {session.descriptor.name}: session is dead")
    request_id = session._next_id
    session._next_id += 1
    _send(session, {"id": request_id, **payload})
    frame = _receive(session, session.descriptor.timeout_seconds)
    if frame["id"] != request_id:
        _kill(session)
        raise ProtocolError(f"provider {session.descriptor.name}: response id "
                            f"{frame['id']} does not match request id {request_id}")
    if frame["type"] not in ("result", "error"):
        _kill(session)
        raise ProtocolError(f"provider {session.descriptor.name}: unexpected "
                            f"{frame['type']} frame in response position")
    return frame


def evaluate(session: ProviderSession, metric: str, sr_path, hr_path=None) -> float:
    """Ask the provider to score one image; returns the value at full precision."""
    if metric not in session.metrics:
        raise ValueError(f"metric {metric!r} not granted to this session "
                         f"(have {sorted(session.metrics)})")
    if metric in FULL_REFERENCE_METRICS and hr_path is None:
        raise ValueError(f"{metric} is full-reference and requires hr_path")
    if metric in NO_REFERENCE_METRICS and hr_path is not None:
        raise ValueError(f"{metric} is no-reference and forbids hr_path")
    payload = {"type": "evaluate", "metric": metric, "sr": os.fspath(sr_path)}
    if hr_path is not None:
        payload["hr"] = os.fspath(hr_path)
    frame = _request(session, payload)
    if frame["type"] == "error":
        raise MetricError(f"provider {session.descriptor.name}: {metric}: "
                          f"{frame.get('message', 'unspecified error')}")
    value = frame.get("value")
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        _kill(session)
        raise ProtocolError(f"provider {session.descriptor.name}: non-finite or "
                            f"non-numeric value {value!r} for {metric}")
    meta = frame.get("meta")
    if isinstance(meta, dict):
        session.metadata.setdefault(metric, {}).update(meta)
    return float(value)


def shutdown(session: ProviderSession) -> None:
    """Best-effort orderly stop; forces termination after a 5 s grace period."""
    proc = session._proc
    if session.alive and proc.poll() is None:
        try:
            proc.stdin.write(_encode({"type": "shutdown", "id": session._next_id}))
            proc.stdin.flush()
        except (OSError, ValueError):
            pass
        try:
            proc.wait(timeout=_SHUTDOWN_GRACE_SECONDS)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
    elif proc.poll() is None:
        proc.kill()
        proc.wait()
    session.alive = False
    for stream in (proc.stdin, proc.stdout):
        if stream is not None:
            try:
                stream.close()
            except OSError:
                pass


def verify_provider(desc: ProviderDescriptor, sr_path, hr_path) -> list[tuple[str, bool, str]]:
    """Protocol conformance checks any provider must pass (also used by the mock).

    Returns (check, ok, detail) triples; the caller asserts all ok.
    """
    checks: list[tuple[str, bool, str]] = []

    def check(name, ok, detail=""):
        checks.append((name, bool(ok), detail))

    try:
        session = spawn_and_handshake(desc)
    except ProviderError as exc:
        check("handshake", False, str(exc))
        return checks
    check("handshake", True)
    check("grants-requested-metrics", session.metrics == desc.metrics,
          f"granted {sorted(session.metrics)} vs requested {sorted(desc.metrics)}")
    try:
        for metric in sorted(session.metrics):
            hr = hr_path if metric in FULL_REFERENCE_METRICS else None
            try:
                first = evaluate(session, metric, sr_path, hr)
                again = evaluate(session, metric, sr_path, hr)
            except ProviderError as exc:
                check(f"evaluate-{metric}", False, str(exc))
                continue
            check(f"evaluate-{metric}", math.isfinite(first), f"value {first}")
            check(f"deterministic-{metric}", first == again, f"{first} vs {again}")
        frame = _request(session, {"type": "evaluate", "metric": "nonesuch",
                                   "sr": os.fspath(sr_path)})
        check("unknown-metric-error-frame", frame["type"] == "error",
              f"got {frame['type']} frame")
    except ProviderError as exc:
        check("request-cycle", False, str(exc))
        shutdown(session)
        return checks
    shutdown(session)
    code = session._proc.returncode
    check("clean-shutdown", code == 0, f"exit code {code}")
    return checks
