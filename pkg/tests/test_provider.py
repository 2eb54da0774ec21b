import sys

import numpy as np
import pytest

from srbench.image import ImageBuffer, save_png
from srbench.provider import (CapabilityError, HandshakeError, MetricError,
                              ProtocolError, ProviderDescriptor, ProviderTimeout,
                              SpawnError, evaluate, shutdown, spawn_and_handshake,
                              verify_provider)

MOCK = (sys.executable, "-m", "srbench.mock_provider")


def mock_descriptor(metrics=("lpips",), requested=None, timeout=30, *extra):
    command = MOCK + ("--metrics", ",".join(metrics)) + tuple(extra)
    return ProviderDescriptor(name="mock", command=command,
                              metrics=frozenset(requested or metrics),
                              timeout_seconds=timeout)


@pytest.fixture(scope="module")
def image_pair(tmp_path_factory):
    root = tmp_path_factory.mktemp("imgs")
    rng = np.random.default_rng(0)
    sr, hr = root / "sr.png", root / "hr.png"
    save_png(ImageBuffer(rng.random((8, 8, 3))), sr)
    save_png(ImageBuffer(rng.random((8, 8, 3))), hr)
    return sr, hr


class TestDescriptor:
    def test_rejects_empty_metrics(self):
        with pytest.raises(ValueError):
            ProviderDescriptor(name="x", command=("true",), metrics=frozenset())

    def test_rejects_unknown_metric(self):
        with pytest.raises(ValueError, match="unknown metrics"):
            ProviderDescriptor(name="x", command=("true",),
                               metrics=frozenset({"vmaf"}))

    def test_rejects_uppercase(self):
        with pytest.raises(ValueError, match="lowercase"):
            ProviderDescriptor(name="x", command=("true",),
                               metrics=frozenset({"LPIPS"}))


class TestHandshake:
    def test_grants_requested(self):
        session = spawn_and_handshake(mock_descriptor(("lpips",)))
        assert session.metrics == {"lpips"}
        shutdown(session)

    def test_exits_immediately(self):
        desc = mock_descriptor(("lpips",), None, 30, "--exit-immediately")
        with pytest.raises(HandshakeError):
            spawn_and_handshake(desc)

    def test_silent_handshake(self):
        desc = mock_descriptor(("lpips",), None, 5, "--silent-handshake")
        with pytest.raises(HandshakeError):
            spawn_and_handshake(desc)

    def test_superset_advertisement_restricted(self):
        desc = mock_descriptor(("lpips", "dists"), requested=("lpips",))
        session = spawn_and_handshake(desc)
        assert session.metrics == {"lpips"}
        shutdown(session)

    def test_disjoint_capabilities(self):
        desc = mock_descriptor(("dists",), requested=("lpips",))
        with pytest.raises(CapabilityError):
            spawn_and_handshake(desc)

    def test_spawn_failure(self):
        desc = ProviderDescriptor(name="x", command=("/no/such/binary",),
                                  metrics=frozenset({"lpips"}))
        with pytest.raises(SpawnError):
            spawn_and_handshake(desc)


class TestEvaluate:
    def test_canned_value_flows_unmodified(self, image_pair):
        sr, hr = image_pair
        desc = mock_descriptor(("lpips",), None, 30, "--values", "lpips=0.2113")
        with spawn_and_handshake(desc) as session:
            assert evaluate(session, "lpips", sr, hr) == 0.2113

    def test_full_reference_needs_hr(self, image_pair):
        sr, _ = image_pair
        with spawn_and_handshake(mock_descriptor(("lpips",))) as session:
            before = session._next_id
            with pytest.raises(ValueError, match="requires hr_path"):
                evaluate(session, "lpips", sr)
            assert session._next_id == before  # no frame was sent

    def test_no_reference_forbids_hr(self, image_pair):
        sr, hr = image_pair
        with spawn_and_handshake(mock_descriptor(("musiq",))) as session:
            with pytest.raises(ValueError, match="forbids hr_path"):
                evaluate(session, "musiq", sr, hr)

    def test_unknown_metric_rejected_client_side(self, image_pair):
        sr, hr = image_pair
        with spawn_and_handshake(mock_descriptor(("lpips",))) as session:
            with pytest.raises(ValueError, match="not granted"):
                evaluate(session, "dists", sr, hr)

    def test_error_frame_keeps_session_alive(self, image_pair):
        sr, hr = image_pair
        desc = mock_descriptor(("lpips", "dists"), None, 30,
                               "--error-metric", "dists")
        with spawn_and_handshake(desc) as session:
            with pytest.raises(MetricError, match="injected failure"):
                evaluate(session, "dists", sr, hr)
            assert session.alive
            assert evaluate(session, "lpips", sr, hr) == 0.5

    def test_meta_recorded(self, image_pair):
        sr, hr = image_pair
        desc = mock_descriptor(("lpips",), None, 30, "--meta", "checkpoint=abc123")
        with spawn_and_handshake(desc) as session:
            evaluate(session, "lpips", sr, hr)
            assert session.metadata["lpips"]["checkpoint"] == "abc123"


class TestFaults:
    def test_crash_mid_request(self, image_pair):
        sr, hr = image_pair
        desc = mock_descriptor(("lpips",), None, 30, "--crash-after", "1")
        session = spawn_and_handshake(desc)
        with pytest.raises(ProviderTimeout):
            evaluate(session, "lpips", sr, hr)
        assert not session.alive
        shutdown(session)

    def test_timeout_marks_dead(self, image_pair):
        sr, hr = image_pair
        desc = mock_descriptor(("lpips",), None, 1, "--hang")
        session = spawn_and_handshake(desc)
        with pytest.raises(ProviderTimeout, match="within"):
            evaluate(session, "lpips", sr, hr)
        assert not session.alive
        shutdown(session)

    def test_non_finite_value(self, image_pair):
        sr, hr = image_pair
        desc = mock_descriptor(("lpips",), None, 30, "--non-finite")
        session = spawn_and_handshake(desc)
        with pytest.raises(ProtocolError, match="non-finite"):
            evaluate(session, "lpips", sr, hr)
        assert not session.alive
        shutdown(session)

    def test_mismatched_id(self, image_pair):
        sr, hr = image_pair
        desc = mock_descriptor(("lpips",), None, 30, "--wrong-id")
        session = spawn_and_handshake(desc)
        with pytest.raises(ProtocolError, match="does not match"):
            evaluate(session, "lpips", sr, hr)
        assert not session.alive
        shutdown(session)

    def test_crash_preserves_recorded_values(self, image_pair):
        sr, hr = image_pair
        desc = mock_descriptor(("lpips",), None, 30, "--values", "lpips=0.25",
                               "--crash-after", "2")
        session = spawn_and_handshake(desc)
        recorded = {"0001": evaluate(session, "lpips", sr, hr)}
        with pytest.raises(ProviderTimeout):
            evaluate(session, "lpips", sr, hr)
        assert recorded == {"0001": 0.25}
        shutdown(session)


class TestShutdown:
    def test_clean_exit(self):
        session = spawn_and_handshake(mock_descriptor(("lpips",)))
        shutdown(session)
        assert session._proc.returncode == 0

    def test_idempotent_on_dead_session(self):
        session = spawn_and_handshake(mock_descriptor(("lpips",)))
        shutdown(session)
        shutdown(session)
        assert session._proc.returncode == 0

    def test_unresponsive_provider_is_killed(self, image_pair):
        # hang before replying; shutdown must reap it within the grace period
        sr, hr = image_pair
        desc = mock_descriptor(("lpips",), None, 1, "--hang")
        session = spawn_and_handshake(desc)
        with pytest.raises(ProviderTimeout):
            evaluate(session, "lpips", sr, hr)
        shutdown(session)
        assert session._proc.poll() is not None


class TestConformance:
    def test_mock_passes_suite(self, image_pair):
        sr, hr = image_pair
        desc = mock_descriptor(("lpips", "dists", "maniqa", "musiq", "clipiqa"))
        results = verify_provider(desc, sr, hr)
        failed = [(name, detail) for name, ok, detail in results if not ok]
        assert not failed, failed

    def test_single_vs_multiple_providers_identical(self, image_pair):
        sr, hr = image_pair
        values = "lpips=0.11,dists=0.22,musiq=63.5"
        combined = mock_descriptor(("lpips", "dists", "musiq"), None, 30,
                                   "--values", values)
        split = [mock_descriptor(("lpips",), None, 30, "--values", values),
                 mock_descriptor(("dists", "musiq"), None, 30, "--values", values)]

        def run(descriptors):
            out = {}
            for desc in descriptors:
                with spawn_and_handshake(desc) as session:
                    for metric in sorted(session.metrics):
                        hr_arg = hr if metric in ("lpips", "dists") else None
                        out[metric] = evaluate(session, metric, sr, hr_arg)
            return out

        assert run([combined]) == run(split)
