import json
import subprocess
import sys

import numpy as np
import pytest

from util import save, texture

PROVIDER = (sys.executable, "-m", "iqa_provider")


class RawSession:
    """Minimal frame-level client, independent of the evaluator library."""

    def __init__(self, *args):
        self.proc = subprocess.Popen(PROVIDER + args, stdin=subprocess.PIPE,
                                     stdout=subprocess.PIPE, text=True, bufsize=1)

    def send(self, frame):
        self.proc.stdin.write(json.dumps(frame) + "\n")
        self.proc.stdin.flush()

    def recv(self, timeout=30):
        line = self.proc.stdout.readline()
        assert line, "provider closed stdout"
        return json.loads(line)

    def close(self):
        if self.proc.poll() is None:
            self.proc.kill()
        self.proc.wait()


@pytest.fixture()
def session():
    s = RawSession("--metrics", "lpips,musiq")
    yield s
    s.close()


@pytest.fixture(scope="module")
def images(tmp_path_factory):
    root = tmp_path_factory.mktemp("imgs")
    rng = np.random.default_rng(9)
    sr, hr = root / "sr.png", root / "hr.png"
    save(texture(96, 96, rng), sr)
    save(texture(96, 96, rng), hr)
    return sr, hr


class TestFrames:
    def test_hello_capabilities(self, session):
        session.send({"type": "hello", "id": 0, "protocol": 1})
        reply = session.recv()
        assert reply["type"] == "capabilities"
        assert reply["id"] == 0
        assert reply["protocol"] == 1
        assert reply["metric"] == ["lpips", "musiq"]

    def test_result_carries_value_and_meta(self, session, images):
        sr, hr = images
        session.send({"type": "hello", "id": 0, "protocol": 1})
        session.recv()
        session.send({"type": "evaluate", "id": 1, "metric": "lpips",
                      "sr": str(sr), "hr": str(hr)})
        reply = session.recv()
        assert reply["type"] == "result" and reply["id"] == 1
        assert reply["metric"] == "lpips"
        assert isinstance(reply["value"], float)
        assert reply["meta"]["checkpoint_sha256"]

    def test_unknown_metric_error_frame(self, session, images):
        sr, _ = images
        session.send({"type": "hello", "id": 0, "protocol": 1})
        session.recv()
        session.send({"type": "evaluate", "id": 1, "metric": "vmaf", "sr": str(sr)})
        reply = session.recv()
        assert reply["type"] == "error" and reply["id"] == 1
        assert "not supported" in reply["message"]

    def test_missing_image_error_frame(self, session):
        session.send({"type": "hello", "id": 0, "protocol": 1})
        session.recv()
        session.send({"type": "evaluate", "id": 1, "metric": "musiq",
                      "sr": "/no/such/file.png"})
        reply = session.recv()
        assert reply["type"] == "error" and reply["id"] == 1

    def test_hr_on_no_reference_is_error(self, session, images):
        sr, hr = images
        session.send({"type": "hello", "id": 0, "protocol": 1})
        session.recv()
        session.send({"type": "evaluate", "id": 1, "metric": "musiq",
                      "sr": str(sr), "hr": str(hr)})
        reply = session.recv()
        assert reply["type"] == "error"

    def test_missing_hr_on_full_reference_is_error(self, session, images):
        sr, _ = images
        session.send({"type": "hello", "id": 0, "protocol": 1})
        session.recv()
        session.send({"type": "evaluate", "id": 1, "metric": "lpips", "sr": str(sr)})
        reply = session.recv()
        assert reply["type"] == "error"

    def test_shutdown_exits_zero(self, session):
        session.send({"type": "hello", "id": 0, "protocol": 1})
        session.recv()
        session.send({"type": "shutdown", "id": 1})
        assert session.proc.wait(timeout=10) == 0

    def test_unsupported_protocol_version(self, session):
        session.send({"type": "hello", "id": 0, "protocol": 2})
        reply = session.recv()
        assert reply["type"] == "error"
        assert session.proc.wait(timeout=10) == 1


class TestManifestFlag:
    def test_manifest_output(self):
        out = subprocess.run(PROVIDER + ("--manifest",), capture_output=True,
                             text=True, timeout=60)
        assert out.returncode == 0
        doc = json.loads(out.stdout)
        assert set(doc["metrics"]) == {"lpips", "dists", "maniqa", "musiq", "clipiqa"}

    def test_unknown_metric_flag_rejected(self):
        out = subprocess.run(PROVIDER + ("--metrics", "vmaf"),
                             capture_output=True, text=True, timeout=60)
        assert out.returncode == 2


class TestEvaluatorConformance:
    """The provider must pass the exact conformance suite the mock passes."""

    def test_verify_provider(self, images):
        from srbench.provider import ProviderDescriptor, verify_provider
        sr, hr = images
        desc = ProviderDescriptor(
            name="iqa",
            command=PROVIDER + ("--metrics", "lpips,dists,maniqa,musiq,clipiqa"),
            metrics=frozenset({"lpips", "dists", "maniqa", "musiq", "clipiqa"}),
            timeout_seconds=120)
        results = verify_provider(desc, sr, hr)
        failures = [(name, detail) for name, ok, detail in results if not ok]
        assert not failures, failures

    def test_end_to_end_evaluation_record(self, tmp_path):
        from srbench.image import load_png, save_png
        from srbench.pipeline import (ProtocolConfig, SubmissionBundle,
                                      evaluate_submission, generate_lr_set,
                                      manifest_from_dir)
        from srbench.provider import ProviderDescriptor

        rng = np.random.default_rng(17)
        hr_dir = tmp_path / "hr"
        hr_dir.mkdir()
        save(texture(128, 128, rng), hr_dir / "0001.png")
        manifest = generate_lr_set(manifest_from_dir(hr_dir), tmp_path / "lr")
        sub = tmp_path / "sub"
        sub.mkdir()
        save_png(load_png(hr_dir / "0001.png"), sub / "0001.png")

        desc = ProviderDescriptor(
            name="iqa",
            command=PROVIDER + ("--metrics", "lpips,dists,maniqa,musiq,clipiqa"),
            metrics=frozenset({"lpips", "dists", "maniqa", "musiq", "clipiqa"}),
            timeout_seconds=120)
        record = evaluate_submission(SubmissionBundle.from_directory("iqa-team", sub),
                                     manifest, (desc,),
                                     ProtocolConfig(timestamps=False))
        assert record.score is not None
        assert record.aggregate.lpips <= 1e-6  # identity submission
        assert record.providers[0]["meta"]["lpips"]["checkpoint_sha256"]
