"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion lines.

Criterion 1 is asserted at its stated ±5e-5 tolerance and is expected to
fail: the golden score column was published rounded to 4 decimals but was
computed from unpublished full-precision metric values, and recomputing from
the published (rounded) metric columns inherits up to ~2.6e-4 of rounding
error. The supplementary test below it verifies the reproduction at that
arithmetically attainable bound. See README, "Known caveats".
"""

import math
import shutil
import sys
import time

import numpy as np
import pytest

from srbench.image import (ImageBuffer, LumaPlane, ResizeSpec, bicubic_resize,
                           load_png, save_png)
from srbench.metrics import psnr, quantize, ssim
from srbench.niqe import NoSharpPatchesError, aggd_fit, default_model, niqe, \
    niqe_features
from srbench.pipeline import (ProtocolConfig, SubmissionBundle, evaluate_submission,
                              generate_lr_set, manifest_from_dir,
                              parse_leaderboard_csv, save_record,
                              table1_fixture_path, validate_submission)
from srbench.provider import (ProtocolError, ProviderDescriptor, ProviderTimeout,
                              evaluate as provider_evaluate, shutdown,
                              spawn_and_handshake, verify_provider)
from srbench.scoring import (LeaderboardEntry, combined_order, perceptual_score,
                             rank_track)
from srbench.synth import add_gaussian_noise, natural_texture

from oracles import bicubic_reference, perceptual_score_reference, ssim_reference

MOCK = (sys.executable, "-m", "srbench.mock_provider")


def _report(criterion: int, name: str, ok: bool, detail: str) -> None:
    print(f"\n[criterion {criterion}] {'PASS' if ok else 'FAIL'}  {name}  ({detail})",
          flush=True)


def _fixture_entries():
    return parse_leaderboard_csv(table1_fixture_path().read_text(encoding="utf-8")).entries


def test_criterion_1_perceptual_score_reproduction_at_stated_tolerance():
    t0 = time.monotonic()
    deltas = {}
    for e in _fixture_entries():
        computed = perceptual_score(e.metrics)
        deltas[e.team] = abs(computed - e.score)
    elapsed = time.monotonic() - t0
    worst = max(deltas.values())
    violations = {t: d for t, d in deltas.items() if d > 5e-5}
    ok = not violations and elapsed < 1.0
    _report(1, "published score column reproduced within ±5e-5 (26 rows)", ok,
            f"max |delta| {worst:.2e}, {len(violations)} rows over 5e-5, "
            f"{elapsed:.3f}s")
    assert ok, (
        f"{len(violations)} of 26 rows exceed ±5e-5 (max |delta| {worst:.2e}). "
        "This is inherent to the golden data, not a scoring defect: the "
        "published score column was computed from full-precision metrics and "
        "the published metric columns are themselves rounded to 4 decimals, "
        "which propagates up to ~2.6e-4 into any recomputation. The "
        "supplementary acceptance test validates the score at that bound.")


def test_criterion_1_supplementary_reproduction_at_input_rounding_bound():
    t0 = time.monotonic()
    worst = 0.0
    for e in _fixture_entries():
        m = e.metrics
        computed = perceptual_score(m)
        exact = perceptual_score_reference(m.lpips, m.dists, m.niqe, m.maniqa,
                                           m.musiq, m.clipiqa)
        assert computed == pytest.approx(exact, abs=1e-12)
        worst = max(worst, abs(computed - e.score))
    elapsed = time.monotonic() - t0
    ok = worst <= 2.6e-4 and elapsed < 1.0
    _report(1, "supplementary: reproduction within the 2.6e-4 input-rounding "
               "bound + exact-arithmetic agreement", ok,
            f"max |delta| {worst:.2e}, {elapsed:.3f}s")
    assert ok


def test_criterion_2_ranking_reproduction():
    t0 = time.monotonic()
    fixture = _fixture_entries()
    ranked = [e for e in fixture if e.ranked]

    # combined order from the published rank pairs reproduces the row order
    shuffled = sorted(ranked, key=lambda e: e.team)
    combined_ok = [e.team for e in combined_order(shuffled)] == \
                  [e.team for e in ranked]

    # per-track ranks recomputed from the published columns agree within
    # displayed-precision tie groups
    bare = [LeaderboardEntry(team=e.team, metrics=e.metrics, score=e.score)
            for e in ranked]
    recomputed = {e.team: (e.rank_track1, e.rank_track2)
                  for e in rank_track(rank_track(bare, 1), 2)}
    track_ok = True
    groups1: dict[float, list] = {}
    for e in ranked:
        groups1.setdefault(e.metrics.psnr, []).append(e.rank_track1)
    for e in ranked:
        group = sorted(groups1[e.metrics.psnr])
        r1, r2 = recomputed[e.team]
        if r1 != group[0] or e.rank_track1 not in range(group[0], group[0] + len(group)):
            track_ok = False
        if r2 != e.rank_track2:  # scores are unique at displayed precision
            track_ok = False
    elapsed = time.monotonic() - t0
    ok = combined_ok and track_ok and elapsed < 1.0
    _report(2, "combined order + per-track ranks reproduce the published table",
            ok, f"combined={combined_ok}, tracks={track_ok}, {elapsed:.3f}s")
    assert ok


def test_criterion_3_bicubic_oracle():
    t0 = time.monotonic()
    rng = np.random.default_rng(2024)
    worst_rms = 0.0
    runs = 0
    for scale, lo, hi in ((0.25, 20, 40), (0.5, 16, 32), (2.0, 10, 24), (4.0, 8, 16)):
        for _ in range(28):
            w = int(rng.integers(lo, hi + 1))
            h = int(rng.integers(lo, hi + 1))
            channels = 3 if runs % 3 == 0 else 1
            buf = ImageBuffer(rng.random((h, w, channels)))
            mine = bicubic_resize(buf, ResizeSpec.default(scale))
            ref = bicubic_reference(buf.data, scale, antialias=scale < 1)
            worst_rms = max(worst_rms, float(np.sqrt(np.mean((mine.data - ref) ** 2))))
            runs += 1

    const = ImageBuffer(np.full((24, 20, 3), 0.4321))
    ones = ImageBuffer(np.ones((16, 16, 1)))
    ident = ImageBuffer(rng.random((17, 13, 3)))
    invariants = max(
        max(abs(bicubic_resize(const, ResizeSpec.default(s)).data - 0.4321).max()
            for s in (0.25, 0.5, 2.0, 4.0)),
        max(abs(bicubic_resize(ones, ResizeSpec.default(s)).data - 1.0).max()
            for s in (0.25, 0.5, 2.0, 4.0)),
        abs(bicubic_resize(ident, ResizeSpec(scale=1.0, antialias=False)).data
            - ident.data).max())
    elapsed = time.monotonic() - t0
    ok = runs >= 100 and worst_rms <= 1e-6 and invariants <= 1e-9 and elapsed < 30
    _report(3, "separable resampler vs brute-force oracle", ok,
            f"{runs} images, worst RMS {worst_rms:.2e}, invariants "
            f"{invariants:.2e}, {elapsed:.1f}s")
    assert ok


def test_criterion_4_psnr_ssim_suite():
    t0 = time.monotonic()
    rng = np.random.default_rng(11)

    plane = quantize(LumaPlane(rng.random((64, 64))))
    identity_ok = psnr(plane, plane) == math.inf and \
        ssim(plane, plane) == pytest.approx(1.0, abs=1e-9)

    ref = LumaPlane(np.full((32, 32), 100 / 255))
    off = LumaPlane(np.full((32, 32), 101 / 255))
    offset_ok = abs(psnr(ref, off) - 48.1308) <= 1e-3

    worst = 0.0
    for _ in range(20):
        a = quantize(LumaPlane(rng.random((64, 64))))
        b = quantize(LumaPlane(rng.random((64, 64))))
        worst = max(worst, abs(ssim(a, b) - ssim_reference(a.data, b.data)))
    oracle_ok = worst <= 1e-8

    base = rng.random((64, 64))
    values = []
    for sigma in np.linspace(0.01, 0.2, 10):
        noisy = np.clip(base + rng.standard_normal((64, 64)) * sigma, 0, 1)
        values.append(psnr(quantize(LumaPlane(base)), quantize(LumaPlane(noisy))))
    monotone_ok = all(a > b for a, b in zip(values, values[1:]))

    elapsed = time.monotonic() - t0
    ok = identity_ok and offset_ok and oracle_ok and monotone_ok and elapsed < 30
    _report(4, "PSNR/SSIM identities, closed form, oracle, monotonicity", ok,
            f"ssim worst |delta| {worst:.2e}, {elapsed:.1f}s")
    assert ok


def test_criterion_5_niqe_properties(texture_bank):
    t0 = time.monotonic()
    rng = np.random.default_rng(12)

    lap = aggd_fit(rng.laplace(0.0, 1.0, 10**6))
    gau = aggd_fit(rng.normal(0.0, 1.0, 10**6))
    aggd_ok = abs(lap.alpha - 1.0) <= 0.1 and abs(gau.alpha - 2.0) <= 0.2

    model = default_model()
    from srbench.image import to_luma
    wins = 0
    for texture in texture_bank:
        clean = niqe(to_luma(texture), model)
        noisy = niqe(to_luma(add_gaussian_noise(texture, 25 / 255, rng)), model)
        wins += clean < noisy
    ordering_ok = wins == 10

    try:
        niqe_features(LumaPlane(np.full((128, 128), 0.5)), model)
        constant_ok = False
    except NoSharpPatchesError:
        constant_ok = True

    elapsed = time.monotonic() - t0
    ok = aggd_ok and ordering_ok and constant_ok and elapsed < 300
    _report(5, "AGGD recovery, clean<noisy ordering 10/10, flat-image error", ok,
            f"alpha lap {lap.alpha:.3f} gauss {gau.alpha:.3f}, ordering "
            f"{wins}/10, {elapsed:.1f}s")
    assert ok


def test_criterion_6_provider_conformance(tmp_path):
    t0 = time.monotonic()
    rng = np.random.default_rng(13)
    sr, hr = tmp_path / "sr.png", tmp_path / "hr.png"
    save_png(ImageBuffer(rng.random((8, 8, 3))), sr)
    save_png(ImageBuffer(rng.random((8, 8, 3))), hr)

    all_metrics = ("lpips", "dists", "maniqa", "musiq", "clipiqa")

    def descriptor(*extra, metrics=all_metrics, timeout=30):
        return ProviderDescriptor(
            name="mock", command=MOCK + ("--metrics", ",".join(metrics)) + extra,
            metrics=frozenset(metrics), timeout_seconds=timeout)

    results = verify_provider(descriptor(), sr, hr)
    conforms = all(ok for _, ok, _ in results)

    faults_ok = True
    session = spawn_and_handshake(descriptor("--crash-after", "1"))
    try:
        provider_evaluate(session, "lpips", sr, hr)
        faults_ok = False
    except ProviderTimeout:
        faults_ok &= not session.alive
    shutdown(session)

    session = spawn_and_handshake(descriptor("--hang", timeout=1))
    try:
        provider_evaluate(session, "musiq", sr)
        faults_ok = False
    except ProviderTimeout:
        faults_ok &= not session.alive
    shutdown(session)

    session = spawn_and_handshake(descriptor("--non-finite"))
    try:
        provider_evaluate(session, "clipiqa", sr)
        faults_ok = False
    except ProtocolError:
        pass
    shutdown(session)

    # canned values must land in the record untouched, at full precision
    hr_dir = tmp_path / "hr_set"
    hr_dir.mkdir()
    save_png(natural_texture(128, 128, rng), hr_dir / "0001.png")
    manifest = generate_lr_set(manifest_from_dir(hr_dir), tmp_path / "lr_set")
    sub = tmp_path / "sub"
    sub.mkdir()
    shutil.copy(hr_dir / "0001.png", sub / "0001.png")
    canned = descriptor("--values",
                        "lpips=0.2113,dists=0.1082,maniqa=0.4939,"
                        "musiq=71.4919,clipiqa=0.7543")
    record = evaluate_submission(SubmissionBundle.from_directory("t", sub),
                                 manifest, (canned,),
                                 ProtocolConfig(timestamps=False))
    canned_ok = (record.aggregate.lpips, record.aggregate.dists,
                 record.aggregate.maniqa, record.aggregate.musiq,
                 record.aggregate.clipiqa) == (0.2113, 0.1082, 0.4939,
                                               71.4919, 0.7543)

    elapsed = time.monotonic() - t0
    ok = conforms and faults_ok and canned_ok and elapsed < 10
    _report(6, "mock conformance, fault injection, canned values unmodified", ok,
            f"conformance={conforms}, faults={faults_ok}, canned={canned_ok}, "
            f"{elapsed:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def desk_scale_2k(tmp_path_factory):
    """Ten 2K-resolution synthetic HR images (DIV2K-like sizes)."""
    root = tmp_path_factory.mktemp("twok")
    hr_dir = root / "hr"
    hr_dir.mkdir()
    rng = np.random.default_rng(2025)
    for i in range(10):
        save_png(natural_texture(2040, 1080, rng), hr_dir / f"{900 + i:04d}.png")
    return root, hr_dir


def test_criterion_7_pipeline_determinism(desk_scale_2k):
    root, hr_dir = desk_scale_2k
    t0 = time.monotonic()

    manifest = generate_lr_set(manifest_from_dir(hr_dir), root / "lr")

    sub_dir = root / "upsampled"
    sub_dir.mkdir()
    for entry in manifest.entries:
        up = bicubic_resize(load_png(entry.lr_path), ResizeSpec.default(4.0))
        save_png(up, sub_dir / f"{entry.image_id}.png")
    bundle = SubmissionBundle.from_directory("upsampled", sub_dir)
    validation_ok = validate_submission(bundle, manifest).ok

    config = ProtocolConfig(allow_partial=True, timestamps=False)
    r1 = evaluate_submission(bundle, manifest, (), config)
    r2 = evaluate_submission(bundle, manifest, (), config)
    save_record(r1, root / "run1.json")
    save_record(r2, root / "run2.json")
    deterministic = (root / "run1.json").read_bytes() == (root / "run2.json").read_bytes()

    identity_dir = root / "identity"
    identity_dir.mkdir()
    for entry in manifest.entries:
        shutil.copy(entry.hr_path, identity_dir / f"{entry.image_id}.png")
    identity = evaluate_submission(
        SubmissionBundle.from_directory("identity", identity_dir),
        manifest, (), config)
    identity_ok = identity.aggregate.psnr == math.inf and \
        identity.aggregate.ssim == pytest.approx(1.0, abs=1e-9)

    below_identity = math.isfinite(r1.aggregate.psnr)
    elapsed = time.monotonic() - t0
    ok = (validation_ok and deterministic and identity_ok and below_identity
          and elapsed < 120)
    _report(7, "2K degrade/upsample/validate/evaluate determinism + identity", ok,
            f"deterministic={deterministic}, identity psnr/ssim="
            f"{identity.aggregate.psnr}/{identity.aggregate.ssim:.6f}, "
            f"{elapsed:.1f}s")
    assert ok
