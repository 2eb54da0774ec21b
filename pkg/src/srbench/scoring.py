"""Perceptual-score aggregation and dual-track leaderboard ranking.

Track 1 orders submissions by PSNR, track 2 by the composite perceptual
score. The combined leaderboard order sorts by the better of the two track
ranks, then by their average, then by team name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from decimal import ROUND_HALF_UP, Decimal

METRIC_FIELDS = ("psnr", "ssim", "lpips", "dists", "niqe", "maniqa", "musiq", "clipiqa")
PERCEPTUAL_FIELDS = ("lpips", "dists", "niqe", "maniqa", "musiq", "clipiqa")


@dataclass(frozen=True)
class MetricVector:
    """One submission's metric values; None marks a metric as absent.

    musiq is stored on its native 0-100 scale. psnr may be +inf (the
    identical-images sentinel); every other present value must be finite.
    """

    psnr: float | None = None
    ssim: float | None = None
    lpips: float | None = None
    dists: float | None = None
    niqe: float | None = None
    maniqa: float | None = None
    musiq: float | None = None
    clipiqa: float | None = None

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            value = float(value)
            object.__setattr__(self, f.name, value)
            if math.isnan(value):
                raise ValueError(f"{f.name} must not be NaN")
            if not math.isfinite(value) and not (f.name == "psnr" and value == math.inf):
                raise ValueError(f"{f.name} must be finite, got {value}")
        if self.niqe is not None and self.niqe < 0:
            raise ValueError(f"niqe must be nonnegative, got {self.niqe}")

    def present(self) -> tuple[str, ...]:
        return tuple(f for f in METRIC_FIELDS if getattr(self, f) is not None)


def perceptual_score(m: MetricVector) -> float:
    """Composite of the six perceptual metrics; 6.0 at the ideal corner."""
    missing = [f for f in PERCEPTUAL_FIELDS if getattr(m, f) is None]
    if missing:
        raise ValueError(f"perceptual score needs {missing} (absent from vector)")
    return ((1.0 - m.lpips) + (1.0 - m.dists) + m.clipiqa + m.maniqa
            + m.musiq / 100.0 + max(0.0, (10.0 - m.niqe) / 10.0))


def aggregate_submission(per_image: list[MetricVector]) -> MetricVector:
    """Arithmetic mean per metric across a submission's images, full precision.

    A metric must be present on all images or on none. PSNR sentinels are
    left out of the mean unless every image is a sentinel, which propagates.
    """
    if not per_image:
        raise ValueError("cannot aggregate an empty submission")
    values: dict[str, float] = {}
    for name in METRIC_FIELDS:
        column = [getattr(v, name) for v in per_image]
        have = [x for x in column if x is not None]
        if not have:
            continue
        if len(have) != len(column):
            raise ValueError(f"metric {name!r} present on {len(have)} of "
                             f"{len(column)} images; submissions must be homogeneous")
        if name == "psnr":
            finite = [x for x in have if math.isfinite(x)]
            values[name] = sum(finite) / len(finite) if finite else math.inf
        else:
            values[name] = sum(have) / len(have)
    return MetricVector(**values)


@dataclass(frozen=True)
class LeaderboardEntry:
    team: str
    metrics: MetricVector
    score: float | None = None
    rank_track1: int | None = None
    rank_track2: int | None = None
    ranked: bool = True


def _competition_ranks(keyed: list[tuple[float, str]]) -> dict[str, int]:
    """Descending competition ranking: ties share the smaller rank, next skips."""
    ordered = sorted(keyed, key=lambda kv: (-kv[0], kv[1]))
    ranks: dict[str, int] = {}
    previous_key = None
    previous_rank = 0
    for position, (key, team) in enumerate(ordered, start=1):
        rank = previous_rank if key == previous_key else position
        ranks[team] = rank
        previous_key, previous_rank = key, rank
    return ranks


def rank_track(entries: list[LeaderboardEntry], track: int) -> list[LeaderboardEntry]:
    """Assign per-track ranks to ranked entries at full stored precision."""
    if track not in (1, 2):
        raise ValueError(f"track must be 1 or 2, got {track}")
    keyed = []
    for e in entries:
        if not e.ranked:
            continue
        key = e.metrics.psnr if track == 1 else e.score
        if key is None:
            raise ValueError(f"team {e.team!r} is ranked but has no "
                             f"{'psnr' if track == 1 else 'score'} for track {track}")
        keyed.append((key, e.team))
    ranks = _competition_ranks(keyed)
    slot = "rank_track1" if track == 1 else "rank_track2"
    return [replace(e, **{slot: ranks[e.team]}) if e.ranked else e for e in entries]


def combined_order(entries: list[LeaderboardEntry]) -> list[LeaderboardEntry]:
    """Order by (best track rank, mean track rank, team); unranked trail as given."""
    ranked = [e for e in entries if e.ranked]
    unranked = [e for e in entries if not e.ranked]
    for e in ranked:
        if e.rank_track1 is None or e.rank_track2 is None:
            raise ValueError(f"team {e.team!r} is missing a track rank; "
                             "run rank_track for both tracks first")
    ranked.sort(key=lambda e: (min(e.rank_track1, e.rank_track2),
                               (e.rank_track1 + e.rank_track2) / 2.0,
                               e.team))
    return ranked + unranked


def round_half_away(value: float, decimals: int) -> float:
    """Presentation rounding; ties go away from zero, as in challenge reports."""
    quantum = Decimal(1).scaleb(-decimals)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))
