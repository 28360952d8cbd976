"""Quantitative measures: IoU, click-effort curves, decidability index, benchmark runs.

The benchmark protocol simulates a user clicking on each object: per click the
foreground IoU is recorded (at most MAX_CLICKS clicks), and per-object records
are aggregated into mean IoU-vs-clicks curves and mean clicks-to-target-IoU
tables (capped at MAX_CLICKS when the target is never reached).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .interactions import ClickSet

log = logging.getLogger(__name__)

MAX_CLICKS = 20
DI_RADIUS = 10


def _as_mask(a) -> np.ndarray:
    m = np.asarray(a)
    if m.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {m.shape}")
    return m.astype(bool)


def iou(a, b, void=None) -> float:
    """Foreground intersection-over-union; 1.0 when both masks are empty.

    Pixels in `void` (optional mask) are excluded from both intersection and
    union.
    """
    a, b = _as_mask(a), _as_mask(b)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    inter = a & b
    union = a | b
    if void is not None:
        keep = ~_as_mask(void)
        inter = inter & keep
        union = union & keep
    u = int(union.sum())
    if u == 0:
        return 1.0
    return int(inter.sum()) / u


def clicks_to_reach(ious: Sequence[float], target: float, cap: int = MAX_CLICKS) -> int:
    """First 1-based click index whose IoU reaches `target`, else `cap`."""
    for k, v in enumerate(ious, start=1):
        if v >= target:
            return k
    return cap


@dataclass
class EvalRecord:
    """Per-object result of a simulated click sequence."""

    object_id: str
    ious: tuple[float, ...]
    regime: str
    clicks_to_target: dict[float, int] = field(default_factory=dict)

    def __post_init__(self):
        self.ious = tuple(float(v) for v in self.ious)
        if len(self.ious) > MAX_CLICKS:
            raise ValueError(f"at most {MAX_CLICKS} per-click IoUs, got {len(self.ious)}")
        if any(not (0.0 <= v <= 1.0) for v in self.ious):
            raise ValueError("IoU values must lie in [0, 1]")
        for t, k in self.clicks_to_target.items():
            if not (1 <= k <= MAX_CLICKS):
                raise ValueError(f"clicks-to-target for {t} out of range: {k}")

    def padded_ious(self, length: int = MAX_CLICKS) -> tuple[float, ...]:
        """IoU list padded to `length`, carrying the final value forward.

        A record that converged with zero clicks pads with 1.0 (the masks
        matched exactly before any click was needed).
        """
        if not self.ious:
            return (1.0,) * length
        return self.ious + (self.ious[-1],) * (length - len(self.ious))


def mean_clicks_to_iou(records: Sequence[EvalRecord], target: float) -> float:
    """Mean over objects of the first click reaching `target` IoU (capped)."""
    if not records:
        raise ValueError("no records")
    return float(np.mean([clicks_to_reach(r.ious, target) for r in records]))


def iou_curve(records: Sequence[EvalRecord], max_clicks: int = MAX_CLICKS) -> np.ndarray:
    """Per-click mean IoU curve of length `max_clicks`.

    Early-terminated sequences carry their final IoU forward before averaging.
    """
    if not records:
        raise ValueError("no records")
    padded = np.array([r.padded_ious(max_clicks) for r in records], dtype=np.float64)
    return padded.mean(axis=0)


@dataclass(frozen=True)
class DIStats:
    """Separation statistics between two response populations.

    sigma_p / sigma_n are population variances. `di` is
    |mu_p - mu_n| / sqrt((sigma_p + sigma_n) / 2); when both variances vanish
    and the means coincide the index is undefined and flagged.
    """

    mu_p: float
    mu_n: float
    sigma_p: float
    sigma_n: float
    di: float
    defined: bool = True


def _disk_union(shape, clicks, radius) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    rows = np.arange(shape[0])[:, None]
    cols = np.arange(shape[1])[None, :]
    r2 = radius * radius
    for c in clicks:
        mask |= (rows - c.row) ** 2 + (cols - c.col) ** 2 <= r2
    return mask


def di_from_populations(pos: np.ndarray, neg: np.ndarray) -> DIStats:
    """Decidability index of two nonempty 1-D response populations."""
    pos = np.asarray(pos, dtype=np.float64).ravel()
    neg = np.asarray(neg, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        return DIStats(np.nan, np.nan, np.nan, np.nan, np.nan, defined=False)
    mu_p, mu_n = float(pos.mean()), float(neg.mean())
    sigma_p, sigma_n = float(pos.var()), float(neg.var())
    denom = np.sqrt((sigma_p + sigma_n) / 2.0)
    if denom == 0.0:
        if mu_p == mu_n:
            return DIStats(mu_p, mu_n, sigma_p, sigma_n, np.nan, defined=False)
        return DIStats(mu_p, mu_n, sigma_p, sigma_n, float("inf"))
    return DIStats(mu_p, mu_n, sigma_p, sigma_n, abs(mu_p - mu_n) / denom)


def decidability_index(prob, clicks: ClickSet, gt, radius: int = DI_RADIUS,
                       regime=None) -> DIStats:
    """Separation between probability responses around positive vs negative clicks.

    Populations are the probability values inside the union of closed disks of
    `radius` around the clicks of each polarity (overlaps counted once).
    Fallbacks when a population has no disks: with no negative clicks the
    negative population is the whole background; with no positive clicks (or
    under the single-positive regime, which analyses negatives against the
    object as a whole) the positive population is the whole foreground.
    Raises ValueError under single_positive when no negative clicks exist yet.
    """
    prob = np.asarray(prob, dtype=np.float64)
    gt = _as_mask(gt)
    if prob.shape != gt.shape:
        raise ValueError("probability map and ground truth shapes differ")
    if radius <= 0:
        raise ValueError("radius must be positive")
    if len(clicks) == 0:
        raise ValueError("at least one click required")

    regime_name = getattr(regime, "value", regime)
    single_positive = regime_name == "single_positive"
    pos_clicks, neg_clicks = clicks.positive(), clicks.negative()

    if single_positive and not neg_clicks:
        raise ValueError("decidability index is undefined under single_positive "
                         "before any negative click")

    if single_positive or not pos_clicks:
        pos_pop = prob[gt]
    else:
        pos_pop = prob[_disk_union(prob.shape, pos_clicks, radius)]
    if not neg_clicks:
        neg_pop = prob[~gt]
    else:
        neg_pop = prob[_disk_union(prob.shape, neg_clicks, radius)]
    return di_from_populations(pos_pop, neg_pop)


@dataclass
class BenchmarkReport:
    """Aggregated benchmark outputs plus raw per-object material for audits."""

    regime: str
    targets: tuple[float, ...]
    max_clicks: int
    records: list[EvalRecord]
    curve: np.ndarray
    mean_clicks: dict[float, float]
    di_means: dict[int, float]
    click_logs: dict[str, ClickSet]
    failures: dict[str, str]

    def export_clicks(self, path) -> None:
        """Line-delimited click audit: object id, click index, row, col, polarity, iou."""
        with open(path, "w") as fh:
            for rec in self.records:
                clicks = self.click_logs.get(rec.object_id, ClickSet())
                for idx, (click, v) in enumerate(zip(clicks, rec.ious), start=1):
                    fh.write(json.dumps({
                        "object_id": rec.object_id,
                        "click_index": idx,
                        "row": click.row,
                        "col": click.col,
                        "polarity": click.polarity,
                        "iou": v,
                    }) + "\n")

    def to_csv(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "curve.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["clicks", "mean_iou"])
            for k, v in enumerate(self.curve, start=1):
                w.writerow([k, f"{v:.6f}"])
        with open(directory / "clicks_to_target.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["target_iou", "mean_clicks"])
            for t in self.targets:
                w.writerow([t, f"{self.mean_clicks[t]:.4f}"])
        if self.di_means:
            with open(directory / "decidability.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["clicks", "mean_di"])
                for k in sorted(self.di_means):
                    w.writerow([k, f"{self.di_means[k]:.4f}"])

    def plot_curve(self, path) -> None:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 4))
        ax.plot(np.arange(1, len(self.curve) + 1), self.curve, marker="o", ms=3)
        ax.set_xlabel("number of clicks")
        ax.set_ylabel("mean IoU")
        ax.set_ylim(0.0, 1.02)
        ax.grid(alpha=0.3)
        ax.set_title(f"IoU vs clicks ({self.regime})")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)


def run_benchmark(segmenter: Callable, dataset, regime=None,
                  targets: Sequence[float] = (0.85, 0.90),
                  max_clicks: int = MAX_CLICKS,
                  prob_fn: Callable | None = None,
                  di_clicks: Sequence[int] = (1, 5, 10),
                  di_radius: int = DI_RADIUS) -> BenchmarkReport:
    """Simulate click sequences over a dataset and aggregate the measures.

    `segmenter(image, clicks) -> bool mask` drives the simulation. When
    `prob_fn(image, clicks) -> probability map` is supplied, mean decidability
    indices are also reported at the click counts in `di_clicks`. Per-object
    segmenter failures are recorded, not fatal.
    """
    from .click_oracle import ClickRegime, SegmenterFailure, simulate_sequence

    if regime is None:
        regime = ClickRegime.FREE_CHOICE
    records: list[EvalRecord] = []
    click_logs: dict[str, ClickSet] = {}
    failures: dict[str, str] = {}
    di_samples: dict[int, list[float]] = {k: [] for k in di_clicks}

    for rec in dataset:
        image = rec.load_image() if hasattr(rec, "load_image") else rec.image
        gt = rec.mask
        try:
            steps, clicks = simulate_sequence(
                segmenter, image, gt, max_clicks=max_clicks, regime=regime,
                with_clicks=True)
        except SegmenterFailure as exc:
            failures[rec.object_id] = str(exc)
            log.warning("segmenter failed on %s: %s", rec.object_id, exc)
            continue
        ious = tuple(v for _, v in steps)
        ctt = {t: clicks_to_reach(ious, t, cap=max_clicks) for t in targets}
        records.append(EvalRecord(rec.object_id, ious, getattr(regime, "value", str(regime)), ctt))
        click_logs[rec.object_id] = clicks
        if prob_fn is not None:
            for k in di_clicks:
                if k > len(clicks):
                    continue
                prefix = ClickSet(clicks.clicks[:k])
                try:
                    stats = decidability_index(prob_fn(image, prefix), prefix, gt,
                                               radius=di_radius, regime=regime)
                except ValueError:
                    continue
                if stats.defined and np.isfinite(stats.di):
                    di_samples[k].append(stats.di)

    if not records:
        raise ValueError("benchmark produced no records")
    return BenchmarkReport(
        regime=getattr(regime, "value", str(regime)),
        targets=tuple(targets),
        max_clicks=max_clicks,
        records=records,
        curve=iou_curve(records, max_clicks),
        mean_clicks={t: mean_clicks_to_iou(records, t) for t in targets},
        di_means={k: float(np.mean(v)) for k, v in di_samples.items() if v},
        click_logs=click_logs,
        failures=failures,
    )
