"""The quantitative protocol: IoU-vs-clicks curves, clicks-to-target, DI.

Uses the torch-free distance-field segmenter so the demo runs in seconds; swap
in a SegmenterPipeline around trained checkpoints for real measurements
(`clickseg bench` does exactly that).
"""

import tempfile
from pathlib import Path

from clickseg.click_oracle import ClickRegime
from clickseg.datasets import ingest, make_synthetic_dataset
from clickseg.evaluation import run_benchmark
from clickseg.service import DistanceFieldPipeline

root = Path(tempfile.mkdtemp(prefix="clickseg_bench_"))
make_synthetic_dataset(root, count=8, size=(64, 64), seed=5)
records = ingest(root, "mask_per_object")

pipeline = DistanceFieldPipeline()


def segmenter(image, clicks):
    return pipeline.mask_from_probability(pipeline.probability(image, clicks), image, clicks)


report = run_benchmark(
    segmenter, records,
    regime=ClickRegime.FREE_CHOICE,
    targets=(0.85, 0.90),
    max_clicks=20,
    prob_fn=pipeline.probability,   # enables decidability-index tables
    di_clicks=(1, 5, 10),
)

print(f"objects evaluated: {len(report.records)}")
print("mean IoU after k clicks:")
for k in (1, 3, 5, 10, 20):
    print(f"  {k:2d} clicks: {report.curve[k - 1]:.3f}")
for t in report.targets:
    print(f"mean clicks to reach {t:.0%} IoU: {report.mean_clicks[t]:.2f} (capped at 20)")
for k in sorted(report.di_means):
    print(f"mean decidability index at {k} clicks: {report.di_means[k]:.2f}")

out = Path("demo_out") / "bench"
report.to_csv(out)
report.plot_curve(out / "curve.png")
report.export_clicks(out / "clicks.jsonl")
print("report files under", out)

# The same protocol under restricted click regimes:
for regime in (ClickRegime.ALL_POSITIVE, ClickRegime.SINGLE_POSITIVE):
    r = run_benchmark(segmenter, records, regime=regime, targets=(0.85,), max_clicks=10)
    polarities = {c.polarity for clicks in r.click_logs.values() for c in clicks}
    print(f"{regime.value}: final mean IoU {r.curve[-1]:.3f}, polarities used: {sorted(polarities)}")
