"""Command-line surface: train / bench / serve plus small utilities.

Every command also reads its options from CLICKSEG_* environment variables
(e.g. CLICKSEG_SERVE_CKPT for `serve --ckpt`).
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .click_oracle import ClickRegime, ClickSamplerParams
from .graph_cut import GraphCutParams


def _gc_options(fn):
    fn = click.option("--gc-lambda", type=float, default=1.0, show_default=True,
                      help="Pairwise strength of the graph-cut energy.")(fn)
    fn = click.option("--gc-sigma", type=float, default=None,
                      help="Contrast scale (default: per-image estimate).")(fn)
    fn = click.option("--gc-hard/--no-gc-hard", default=True, show_default=True,
                      help="Clamp clicked pixels to their polarity.")(fn)
    return fn


def _gc_params(gc_lambda, gc_sigma, gc_hard) -> GraphCutParams:
    return GraphCutParams(lambda_=gc_lambda, sigma=gc_sigma, hard_constraints=gc_hard)


@click.group()
def main():
    """Click-guided interactive segmentation workbench."""


@main.command()
@click.option("--stage", type=click.Choice(["tslfn", "msrn"]), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="Key-value training config; defaults per stage when omitted.")
@click.option("--data", "data_root", type=click.Path(exists=True, file_okay=False),
              required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--layout", type=click.Choice(["mask_per_object", "voc_instances"]),
              default="mask_per_object", show_default=True)
@click.option("--base", "base_path", type=click.Path(exists=True, dir_okay=False),
              help="Pretrained base-weight container (stage tslfn).")
@click.option("--synthetic-base", is_flag=True,
              help="Use random base weights instead of a pretrained container.")
@click.option("--net", "net_path", type=click.Path(exists=True, dir_okay=False),
              help="Stage-1 checkpoint to freeze (stage msrn).")
@click.option("--channel-scale", type=float, default=1.0, show_default=True)
@click.option("--split-index", type=int, default=4, show_default=True)
@click.option("--stride", "stride_variant", type=click.Choice(["32", "16", "8"]),
              default="8", show_default=True)
@click.option("--ablation", type=click.Choice(["none", "single_stream", "stream_removed"]),
              default="none", show_default=True)
@click.option("--clicks", "clicks_path", type=click.Path(dir_okay=False),
              help="Synthetic click cache (default: <out>.clicks.jsonl).")
@click.option("--val-count", type=int, default=0, show_default=True,
              help="Images held out for validation (0 disables validation).")
@click.option("--seed", type=int, default=0, show_default=True)
def train(stage, config_path, data_root, out_path, layout, base_path, synthetic_base,
          net_path, channel_scale, split_index, stride_variant, ablation, clicks_path,
          val_count, seed):
    """Run one training stage and write a weight container."""
    from . import checkpoints, datasets, training
    from .two_stream import NetworkConfig

    if config_path:
        cfg = training.parse_train_config(config_path)
        if cfg.stage != stage:
            raise click.UsageError(f"--stage {stage} but config file says {cfg.stage}")
    else:
        cfg = (training.TrainConfig.tslfn_defaults() if stage == "tslfn"
               else training.TrainConfig.msrn_defaults())
    cfg = cfg.replace(seed=seed)

    records = datasets.ingest(data_root, layout)
    if val_count > 0:
        part = datasets.partition(records, seed=seed, val_count=val_count)
        by_id = {r.object_id: r for r in records}
        train_records = [by_id[i] for i in part.train_ids]
        val_records = [by_id[i] for i in part.val_ids]
    else:
        train_records, val_records = list(records), []

    clicks_path = clicks_path or f"{out_path}.clicks.jsonl"
    cache = datasets.cache_clicks(records, ClickSamplerParams(), seed=seed,
                                  path=clicks_path)
    clicks_by_id = {r.object_id: cache.get(r) for r in records}
    log_path = f"{out_path}.trainlog.jsonl"

    if stage == "tslfn":
        net_config = NetworkConfig(split_index=split_index,
                                   stride_variant=int(stride_variant),
                                   ablation=ablation, channel_scale=channel_scale)
        if synthetic_base:
            base = checkpoints.synthetic_base(channel_scale, seed=seed)
        elif base_path:
            base = checkpoints.load_base(base_path)
        else:
            raise click.UsageError("stage tslfn needs --base or --synthetic-base")
        net, _ = training.train_tslfn(train_records, base, cfg, clicks_by_id,
                                      net_config=net_config, val_records=val_records,
                                      log_path=log_path)
        checkpoints.save_network(out_path, net, stage="tslfn", iteration=cfg.max_iters)
    else:
        if not net_path:
            raise click.UsageError("stage msrn needs --net (stage-1 checkpoint)")
        net, _ = checkpoints.load_network(net_path)
        refiner, _ = training.train_msrn(train_records, net, cfg, clicks_by_id,
                                         val_records=val_records, log_path=log_path)
        checkpoints.save_refiner(out_path, refiner, base_fingerprint=net.fingerprint(),
                                 iteration=cfg.max_iters)
    click.echo(f"wrote {out_path} (training log: {log_path})")


@main.command()
@click.option("--ckpt", "ckpt_path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Stage-1 network checkpoint.")
@click.option("--refiner-ckpt", type=click.Path(exists=True, dir_okay=False),
              help="Optional refiner checkpoint on top of the network.")
@click.option("--data", "data_root", type=click.Path(exists=True, file_okay=False),
              required=True)
@click.option("--layout", type=click.Choice(["mask_per_object", "voc_instances"]),
              default="mask_per_object", show_default=True)
@click.option("--regime", type=click.Choice([r.value for r in ClickRegime]),
              default="free_choice", show_default=True)
@click.option("--targets", default="0.85,0.90", show_default=True,
              help="Comma-separated target IoUs.")
@click.option("--max-clicks", type=int, default=20, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="bench_out",
              show_default=True)
@click.option("--no-graph-cut", is_flag=True, help="Threshold at 0.5 instead.")
@click.option("--di/--no-di", "with_di", default=True, show_default=True,
              help="Report mean decidability indices at 1/5/10 clicks.")
@_gc_options
def bench(ckpt_path, refiner_ckpt, data_root, layout, regime, targets, max_clicks,
          out_dir, no_graph_cut, with_di, gc_lambda, gc_sigma, gc_hard):
    """Simulated-click benchmark: curves, clicks-to-target tables, DI."""
    from . import checkpoints, datasets
    from .evaluation import run_benchmark
    from .pipeline import SegmenterPipeline

    net, _ = checkpoints.load_network(ckpt_path)
    refiner = None
    if refiner_ckpt:
        refiner, manifest = checkpoints.load_refiner(refiner_ckpt)
        if manifest.get("frozen_base_fingerprint") not in (None, net.fingerprint()):
            click.echo("warning: refiner was trained against a different base network",
                       err=True)
    pipeline = SegmenterPipeline(
        net=net, refiner=refiner,
        graph_cut=None if no_graph_cut else _gc_params(gc_lambda, gc_sigma, gc_hard))

    records = datasets.ingest(data_root, layout)
    target_values = tuple(float(t) for t in targets.split(","))
    report = run_benchmark(
        pipeline, records, regime=ClickRegime(regime), targets=target_values,
        max_clicks=max_clicks,
        prob_fn=pipeline.probability if with_di else None)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out)
    report.plot_curve(out / "curve.png")
    report.export_clicks(out / "clicks.jsonl")
    click.echo(f"objects: {len(report.records)}  regime: {report.regime}")
    for t in target_values:
        click.echo(f"mean clicks to {t:.0%} IoU: {report.mean_clicks[t]:.2f}")
    for k in sorted(report.di_means):
        click.echo(f"mean DI at {k} clicks: {report.di_means[k]:.3f}")
    if report.failures:
        click.echo(f"failures: {len(report.failures)} (see report)", err=True)
    click.echo(f"report written to {out}")


@main.command()
@click.option("--ckpt", "ckpt_path", type=click.Path(exists=True, dir_okay=False),
              help="Stage-1 network checkpoint (omit with --stub).")
@click.option("--refiner-ckpt", type=click.Path(exists=True, dir_okay=False))
@click.option("--stub", is_flag=True,
              help="Serve the torch-free distance-field stand-in segmenter.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--max-dim", type=int, default=2048, show_default=True)
@click.option("--queue-depth", type=int, default=8, show_default=True)
@click.option("--no-graph-cut", is_flag=True)
@_gc_options
def serve(ckpt_path, refiner_ckpt, stub, host, port, max_dim, queue_depth,
          no_graph_cut, gc_lambda, gc_sigma, gc_hard):
    """Run the live annotation HTTP service."""
    import uvicorn

    from .service import DistanceFieldPipeline, create_app

    if stub:
        pipeline = DistanceFieldPipeline()
    elif ckpt_path:
        from . import checkpoints
        from .pipeline import SegmenterPipeline

        net, _ = checkpoints.load_network(ckpt_path)
        refiner = checkpoints.load_refiner(refiner_ckpt)[0] if refiner_ckpt else None
        pipeline = SegmenterPipeline(
            net=net, refiner=refiner,
            graph_cut=None if no_graph_cut else _gc_params(gc_lambda, gc_sigma, gc_hard))
    else:
        raise click.UsageError("need --ckpt or --stub")
    app = create_app(pipeline, max_dim=max_dim, queue_depth=queue_depth)
    uvicorn.run(app, host=host, port=port)


@main.command("make-data")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--count", type=int, default=5, show_default=True)
@click.option("--size", default="96x96", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def make_data(out_dir, count, size, seed):
    """Generate the synthetic shape corpus (mask_per_object layout)."""
    from .datasets import make_synthetic_dataset

    h, w = (int(v) for v in size.lower().split("x"))
    root = make_synthetic_dataset(out_dir, count=count, size=(h, w), seed=seed)
    click.echo(f"wrote {count} images under {root}")


@main.command("make-base")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--channel-scale", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def make_base(out_path, channel_scale, seed):
    """Write a synthetic (random) base-weight container for desk-scale runs."""
    from . import checkpoints

    checkpoints.save_base(out_path, checkpoints.synthetic_base(channel_scale, seed=seed))
    click.echo(f"wrote {out_path}")


@main.command("convert-vgg16")
@click.option("--src", type=click.Path(exists=True, dir_okay=False), required=True,
              help="torchvision VGG16 state_dict (.pth).")
@click.option("--dst", type=click.Path(dir_okay=False), required=True)
def convert_vgg16_cmd(src, dst):
    """Convert a torchvision VGG16 state_dict into a base-weight container."""
    from .checkpoints import convert_vgg16

    convert_vgg16(src, dst)
    click.echo(f"wrote {dst}")


def entrypoint():  # pragma: no cover
    sys.exit(main(auto_envvar_prefix="CLICKSEG"))


if __name__ == "__main__":  # pragma: no cover
    entrypoint()
