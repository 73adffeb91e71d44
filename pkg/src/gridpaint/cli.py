"""Operator surface: build datasets, train, generate, forecast, score, ablate, plot.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure. Every run
writes a resolved-config snapshot (run_config.json) next to its outputs and
refuses to overwrite existing outputs without --force.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np
import pandas as pd
import torch

from . import checkpoint as ckpt
from . import dataset as ds
from . import diffusion, forecast, grids, inpaint, plots, scoring, toydata, unet
from .errors import DataError, NumericError


def _prepare_out(out: str, config: dict, force: bool) -> Path:
    out_dir = Path(out)
    snap = out_dir / "run_config.json"
    if snap.exists() and not force:
        raise click.UsageError(f"{snap} exists; pass --force to overwrite")
    out_dir.mkdir(parents=True, exist_ok=True)
    snap.write_text(json.dumps(config, indent=2, sort_keys=True))
    return out_dir


def _set_workers(workers: int | None) -> None:
    if workers:
        torch.set_num_threads(workers)


def _load_library(library_dir: str) -> ds.FrameLibrary:
    lib = ds.FrameLibrary()
    d = Path(library_dir)
    surv = d / "library.surveillance.csv"
    modeled = d / "library.modeled.csv"
    if not surv.exists() and not modeled.exists():
        raise DataError(f"no library files found in {library_dir}")
    if surv.exists():
        lib.extend(grids.frames_from_csv(surv, source_tag="surveillance"))
    if modeled.exists():
        lib.extend(grids.frames_from_csv(modeled, source_tag="modeled"))
    return lib


@click.group()
def cli():
    """Diffusion-based generation and inpainting forecasts of epidemic grids."""


@cli.command("make-fixtures")
@click.option("--out", required=True, help="output directory")
@click.option("--seed", default=10, show_default=True)
@click.option("--force", is_flag=True)
def cmd_make_fixtures(out, seed, force):
    """Write fixture source CSVs (ILI, hospitalizations, trajectory archive)."""
    out_dir = _prepare_out(out, {"command": "make-fixtures", "seed": seed}, force)
    toydata.fixture_ili_table(seed).to_csv(out_dir / "ili.csv", index=False)
    toydata.fixture_hosp_table(seed + 1).to_csv(out_dir / "hosp.csv", index=False)
    pd.DataFrame(sorted(toydata.fixture_populations().items()),
                 columns=["location", "population"]).to_csv(
        out_dir / "populations.csv", index=False)
    toydata.trajectory_sets_to_csv(toydata.fixture_trajectory_sets(seed + 2),
                                   out_dir / "trajectories.csv")
    grids.frames_to_csv([toydata.toy_truth_season(seed + 3)], out_dir / "truth.csv")
    click.echo(f"fixtures written to {out_dir}")


@cli.command("build-dataset")
@click.option("--ili", type=click.Path(), default=None)
@click.option("--hosp", type=click.Path(), default=None)
@click.option("--populations", "populations_path", type=click.Path(), default=None)
@click.option("--trajectories", type=click.Path(), default=None)
@click.option("--toy", "toy_n", type=int, default=None,
              help="build a synthetic library of N frames instead of ingesting files")
@click.option("--surveillance-fraction", default=0.3, show_default=True)
@click.option("--target-size", default=3000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True)
@click.option("--force", is_flag=True)
def cmd_build_dataset(ili, hosp, populations_path, trajectories, toy_n,
                      surveillance_fraction, target_size, seed, out, force):
    """Ingest sources, compose a training set, write library + manifest + summary."""
    config = {k: v for k, v in locals().items() if k != "force"}
    out_dir = _prepare_out(out, {"command": "build-dataset"} | config, force)

    lib = ds.FrameLibrary()
    if toy_n is not None:
        lib.extend(toydata.toy_frames(toy_n, seed=seed))
    else:
        if not trajectories or not Path(trajectories).exists():
            raise DataError("trajectory archive missing (pass --trajectories or --toy)")
        modeled = ds.ingest_modeled(ds.trajectories_from_csv(trajectories))
        peak_reference = [float(f.values.max()) for f in modeled]
        if ili:
            if not Path(ili).exists():
                raise DataError(f"ILI table missing: {ili}")
            lib.extend(ds.ingest_ili(pd.read_csv(ili), peak_reference))
        if hosp:
            if not populations_path or not Path(populations_path).exists():
                raise DataError("--hosp requires --populations")
            pops = dict(pd.read_csv(populations_path).itertuples(index=False, name=None))
            lib.extend(ds.ingest_hosp_surveillance(pd.read_csv(hosp), pops))
        lib.extend(modeled)

    comp = ds.DatasetComposition(
        surveillance_fraction=surveillance_fraction,
        modeled_fraction=1.0 - surveillance_fraction,
        target_size=target_size,
    )
    training = ds.compose(lib, comp, rng_seed=seed)
    surv = lib.by_tag("surveillance")
    modeled_frames = lib.by_tag("modeled")
    if surv:
        grids.frames_to_csv(surv, out_dir / "library.surveillance.csv")
    if modeled_frames:
        grids.frames_to_csv(modeled_frames, out_dir / "library.modeled.csv")
    ds.write_manifest(training.manifest, out_dir / "manifest.json")
    summary = {"counts": lib.counts, "n_unique": training.n_unique,
               "n_total": len(training)}
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    click.echo(f"library: {lib.counts}; composed {training.n_unique} unique / "
               f"{len(training)} total")


@cli.command("train")
@click.option("--library-dir", required=True, help="directory written by build-dataset")
@click.option("--transform", "transform_kind", default="sqrt",
              type=click.Choice(["sqrt", "linear"]), show_default=True)
@click.option("--schedule", "schedule_kind", default="cosine",
              type=click.Choice(["cosine", "linear"]), show_default=True)
@click.option("--timesteps", default=50, show_default=True)
@click.option("--epochs", default=200, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--lr", default=2e-4, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--variant", default="U124", show_default=True)
@click.option("--base-channels", default=32, show_default=True)
@click.option("--enrichment", default="none",
              type=click.Choice(sorted(ds.ENRICHMENTS)), show_default=True)
@click.option("--workers", type=int, default=None)
@click.option("--out", required=True)
@click.option("--force", is_flag=True)
def cmd_train(library_dir, transform_kind, schedule_kind, timesteps, epochs,
              batch_size, lr, seed, variant, base_channels, enrichment,
              workers, out, force):
    """Train a denoiser on a composed dataset; write checkpoint + loss trace."""
    config = {k: v for k, v in locals().items() if k != "force"}
    out_dir = _prepare_out(out, {"command": "train"} | config, force)
    _set_workers(workers)

    lib = _load_library(library_dir)
    manifest = ds.read_manifest(Path(library_dir) / "manifest.json")
    comp = ds.DatasetComposition(
        surveillance_fraction=manifest["surveillance_fraction"],
        modeled_fraction=manifest["modeled_fraction"],
        target_size=manifest["target_size"],
    )
    training = ds.compose(lib, comp, rng_seed=manifest["rng_seed"])
    aug_cfg = ds.ENRICHMENTS[enrichment]
    rng = np.random.default_rng(seed)
    samples = [ds.augment(s, aug_cfg, rng) for s in training.samples]

    transform = grids.fit_transform(lib.frames, transform_kind)
    encoded = np.stack([grids.encode_frame(f, transform).values for f in samples])
    model = unet.make_model(variant, base_channels=base_channels, seed=seed)
    cfg = diffusion.DiffusionConfig(schedule_kind=schedule_kind, timesteps=timesteps,
                                    batch_size=batch_size, epochs=epochs,
                                    learning_rate=lr, seed=seed)
    result = diffusion.train(model, encoded, cfg)
    pd.DataFrame({"epoch": np.arange(1, len(result.loss_trace) + 1),
                  "mean_loss": result.loss_trace}).to_csv(
        out_dir / "loss_trace.csv", index=False)
    first = training.samples[0]
    ckpt.save_checkpoint(out_dir / "checkpoint.pt", model, cfg, cfg.make_schedule(),
                         transform, manifest_hash=ds.manifest_hash(manifest),
                         location_codes=first.location_codes,
                         data_shape=first.values.shape)
    click.echo(f"trained {epochs} epochs; first/final loss "
               f"{result.loss_trace[0]:.4f}/{result.final_loss:.4f}")


@cli.command("generate")
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path())
@click.option("-n", "--n-samples", default=8, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--plot", is_flag=True, help="also write a quantile-envelope figure")
@click.option("--workers", type=int, default=None)
@click.option("--out", required=True)
@click.option("--force", is_flag=True)
def cmd_generate(checkpoint_path, n_samples, seed, plot, workers, out, force):
    """Sample unconditional seasons from a trained checkpoint."""
    config = {k: v for k, v in locals().items() if k != "force"}
    out_dir = _prepare_out(out, {"command": "generate"} | config, force)
    _set_workers(workers)
    c = ckpt.load_checkpoint(checkpoint_path)
    rng = np.random.default_rng(seed)
    spec = grids.make_pad_spec(c.data_shape)
    raw = diffusion.sample_unconditional(c.model, c.schedule, n_samples, rng,
                                         spec.padded_shape)
    frames = []
    for i in range(n_samples):
        grid = grids.ModelGrid(values=raw[i], pad_spec=spec, season_start=f"gen-{i:04d}",
                               location_codes=c.location_codes, provenance=f"gen-{i:04d}")
        frames.append(grids.decode_grid(grid, c.transform))
    grids.frames_to_csv(frames, out_dir / "generated.csv")
    if plot:
        plots.quantile_envelope(frames, out_dir / "envelope.png")
    click.echo(f"wrote {n_samples} generated seasons to {out_dir / 'generated.csv'}")


@cli.command("forecast")
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path())
@click.option("--season", "season_path", required=True, type=click.Path(),
              help="frame CSV with the season observed so far")
@click.option("--reference-week", required=True, type=int)
@click.option("--horizons", default="1,2,3,4", show_default=True)
@click.option("--preset", default="short-jump-tt", show_default=True,
              type=click.Choice(sorted(inpaint.PRESETS)))
@click.option("-n", "--n-trajectories", default=512, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--reference-date", default="2024-01-06", show_default=True)
@click.option("--target", default="wk inc flu hosp", show_default=True)
@click.option("--plot", is_flag=True, help="also write a fan chart")
@click.option("--workers", type=int, default=None)
@click.option("--out", required=True)
@click.option("--force", is_flag=True)
def cmd_forecast(checkpoint_path, season_path, reference_week, horizons, preset,
                 n_trajectories, seed, reference_date, target, plot, workers,
                 out, force):
    """Forecast the hidden future of a season; write a hub-format quantile CSV."""
    config = {k: v for k, v in locals().items() if k != "force"}
    out_dir = _prepare_out(out, {"command": "forecast"} | config, force)
    _set_workers(workers)
    c = ckpt.load_checkpoint(checkpoint_path)
    seasons = grids.frames_from_csv(season_path)
    if len(seasons) != 1:
        raise DataError(f"expected one season in {season_path}, found {len(seasons)}")
    job = forecast.ForecastJob(
        reference_week=reference_week,
        horizons=tuple(int(h) for h in horizons.split(",")),
        n_trajectories=n_trajectories,
        inpaint=inpaint.get_preset(preset),
    )
    rng = np.random.default_rng(seed)
    ensemble = forecast.run_forecast(c.model, c.schedule, seasons[0], c.transform,
                                     job, rng)
    qf = forecast.ensemble_to_quantiles(ensemble, job)
    forecast.export_hub_csv(qf, reference_date, target, out_dir / "forecast.csv")
    if plot:
        plots.fan_chart(qf, seasons[0], reference_week, out_dir / "fan.png")
    click.echo(f"wrote {len(qf.locations) * len(job.horizons) * 23} hub rows")


@cli.command("score")
@click.option("--forecast", "forecast_path", required=True, type=click.Path())
@click.option("--truth", "truth_path", required=True, type=click.Path())
@click.option("--reference-week", required=True, type=int)
@click.option("--out", required=True)
@click.option("--force", is_flag=True)
def cmd_score(forecast_path, truth_path, reference_week, out, force):
    """Score a hub-format forecast against an observed season."""
    config = {k: v for k, v in locals().items() if k != "force"}
    out_dir = _prepare_out(out, {"command": "score"} | config, force)
    qf, reference_date, _ = forecast.read_hub_csv(forecast_path)
    truths = grids.frames_from_csv(truth_path)
    if len(truths) != 1:
        raise DataError(f"expected one season in {truth_path}, found {len(truths)}")
    records = scoring.score_forecast(qf, truths[0], reference_week, reference_date)
    df = scoring.scores_to_frame(records)
    df.to_csv(out_dir / "scores.csv", index=False)
    summary = {"total_wis": float(df["wis"].sum()), "mean_wis": float(df["wis"].mean()),
               "coverage_50": float(df["covered_50"].mean()),
               "coverage_90": float(df["covered_90"].mean())}
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    click.echo(f"scored {len(df)} cells; total WIS {summary['total_wis']:.3f}")


@cli.command("ablate")
@click.option("--baseline", "baseline_path", required=True, type=click.Path(),
              help="baseline scores.csv from the score command")
@click.option("--variant", "variant_specs", multiple=True,
              help="NAME:GROUP:scores.csv (repeatable)")
@click.option("--out", required=True)
@click.option("--force", is_flag=True)
def cmd_ablate(baseline_path, variant_specs, out, force):
    """Mean paired percent WIS change of each stored variant vs the baseline."""
    config = {"baseline": baseline_path, "variants": list(variant_specs)}
    out_dir = _prepare_out(out, {"command": "ablate"} | config, force)
    baseline = pd.read_csv(baseline_path)
    variants = []
    for spec_str in variant_specs:
        try:
            name, group, path = spec_str.split(":", 2)
        except ValueError:
            raise click.UsageError(f"bad --variant {spec_str!r}; want NAME:GROUP:PATH")
        if not Path(path).exists():
            raise DataError(f"variant scores missing: {path}")
        variants.append(scoring.AblationVariant(
            name=name, group=group, override={group: name}, scores=pd.read_csv(path)))
    report = scoring.run_ablation(baseline, variants)
    report.to_csv(out_dir / "ablation_report.csv", index=False)
    plots.forest_plot(report, out_dir / "forest.png")
    click.echo(report.to_string(index=False))


@cli.command("plot")
@click.option("--kind", required=True, type=click.Choice(["envelope", "fan", "forest"]))
@click.option("--frames", "frames_path", type=click.Path(), default=None)
@click.option("--forecast", "forecast_path", type=click.Path(), default=None)
@click.option("--season", "season_path", type=click.Path(), default=None)
@click.option("--reference-week", type=int, default=None)
@click.option("--report", "report_path", type=click.Path(), default=None)
@click.option("--out", required=True, type=click.Path(), help="output image path")
def cmd_plot(kind, frames_path, forecast_path, season_path, reference_week,
             report_path, out):
    """Re-emit a figure from stored artifacts."""
    if kind == "envelope":
        if not frames_path:
            raise click.UsageError("--kind envelope requires --frames")
        plots.quantile_envelope(grids.frames_from_csv(frames_path), out)
    elif kind == "fan":
        if not (forecast_path and season_path and reference_week):
            raise click.UsageError("--kind fan requires --forecast, --season, "
                                   "--reference-week")
        qf, _, _ = forecast.read_hub_csv(forecast_path)
        season = grids.frames_from_csv(season_path)[0]
        plots.fan_chart(qf, season, reference_week, out)
    else:
        if not report_path:
            raise click.UsageError("--kind forest requires --report")
        plots.forest_plot(pd.read_csv(report_path), out)
    click.echo(f"wrote {out}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as e:
        return int(e.exit_code)
    except click.ClickException as e:
        e.show()
        return 1
    except click.Abort:
        return 1
    except DataError as e:
        click.echo(f"data error: {e}", err=True)
        return 2
    except NumericError as e:
        click.echo(f"numeric failure: {e}", err=True)
        return 3
    except ValueError as e:
        click.echo(f"usage error: {e}", err=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
