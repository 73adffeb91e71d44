"""Regenerate the bundled toy assets: training library CSV, trained checkpoint,
and the worked scoring example (forecast + truth + independently computed
WIS oracle).

Run from the repository root:

    python3 scripts/make_toy_assets.py
"""

import sys
from pathlib import Path

import numpy as np
import pandas as pd

from gridpaint import checkpoint, dataset, diffusion, forecast, grids, toydata, unet

ASSETS = Path(__file__).resolve().parents[1] / "src" / "gridpaint" / "assets"

EPOCHS = 200
SEED = 0

EXAMPLE_REFERENCE_WEEK = 20


def pinball_wis_oracle(quantiles, levels, y):
    """Mean pinball loss over the quantile levels, written independently of
    the scoring module so the bundled oracle file cross-checks it."""
    total = 0.0
    for tau, q in zip(levels, quantiles):
        indicator = 1.0 if y <= q else 0.0
        total += 2.0 * (indicator - tau) * (q - y)
    return total / len(levels)


def make_worked_example() -> None:
    """A fixed forecast for the toy truth season plus its per-cell WIS oracle."""
    truth = toydata.toy_truth_season()
    rng = np.random.default_rng(99)
    horizons = (1, 2, 3, 4)
    codes = truth.location_codes
    values = np.empty((len(codes), len(horizons), len(forecast.QUANTILE_LEVELS)))
    for li, code in enumerate(codes):
        for hi, h in enumerate(horizons):
            y = truth.values[EXAMPLE_REFERENCE_WEEK + h - 2, li]
            values[li, hi] = np.sort(rng.normal(y, max(0.2 * y, 5.0), values.shape[-1]))
    values = np.clip(values, 0.0, None)
    qf = forecast.QuantileForecast(codes, horizons, values)
    forecast.export_hub_csv(qf, "2023-11-18", "wk inc flu hosp",
                            ASSETS / "example_forecast.csv")
    rows = []
    for li, code in enumerate(codes):
        for hi, h in enumerate(horizons):
            y = truth.values[EXAMPLE_REFERENCE_WEEK + h - 2, li]
            rows.append((code, h, pinball_wis_oracle(values[li, hi],
                                                     forecast.QUANTILE_LEVELS, y)))
    pd.DataFrame(rows, columns=["location", "horizon", "wis"]).to_csv(
        ASSETS / "example_scores.csv", index=False)


def main() -> int:
    ASSETS.mkdir(parents=True, exist_ok=True)
    lib = toydata.toy_training_library(200, seed=SEED)
    grids.frames_to_csv(lib.frames, ASSETS / "toy_library.csv")
    grids.frames_to_csv([toydata.toy_truth_season()], ASSETS / "toy_truth.csv")

    transform = grids.fit_transform(lib.frames, "sqrt")
    encoded = np.stack([grids.encode_frame(f, transform).values for f in lib.frames])
    model = unet.make_model("U124", base_channels=16, seed=SEED)
    cfg = diffusion.DiffusionConfig(schedule_kind="cosine", timesteps=50,
                                    batch_size=32, epochs=EPOCHS,
                                    learning_rate=1e-3, seed=SEED)
    result = diffusion.train(model, encoded, cfg)
    print(f"first/final epoch loss: {result.loss_trace[0]:.4f} / {result.final_loss:.4f}")

    manifest = {"source": "toy_library", "n_frames": len(lib.frames), "seed": SEED}
    checkpoint.save_checkpoint(
        ASSETS / "toy_checkpoint.pt", model, cfg, cfg.make_schedule(), transform,
        manifest_hash=dataset.manifest_hash(manifest),
        location_codes=lib.frames[0].location_codes,
        data_shape=lib.frames[0].values.shape,
    )
    make_worked_example()
    print(f"assets written to {ASSETS}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
