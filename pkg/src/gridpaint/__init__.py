"""Diffusion-based generation and inpainting forecasts of epidemic season grids."""

from .dataset import (AugmentationConfig, DatasetComposition, FrameLibrary,
                      TrainingSet, augment, compose, ingest_hosp_surveillance,
                      ingest_ili, ingest_modeled)
from .diffusion import (DiffusionConfig, forward_sample, reverse_step, sample_ddim,
                        sample_unconditional, train, training_loss)
from .forecast import (QUANTILE_LEVELS, ForecastJob, QuantileForecast,
                       ensemble_to_quantiles, export_hub_csv, read_hub_csv, run_forecast)
from .grids import (IntensityTransform, MaskSpec, ModelGrid, ObservationMask,
                    SeasonFrame, decode_grid, encode_frame, fit_transform, make_mask)
from .inpaint import (PRESETS, ConditionalSampleResult, InpaintConfig,
                      boundary_discontinuity, copaint_sample, repaint_sample)
from .schedules import NoiseSchedule, cosine_schedule, linear_schedule, make_schedule
from .scoring import (AblationVariant, ScoreRecord, coverage,
                      cross_state_correlation, run_ablation, score_forecast, wis)
from .unet import VARIANTS, DenoiserModel, UNetConfig, make_model, sinusoidal_embed

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
