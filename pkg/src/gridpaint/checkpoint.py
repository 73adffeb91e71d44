"""Self-describing model checkpoints.

An archive holds the network weights, the U-Net and diffusion configs, the
schedule arrays, the fitted intensity transform, and the hash of the dataset
manifest the model was trained on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .diffusion import DiffusionConfig
from .errors import DataError
from .grids import IntensityTransform
from .schedules import NoiseSchedule
from .unet import DenoiserModel, UNet, UNetConfig


@dataclass
class Checkpoint:
    model: DenoiserModel
    diffusion: DiffusionConfig
    schedule: NoiseSchedule
    transform: IntensityTransform
    manifest_hash: str
    location_codes: tuple[str, ...]
    data_shape: tuple[int, int]


def save_checkpoint(path, model: DenoiserModel, diffusion: DiffusionConfig,
                    schedule: NoiseSchedule, transform: IntensityTransform,
                    manifest_hash: str = "", location_codes: tuple[str, ...] = (),
                    data_shape: tuple[int, int] = (0, 0)) -> None:
    payload = {
        "state_dict": model.net.state_dict(),
        "unet_config": model.config.__dict__ | {
            "channel_multipliers": list(model.config.channel_multipliers)},
        "diffusion_config": diffusion.__dict__,
        "schedule_kind": schedule.kind,
        "schedule_beta": schedule.beta,
        "transform": {"kind": transform.kind, "data_max": transform.data_max,
                      "scale_lo": transform.scale_lo, "scale_hi": transform.scale_hi,
                      "fitted": transform.fitted},
        "manifest_hash": manifest_hash,
        "location_codes": list(location_codes),
        "data_shape": list(data_shape),
    }
    torch.save(payload, path)


def load_checkpoint(path) -> Checkpoint:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {path}")
    ucfg = dict(payload["unet_config"])
    ucfg["channel_multipliers"] = tuple(ucfg["channel_multipliers"])
    config = UNetConfig(**ucfg)
    net = UNet(config)
    net.load_state_dict(payload["state_dict"])
    net.eval()
    schedule = NoiseSchedule(kind=payload["schedule_kind"],
                             beta=np.asarray(payload["schedule_beta"]))
    return Checkpoint(
        model=DenoiserModel(config, net=net),
        diffusion=DiffusionConfig(**payload["diffusion_config"]),
        schedule=schedule,
        transform=IntensityTransform(**payload["transform"]),
        manifest_hash=payload["manifest_hash"],
        location_codes=tuple(payload["location_codes"]),
        data_shape=tuple(payload["data_shape"]),
    )
