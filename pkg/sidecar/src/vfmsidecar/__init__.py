"""Sidecar service exposing a promptable segmentation model over HTTP.

The wire protocol is the one the presegmentation pipeline's remote backend
speaks: sessions opened with base64 PNG frames, per-frame point prompts,
whole-session propagation, explicit close. See service.create_app.
"""

from .errors import ModelLoadError, PromptInfeasibleError, RequestError
from .model import FloodModel, load_model
from .rle import mask_to_rle, rle_to_mask
from .service import create_app

__all__ = [
    "FloodModel",
    "ModelLoadError",
    "PromptInfeasibleError",
    "RequestError",
    "create_app",
    "load_model",
    "mask_to_rle",
    "rle_to_mask",
]
