"""Model assembly, normalisation, training and persistence."""
from .config import VARIANTS, Ablation, PipelineConfig, read_config, variant
from .model import (ModelParams, forward_segments, forward_windows, infer, init_params, pad_window,
                    predict_episode)
from .norm import NormStats, denormalize_action, fit_norm_stats, normalize_action
from .store import load_model, save_model
from .train import train

__all__ = [
    "VARIANTS", "Ablation", "ModelParams", "NormStats", "PipelineConfig", "denormalize_action",
    "fit_norm_stats", "forward_segments", "forward_windows", "infer", "init_params", "load_model", "normalize_action",
    "pad_window", "predict_episode", "read_config", "save_model", "train", "variant",
]
