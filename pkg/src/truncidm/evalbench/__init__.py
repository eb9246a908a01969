"""Metrics, truncation splits, dataset I/O, benchmarks and reports."""
from .bench import (MetricReport, collect, degraded_masks, mask_quality_study, run_ablation,
                    run_benchmark, summarize, train_variants)
from .dataset import generate_dataset, load_dataset
from .index import load_episode_index, parse_episode_index, save_episode_index
from .metrics import ThresholdSpec, acc_per_dim, hits, l1_distance, strict_acc
from .report import COLUMNS, emit_report
from .splits import SplitRule, split_by_truncation

__all__ = [
    "COLUMNS", "MetricReport", "SplitRule", "ThresholdSpec", "acc_per_dim", "collect",
    "degraded_masks", "emit_report", "generate_dataset", "hits", "l1_distance", "load_dataset",
    "load_episode_index", "mask_quality_study", "parse_episode_index", "run_ablation",
    "run_benchmark", "save_episode_index", "split_by_truncation", "strict_acc", "summarize",
    "train_variants",
]
