"""Command-line entry point: ``truncidm <subcommand> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DataError, TruncIDMError
from .evalbench import emit_report, generate_dataset, load_dataset, mask_quality_study, run_ablation, run_benchmark
from .pipeline import VARIANTS, PipelineConfig, load_model, read_config, save_model, train
from .synthworld import WorldConfig

log = logging.getLogger("truncidm")

FORMATS = ("csv", "json", "svg")


def _csv_list(text, cast=str):
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ConfigError(f"empty list {text!r}")
    try:
        return [cast(t) for t in items]
    except ValueError:
        raise ConfigError(f"cannot parse list {text!r}") from None


def _format(args):
    if args.format:
        return args.format
    ext = Path(args.report).suffix.lstrip(".").lower()
    return ext if ext in FORMATS else "csv"


def _pipeline_config(path):
    return PipelineConfig.from_dict(read_config(path).get("pipeline", {})) if path else PipelineConfig()


def _variant_name(cfg: PipelineConfig):
    for name, ab in VARIANTS.items():
        if ab == cfg.ablation:
            return name
    return "custom"


def _eval_split(data):
    _, ev = load_dataset(data)
    if not ev:
        raise DataError(f"{data}: evaluation split is empty")
    return ev


def cmd_generate(args):
    world = WorldConfig.from_dict(read_config(args.config).get("world", {})) if args.config else WorldConfig()
    rows = generate_dataset(world, args.out, args.episodes, args.seed, log=log.warning)
    log.info("wrote %d episodes to %s", len(rows), args.out)


def cmd_train(args):
    cfg = _pipeline_config(args.config)
    if args.variant:
        cfg = cfg.with_variant(args.variant)
    tr, _ = load_dataset(args.data)
    model, curve = train(tr, cfg, lambda e, loss: log.info("epoch %d loss %.5f", e, loss))
    save_model(model, args.out)
    log.info("saved model to %s (final loss %.5f)", args.out, curve[-1] if curve else float("nan"))


def cmd_eval(args):
    model = load_model(args.model)
    reports = run_benchmark({_variant_name(model.config): model}, _eval_split(args.data))
    emit_report(reports, args.report, _format(args))


def cmd_ablate(args):
    cfg = _pipeline_config(args.config)
    names = _csv_list(args.variants)
    for n in names:
        if n not in VARIANTS:
            raise ConfigError(f"unknown variant {n!r}; choose from {', '.join(VARIANTS)}")
    tr, ev = load_dataset(args.data)
    if not ev:
        raise DataError(f"{args.data}: evaluation split is empty")
    reports, _ = run_ablation(tr, ev, cfg, names,
                              progress=lambda n, e, loss: log.info("%s epoch %d loss %.5f", n, e, loss))
    emit_report(reports, args.report, _format(args))


def cmd_mask_study(args):
    sev = _csv_list(args.severities, float)
    if any(not 0.0 <= s <= 1.0 for s in sev):
        raise ConfigError("severities must lie in [0, 1]")
    model = load_model(args.model)
    study = mask_quality_study(model, _eval_split(args.data), sev, seed=args.seed)
    reports = list(study[0][1]) + [r for _, _, deg in study for r in deg]
    emit_report(reports, args.report, _format(args))


def build_parser():
    p = argparse.ArgumentParser(prog="truncidm", description="Truncation-robust inverse dynamics lab.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="render a synthetic dataset")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.add_argument("--episodes", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train one model on the train split")
    t.add_argument("--data", required=True)
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.add_argument("--variant", choices=list(VARIANTS))
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a model on the eval split")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--format", choices=FORMATS)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="train and score ablation variants")
    a.add_argument("--data", required=True)
    a.add_argument("--config")
    a.add_argument("--variants", default=",".join(VARIANTS))
    a.add_argument("--report", required=True)
    a.add_argument("--format", choices=FORMATS)
    a.set_defaults(func=cmd_ablate)

    m = sub.add_parser("mask-study", help="clean vs degraded mask evaluation")
    m.add_argument("--model", required=True)
    m.add_argument("--data", required=True)
    m.add_argument("--severities", default="0.0,0.25,0.5,1.0")
    m.add_argument("--report", required=True)
    m.add_argument("--format", choices=FORMATS)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_mask_study)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except TruncIDMError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
