"""Command-line surface tying the pipeline together.

Subcommands: synth, train, score, fuse, eval, gradcheck, sweep. Every
command is a pure function of its inputs and flags; rerunning one with the
same arguments reproduces its outputs byte for byte.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .datasets import (
    load_dataset,
    load_detections,
    load_head,
    load_scores,
    save_detections,
    save_head,
    save_scores,
)
from .errors import SceneFuseError
from .evaluation import map_report, recall_at_k
from .fusion import PRESETS, preset, refine_detections, score_image
from .synth import WorldConfig, generate_dataset
from .training import (
    TrainConfig,
    finite_diff_check,
    random_check_instance,
    train_image_head,
    train_text_head,
)

_VARIANTS = {"mlr": "visual_mlr", "mlr-plus": "visual_mlr_plus"}


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_out(p, required=True):
    p.add_argument("--out", required=required, help="output directory")


def _parse_grid(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}: {exc}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scenefuse", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a synthetic benchmark")
    p.add_argument("--config", help="JSON file with world configuration overrides")
    p.add_argument("--seed", type=int, default=None, help="world seed override")
    p.add_argument("--k", type=int, default=5, help="sparse detector scores per instance")
    _add_out(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="fit one MLR branch on a dataset split")
    p.add_argument("--data", required=True, help="dataset split directory")
    p.add_argument("--branch", required=True, choices=("text", "image"))
    p.add_argument("--config", help="JSON file with training configuration overrides")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    _add_out(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("score", help="compute per-image category scores")
    p.add_argument("--data", required=True)
    p.add_argument("--text-head", required=True)
    p.add_argument("--image-head", default=None)
    p.add_argument("--variant", choices=sorted(_VARIANTS), default="mlr-plus")
    p.add_argument("--preset", choices=sorted(PRESETS), default="lvis")
    p.add_argument("--lambda-base", type=float, default=None)
    p.add_argument("--lambda-novel", type=float, default=None)
    _add_out(p)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("fuse", help="refine detector scores with image-level scores")
    p.add_argument("--data", required=True, help="directory holding detections.jsonl")
    p.add_argument("--scores", required=True, help="directory written by the score command")
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--variant", choices=sorted(_VARIANTS), default=None,
                   help="assert the scores were produced by this variant")
    _add_out(p)
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("eval", help="detection AP and multi-label recall report")
    p.add_argument("--data", required=True)
    p.add_argument("--detections", default=None, help="defaults to the split's raw detections")
    p.add_argument("--scores", default=None, help="adds top-k recall metrics")
    p.add_argument("--k", type=int, default=10)
    _add_out(p, required=False)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--loss", choices=("rank", "dist", "both"), default="both")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--h", type=float, default=1e-5)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("sweep", help="grid-search fusion hyperparameters")
    p.add_argument("--data", required=True)
    p.add_argument("--text-head", required=True)
    p.add_argument("--image-head", default=None)
    p.add_argument("--variant", choices=sorted(_VARIANTS), default="mlr-plus")
    p.add_argument("--preset", choices=sorted(PRESETS), default="lvis")
    p.add_argument("--gamma-grid", type=_parse_grid,
                   default=[0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
    p.add_argument("--lambda-base-grid", type=_parse_grid, default=None)
    p.add_argument("--lambda-novel-grid", type=_parse_grid, default=None)
    p.add_argument("--k", type=int, default=10)
    _add_out(p)
    p.set_defaults(func=_cmd_sweep)

    return parser


def _cmd_synth(args) -> int:
    payload = {}
    if args.config:
        payload = json.loads(Path(args.config).read_text())
    if args.seed is not None:
        payload["seed"] = args.seed
    cfg = WorldConfig.from_dict(payload)
    generate_dataset(cfg, args.out, top_k=args.k)
    print(f"wrote synthetic dataset to {args.out}")
    return 0


def _train_config_from(args) -> TrainConfig:
    payload = {}
    if args.config:
        payload = json.loads(Path(args.config).read_text())
    overrides = {
        "iterations": args.iterations,
        "seed": args.seed,
        "learning_rate": args.learning_rate,
        "batch_size": args.batch_size,
    }
    payload.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**payload)


def _cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    config = _train_config_from(args)
    if args.branch == "text":
        head = train_text_head(
            dataset.records, dataset.text_embeds, config, vocab=dataset.vocab
        )
    else:
        head = train_image_head(dataset.records, config)
    save_head(args.out, head, args.branch, config)
    print(f"trained {args.branch} head ({head.input_dim} -> {head.output_dim}) at {args.out}")
    return 0


def _fusion_config_from(args, variant: str):
    overrides = {"variant": variant}
    if getattr(args, "lambda_base", None) is not None:
        overrides["lambda_base"] = args.lambda_base
    if getattr(args, "lambda_novel", None) is not None:
        overrides["lambda_novel"] = args.lambda_novel
    return preset(args.preset, **overrides)


def _cmd_score(args) -> int:
    dataset = load_dataset(args.data)
    text_head, _ = load_head(args.text_head)
    variant = _VARIANTS[args.variant]
    image_head = None
    if args.image_head is not None:
        image_head, _ = load_head(args.image_head)
    cfg = _fusion_config_from(args, variant)
    scores = [
        score_image(
            record, text_head, dataset.text_embeds, dataset.vocab, cfg,
            image_head=image_head,
        )
        for record in dataset.records
    ]
    save_scores(args.out, scores, cfg)
    print(f"scored {len(scores)} images into {args.out}")
    return 0


def _cmd_fuse(args) -> int:
    detections = load_detections(Path(args.data) / "detections.jsonl")
    scores, stored_cfg = load_scores(args.scores)
    if args.variant is not None and _VARIANTS[args.variant] != stored_cfg.variant:
        raise SceneFuseError(
            f"scores in {args.scores} were produced by {stored_cfg.variant}, "
            f"not {_VARIANTS[args.variant]}"
        )
    if args.gamma is not None:
        gamma = args.gamma
    elif args.preset is not None:
        gamma = preset(args.preset).gamma
    else:
        gamma = stored_cfg.gamma
    by_image = {s.image_id: s for s in scores}
    refined = []
    for det in detections:
        entry = by_image.get(det.image_id)
        if entry is None:
            raise SceneFuseError(f"no scores for image {det.image_id!r}")
        refined.append(
            refine_detections(det, entry.prob_mmlr, gamma, prob_floor=stored_cfg.prob_floor)
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_detections(out / "detections.jsonl", refined)
    print(f"refined {len(refined)} detection sets (gamma={gamma}) into {out}")
    return 0


def _cmd_eval(args) -> int:
    dataset = load_dataset(args.data)
    det_path = Path(args.detections) if args.detections else Path(args.data) / "detections.jsonl"
    detections = load_detections(det_path, dataset.vocab)
    report = map_report(detections, dataset.ground_truths, dataset.vocab)
    if args.scores:
        scores, _cfg = load_scores(args.scores)
        r_novel, r_base = recall_at_k(scores, dataset.records, dataset.vocab, k=args.k)
        report = report.with_recalls(r_novel, r_base)
    text = report.to_text()
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text)
        (out / "report.json").write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
        )
    return 0


def _cmd_gradcheck(args) -> int:
    kinds = ("rank", "dist") if args.loss == "both" else (args.loss,)
    failed = False
    for kind in kinds:
        worst = 0.0
        for i in range(args.instances):
            inst = random_check_instance(args.seed + i)
            worst = max(
                worst,
                finite_diff_check(
                    inst["head"],
                    inst["features"],
                    loss_kind=kind,
                    text_embeds=inst["text_embeds"],
                    labels=inst["labels"],
                    teachers=inst["teachers"],
                    h=args.h,
                ),
            )
        print(f"{kind} max_relative_error {worst:.3e}")
        failed = failed or not np.isfinite(worst)
    return 2 if failed else 0


def _cmd_sweep(args) -> int:
    dataset = load_dataset(args.data)
    text_head, _ = load_head(args.text_head)
    variant = _VARIANTS[args.variant]
    image_head = None
    if args.image_head is not None:
        image_head, _ = load_head(args.image_head)
    base_cfg = preset(args.preset, variant=variant)
    lb_grid = args.lambda_base_grid or [base_cfg.lambda_base]
    ln_grid = args.lambda_novel_grid or [base_cfg.lambda_novel]

    rows = []
    for lambda_base in lb_grid:
        for lambda_novel in ln_grid:
            cfg = preset(
                args.preset,
                variant=variant,
                lambda_base=lambda_base,
                lambda_novel=lambda_novel,
            )
            scored = {
                record.image_id: score_image(
                    record, text_head, dataset.text_embeds, dataset.vocab, cfg,
                    image_head=image_head,
                )
                for record in dataset.records
            }
            for gamma in args.gamma_grid:
                refined = [
                    refine_detections(
                        det, scored[det.image_id].prob_mmlr, gamma,
                        prob_floor=cfg.prob_floor,
                    )
                    for det in dataset.detections
                ]
                report = map_report(refined, dataset.ground_truths, dataset.vocab)
                rows.append(
                    {
                        "gamma": gamma,
                        "lambda_base": lambda_base,
                        "lambda_novel": lambda_novel,
                        "ap_all": report.ap_all,
                        "ap_base": report.ap_base,
                        "ap_novel": report.ap_novel,
                    }
                )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.jsonl", "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    header = f"{'gamma':>6} {'l_base':>6} {'l_novel':>7} {'ap_all':>8} {'ap_base':>8} {'ap_novel':>8}"
    lines = [header]
    for row in rows:
        lines.append(
            f"{row['gamma']:>6.2f} {row['lambda_base']:>6.2f} {row['lambda_novel']:>7.2f} "
            f"{row['ap_all']:>8.4f} {row['ap_base']:>8.4f} {row['ap_novel']:>8.4f}"
        )
    (out / "sweep.txt").write_text("\n".join(lines) + "\n")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse printed its own message
        return int(exc.code or 0)
    try:
        return args.func(args)
    except SceneFuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (json.JSONDecodeError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
