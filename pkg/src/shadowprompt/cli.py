"""Command-line interface.

Verbs: gen-data, train, eval, grad-check, infer, serve.
Exit codes: 0 success, 1 validation error, 2 runtime/numeric error.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .datagen import SceneConfig, generate_split
from .errors import ArgumentError, DimensionError, FormatError, NumericError
from .imgio import (
    load_image,
    overlay_mask,
    pad_to_multiple,
    save_image,
    side_by_side,
)
from .model import load_checkpoint, predict
from .prompts import Prompt
from .training import TrainConfig, evaluate, grad_check, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ArgumentError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="shadowprompt")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--train", type=int, default=200)
    p.add_argument("--val", type=int, default=20)
    p.add_argument("--test", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=256, help="square image side")
    p.add_argument("--background", default="gradient", choices=("gradient", "noise", "flat"))

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="JSON file mirroring TrainConfig")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-steps", type=int, help="override max_steps")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--prompt", required=True, choices=("dot", "line", "mask"))
    p.add_argument("--oracle", action="store_true", help="score ground truth against itself")
    p.add_argument("--out", help="write the full JSON report here")

    sub.add_parser("grad-check", help="finite-difference gradient verification")

    p = sub.add_parser("infer", help="run one image through a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--prompt-json", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", help="start the inference service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    return parser


def _load_prompt_json(path) -> Prompt:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read prompt file {path}: {exc}") from exc
    kind = data.get("kind")
    if kind == "dot":
        (x, y), = data["points"]
        return Prompt.dot(x, y)
    if kind == "line":
        return Prompt.line([tuple(p) for p in data["points"]])
    if kind in ("subject_mask", "mask"):
        mask_path = path.parent / data["mask_path"]
        from PIL import Image as PILImage

        if not mask_path.is_file():
            raise FormatError(f"missing mask file: {mask_path}")
        mask = np.array(PILImage.open(mask_path).convert("L")) > 127
        return Prompt.subject_mask(mask.astype(np.uint8))
    raise ArgumentError(f"unknown prompt kind {kind!r} in {path}")


def _cmd_gen_data(args) -> int:
    scene = SceneConfig(image_size=(args.size, args.size), background=args.background)
    root = generate_split(args.train, args.val, args.test, args.seed, args.out, scene)
    print(f"wrote dataset to {root}")
    return 0


def _cmd_train(args) -> int:
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"cannot read config {args.config}: {exc}") from exc
        cfg = TrainConfig.from_dict(raw)
    else:
        cfg = TrainConfig()
    if args.max_steps:
        cfg.max_steps = args.max_steps
    ckpt, log = train(cfg, args.data, args.out)
    print(f"checkpoint: {ckpt}")
    print(f"loss log:   {log}")
    return 0


def _cmd_eval(args) -> int:
    report = evaluate(args.ckpt, args.data, args.split, args.prompt, oracle=args.oracle)
    print(f"split={report['split']} prompt={report['prompt_kind']} "
          f"samples={len(report['rows'])}")
    for key, value in sorted(report["mean"].items()):
        print(f"  {key:18s} {value:10.4f}")
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=1))
        print(f"report: {args.out}")
    return 0


def _cmd_grad_check(args) -> int:
    report = grad_check()
    for key in ("sfi", "dsla", "end_to_end"):
        err = report[f"{key}_max_rel_err"]
        status = "pass" if report[f"{key}_pass"] else "FAIL"
        print(f"{key:12s} max_rel_err={err:.3e}  {status}")
    return 0


def _cmd_infer(args) -> int:
    model = load_checkpoint(args.ckpt)
    model.eval()
    image = load_image(args.image)
    h, w = image.shape[:2]
    prompt = _load_prompt_json(args.prompt_json)
    multiple = model.cfg.divisor
    padded = pad_to_multiple(image, multiple)
    if prompt.kind == "subject_mask":
        prompt = Prompt.subject_mask(pad_to_multiple(prompt.mask, multiple, mode="constant"))
    y_hat, m_hat = predict(model, padded, prompt)
    y_hat, m_hat = y_hat[:h, :w], m_hat[:h, :w]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_image(out / "removal.png", y_hat)
    save_image(out / "mask.png", np.repeat(m_hat[..., None], 3, axis=2))
    panel = side_by_side(image, overlay_mask(image, m_hat), y_hat)
    save_image(out / "panel.png", panel)
    print(f"wrote {out / 'removal.png'}, {out / 'mask.png'}, {out / 'panel.png'}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.ckpt)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "grad-check": _cmd_grad_check,
    "infer": _cmd_infer,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except (ArgumentError, DimensionError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
