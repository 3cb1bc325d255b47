"""Command line entry point: ``aiglab <verb> [--config PATH] [--seed N] [--out DIR]``."""

import argparse
import json
import logging
import os
import sys

import numpy as np

from aiglab.config import RunConfig
from aiglab.diffusion import SampleSet
from aiglab.experiment import (PARETO_AXES, ResultsTable, SweepError, emit_pareto, prepare_models,
                               run_sweep, toy_mixing_figure, train_base, write_loss_trace)
from aiglab.metrics import coverage_report
from aiglab.reward import draft_finetune, write_trace
from aiglab.scorenet import MlpScoreNet

log = logging.getLogger("aiglab")

# used by `toyfig` when no config file is given
TOY_PRESET = {
    "gmm.dim": "1",
    "gmm.weights": "0.5,0.5",
    "gmm.means": "1,-1",
    "gmm.stddevs": repr(0.05 ** 0.5),
    "reward.centers": "1,-1",
    "reward.heights": "1.0,0.4",
}


def load_config(args, preset=None):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output.dir"] = args.out
    if args.config:
        return RunConfig.from_file(args.config, **overrides)
    return RunConfig({**(preset or {}), **{k: str(v) for k, v in overrides.items()}})


def cmd_train(args):
    cfg = load_config(args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    net, losses = train_base(cfg)
    path = os.path.join(cfg.out_dir, "base.ckpt")
    net.save(path, cfg.schedule())
    write_loss_trace(os.path.join(cfg.out_dir, "train_loss.csv"), losses)
    return {"checkpoint": path, "final_loss": float(np.mean(losses[-100:]))}


def cmd_finetune(args):
    cfg = load_config(args)
    schedule = cfg.schedule()
    os.makedirs(cfg.out_dir, exist_ok=True)
    base_path = args.base or os.path.join(cfg.out_dir, "base.ckpt")
    if os.path.exists(base_path):
        base = MlpScoreNet.load(base_path, schedule)
    else:
        base, _ = train_base(cfg)
        base.save(base_path, schedule)
    ft, rewards = draft_finetune(base, cfg.reward(), schedule, int(cfg["sampler.steps"]),
                                 cfg.finetune_config(), k_grad=int(cfg["finetune.k_grad"]))
    path = os.path.join(cfg.out_dir, "draft.ckpt")
    ft.save(path, schedule)
    write_trace(os.path.join(cfg.out_dir, "finetune_trace.csv"), rewards, np.zeros_like(rewards))
    return {"checkpoint": path, "final_reward": float(rewards[-1])}


def cmd_sweep(args):
    cfg = load_config(args)
    base = None
    if args.base:
        base = MlpScoreNet.load(args.base, cfg.schedule())
    models = prepare_models(cfg, base=base)
    table = run_sweep(cfg, models)
    return {"results": os.path.join(cfg.out_dir, "results.csv"), "rows": len(table)}


def cmd_toyfig(args):
    cfg = load_config(args, preset=TOY_PRESET)
    stats = toy_mixing_figure(cfg)
    return {
        "overlap": {str(k): v for k, v in stats["overlap"].items()},
        "terminal_origin_share": {str(k): v for k, v in stats["terminal_origin_share"].items()},
    }


def cmd_pareto(args):
    out = args.out or os.path.dirname(os.path.abspath(args.results))
    table = ResultsTable.load(args.results)
    axes = [args.axis] if args.axis else list(PARETO_AXES)
    fronts = {}
    for axis in axes:
        fronts[axis] = [r.run_id for r in emit_pareto(table, axis, out)]
    return {"fronts": fronts}


def cmd_metrics(args):
    ref = SampleSet.load(args.reference)
    gen = SampleSet.load(args.generated)
    reward = load_config(args).reward() if args.config else None
    rep = coverage_report(os.path.basename(args.generated), ref.points, gen.points, reward, k=args.k)
    return rep.as_dict()


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value run configuration file")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out", help="override the output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="aiglab", description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("train", parents=[common], help="train the base score network").set_defaults(fn=cmd_train)
    sp = sub.add_parser("finetune", parents=[common], help="DRaFT-finetune a base checkpoint")
    sp.add_argument("--base", help="base checkpoint (default: <out>/base.ckpt, trained if missing)")
    sp.set_defaults(fn=cmd_finetune)
    sp = sub.add_parser("sweep", parents=[common], help="run a regularizer sweep")
    sp.add_argument("--base", help="reuse a trained base checkpoint")
    sp.set_defaults(fn=cmd_sweep)
    sub.add_parser("toyfig", parents=[common], help="emit 1D toy mixing data").set_defaults(fn=cmd_toyfig)
    sp = sub.add_parser("pareto", parents=[common], help="mark Pareto fronts of a results CSV")
    sp.add_argument("results")
    sp.add_argument("--axis", choices=PARETO_AXES + ("recall",))
    sp.set_defaults(fn=cmd_pareto)
    sp = sub.add_parser("metrics", parents=[common], help="compare two sample CSVs")
    sp.add_argument("reference")
    sp.add_argument("generated")
    sp.add_argument("-k", type=int, default=10)
    sp.set_defaults(fn=cmd_metrics)
    return p


def _error_line(exc):
    info = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, SweepError):
        info["key"] = exc.key
    return json.dumps(info)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.fn(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(_error_line(exc), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every failure gets a machine-readable line
        print(_error_line(exc), file=sys.stderr)
        return 1
    print(json.dumps({"ok": True, "verb": args.verb, **result}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
