"""Command-line entry point: calibrate, schedule, prune, train and eval.

Exit codes: 0 on success, 2 for configuration or usage errors, 3 when the
optimizer aborts on a non-finite value.
"""

import argparse
import logging
import math
import os
import sys

import numpy as np

from .config import ExperimentConfig, build_objective
from .errors import ConfigError, EvaluationError, NumericAbort
from .estimator import SamplingKey
from .params import DirectionDistribution
from .privacy import (amplify_by_subsampling, calibrate_sigma_ma, calibrate_sigma_theorem1,
                      strong_compose)
from .pruning import build_importance_matrix, synflow_loss, zo_saliency
from .records import Checkpoint, MetricsLog
from .stagewise import resolve_sigma, run_stagewise

logger = logging.getLogger("dpzoo")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _float_arg(text):
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _u64(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _fmt(x):
    return "inf" if x == math.inf else f"{x:.6g}"


def _load_config(args):
    cfg = ExperimentConfig() if args.config is None else ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _out_dir(args):
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------------------


def cmd_calibrate(args):
    for name in ("T", "P", "m", "n"):
        if getattr(args, name) < 1:
            raise ConfigError(f"--{name} must be a positive integer")
    if not args.eps > 0:
        raise ConfigError("--eps must be positive or inf")
    if not 0 < args.delta < 1:
        raise ConfigError("--delta must lie in (0, 1)")
    if args.m > args.n:
        raise ConfigError("--m cannot exceed --n")
    q = args.m / args.n
    th1 = calibrate_sigma_theorem1(args.eps, args.delta, args.T, args.P, args.m, args.n,
                                   args.c2, args.c1)
    ma = calibrate_sigma_ma(args.eps, args.delta, args.T, q, args.c2, args.c1)

    def regime(cal):
        return "inside stated regime" if cal.valid else "outside stated regime"

    print(f"sigma_theorem1={_fmt(th1.sigma)} (eps bound {_fmt(th1.bound)}; {regime(th1)})")
    print(f"sigma_ma={_fmt(ma.sigma)} (eps bound {_fmt(ma.bound)}; {regime(ma)})")
    eps_q, delta_q = amplify_by_subsampling(args.eps, args.delta, q)
    print(f"amplified q={_fmt(q)}: eps'={_fmt(eps_q)} delta'={_fmt(delta_q)}")
    delta_prime = args.delta if args.delta_prime is None else args.delta_prime
    eps_hat, delta_hat = strong_compose(eps_q, delta_q, args.T, delta_prime)
    print(f"composed over T={args.T}: eps_hat={_fmt(eps_hat)} delta_hat={_fmt(delta_hat)}")
    return EXIT_OK


def cmd_schedule(args):
    cfg = _load_config(args)
    schedule = cfg.schedule.build()
    print("s,beta,eta,T,eta_T")
    for plan in schedule.stages():
        print(f"{plan.stage},{plan.beta!r},{plan.eta!r},{plan.T},{plan.budget!r}")
    print(f"# total steps {schedule.total_steps}")
    return EXIT_OK


def _prune(cfg, obj):
    pcfg = cfg.pruning.build()
    theta0 = obj.init
    score = zo_saliency(theta0, obj.shape, pcfg.P, pcfg.beta, SamplingKey(cfg.seed, 0, 0),
                        cfg.estimator.workers)
    return build_importance_matrix(score, pcfg), score


def cmd_prune(args):
    cfg = _load_config(args)
    if cfg.objective.data_csv is not None:
        raise ConfigError("prune is data-free; remove objective.data_csv for this step")
    obj, _ = build_objective(cfg)
    if obj.shape is None:
        raise ConfigError(f"objective {obj.name} has no layered weight shape to prune")
    dist, score = _prune(cfg, obj)
    values = score.values
    q = np.quantile(values, [0.0, 0.25, 0.5, 0.75, 1.0])
    print(f"synflow_loss={synflow_loss(obj.init, obj.shape)!r}")
    print("layer_saliency_sums=" + ",".join(repr(s) for s in score.layer_sums(obj.shape)))
    print("score_quantiles(min,q25,median,q75,max)=" + ",".join(f"{v:.6g}" for v in q))
    kept = dist.importance_diag[dist.mask]
    print(f"keep_count={dist.kept}/{dist.dim}")
    print(f"diag_min={float(kept.min())!r} diag_max={float(kept.max())!r}")
    path = os.path.join(_out_dir(args), "checkpoint.bin")
    Checkpoint(obj.init.copy(), dist.mask.copy(), dist.importance_diag.copy()).write(path)
    return EXIT_OK


def _final_loss(obj, data, theta):
    return obj.mean_loss(theta, (None,) if data is None else data.full())


def cmd_train(args):
    cfg = _load_config(args)
    obj, data = build_objective(cfg)
    spec = cfg.privacy.build()
    schedule = cfg.schedule.build()
    est = cfg.estimator
    if data is not None:
        if est.m > data.n:
            raise ConfigError(f"batch size {est.m} exceeds dataset size {data.n}")
        spec.check_delta(data.n)
    if cfg.pruning.enabled:
        if obj.shape is None:
            raise ConfigError(f"objective {obj.name} has no layered weight shape to prune")
        dist, _ = _prune(cfg, obj)
    else:
        dist = DirectionDistribution.standard(obj.dim)
    n = 1 if data is None else data.n
    m = 1 if data is None else est.m
    cal = resolve_sigma(spec, schedule.total_steps, est.P, m, n, cfg.privacy.route)
    if not cal.valid:
        logger.warning("epsilon=%s lies outside the stated regime (bound %s)",
                       _fmt(spec.epsilon), _fmt(cal.bound))
    metrics = MetricsLog()
    theta = run_stagewise(obj.init, obj.loss, data, schedule, spec, dist, est.P, est.m,
                          cfg.seed, reg_mode=cfg.reg_mode, workers=est.workers,
                          metrics=metrics, average=cfg.schedule.average, sigma=cal.sigma)
    out = _out_dir(args)
    metrics.write_csv(os.path.join(out, "metrics.csv"))
    Checkpoint(theta, dist.mask.copy(), dist.importance_diag.copy()).write(
        os.path.join(out, "checkpoint.bin"))
    eps = metrics.rows[-1].epsilon_spent_estimate if len(metrics) else 0.0
    print(f"final_loss={_final_loss(obj, data, theta)!r} epsilon={_fmt(eps)} "
          f"sigma={_fmt(cal.sigma)} kept={dist.kept}/{dist.dim}")
    return EXIT_OK


def cmd_eval(args):
    cfg = _load_config(args)
    obj, data = build_objective(cfg)
    path = args.checkpoint or os.path.join(args.out or ".", "checkpoint.bin")
    try:
        ckpt = Checkpoint.read(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from exc
    if ckpt.dim != obj.dim:
        raise ConfigError(f"checkpoint has {ckpt.dim} parameters, objective has {obj.dim}")
    initial = _final_loss(obj, data, obj.init)
    final = _final_loss(obj, data, ckpt.theta)
    print(f"loss={final!r} initial_loss={initial!r} kept={int(ckpt.mask.sum())}/{ckpt.dim}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON")
    common.add_argument("--seed", type=_u64, help="override the config seed")
    common.add_argument("--out", help="output directory (default: current directory)")
    common.add_argument("-v", "--verbose", action="store_true", help="log stage progress")

    parser = argparse.ArgumentParser(prog="dpzoo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    cal = sub.add_parser("calibrate", parents=[common], help="print noise calibrations")
    cal.add_argument("--eps", type=_float_arg, required=True, help="target epsilon or inf")
    cal.add_argument("--delta", type=_float_arg, required=True)
    cal.add_argument("--T", type=int, required=True, help="total optimizer steps")
    cal.add_argument("--P", type=int, default=1, help="directions per step")
    cal.add_argument("--m", type=int, required=True, help="batch size")
    cal.add_argument("--n", type=int, required=True, help="dataset size")
    cal.add_argument("--c1", type=_float_arg, default=1.0)
    cal.add_argument("--c2", type=_float_arg, default=1.0)
    cal.add_argument("--delta-prime", type=_float_arg, default=None,
                     help="slack for strong composition (default: delta)")
    cal.set_defaults(func=cmd_calibrate)

    for name, func, text in (("schedule", cmd_schedule, "print the stage table"),
                             ("prune", cmd_prune, "data-free saliency and mask"),
                             ("train", cmd_train, "prune (optional) then private fine-tuning")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.set_defaults(func=func)
    ev = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", help="checkpoint path (default: OUT/checkpoint.bin)")
    ev.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericAbort, EvaluationError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
