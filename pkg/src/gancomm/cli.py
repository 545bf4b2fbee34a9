"""Command-line front end.

Subcommands: train, eval, baseline, gan-sample, gradcheck, goldens.
Exit codes: 0 success, 1 configuration or usage error, 2 numerical
abort during training.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import config as cfgmod
from . import evaluate as ev
from . import tensor as tz
from .errors import ConfigError, ContractError, NumericalAbort
from .gan import discriminator_loss
from .goldens import write_goldens
from .tensor import (
    Parameter,
    Tape,
    Tensor,
    backward,
    finite_difference_grad,
    zero_grads,
)
from .training import build_components, load_run_checkpoint, run_end_to_end

GRADCHECK_TOL = 1e-4


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as ConfigError (exit 1)."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def parse_snr_range(text: str) -> list[float]:
    """'a:b:step' inclusive of both ends (within half a step)."""
    try:
        a, b, step = (float(tok) for tok in text.split(":"))
    except ValueError:
        raise ConfigError(f"--snr wants a:b:step, got {text!r}") from None
    if step <= 0 or b < a:
        raise ConfigError("--snr needs step > 0 and b >= a")
    return [round(a + i * step, 10) for i in range(int((b - a) / step + 0.5) + 1)]


def _load_cfg(args) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "snr", None):
        cfg.eval.snr_list = parse_snr_range(args.snr)
    cfgmod.validate(cfg)
    return cfg


def _trained_components(cfg, ckpt: str | None, out_dir: str | None = None):
    """Train in-process, or load a checkpoint produced by `train`."""
    if ckpt:
        comps = build_components(cfg, np.random.default_rng(cfg.seed))
        outer_done, _ = load_run_checkpoint(ckpt, comps, cfg)
        return comps, outer_done > 0
    result = run_end_to_end(cfg, out_dir=out_dir)
    return result.components, result.outer_done > 0


def _cmd_train(args) -> int:
    cfg = _load_cfg(args)
    out = args.out or f"run_{cfg.config_hash()}"
    os.makedirs(out, exist_ok=True)
    result = run_end_to_end(cfg, out_dir=out, quiet=False)
    print(f"config {cfg.config_hash()}: {result.outer_done} outer iterations "
          f"({result.stop_reason}); wrote {out}/checkpoint.bin and train_log.csv")
    return 0


def _eval_common(args, classical_only: bool) -> int:
    cfg = _load_cfg(args)
    needs_nets = cfg.system in ("e2e_fcn", "e2e_cnn")
    if classical_only and needs_nets:
        raise ConfigError("baseline evaluates classical systems; use `eval`")
    comps, trained = (None, False)
    if needs_nets:
        comps, trained = _trained_components(cfg, args.ckpt)
    system = ev.build_eval_system(cfg, comps, trained)
    points = ev.monte_carlo_curve(system, cfg)
    ev.write_curve_csv(args.out, points, cfg, system.name)
    print(f"wrote {args.out} ({len(points)} points, system {system.name})")
    if args.plot:
        for path in ev.write_gnuplot(args.plot, points):
            print(f"wrote {path}")
    return 0


def _cmd_eval(args) -> int:
    return _eval_common(args, classical_only=False)


def _cmd_baseline(args) -> int:
    return _eval_common(args, classical_only=True)


def _cmd_gan_sample(args) -> int:
    cfg = _load_cfg(args)
    comps, trained = _trained_components(cfg, args.ckpt)
    if not trained:
        raise ContractError("gan-sample needs a trained generator")
    lines = ev.constellation_dump(comps, cfg, n_conditions=args.conditions,
                                  samples_per_condition=args.samples,
                                  path=args.out)
    print(f"wrote {args.out} ({len(lines)} lines)")
    return 0


def _cmd_goldens(args) -> int:
    for path in write_goldens(args.out):
        print(f"wrote {path}")
    return 0


# --------------------------------------------------------------------------
# gradient checking


def _max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(numeric))), 1e-10)
    return float(np.max(np.abs(analytic - numeric))) / scale


def _compare(loss_fn, params) -> float:
    """Max relative error of taped gradients vs central differences."""
    zero_grads(params)
    with Tape() as tape:
        loss = loss_fn()
    backward(loss, tape)
    worst = 0.0
    for p in params:
        fd = finite_difference_grad(loss_fn, p)
        worst = max(worst, _max_rel_err(p.grad, fd))
    return worst


def _away_from_zero(rng, shape, margin=0.25):
    """Draws bounded away from relu's kink so h never crosses it."""
    mag = rng.uniform(margin, 1.0, size=shape)
    return mag * np.where(rng.random(shape) < 0.5, -1.0, 1.0)


def _case_dense(rng):
    x = Parameter(rng.normal(size=(3, 4)), "x")
    w = Parameter(rng.normal(size=(5, 4)) * 0.5, "w")
    b = Parameter(rng.normal(size=(5,)) * 0.1, "b")
    r = Tensor(rng.normal(size=(3, 5)))
    return lambda: tz.sum_all(tz.mul(tz.dense_forward(x, w, b), r)), [x, w, b]


def _case_conv(rng, kernel):
    x = Parameter(rng.normal(size=(2, 6, 3)), "x")
    w = Parameter(rng.normal(size=(kernel, 3, 4)) * 0.4, "w")
    b = Parameter(rng.normal(size=(4,)) * 0.1, "b")
    r = Tensor(rng.normal(size=(2, 6, 4)))
    return lambda: tz.sum_all(tz.mul(tz.conv1d_forward(x, w, b), r)), [x, w, b]


def _case_power(rng):
    x = Parameter(rng.normal(size=(3, 4, 2)) + 0.1, "x")
    r = Tensor(rng.normal(size=(3, 4, 2)))
    return lambda: tz.sum_all(tz.mul(tz.power_normalize(x), r)), [x]


def _case_sigmoid(rng):
    x = Parameter(rng.normal(size=(4, 5)) * 2.0, "x")
    r = Tensor(rng.normal(size=(4, 5)))
    return lambda: tz.sum_all(tz.mul(tz.activation(x, "sigmoid"), r)), [x]


def _case_relu(rng):
    x = Parameter(_away_from_zero(rng, (4, 5)), "x")
    r = Tensor(rng.normal(size=(4, 5)))
    return lambda: tz.sum_all(tz.mul(tz.activation(x, "relu"), r)), [x]


def _case_bce(rng):
    x = Parameter(rng.normal(size=(6, 3)), "x")
    target = (rng.random((6, 3)) < 0.5).astype(float)
    return lambda: tz.bce_loss(tz.activation(x, "sigmoid"), target), [x]


def _case_disc_loss(rng):
    w = Parameter(rng.normal(size=(1, 4)) * 0.7, "w")
    b = Parameter(rng.normal(size=(1,)) * 0.1, "b")
    xr = Tensor(rng.normal(size=(5, 4)))
    xf = Tensor(rng.normal(size=(5, 4)))

    def loss():
        sr = tz.dense_forward(xr, w, b, act="sigmoid")
        sf = tz.dense_forward(xf, w, b, act="sigmoid")
        return discriminator_loss(sr, sf)
    return loss, [w, b]


GRADCHECK_CASES = {
    "dense": _case_dense,
    "conv1d_k3": lambda rng: _case_conv(rng, 3),
    "conv1d_k5": lambda rng: _case_conv(rng, 5),
    "power_normalize": _case_power,
    "sigmoid": _case_sigmoid,
    "relu": _case_relu,
    "bce_loss": _case_bce,
    "discriminator_loss": _case_disc_loss,
}


def gradcheck_suite(n_seeds: int = 20, seed0: int = 1000) -> dict[str, float]:
    """Max relative gradient error per layer kind over n_seeds draws."""
    report = {}
    for kind, builder in GRADCHECK_CASES.items():
        worst = 0.0
        for i in range(n_seeds):
            loss_fn, params = builder(np.random.default_rng(seed0 + i))
            worst = max(worst, _compare(loss_fn, params))
        report[kind] = worst
    return report


def _cmd_gradcheck(args) -> int:
    report = gradcheck_suite(args.seeds)
    ok = True
    for kind, err in report.items():
        status = "ok" if err < GRADCHECK_TOL else "FAIL"
        ok &= err < GRADCHECK_TOL
        print(f"{kind:20s} max_rel_err {err:.3e}  {status}")
    return 0 if ok else 1


# --------------------------------------------------------------------------


def _build_parser() -> _Parser:
    p = _Parser(prog="gancomm", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    def add_config(sp, ckpt=False):
        sp.add_argument("config", help="JSON config file")
        sp.add_argument("--seed", type=int, default=None)
        if ckpt:
            sp.add_argument("--ckpt", default=None,
                            help="checkpoint.bin from a previous train run")

    sp = sub.add_parser("train", help="run the training schedule")
    add_config(sp)
    sp.add_argument("--out", default=None, help="output directory")
    sp.set_defaults(fn=_cmd_train)

    for name, fn in (("eval", _cmd_eval), ("baseline", _cmd_baseline)):
        sp = sub.add_parser(name, help=f"{name} BER/BLER curve")
        add_config(sp, ckpt=name == "eval")
        if name == "baseline":
            sp.set_defaults(ckpt=None)
        sp.add_argument("--snr", default=None, help="a:b:step sweep override")
        sp.add_argument("--out", default="curve.csv")
        sp.add_argument("--plot", default=None,
                        help="prefix for gnuplot two-column .dat files")
        sp.set_defaults(fn=fn)

    sp = sub.add_parser("gan-sample", help="constellation dump, real vs generator")
    add_config(sp, ckpt=True)
    sp.add_argument("--out", default="constellation.csv")
    sp.add_argument("--conditions", type=int, default=25)
    sp.add_argument("--samples", type=int, default=64)
    sp.set_defaults(fn=_cmd_gan_sample)

    sp = sub.add_parser("gradcheck", help="gradients vs finite differences")
    sp.add_argument("--seeds", type=int, default=20)
    sp.set_defaults(fn=_cmd_gradcheck)

    sp = sub.add_parser("goldens", help="regenerate oracle CSVs")
    sp.add_argument("--out", default="tests/goldens")
    sp.set_defaults(fn=_cmd_goldens)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 2
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:  # ConfigError, framing, domain, bad values
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
