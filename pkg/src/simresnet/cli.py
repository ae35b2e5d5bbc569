"""Command line: gen, train, eval, predict, bench, shakedown.

Every command writes ``<output>.manifest.json`` next to its main output,
also when it fails. Exit codes: 0 success, 1 runtime or data failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data_io, shakedown
from .core import SimResNetError, average_networks
from .metrics import error_report, fit_lognormal, histogram, picture_error
from .trainer import (
    TrainConfig,
    evaluate_outputs,
    fit_transform,
    make_wide,
    predict_limit,
    select_depth,
    split_validation,
    train,
)

log = logging.getLogger("simresnet")

FEATURE_ALIASES = {"feret": "feret", "area": "area", "ar": "aspect_ratio", "aspect_ratio": "aspect_ratio"}


class CommandError(SimResNetError):
    pass


# ---------------------------------------------------------------------------
# argument types


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return value


def feature_list(text: str) -> tuple:
    names = []
    for part in text.split(","):
        part = part.strip().lower()
        if part not in FEATURE_ALIASES:
            raise argparse.ArgumentTypeError(
                f"unknown feature {part!r}; choose from feret, area, ar"
            )
        names.append(FEATURE_ALIASES[part])
    if len(set(names)) != len(names):
        raise argparse.ArgumentTypeError("duplicate features")
    return tuple(names)


def int_list(text: str) -> list:
    return [positive_int(p) for p in text.split(",") if p.strip()]


def default_seed() -> int:
    env = os.environ.get("SIMRESNET_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise SystemExit(f"SIMRESNET_SEED must be an integer, got {env!r}") from None


# ---------------------------------------------------------------------------
# manifest


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    def __init__(self, command: str, args: argparse.Namespace, output: Path):
        self.command = command
        self.path = Path(str(output) + ".manifest.json")
        self.config = {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in sorted(vars(args).items())
            if k not in ("func", "verbose")
        }
        self.inputs: list = []
        self.outputs: list = []
        self.timed_outputs: list = []
        self.timings: dict = {}
        self._t0 = time.perf_counter()

    def input(self, path):
        self.inputs.append(str(path))

    def output(self, path, timed=False):
        """Register an output; ``timed`` marks files that contain timing fields."""
        self.outputs.append(str(path))
        if timed:
            self.timed_outputs.append(str(path))

    def write(self, status: str, error: str | None = None) -> None:
        self.timings.setdefault("total_seconds", time.perf_counter() - self._t0)
        checksums = {p: sha256(p) for p in self.inputs + self.outputs if Path(p).exists()}
        data = {
            "command": self.command,
            "config": self.config,
            "seed": self.config.get("seed"),
            "inputs": self.inputs,
            "outputs": self.outputs,
            "checksums": checksums,
            "timed_outputs": self.timed_outputs,
            "timings": self.timings,
            "status": status,
        }
        if error is not None:
            data["error"] = error
        data_io.ensure_parent(self.path)
        data_io.write_json(data, self.path)


# ---------------------------------------------------------------------------
# helpers


def _load_corpus(path, features=None):
    try:
        return data_io.load_pictures(path, features)
    except FileNotFoundError:
        raise CommandError(f"corpus {path} not found") from None


def _load_model(path):
    try:
        model = data_io.load_model(path)
    except FileNotFoundError:
        raise CommandError(f"model {path} not found") from None
    if model.transform is None:
        raise CommandError(f"model {path} carries no normalization transform")
    return model


def _normalized_for_model(model, pictures):
    names = model.transform.feature_names
    missing = [n for n in names if n not in pictures[0].feature_names]
    if missing:
        raise CommandError(f"corpus lacks the model's features {missing}")
    if len(names) != model.network.feature_dim:
        raise CommandError("model transform and network disagree on the feature count")
    return [model.transform.apply(p) for p in pictures]


def _choose(pictures, count, seed, picture_id=None):
    if picture_id is not None:
        chosen = [p for p in pictures if p.picture_id == picture_id]
        if not chosen:
            raise CommandError(f"picture {picture_id!r} not in corpus")
        return chosen
    if count > len(pictures):
        raise CommandError(f"need {count} pictures, corpus has {len(pictures)}")
    idx = np.random.default_rng([seed, 3]).choice(len(pictures), size=count, replace=False)
    return [pictures[i] for i in sorted(idx)]


def _config(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        max_iterations=args.iterations,
        depth=args.depth,
        activation=args.activation,
        seed=args.seed,
        averaging_count=args.avg,
    )


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args, manifest):
    spec = data_io.DEFAULT_SPECS[args.group]
    if args.coupling is not None:
        spec = replace(spec, coupling=args.coupling)
    pictures = data_io.gen_synthetic(spec, args.pictures, args.measurements, args.seed)
    data_io.ensure_parent(args.output)
    data_io.write_pictures(pictures, args.output)
    manifest.output(args.output)
    targets = np.array([p.target for p in pictures])
    print(
        f"synthetic group {args.group}: {len(pictures)} pictures x {args.measurements} "
        f"measurements, target median {np.median(targets):.1f} MPa -> {args.output}"
    )


def _warm_up(picture, cfg):
    """Load the compiled SGD kernel so timings cover training only."""
    train(picture, replace(cfg, max_iterations=1, plateau_window=None),
          make_wide(picture.feature_dim, 1, cfg))


def cmd_train(args, manifest):
    manifest.input(args.data)
    pictures = _load_corpus(args.data, args.features)
    if args.group:
        pictures = [p for p in pictures if p.group == args.group]
        if not pictures:
            raise CommandError(f"no pictures of group {args.group}")
    transform = fit_transform(pictures)
    normed = [transform.apply(p) for p in pictures]
    cfg = _config(args)

    if args.select_depth:
        tr, val = split_validation(normed, args.validation_fraction, args.seed)
        if not tr or not val:
            raise CommandError("validation split left an empty side")
        tr = _choose(tr, args.avg, args.seed)
        depth = select_depth(tr, val, args.select_depth, cfg)
        cfg = replace(cfg, depth=depth)
        print(f"selected depth {depth} from {args.select_depth}")
        normed_pool = tr
    else:
        normed_pool = normed

    chosen = _choose(normed_pool, args.avg, args.seed, args.picture)
    history_rows = []
    _warm_up(chosen[0], cfg)
    t0 = time.perf_counter()
    if len(chosen) == 1:
        init = make_wide(chosen[0].feature_dim, args.width_multiplier, cfg)
        report = train(chosen[0], cfg, init)
        net = report.network
        reports = [(chosen[0], report)]
    else:
        init = make_wide(chosen[0].feature_dim, args.width_multiplier, cfg)
        reports = [(p, train(p, cfg, init)) for p in chosen]
        net = average_networks([r.network for _, r in reports])
    manifest.timings["train_seconds"] = time.perf_counter() - t0
    for p, rep in reports:
        for epoch, value in enumerate(rep.loss_history, start=1):
            history_rows.append((p.picture_id, epoch, float(value)))

    data_io.ensure_parent(args.output)
    data_io.save_model(net, transform, args.output, seed=args.seed)
    manifest.output(args.output)
    history = args.history or str(Path(args.output).with_suffix("")) + ".history.csv"
    data_io.write_csv(["picture_id", "epoch", "loss"], history_rows, history)
    manifest.output(history)
    for p, rep in reports:
        err = picture_error(evaluate_outputs(net, p), p.target) / p.n_measurements
        print(
            f"{p.picture_id}: {rep.iterations} epochs ({rep.stopping_reason}), "
            f"final loss {rep.loss_history[-1]:.3e}, mean |x(T)-h| {err:.4f}"
        )
    print(f"model -> {args.output}")


def cmd_eval(args, manifest):
    manifest.input(args.model)
    manifest.input(args.data)
    model = _load_model(args.model)
    pictures = _load_corpus(args.data)
    normed = _normalized_for_model(model, pictures)
    pairs, hist_rows = [], []
    for raw, p in zip(pictures, normed):
        out = evaluate_outputs(model.network, p)
        pairs.append((p.picture_id, picture_error(out, p.target)))
        hist_rows.append((p.picture_id, "input", histogram(p.features, args.bins)))
        hist_rows.append((p.picture_id, "output", histogram(out, args.bins)))
    report = error_report(pairs)
    prefix = args.output
    data_io.ensure_parent(prefix)
    csv_path, json_path, hist_path = (
        f"{prefix}.errors.csv",
        f"{prefix}.summary.json",
        f"{prefix}.histograms.csv",
    )
    config = {"model": str(args.model), "data": str(args.data), "bins": args.bins}
    data_io.write_error_report(report, csv_path, json_path, config)
    data_io.write_histogram_csv(hist_rows, hist_path)
    for path in (csv_path, json_path, hist_path):
        manifest.output(path)
    print(f"P={report.P} eta_bar={report.eta_bar:.6g} theta={report.theta:.6g}")


def cmd_predict(args, manifest):
    manifest.input(args.model)
    manifest.input(args.data)
    model = _load_model(args.model)
    pictures = _load_corpus(args.data)
    normed = _normalized_for_model(model, pictures)
    rows, good_pred, good_true = [], [], []
    for raw, p in zip(pictures, normed):
        pred = predict_limit(model.network, p, model.transform)
        flag = "ok" if pred > 0 else "non_positive"
        if pred > 0:
            good_pred.append(pred)
            good_true.append(raw.target)
        else:
            warnings.warn(f"{p.picture_id}: non-positive predicted limit {pred:.4g}; excluded from fit")
        rows.append((p.picture_id, raw.target, pred, flag))
    data_io.ensure_parent(args.output)
    data_io.write_csv(["picture_id", "true_mpa", "predicted_mpa", "flag"], rows, args.output)
    manifest.output(args.output)
    fits = {"n_fitted": len(good_pred), "n_flagged": len(rows) - len(good_pred)}
    for name, values in (("predicted", good_pred), ("true", good_true)):
        try:
            fit = fit_lognormal(values)
            fits[name] = {"mu": fit.mu, "s": fit.s}
        except SimResNetError as exc:
            fits[name] = {"error": str(exc)}
    fits_path = args.fits or str(Path(args.output).with_suffix("")) + ".fits.json"
    data_io.write_json(fits, fits_path)
    manifest.output(fits_path)
    for name in ("predicted", "true"):
        f = fits[name]
        if "mu" in f:
            print(f"{name:9s} lognormal fit: mu={f['mu']:.4f} s={f['s']:.4f}")
        else:
            print(f"{name:9s} lognormal fit failed: {f['error']}")


def cmd_bench(args, manifest):
    manifest.input(args.data)
    pictures = _load_corpus(args.data, args.features)
    transform = fit_transform(pictures)
    normed = [transform.apply(p) for p in pictures]
    picture = _choose(normed, 1, args.seed, args.picture)[0]
    # fixed epoch budget: the plateau rule would hand each width a different amount of work
    cfg = replace(_config(args), plateau_window=None)
    _warm_up(picture, cfg)
    rows = []
    for m in args.multipliers:
        best, final = np.inf, None
        for _ in range(args.repeats):
            init = make_wide(picture.feature_dim, m, cfg)
            t0 = time.perf_counter()
            rep = train(picture, cfg, init)
            best = min(best, time.perf_counter() - t0)
            final = float(rep.loss_history[-1])
        rows.append((m, picture.feature_dim * m, best, final))
        manifest.timings[f"multiplier_{m}_seconds"] = best
        print(f"multiplier {m} (N={picture.feature_dim * m}): {best:.4f} s, final loss {final:.3e}")
    data_io.ensure_parent(args.output)
    data_io.write_csv(["multiplier", "N", "seconds", "final_loss"], rows, args.output)
    manifest.output(args.output, timed=True)


def cmd_shakedown(args, manifest):
    manifest.input(args.instance)
    try:
        inst = shakedown.load_instance(args.instance)
    except FileNotFoundError:
        raise CommandError(f"instance {args.instance} not found") from None
    tol_feas = args.tol_feas if args.tol_feas is not None else 1e-6 * float(inst.sigma_y.max())
    t0 = time.perf_counter()
    result = shakedown.shakedown_factor(inst, args.tol_bisect, tol_feas, args.max_iter)
    manifest.timings["solve_seconds"] = time.perf_counter() - t0
    solution = shakedown.solution_to_dict(inst, result, tol_feas)
    print(f"alpha* = {result.alpha:.6g}  certificate ok: {solution['feasibility_report']['ok']}")
    if args.oracle:
        oracle = shakedown.brute_force_factor(inst, args.grid_step)
        allowed = (args.grid_step + args.tol_bisect) * result.alpha
        agree = abs(oracle - result.alpha) <= allowed
        solution["oracle"] = {"alpha": oracle, "grid_step": args.grid_step, "agrees": agree}
        print(f"brute force alpha = {oracle:.6g}  agreement: {agree}")
    data_io.ensure_parent(args.output)
    data_io.write_json(solution, args.output)
    manifest.output(args.output)
    if not solution["feasibility_report"]["ok"]:
        raise CommandError("certificate failed the independent re-check")
    if args.oracle and not solution["oracle"]["agrees"]:
        raise CommandError("solver and brute-force oracle disagree")


# ---------------------------------------------------------------------------
# parser


def _add_train_options(p):
    p.add_argument("--features", type=feature_list, default=("feret",),
                   help="comma list of feret, area, ar (default feret)")
    p.add_argument("--depth", type=positive_int, default=4)
    p.add_argument("--lr", type=positive_float, default=0.1, help="learning rate xi")
    p.add_argument("--iterations", type=positive_int, default=10_000, help="epoch cap")
    p.add_argument("--activation", choices=["sigmoid", "relu"], default="sigmoid")
    p.add_argument("--avg", type=int, choices=[1, 5], default=1,
                   help="number of pictures whose trained weights are averaged")
    p.add_argument("--picture", help="train on this picture id instead of a seeded random pick")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simresnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--seed", type=int, default=default_seed(),
                       help="random seed (default: $SIMRESNET_SEED or 0)")
        p.set_defaults(func=func)
        return p

    p = add("gen", cmd_gen, "write a synthetic V or RN corpus")
    p.add_argument("--group", choices=["V", "RN"], required=True)
    p.add_argument("--pictures", type=positive_int, default=70)
    p.add_argument("--measurements", type=positive_int, default=150)
    p.add_argument("--coupling", type=float, default=None,
                   help="override the picture-level feature/target coupling")
    p.add_argument("-o", "--output", required=True)

    p = add("train", cmd_train, "train a model on one or five pictures")
    p.add_argument("--data", required=True)
    _add_train_options(p)
    p.add_argument("--group", choices=["V", "RN"])
    p.add_argument("--width-multiplier", type=positive_int, default=1)
    p.add_argument("--select-depth", type=int_list, metavar="L1,L2,...",
                   help="choose the depth on a validation split")
    p.add_argument("--validation-fraction", type=float, default=0.2)
    p.add_argument("--history")
    p.add_argument("-o", "--output", required=True)

    p = add("eval", cmd_eval, "error sums, their mean/variance and histograms")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--bins", type=positive_int, default=20)
    p.add_argument("-o", "--output", required=True, help="output prefix")

    p = add("predict", cmd_predict, "one predicted limit per picture plus lognormal fits")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--fits")
    p.add_argument("-o", "--output", required=True)

    p = add("bench", cmd_bench, "training wall-clock versus width multiplier")
    p.add_argument("--data", required=True)
    _add_train_options(p)
    p.set_defaults(iterations=500)
    p.add_argument("--multipliers", type=int_list, default=[1, 2, 4])
    p.add_argument("--repeats", type=positive_int, default=3)
    p.add_argument("-o", "--output", required=True)

    p = add("shakedown", cmd_shakedown, "solve a static shakedown instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--tol-bisect", type=positive_float, default=1e-3)
    p.add_argument("--tol-feas", type=positive_float)
    p.add_argument("--max-iter", type=positive_int, default=10_000)
    p.add_argument("--oracle", action="store_true", help="cross-check with the brute-force oracle")
    p.add_argument("--grid-step", type=positive_float, default=0.02)
    p.add_argument("-o", "--output", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    manifest = Manifest(args.command, args, Path(args.output))
    try:
        args.func(args, manifest)
    except (SimResNetError, OSError) as exc:
        manifest.write("error", str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return 1
    manifest.write("ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
