"""Command-line front end: train registered problems, evaluate saved models.

    varnet solve qho --epochs 60000 --seed 7 --out qho.csv
    varnet eval --model qho.model.json --problem qho --out again.csv
    varnet list-problems --json
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys

import numpy as np

from . import __version__
from . import training
from .network import ACTIVATIONS, Model, ModelFormatError, atomic_write, build
from .problems import REGISTRY, UnknownProblem, get_problem
from .stack import derivative_stack

EXIT_OK, EXIT_UNKNOWN_PROBLEM, EXIT_CONFIG, EXIT_TERMINATED = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


SCHEDULERS = {
    "exponential": training.ExponentialLRDecay,
    "inverse_time": training.InverseTimeDecay,
    "polynomial": training.PolynomialDecay,
    "plateau": training.ReduceLROnPlateau,
    "control_std": training.ControlLossSTD,
}
CALLBACKS = {
    "early_stopping": training.EarlyStopping,
    "terminate_if": training.TerminateIf,
    "save_model": training.SaveModel,
}

# keys a config file may set, with their types
CONFIG_KEYS = {
    "epochs": int,
    "lr": float,
    "dims": list,
    "seed": int,
    "activation": str,
    "points": int,
    "combinator": str,
    "scheduler": list,
    "callback": list,
    "out": str,
    "save_model": str,
    "init_model": str,
    "log_every": int,
    "verbose": bool,
    "plot": bool,
}


# -- parsing helpers ------------------------------------------------------------


def parse_dims(text):
    if isinstance(text, (list, tuple)):
        items = list(text)
    else:
        items = [t for t in str(text).replace(" ", "").split(",") if t]
    try:
        dims = [int(d) for d in items]
    except (TypeError, ValueError):
        raise ConfigError(f"dims must be comma-separated integers, got {text!r}") from None
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ConfigError(f"dims need at least two positive sizes, got {dims}")
    return dims


def _value(text):
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered in ("none", "null"):
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_component(text, table, kind):
    """``name:key=value,key=value`` into an instance from ``table``."""
    name, _, rest = text.partition(":")
    name = name.strip().replace("-", "_")
    if name not in table:
        raise ConfigError(f"unknown {kind} {name!r}; choose from {', '.join(sorted(table))}")
    kwargs = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise ConfigError(f"{kind} option {item!r} is not key=value")
        kwargs[key.strip()] = _value(val.strip())
    try:
        return table[name](**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {kind} {text!r}: {exc}") from None


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return data


def resolve_config(args, problem_def):
    """Problem defaults, then the config file, then explicit flags."""
    cfg = {
        "epochs": problem_def.defaults["epochs"],
        "lr": problem_def.defaults["lr"],
        "dims": list(problem_def.defaults["dims"]),
        "activation": problem_def.defaults["activation"],
        "points": problem_def.defaults["points"],
        "combinator": problem_def.defaults["combinator"],
        "seed": None,
        "scheduler": [],
        "callback": [],
        "out": f"{problem_def.name}.csv",
        "save_model": None,
        "init_model": None,
        "log_every": 1000,
        "verbose": False,
        "plot": False,
    }
    if args.config:
        cfg.update(load_config(args.config))
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None and value is not False and value != []:
            cfg[key] = value
    if cfg["seed"] is None:
        env = os.environ.get("VARNET_SEED")
        try:
            cfg["seed"] = int(env) if env not in (None, "") else 0
        except ValueError:
            raise ConfigError(f"VARNET_SEED must be an integer, got {env!r}") from None
    return validate(cfg, problem_def)


def validate(cfg, problem_def):
    for key, kind in CONFIG_KEYS.items():
        value = cfg.get(key)
        if value is None or key == "dims":
            continue
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            cfg[key] = value = float(value)
        if kind is list and isinstance(value, str):
            cfg[key] = value = [value]
        if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
            raise ConfigError(f"{key} must be {kind.__name__}, got {value!r}")
    cfg["dims"] = parse_dims(cfg["dims"])
    for key in ("epochs", "lr", "points", "log_every"):
        if not cfg[key] > 0:
            raise ConfigError(f"{key} must be positive, got {cfg[key]}")
    if cfg["seed"] < 0:
        raise ConfigError("seed must be non-negative")
    if cfg["activation"] not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {cfg['activation']!r}; choose from {', '.join(ACTIVATIONS)}")
    if problem_def.defaults["combinator"] is None and cfg["combinator"] is not None:
        raise ConfigError(f"{problem_def.name} is a functional problem and takes no combinator")
    return cfg


# -- reports ----------------------------------------------------------------------


def report_columns(problem_def, problem, model):
    """Header and columns of the prediction table, shared by solve and eval."""
    points = problem.points
    stack = derivative_stack(model, points, problem.order)
    y = stack.entries[0].value
    header = [f"x_{i}" for i in range(points.shape[1])] + [f"y_{j}" for j in range(y.shape[1])]
    columns = [points, y]
    if problem_def.true_function is not None:
        truth = np.reshape(np.asarray(problem_def.true_function(points[:, 0] if points.shape[1] == 1 else points),
                                      dtype=np.float64), y.shape)
        header += [f"y_true_{j}" for j in range(y.shape[1])] + ["sq_error"]
        columns += [truth, np.sum((y - truth) ** 2, axis=1, keepdims=True)]
    density = problem.density(stack)
    if density is not None:
        header.append("loss_density")
        columns.append(np.reshape(density, (-1, 1)))
    return header, np.hstack(columns)


def format_csv(header, table):
    buf = io.StringIO(newline="")
    np.savetxt(buf, table, fmt="%.17g", delimiter=",", header=",".join(header), comments="", newline="\n")
    return buf.getvalue()


def summarize(problem_def, problem, model):
    summary = training.loss_breakdown(problem, model)
    if problem_def.report is not None:
        summary.update(problem_def.report(model, problem))
    return summary


def write_outputs(out, header, table, meta, plot=False):
    atomic_write(out, format_csv(header, table))
    atomic_write(f"{out}.meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if plot:
        from .plotting import plot_report

        cols = {name: table[:, i] for i, name in enumerate(header)}
        plot_report(
            os.path.splitext(out)[0] + ".png",
            cols["x_0"],
            cols["y_0"],
            cols.get("y_true_0"),
            cols.get("loss_density"),
            title=meta.get("problem"),
        )


def print_summary(summary, stream):
    for key, value in summary.items():
        print(f"{key}: {value:.17g}", file=stream)


# -- commands ---------------------------------------------------------------------


def cmd_solve(args, stdout, stderr):
    problem_def = get_problem(args.problem)
    cfg = resolve_config(args, problem_def)
    schedulers = [parse_component(s, SCHEDULERS, "scheduler") for s in cfg["scheduler"]]
    callbacks = [parse_component(s, CALLBACKS, "callback") for s in cfg["callback"]]
    if not any(isinstance(cb, training.TerminateIf) for cb in callbacks):
        callbacks.append(training.TerminateIf())

    build_kwargs = {"points": cfg["points"]}
    if cfg["combinator"] is not None:
        build_kwargs["combinator"] = cfg["combinator"]
    try:
        problem = problem_def.build(**build_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    if cfg["init_model"]:
        model = Model.load(cfg["init_model"])
        if args.dims is not None and parse_dims(args.dims) != model.dims:
            raise ConfigError(f"--dims {cfg['dims']} disagrees with the initial model {model.dims}")
        cfg["dims"] = model.dims
    else:
        model = build(cfg["dims"], activation=cfg["activation"], seed=cfg["seed"])
    if model.input_dim != problem.points.shape[1]:
        raise ConfigError(f"model takes {model.input_dim} inputs but {problem_def.name} has {problem.points.shape[1]}")

    metrics = []
    if problem_def.true_function is not None and problem.points.shape[1] == 1:
        metrics.append(training.MSE(problem_def.true_function, problem.points[:, 0]))
    result = training.fit(
        problem,
        model,
        cfg["epochs"],
        optimizer=training.Adam(cfg["lr"]),
        schedulers=schedulers,
        callbacks=callbacks,
        metrics=metrics,
        verbose=cfg["verbose"],
        log_every=cfg["log_every"],
        stream=stderr,
        seed=cfg["seed"],
    )

    save_path = cfg["save_model"] or os.path.splitext(cfg["out"])[0] + ".model.json"
    model.save(save_path)
    header, table = report_columns(problem_def, problem, model)
    summary = summarize(problem_def, problem, model)
    meta = {
        "command": "solve",
        "problem": problem_def.name,
        "config": {**cfg, "save_model": save_path},
        "epochs_run": result.state.epoch,
        "final_lr": result.state.lr,
        "halted": None if result.halted is None else {"by": result.halted[0], "reason": result.halted[1]},
        "summary": summary,
        "version": __version__,
    }
    write_outputs(cfg["out"], header, table, meta, cfg["plot"])
    print_summary(summary, stdout)
    if result.halted is not None:
        print(f"halted by {result.halted[0]} at epoch {result.state.epoch}: {result.halted[1]}", file=stderr)
        if result.halted[0] == "TerminateIf":
            return EXIT_TERMINATED
    return EXIT_OK


def cmd_eval(args, stdout, stderr):
    problem_def = get_problem(args.problem)
    points = args.points if args.points is not None else problem_def.defaults["points"]
    if points < 1:
        raise ConfigError("points must be positive")
    model = Model.load(args.model)
    build_kwargs = {"points": points}
    if args.combinator is not None:
        build_kwargs["combinator"] = args.combinator
    problem = problem_def.build(**build_kwargs)
    if model.input_dim != problem.points.shape[1]:
        raise ConfigError(f"model takes {model.input_dim} inputs but {problem_def.name} has {problem.points.shape[1]}")
    summary = summarize(problem_def, problem, model)
    if args.out:
        header, table = report_columns(problem_def, problem, model)
        meta = {
            "command": "eval",
            "problem": problem_def.name,
            "config": {"model": args.model, "points": points, "combinator": args.combinator, "out": args.out},
            "summary": summary,
            "version": __version__,
        }
        write_outputs(args.out, header, table, meta, args.plot)
    print_summary(summary, stdout)
    return EXIT_OK


def cmd_list(args, stdout, stderr):
    if args.json:
        listing = {
            name: {"description": p.description, "defaults": p.defaults, "has_reference": p.true_function is not None}
            for name, p in sorted(REGISTRY.items())
        }
        print(json.dumps(listing, indent=2, ensure_ascii=False), file=stdout)
        return EXIT_OK
    for name, p in sorted(REGISTRY.items()):
        d = p.defaults
        print(f"{name}: {p.description}", file=stdout)
        print(
            f"    epochs={d['epochs']} lr={d['lr']:g} dims={','.join(map(str, d['dims']))} "
            f"activation={d['activation']} points={d['points']} combinator={d['combinator']}",
            file=stdout,
        )
    return EXIT_OK


# -- entry point --------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="varnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="train a registered problem")
    solve.add_argument("problem")
    solve.add_argument("--epochs", type=int)
    solve.add_argument("--lr", type=float)
    solve.add_argument("--dims", help="layer sizes, e.g. 1,10,1")
    solve.add_argument("--seed", type=int, help="initialization seed (default: $VARNET_SEED, else 0)")
    solve.add_argument("--activation", choices=ACTIVATIONS)
    solve.add_argument("--points", type=int, help="grid points per axis")
    solve.add_argument("--combinator")
    solve.add_argument("--scheduler", action="append", default=[], metavar="NAME:K=V,...",
                       help=f"one of {', '.join(SCHEDULERS)}; repeatable")
    solve.add_argument("--callback", action="append", default=[], metavar="NAME:K=V,...",
                       help=f"one of {', '.join(CALLBACKS)}; repeatable")
    solve.add_argument("--out", help="prediction CSV (default: <problem>.csv)")
    solve.add_argument("--save-model", help="model file (default: next to --out)")
    solve.add_argument("--init-model", help="continue training from this model file")
    solve.add_argument("--log-every", type=int)
    solve.add_argument("--config", help="JSON file of defaults; flags win")
    solve.add_argument("--verbose", action="store_true", help="log training progress to stderr")
    solve.add_argument("--plot", action="store_true", help="also render <out>.png (needs matplotlib)")
    solve.set_defaults(run=cmd_solve)

    ev = sub.add_parser("eval", help="evaluate a saved model without training")
    ev.add_argument("--model", required=True)
    ev.add_argument("--problem", required=True)
    ev.add_argument("--points", type=int)
    ev.add_argument("--combinator")
    ev.add_argument("--out")
    ev.add_argument("--plot", action="store_true")
    ev.set_defaults(run=cmd_eval)

    ls = sub.add_parser("list-problems", help="show registered problems and their defaults")
    ls.add_argument("--json", action="store_true")
    ls.set_defaults(run=cmd_list)
    return parser


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr
    args = build_parser().parse_args(argv)
    try:
        return args.run(args, stdout, stderr)
    except UnknownProblem as exc:
        print(f"error: {exc.args[0]}", file=stderr)
        return EXIT_UNKNOWN_PROBLEM
    except (ConfigError, ModelFormatError) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror}", file=stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
