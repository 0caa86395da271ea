"""Command-line experiment runner.

Subcommands: ``sweep-sigma``, ``sweep-trainsize``, ``run-fold``,
``serve-chip`` and ``gradcheck``. Exit codes: 0 success, 1 config or parse
error, 2 runtime or training error, 3 chip transport error.
"""

import argparse
import csv
import datetime
import io
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from .chip import ChipServer, serve_stdio
from .config import ExperimentConfig, dumps, from_flat, load_file, parse_train_size, parse_value
from .data import load_wbc
from .errors import ChipMHError, ConfigError, DataError, TransportError
from .evaluation import aggregate, fold_seed, run_fold, stream_seed, STREAMS
from .neuron import LifConfig
from .weights import Topology

log = logging.getLogger("chipmh")

COLUMNS = ["experiment", "trainer", "sigma", "train_size", "fold", "seed", "accuracy", "mean_acc", "std_acc"]
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_TRANSPORT = 0, 1, 2, 3


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _sizes(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _names(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat TOML config file (a run manifest works too)")
    common.add_argument("--seed", type=int, dest="master_seed", help="master seed")
    common.add_argument("--jobs", type=int, help="worker processes (default: CPU count)")
    common.add_argument("--chip", help="simulated | external:<host:port> | external:cmd:<command>")
    common.add_argument("--out", help="output directory")
    common.add_argument("--strict-alg1", action="store_true", default=None,
                        help="re-evaluate the current weights every MH iteration")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, e.g. --set mh_n_iters=2000")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="chipmh", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep-sigma", parents=[common], help="accuracy vs distortion strength")
    p.add_argument("--sigmas", type=_floats, dest="sigma_grid")
    p.add_argument("--trainers", type=_names)
    p.add_argument("--folds", type=int, dest="n_folds")

    p = sub.add_parser("sweep-trainsize", parents=[common], help="accuracy vs training-set size")
    p.add_argument("--sigmas", type=_floats, dest="trainsize_sigmas")
    p.add_argument("--sizes", type=_sizes, dest="trainset_grid")
    p.add_argument("--trainers", type=_names)
    p.add_argument("--folds", type=int, dest="n_folds")

    p = sub.add_parser("run-fold", parents=[common], help="train and score a single fold")
    p.add_argument("--trainer")
    p.add_argument("--sigma", type=float)
    p.add_argument("--train-size", dest="train_size")
    p.add_argument("--fold", type=int)

    p = sub.add_parser("serve-chip", parents=[common], help="reference chip server")
    where = p.add_mutually_exclusive_group()
    where.add_argument("--listen", default="127.0.0.1:7878", help="host:port to bind")
    where.add_argument("--stdio", action="store_true", help="serve on stdin/stdout")
    p.add_argument("--sigma", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--mu", type=float)

    p = sub.add_parser("gradcheck", parents=[common], help="BPTT vs finite differences on the smooth twin")
    p.add_argument("--draws", type=int, default=10)
    p.add_argument("--sigma", type=float)
    p.add_argument("--tol", type=float, default=1e-4)
    return parser


def resolve_config(args):
    """Defaults, then the config file, then command-line flags."""
    cfg = ExperimentConfig()
    if args.config:
        cfg = from_flat(load_file(args.config), cfg)
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = parse_value(value.strip())
    for key in ("master_seed", "jobs", "chip", "out", "sigma_grid", "trainsize_sigmas",
                "trainset_grid", "trainers", "n_folds", "trainer", "sigma", "train_size",
                "fold", "alpha", "mu"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = list(value) if isinstance(value, tuple) else value
    if args.strict_alg1:
        overrides["mh_strict_alg1"] = True
    return from_flat(overrides, cfg)


def fold_row(experiment, r):
    return [experiment, r.trainer, repr(r.sigma), r.train_size, r.fold_index, r.seed,
            repr(r.test_accuracy), "", ""]


def aggregate_row(experiment, cfg, agg):
    first = agg.folds[0]
    return [experiment, first.trainer, repr(first.sigma), first.train_size, -1, cfg.master_seed,
            "", repr(agg.mean_accuracy), repr(agg.std_accuracy)]


def _run_task(task, cfg):
    trainer, sigma, train_size, fold_index = task
    return run_fold(trainer, sigma, train_size, fold_seed(cfg.master_seed, fold_index),
                    cfg.setup(), cfg.dataset, fold_index)


def _execute(tasks, cfg):
    """Yield results in task order; parallel when jobs > 1."""
    if cfg.jobs == 1 or len(tasks) == 1:
        for t in tasks:
            yield _run_task(t, cfg)
        return
    with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(tasks))) as pool:
        futures = [pool.submit(_run_task, t, cfg) for t in tasks]
        for f in futures:
            yield f.result()


def _manifest(cfg, started):
    seeds = [fold_seed(cfg.master_seed, k) for k in range(cfg.n_folds)]
    return {
        "tool_version": __version__,
        "started": started,
        "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "fold_seeds": seeds,
        "stream_ids": [f"{k}={v}" for k, v in STREAMS.items()],
    }


def _write_csv(path, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    writer.writerows(rows)
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def _check_dataset(cfg):
    try:
        return load_wbc(cfg.dataset)
    except OSError as exc:
        raise ConfigError(f"cannot read dataset {cfg.dataset}: {exc}") from exc


def run_grid(experiment, groups, cfg):
    """Run fold groups in order; write ``<experiment>.csv`` and its manifest.

    ``groups`` is a list of (trainer, sigma, train_size) triples. On failure
    the rows finished so far go to ``<experiment>.PARTIAL.csv``.
    """
    started = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    os.makedirs(cfg.out, exist_ok=True)
    tasks = [(tr, s, n, k) for tr, s, n in groups for k in range(cfg.n_folds)]
    rows, pending = [], []
    try:
        for result in _execute(tasks, cfg):
            rows.append(fold_row(experiment, result))
            pending.append(result)
            log.info("%s %s sigma=%g n=%d fold=%d acc=%.4f", experiment, result.trainer,
                     result.sigma, result.train_size, result.fold_index, result.test_accuracy)
            if len(pending) == cfg.n_folds:
                agg = aggregate(pending)
                rows.append(aggregate_row(experiment, cfg, agg))
                pending = []
    except Exception:
        path = os.path.join(cfg.out, f"{experiment}.PARTIAL.csv")
        _write_csv(path, rows)
        log.error("sweep aborted; %d completed rows written to %s", len(rows), path)
        raise
    path = os.path.join(cfg.out, f"{experiment}.csv")
    _write_csv(path, rows)
    with open(os.path.join(cfg.out, f"{experiment}.manifest.toml"), "w") as fh:
        fh.write(dumps(cfg.to_flat(), _manifest(cfg, started)))
    return path


def sigma_groups(cfg):
    return [(tr, float(s), None) for s in cfg.sigma_grid for tr in cfg.trainers]


def trainsize_groups(cfg):
    return [(tr, float(s), int(m)) for s in cfg.trainsize_sigmas
            for m in cfg.trainset_grid for tr in cfg.trainers]


def cmd_sweep_sigma(cfg):
    _check_dataset(cfg)
    return run_grid("sweep_sigma", sigma_groups(cfg), cfg)


def cmd_sweep_trainsize(cfg):
    d = _check_dataset(cfg)
    cap = round(cfg.train_fraction * len(d))
    too_big = [m for m in cfg.trainset_grid if m > cap or m < 1]
    if too_big:
        raise ConfigError(f"train sizes {too_big} outside [1, {cap}]")
    return run_grid("sweep_trainsize", trainsize_groups(cfg), cfg)


def cmd_run_fold(cfg):
    _check_dataset(cfg)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    os.makedirs(cfg.out, exist_ok=True)
    seed = fold_seed(cfg.master_seed, cfg.fold)
    result = run_fold(cfg.trainer, float(cfg.sigma), parse_train_size(cfg.train_size), seed,
                      cfg.setup(), cfg.dataset, cfg.fold, traces=cfg.out)
    path = os.path.join(cfg.out, "run_fold.csv")
    _write_csv(path, [fold_row("run_fold", result)])
    manifest = _manifest(cfg, started)
    manifest["fold_seeds"] = [seed]
    manifest.update({f"{name}_seed": stream_seed(seed, name) for name in STREAMS})
    with open(os.path.join(cfg.out, "run_fold.manifest.toml"), "w") as fh:
        fh.write(dumps(cfg.to_flat(), manifest))
    print(f"{result.trainer} sigma={result.sigma:g} train_size={result.train_size} "
          f"fold={result.fold_index} accuracy={result.test_accuracy:.4f}")
    return path


def cmd_serve_chip(cfg, args):
    lif = LifConfig(alpha=cfg.alpha, mu=cfg.mu, sigma=float(cfg.sigma))
    topology = Topology()
    if args.stdio:
        serve_stdio(lif, topology)
        return
    host, _, port = args.listen.rpartition(":")
    try:
        server = ChipServer((host or "127.0.0.1", int(port)), lif, topology)
    except (OSError, ValueError) as exc:
        raise ChipMHError(f"cannot bind {args.listen}: {exc}") from exc
    bound = "%s:%d" % server.server_address[:2]
    print(f"listening on {bound}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        log.info("served %d requests", server.request_count)
        server.server_close()


def cmd_gradcheck(cfg, args):
    from .backprop import gradient_check

    lif = LifConfig(alpha=cfg.alpha, mu=cfg.mu, sigma=float(cfg.sigma))
    worst = gradient_check(draws=args.draws, seed=cfg.master_seed, lif=lif)
    ok = worst <= args.tol
    print(f"max relative error {worst:.3e} over {args.draws} draws x 96 weights: {'PASS' if ok else 'FAIL'}")
    return ok


def _root_cause(exc):
    while getattr(exc, "cause", None) is not None:
        exc = exc.cause
    return exc


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve_config(args)
        if args.command == "sweep-sigma":
            print(cmd_sweep_sigma(cfg))
        elif args.command == "sweep-trainsize":
            print(cmd_sweep_trainsize(cfg))
        elif args.command == "run-fold":
            cmd_run_fold(cfg)
        elif args.command == "serve-chip":
            cmd_serve_chip(cfg, args)
        elif args.command == "gradcheck":
            return EXIT_OK if cmd_gradcheck(cfg, args) else EXIT_RUNTIME
    except (ConfigError, DataError) as exc:
        print(f"chipmh: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ChipMHError as exc:
        print(f"chipmh: error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT if isinstance(_root_cause(exc), TransportError) else EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
