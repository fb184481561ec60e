"""Command line: ``gcunet train|sweep|xor|gradcheck|report``.

Exit codes: 0 success, 1 usage error, 2 data or config error, 3 diverged run.
Progress goes to stderr; reports and records go to files or, for ``report``
and ``xor``, to stdout.
"""
import argparse
import concurrent.futures
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import bench
from .activations import Activation, derivative_error
from .errors import ConfigError, DataError, DivergedRun, ParseError, UnknownKey

log = logging.getLogger("gcunet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3

_FIELDS = {f.name: f for f in dataclasses.fields(bench.ExperimentConfig)}
_INT_KEYS = {"epochs", "batch_size", "seed", "train_subset"}
_FLOAT_KEYS = {"lr", "momentum", "beta1", "beta2", "eps", "val_fraction", "grad_clip"}


class UsageError(Exception):
    pass


def _convert(key, raw, line):
    if raw.lower() in ("", "none"):
        return None
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
    except ValueError:
        raise ParseError(f"{key}: cannot parse {raw!r}", line) from None
    return raw


def parse_config_text(text):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {line!r}", lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise UnknownKey(key, lineno)
        if key in values:
            raise ParseError(f"duplicate key {key!r}", lineno)
        values[key] = _convert(key, raw, lineno)
    if "dataset" not in values:
        raise ParseError("missing required key 'dataset'")
    return bench.ExperimentConfig(**values)


def parse_config(path):
    """Read a strict ``key = value`` experiment file into an ExperimentConfig."""
    return parse_config_text(Path(path).read_text())


def config_text(config):
    lines = []
    for key, value in config.to_dict().items():
        lines.append(f"{key} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="gcunet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train one experiment config")
    t.add_argument("config_path", nargs="?")
    t.add_argument("--config", dest="config_opt")
    t.add_argument("--out", required=True)
    t.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    t.add_argument("--seed", type=int)
    t.add_argument("--subset", type=int)

    s = sub.add_parser("sweep", help="train every *.cfg in a directory")
    s.add_argument("config_dir")
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--seed", type=int)
    s.add_argument("--subset", type=int)

    x = sub.add_parser("xor", help="single-neuron XOR search")
    x.add_argument("activation")

    g = sub.add_parser("gradcheck", help="derivatives vs central differences")
    g.add_argument("activation", help="relu|prelu|mish|gcu|all")
    g.add_argument("--points", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("report", help="render saved run records")
    r.add_argument("records_dir")
    r.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    return p


def _with_overrides(config, args):
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.subset is not None:
        changes["train_subset"] = args.subset
    return dataclasses.replace(config, **changes) if changes else config


def _report_name(fmt):
    return "report.md" if fmt == "markdown" else "report.csv"


def _train_one(config, out_dir, fmt, prefix=""):
    def progress(line):
        log.info("%s%s", prefix, line)

    out_dir.mkdir(parents=True, exist_ok=True)
    record = bench.run_experiment(config, log=progress)
    record.save(out_dir / "record.json")
    (out_dir / _report_name(fmt)).write_text(bench.emit_report([record], fmt))
    return record


def cmd_train(args):
    path = args.config_opt or args.config_path
    if path is None:
        raise UsageError("train needs a config path (positional or --config)")
    if not Path(path).is_file():
        raise ConfigError(f"config file not found: {path}")
    config = _with_overrides(parse_config(path), args)
    if not Path(config.data_dir).exists():
        raise DataError(f"data directory not found: {config.data_dir}")
    record = _train_one(config, Path(args.out), args.format)
    log.info("test accuracy %.4f", record.test_accuracy)
    return EXIT_OK


def cmd_sweep(args):
    cdir = Path(args.config_dir)
    if not cdir.is_dir():
        raise ConfigError(f"config directory not found: {cdir}")
    paths = sorted(cdir.glob("*.cfg"))
    if not paths:
        raise ConfigError(f"no *.cfg files in {cdir}")
    configs = [_with_overrides(parse_config(p), args) for p in paths]
    for c in configs:
        if not Path(c.data_dir).exists():
            raise DataError(f"data directory not found: {c.data_dir}")
    out = Path(args.out)
    with concurrent.futures.ThreadPoolExecutor(max(1, args.threads)) as pool:
        futures = [pool.submit(_train_one, c, out / p.stem, args.format, f"[{p.stem}] ")
                   for p, c in zip(paths, configs)]
        records = [f.result() for f in futures]
    (out / _report_name(args.format)).write_text(bench.emit_report(records, args.format))
    return EXIT_OK


def cmd_xor(args):
    r = bench.solve_xor_single_neuron(args.activation)
    print(f"{Activation.parse(r.kind).label}: w1={r.w1:.6f} w2={r.w2:.6f} b={r.b:.6f} "
          f"threshold={r.threshold:.6f}")
    print(f"outputs={['%.4f' % v for v in r.outputs]}")
    print(f"{round(r.accuracy * 4)}/4")
    return EXIT_OK


def cmd_gradcheck(args):
    kinds = list(Activation) if args.activation.lower() == "all" else [Activation.parse(args.activation)]
    worst = 0.0
    for kind in kinds:
        err = derivative_error(kind, args.points, args.seed)
        worst = max(worst, err)
        print(f"{kind.label:6s} max_rel_error={err:.3e} {'ok' if err <= 1e-6 else 'FAIL'}")
    return EXIT_OK if worst <= 1e-6 else EXIT_USAGE


def cmd_report(args):
    rdir = Path(args.records_dir)
    if not rdir.is_dir():
        raise ConfigError(f"records directory not found: {rdir}")
    files = sorted(rdir.rglob("record.json")) or sorted(rdir.glob("*.json"))
    if not files:
        raise ConfigError(f"no run records under {rdir}")
    records = [bench.RunRecord.load(f) for f in files]
    sys.stdout.write(bench.emit_report(records, args.format))
    return EXIT_OK


COMMANDS = {"train": cmd_train, "sweep": cmd_sweep, "xor": cmd_xor,
            "gradcheck": cmd_gradcheck, "report": cmd_report}


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            log.setLevel(logging.DEBUG)
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"gcunet: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, DataError, OSError, json.JSONDecodeError) as e:
        print(f"gcunet: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"gcunet: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DivergedRun as e:
        print(f"gcunet: diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
