"""Command-line front end: run experiments, verify, list, replay.

Exit codes are part of the interface and stay stable:

  0  success
  1  unexpected runtime failure
  2  usage error (bad flags)
  3  unknown experiment
  4  parameter or configuration rejected
  5  output location not writable
  6  verification failure
  7  replay produced different bytes

Parallelism: replicas default to the machine's logical core count and
map to RNG streams by index, so a run is reproducible from the sidecar
alone (`replay`); the worker count only schedules the replicas and
never changes the output.  The environment variable USF_LAB_CACHE
relocates the Green-function value cache.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import acceptance
from .experiments import (CODE_VERSION, EXPERIMENTS, run_replicated,
                          write_csv, write_sidecar)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_UNKNOWN_EXPERIMENT = 3
EXIT_SCHEMA = 4
EXIT_UNWRITABLE = 5
EXIT_VERIFY_FAILED = 6
EXIT_REPLAY_MISMATCH = 7

# parameters whose registry default is None, with their actual type
_NONE_TYPED = {"good_hit_floor": float, "good_size_cap": float,
               "escape_radius": int}
# parameters that are lattice points: comma-separated integers
_POINT_PARAMS = {"x"}

_RUN_KEYS = ("samples", "seed", "replicas", "workers", "out")


def _fail(code: int, message: str) -> int:
    print(f"usf-lab: {message}", file=sys.stderr)
    return code


def _parse_number(token: str) -> int | float:
    try:
        return int(token)
    except ValueError:
        return float(token)


def _convert(name: str, default, raw: str):
    """Parse one parameter value against its registry default."""
    if name in _POINT_PARAMS:
        return tuple(int(t) for t in raw.split(","))
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean for {name}, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, list):
        return [_parse_number(t) for t in raw.split(",") if t]
    if default is None and name in _NONE_TYPED:
        return _NONE_TYPED[name](raw)
    raise ValueError(f"no conversion rule for parameter {name}")


def _flag_names(param: str) -> list[str]:
    names = ["--" + param.replace("_", "-")]
    if param.endswith("_grid"):
        names.append("--" + param[:-5].replace("_", "-"))
    return names


def _run_parser(name: str) -> argparse.ArgumentParser:
    defaults = EXPERIMENTS[name].defaults
    p = argparse.ArgumentParser(
        prog=f"usf-lab run {name}",
        description=f"Run the {name} experiment and write CSV + sidecar.")
    for key, default in defaults.items():
        if key == "samples":
            continue
        if isinstance(default, bool):
            p.add_argument(*_flag_names(key), dest=key, action="store_const",
                           const="true", default=None,
                           help=f"(default {default})")
        else:
            p.add_argument(*_flag_names(key), dest=key, metavar="V",
                           default=None, help=f"(default {default})")
    p.add_argument("--samples", default=None, metavar="N",
                   help=f"(default {defaults.get('samples')})")
    p.add_argument("--seed", type=int, default=None, metavar="N",
                   help="master seed (default 0)")
    p.add_argument("--replicas", type=int, default=None, metavar="N",
                   help="independent streams (default: logical cores)")
    p.add_argument("--workers", type=int, default=None, metavar="N",
                   help="processes running the replicas")
    p.add_argument("--out", default=".", metavar="DIR",
                   help="output directory (default .)")
    p.add_argument("--config", default=None, metavar="FILE",
                   help="key=value file; explicit flags win")
    return p


def _read_config(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = body.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _ensure_outdir(path: str) -> str | None:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as err:
        return f"cannot create output directory {path}: {err}"
    if not os.access(path, os.W_OK):
        return f"output directory {path} is not writable"
    return None


def _headline(result) -> str:
    fits = [r for r in result.rows if r.statistic.startswith("fit_")]
    rows = fits or list(result.rows)
    if not rows:
        return f"{result.experiment}: no rows (0 samples)"
    row = rows[0]
    e = row.estimate
    tags = " ".join(f"{k}={v}" for k, v in row.params if k != "d")
    label = f"{row.statistic} [{tags}]" if tags else row.statistic
    return (f"{result.experiment} {label} = {e.value:.6g} "
            f"+- {e.stderr:.2g} (95% CI {e.ci95[0]:.6g}..{e.ci95[1]:.6g}, "
            f"n={e.n_samples})")


def _cmd_run(argv: list[str]) -> int:
    if not argv or argv[0].startswith("-"):
        return _fail(EXIT_USAGE, "usage: usf-lab run <experiment> [flags]")
    name = argv[0]
    if name not in EXPERIMENTS:
        known = ", ".join(sorted(EXPERIMENTS))
        return _fail(EXIT_UNKNOWN_EXPERIMENT,
                     f"unknown experiment {name!r}; known: {known}")
    parser = _run_parser(name)
    try:
        ns = parser.parse_args(argv[1:])
    except SystemExit as err:
        return int(err.code or 0)

    defaults = EXPERIMENTS[name].defaults
    raw: dict[str, str] = {}
    if ns.config is not None:
        try:
            raw.update(_read_config(ns.config))
        except OSError as err:
            return _fail(EXIT_SCHEMA, f"cannot read config: {err}")
        except ValueError as err:
            return _fail(EXIT_SCHEMA, str(err))
        stray = raw.pop("experiment", None)
        if stray is not None and stray != name:
            return _fail(EXIT_SCHEMA,
                         f"config file names experiment {stray!r}, "
                         f"command says {name!r}")
    for key in defaults:
        flag = getattr(ns, key, None)
        if flag is not None:
            raw[key] = flag
    for key in _RUN_KEYS:
        flag = getattr(ns, key, None)
        if flag is not None:
            raw.setdefault(key, str(flag))

    cfg = {k: v for k, v in defaults.items() if k != "samples"}
    samples = defaults.get("samples", 0)
    seed, replicas = 0, os.cpu_count() or 1
    workers: int | None = None
    out_dir = ns.out
    try:
        for key, value in raw.items():
            if key == "samples":
                samples = int(value)
            elif key == "seed":
                seed = int(value)
            elif key == "replicas":
                replicas = int(value)
            elif key == "workers":
                workers = int(value)
            elif key == "out":
                out_dir = str(value)
            elif key in cfg or key in defaults:
                cfg[key] = _convert(key, defaults[key], str(value))
            else:
                return _fail(EXIT_SCHEMA,
                             f"{name} has no parameter {key!r}")
    except ValueError as err:
        return _fail(EXIT_SCHEMA, f"bad value: {err}")

    problem = _ensure_outdir(out_dir)
    if problem:
        return _fail(EXIT_UNWRITABLE, problem)

    t0 = time.perf_counter()
    try:
        result = run_replicated(name, cfg, samples, seed,
                                replicas=replicas, workers=workers)
    except ValueError as err:
        return _fail(EXIT_SCHEMA, str(err))
    except Exception as err:
        return _fail(EXIT_ERROR, f"estimator failed: {err}")
    wall = time.perf_counter() - t0

    csv_path = os.path.join(out_dir, f"{name}.csv")
    json_path = os.path.join(out_dir, f"{name}.json")
    try:
        write_csv(result, csv_path)
        write_sidecar(result, json_path, wall_time_s=wall)
    except OSError as err:
        return _fail(EXIT_UNWRITABLE, f"cannot write output: {err}")
    print(f"wrote {csv_path} and {json_path}")
    print(_headline(result))
    return EXIT_OK


def _cmd_list(argv: list[str]) -> int:
    if argv:
        name = argv[0]
        if name not in EXPERIMENTS:
            known = ", ".join(sorted(EXPERIMENTS))
            return _fail(EXIT_UNKNOWN_EXPERIMENT,
                         f"unknown experiment {name!r}; known: {known}")
        print(name)
        for key, default in EXPERIMENTS[name].defaults.items():
            kind = ("point" if key in _POINT_PARAMS else
                    type(default).__name__ if default is not None else
                    _NONE_TYPED.get(key, type(None)).__name__ + " or unset")
            flags = "/".join(_flag_names(key)) if key != "samples" else "--samples"
            print(f"  {flags}  {kind}  default {default!r}")
        return EXIT_OK
    for name in sorted(EXPERIMENTS):
        defaults = EXPERIMENTS[name].defaults
        brief = ", ".join(f"{k}={v!r}" for k, v in defaults.items())
        print(f"{name}: {brief}")
    return EXIT_OK


def _cmd_verify(argv: list[str]) -> int:
    p = argparse.ArgumentParser(prog="usf-lab verify")
    p.add_argument("--full", action="store_true",
                   help="also run the full-scale experiment battery")
    p.add_argument("--workers", type=int, default=None, metavar="N")
    p.add_argument("--out", default=".", metavar="DIR",
                   help="where --full writes the acceptance table")
    try:
        ns = p.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    results = acceptance.run_quick()
    if ns.full:
        problem = _ensure_outdir(ns.out)
        if problem:
            return _fail(EXIT_UNWRITABLE, problem)
        results += acceptance.run_full(ns.workers)
        table = os.path.join(ns.out, "acceptance_table.csv")
        acceptance.write_table(results, table)
        print(f"wrote {table}")
    failed = [r.item for r in results if not r.passed]
    if failed:
        return _fail(EXIT_VERIFY_FAILED, "failed: " + ", ".join(failed))
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def _cmd_replay(argv: list[str]) -> int:
    p = argparse.ArgumentParser(prog="usf-lab replay")
    p.add_argument("sidecar", help="JSON sidecar of the original run")
    p.add_argument("--out", default=None, metavar="DIR",
                   help="where to write the replayed CSV "
                        "(default: alongside the sidecar)")
    p.add_argument("--workers", type=int, default=None, metavar="N")
    try:
        ns = p.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    try:
        with open(ns.sidecar) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        return _fail(EXIT_SCHEMA, f"cannot read sidecar: {err}")
    try:
        name = payload["experiment"]
        config = dict(payload["config"])
        samples = int(config.pop("samples"))
        seed = int(config.pop("master_seed"))
        replicas = int(config.pop("replicas"))
    except KeyError as err:
        return _fail(EXIT_SCHEMA, f"sidecar lacks field {err}")
    config.pop("stream_id", None)
    if name not in EXPERIMENTS:
        return _fail(EXIT_UNKNOWN_EXPERIMENT,
                     f"sidecar names unknown experiment {name!r}")
    for key in _POINT_PARAMS & config.keys():
        config[key] = tuple(config[key])
    if payload.get("code_version") != CODE_VERSION:
        print(f"note: sidecar was written by version "
              f"{payload.get('code_version')}, this is {CODE_VERSION}")

    out_dir = ns.out or os.path.dirname(os.path.abspath(ns.sidecar))
    problem = _ensure_outdir(out_dir)
    if problem:
        return _fail(EXIT_UNWRITABLE, problem)
    try:
        result = run_replicated(name, config, samples, seed,
                                replicas=replicas, workers=ns.workers)
    except ValueError as err:
        return _fail(EXIT_SCHEMA, str(err))
    except Exception as err:
        return _fail(EXIT_ERROR, f"estimator failed: {err}")
    replay_path = os.path.join(out_dir, f"{name}.replay.csv")
    try:
        write_csv(result, replay_path)
    except OSError as err:
        return _fail(EXIT_UNWRITABLE, f"cannot write output: {err}")

    original = os.path.splitext(ns.sidecar)[0] + ".csv"
    if not os.path.exists(original):
        print(f"wrote {replay_path}; no original CSV at {original} "
              f"to compare against")
        return EXIT_OK
    with open(original, "rb") as fh:
        want = fh.read()
    with open(replay_path, "rb") as fh:
        got = fh.read()
    if want == got:
        print(f"replay of {original} is byte-identical")
        return EXIT_OK
    return _fail(EXIT_REPLAY_MISMATCH,
                 f"replay differs from {original}; see {replay_path}")


_USAGE = """usage: usf-lab <command> [options]

commands:
  run <experiment>   run one experiment, write CSV + JSON sidecar
  list [experiment]  show the experiment catalog or one schema
  verify [--full]    oracle battery; --full adds the experiment battery
  replay <sidecar>   rerun from a sidecar and compare bytes

`usf-lab run <experiment> --help` lists that experiment's flags.
Environment: USF_LAB_CACHE sets the Green-function cache directory.
"""


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(_USAGE, end="")
        return EXIT_OK if argv else EXIT_USAGE
    cmd, rest = argv[0], argv[1:]
    if cmd == "run":
        return _cmd_run(rest)
    if cmd == "list":
        return _cmd_list(rest)
    if cmd == "verify":
        return _cmd_verify(rest)
    if cmd == "replay":
        return _cmd_replay(rest)
    return _fail(EXIT_USAGE, f"unknown command {cmd!r}; try --help")


if __name__ == "__main__":
    sys.exit(main())
