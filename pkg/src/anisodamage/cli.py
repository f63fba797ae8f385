"""Command-line entry point.

::

    anisodamage run study.yaml [--out DIR]
    anisodamage verify [--seed N] [--samples N] [--out DIR] [--threads N]
    anisodamage sweep study.yaml --param k_ani=0,0.33,0.67,1.0 [--out DIR]

Exit codes: 0 success, 1 a check or a simulation failed, 2 usage or
configuration error.  Failures print a JSON object ``{"error": {...}}`` on
stderr so that scripts can pick them apart.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
from pathlib import Path

import numpy as np

from . import io as aio
from .damage import MaterialParams
from .fem.element import ConstitutiveFailure
from .fem.solver import SingularSystem, StepFailed
from .scenarios import ConfigError, StudyConfig, run_study

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2

_MATERIAL_KEYS = set(MaterialParams.set1().as_dict())


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _error(kind: str, message: str, code: int, **extra) -> int:
    block = {"error": {"type": kind, "message": message, "exit_code": code, **extra}}
    print(json.dumps(block, default=str), file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="anisodamage", description="Finite-strain anisotropic damage simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run one study config")
    r.add_argument("config", type=Path)
    r.add_argument("--out", type=Path, help="output directory (default runs/<name>)")
    r.add_argument("--quiet", action="store_true")

    v = sub.add_parser("verify", help="run the property suites")
    v.add_argument("--seed", type=int, default=42)
    v.add_argument("--samples", type=int, help="override per-check sample counts")
    v.add_argument("--out", type=Path, help="directory for verify-report.yaml")
    v.add_argument("--threads", type=int, default=1)

    s = sub.add_parser("sweep", help="run a config over parameter values")
    s.add_argument("config", type=Path)
    s.add_argument("--param", action="append", required=True, metavar="NAME=V1,V2,...",
                   help="material field (k_ani, Y0, ...) or dotted config key "
                        "(loading.u_max); repeat for a Cartesian product")
    s.add_argument("--out", type=Path, help="output directory (default runs/<name>-sweep)")
    s.add_argument("--quiet", action="store_true")
    return p


# ---------------------------------------------------------------------------
# run / sweep
# ---------------------------------------------------------------------------

def _progress(quiet):
    if quiet:
        return None

    def show(k, n, rec):
        print(f"step {k + 1:4d}/{n}  u={rec.displacement:.5g}  F={rec.force:.6g}  "
              f"it={rec.iterations} cb={rec.cutbacks}", flush=True)
    return show


def _summary(result) -> dict:
    return {"name": result.config.name, "steps": len(result.curve),
            "peak": float(result.peak()), "dissipated_energy": float(result.dissipated_energy()),
            "wall_time_s": round(float(result.wall_time), 3)}


def cmd_run(args) -> int:
    cfg = aio.load_config(args.config)
    out = args.out or Path("runs") / cfg.name
    result = run_study(cfg, out, progress=_progress(args.quiet))
    print(json.dumps({**_summary(result), "out": str(out)}))
    return EXIT_OK


def parse_param(text: str) -> tuple[str, list]:
    if "=" not in text:
        raise UsageError(f"--param expects NAME=V1,V2,..., got {text!r}")
    name, values = text.split("=", 1)
    name = name.strip()
    out = []
    for v in values.split(","):
        v = v.strip()
        if not v:
            continue
        try:
            out.append(float(v))
        except ValueError:
            out.append(v)
    if not name or not out:
        raise UsageError(f"--param {text!r} has no name or no values")
    return name, out


def apply_param(cfg: StudyConfig, name: str, value) -> StudyConfig:
    """Return a copy of ``cfg`` with one material field or dotted key replaced."""
    if name in _MATERIAL_KEYS:
        return cfg.with_material(**{name: value})
    d = cfg.to_dict()
    keys = name.split(".")
    node = d
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise ConfigError(f"sweep parameter {name!r} does not name a config entry")
        node = node[k]
    node[keys[-1]] = value
    return StudyConfig.from_dict(d)


def _label(value) -> str:
    return f"{value:g}" if isinstance(value, float) else str(value)


def cmd_sweep(args) -> int:
    base = aio.load_config(args.config)
    params = [parse_param(p) for p in args.param]
    out = args.out or Path("runs") / f"{base.name}-sweep"
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for combo in itertools.product(*[vals for _, vals in params]):
        cfg = base
        tag = []
        for (name, _), value in zip(params, combo):
            cfg = apply_param(cfg, name, value)
            tag.append(f"{name}={_label(value)}")
        cfg.name = f"{base.name}_" + "_".join(tag)
        if not args.quiet:
            print(f"# {', '.join(tag)}", flush=True)
        result = run_study(cfg, out / "_".join(tag), progress=_progress(args.quiet))
        rows.append({**dict(zip([n for n, _ in params], combo)), **_summary(result)})
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    print(json.dumps({"out": str(out), "runs": rows}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args) -> int:
    from . import verify

    if args.samples is not None and args.samples < 1:
        raise UsageError("--samples must be at least 1")
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    import numba

    numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    report = verify.run_all(seed=args.seed, samples=args.samples)
    text = report.to_yaml()
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "verify-report.yaml").write_text(text)
    print(text, end="")
    if not report.passed:
        failed = [c.name for c in report.checks if not c.passed]
        return _error("CheckFailed", f"failed checks: {', '.join(failed)}", EXIT_FAILED,
                      checks=failed)
    return EXIT_OK


_COMMANDS = {"run": cmd_run, "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        return _error("UsageError", str(exc), EXIT_USAGE)
    except (ConfigError, aio.IoError) as exc:
        return _error(type(exc).__name__, str(exc), EXIT_USAGE)
    except ConstitutiveFailure as exc:
        return _error("ConstitutiveFailure", str(exc), EXIT_FAILED, element=exc.element,
                      gauss_point=exc.gauss_point)
    except (StepFailed, SingularSystem, np.linalg.LinAlgError) as exc:
        return _error(type(exc).__name__, str(exc), EXIT_FAILED)


if __name__ == "__main__":
    sys.exit(main())
