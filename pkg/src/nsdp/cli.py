"""Command-line entry point: ``nsdp {simulate,offline,control,report}``.

On failure a single line ``error: <category>: <message>`` goes to stderr and
the exit status identifies the category (see ``EXIT_CODES``).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig
from .pod_deim import DegenerateSnapshotsError
from .storage import ArtifactError
from .sylvester import SingularPencilError

EXIT_CODES = {"usage": 2, "config": 2, "missing-artifacts": 3, "numerical": 4, "io": 5, "invalid-input": 6}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


def _floats(text: str):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON configuration file")
    common.add_argument("--test", type=int, choices=[1, 2, 3, 4])
    common.add_argument("--n", type=int, help="cells per direction")
    common.add_argument("--dt", type=float)
    common.add_argument("--T", type=float, dest="T", help="final time")
    common.add_argument("--tol", type=float, help="POD truncation tolerance")
    common.add_argument("--pressure-tol", type=float, dest="pressure_tol")
    common.add_argument("--deim-tol", type=float, dest="deim_tol")
    common.add_argument("--eps-T", type=float, dest="eps_T", help="tree pruning radius")
    common.add_argument("--controls", type=_floats, help="control values, e.g. 0,0.5,1")
    common.add_argument("--m-sweep", type=_ints, dest="m_sweep", help="numbers of controls, e.g. 2,3,5")
    common.add_argument("--sizes", type=_ints, help="grid sizes for simulate, e.g. 64,128")
    common.add_argument("--out", type=str, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="nsdp", description="Matrix-form Navier-Stokes, POD-DEIM and tree DP control.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="full, vector-oracle and reduced runs with timings")
    sub.add_parser("offline", parents=[common], help="snapshots, reduced bases and operators")
    c = sub.add_parser("control", parents=[common], help="tree DP on the reduced model")
    c.add_argument("--build-offline", action="store_true",
                   help="run the offline phase first instead of loading it from OUT/offline")
    sub.add_parser("report", parents=[common], help="summarize outputs of the other commands")
    return p


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    keys = ("test", "n", "dt", "T", "tol", "pressure_tol", "deim_tol", "eps_T", "controls", "m_sweep",
            "sizes", "out")
    return cfg.override(**{k: getattr(args, k) for k in keys}).resolved()


def _run(args) -> dict:
    from . import experiments as ex

    cfg = load_config(args)
    out = Path(cfg.out)
    if args.command != "report":
        out.mkdir(parents=True, exist_ok=True)
        (out / f"config.{args.command}.json").write_text(cfg.to_json())
    if args.command == "simulate":
        rows, summaries = ex.cmd_simulate(cfg, out)
        return {"timing": str(out / "timing.csv"), "summary": summaries}
    if args.command == "offline":
        _, basis, _, info = ex.run_offline(cfg, out)
        return {"ranks": basis.ranks(), "snapshots": info["n_snapshots"], "dir": str(out / ex.OFFLINE_DIR)}
    if args.command == "control":
        res = ex.cmd_control(cfg, out, from_artifacts=not args.build_offline)
        return {"results": [{k: r[k] for k in ("M", "J_controlled", "J_uncontrolled", "nodes", "ratio_p")}
                            for r in res]}
    return {"report": str(ex.cmd_report(cfg, out))}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        result = _run(args)
    except CliError as exc:
        return _fail(exc.category, str(exc))
    except ConfigError as exc:
        return _fail("config", str(exc))
    except ArtifactError as exc:
        return _fail("missing-artifacts", str(exc))
    except (FloatingPointError, np.linalg.LinAlgError, SingularPencilError, DegenerateSnapshotsError) as exc:
        return _fail("numerical", str(exc))
    except OSError as exc:
        return _fail("io", str(exc))
    except (ValueError, KeyError, TypeError) as exc:
        return _fail("invalid-input", str(exc))
    print(json.dumps(result, default=float, sort_keys=True))
    return 0


def _fail(category: str, message: str) -> int:
    msg = " ".join(message.split())
    print(f"error: {category}: {msg}", file=sys.stderr)
    return EXIT_CODES[category]


if __name__ == "__main__":
    sys.exit(main())
