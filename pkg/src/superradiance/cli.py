"""Command-line batch jobs: G2 scans, emission dynamics, disorder runs, matrix checks.

Every command writes ``manifest.json`` next to its outputs holding the fully
resolved configuration; ``--config manifest.json`` reruns it exactly.

Exit codes: 0 success, 1 I/O or parse error, 2 validation failure,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import correlations as corr
from . import dynamics as dyn
from .coupling import (
    FreeSpace,
    IdealDicke,
    Independent,
    MatrixFormatError,
    SingleModeBIC,
    Tabulated,
    UnphysicalMatrixError,
    build_matrices,
    format_float,
    import_decay_matrix,
    validate_physical,
)
from .emitters import (
    DEFAULT_HEIGHT_NM,
    DEFAULT_LAMBDA0_NM,
    DEFAULT_LATTICE_CONST_NM,
    DEFAULT_OFFSET_X0_NM,
    EmitterArray,
    LatticeSpec,
    build_square_lattice,
)
from .montecarlo import (
    DisorderConfig,
    FillingMode,
    OrientationMode,
    PositionMode,
    format_stats_table,
    histogram,
    run_disorder,
    stats_row,
)

EXIT_OK, EXIT_IO, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3

COMMON_DEFAULTS = {
    "out": ".",
    "seed": 0,
    "env": "freespace",
    "lambda0_nm": DEFAULT_LAMBDA0_NM,
    "beta": 0.8179,
    "gamma": 1.0,
    "delta_file": None,
    "d_nm": DEFAULT_LATTICE_CONST_NM,
    "x0_nm": DEFAULT_OFFSET_X0_NM,
    "z_nm": DEFAULT_HEIGHT_NM,
    "mode_axis": None,
}

COMMAND_DEFAULTS = {
    "scan-n": {"sizes": [3, 5, 7, 9, 11]},
    "scan-d": {"d_values": None, "d_over_lambda": None, "n_side": 3, "coincident": False},
    "dynamics": {"method": "closed", "n": None, "n_side": 3, "t_end": 5.0, "n_steps": 500,
                 "max_emitters": dyn.MAX_EMITTERS},
    "disorder": {"mode": "filling", "eta": 1.0, "delta_r": 10.0, "delta_theta": 30.0,
                 "steps": 100, "n_side": 11, "samples": None, "workers": 1, "bins": 50},
    "validate": {"matrix": None},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_IO)


def _csv_numbers(kind):
    def parse(text):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--config", metavar="PATH", help="JSON config file; flags override it")
    g.add_argument("--out", metavar="DIR", help="output directory (default: .)")
    g.add_argument("--seed", type=int, metavar="U64", help="master random seed")
    g.add_argument("--env", metavar="ENV",
                   help="freespace | bic | dicke | independent | tabulated:PATH")
    g.add_argument("--lambda0-nm", type=float, metavar="F", help="transition wavelength (nm)")
    g.add_argument("--beta", type=float, metavar="F", help="BIC coupling efficiency")
    g.add_argument("--gamma", type=float, metavar="F", help="single-emitter rate")
    g.add_argument("--delta-file", metavar="PATH", help="CSV of coherent shifts for tabulated:")
    g.add_argument("--d-nm", type=float, metavar="F", help="emitter lattice constant (nm)")
    g.add_argument("--x0-nm", type=float, metavar="F", help="lateral offset x0 (nm)")
    g.add_argument("--z-nm", type=float, metavar="F", help="emitter height (nm)")
    g.add_argument("--mode-axis", type=_csv_numbers(float), metavar="X,Y,Z",
                   help="project the bic mode on this polarisation axis")

    parser = _Parser(
        prog="superradiance",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("scan-n", parents=[common], help="G2 versus array size",
                       epilog="example: superradiance scan-n --env bic --beta 0.8179 "
                              "--sizes 3,5,7,9,11 --out runs/scan_n")
    p.add_argument("--sizes", type=_csv_numbers(int), help="odd side lengths, e.g. 3,5,7")

    p = sub.add_parser("scan-d", parents=[common], help="G2 versus lattice constant",
                       epilog="example: superradiance scan-d --env freespace "
                              "--d-values 0,100,200,400 --coincident --out runs/scan_d")
    p.add_argument("--d-values", type=_csv_numbers(float), help="lattice constants in nm")
    p.add_argument("--d-over-lambda", type=_csv_numbers(float),
                   help="lattice constants in units of lambda0")
    p.add_argument("--n-side", type=int, help="side length (default 3)")
    p.add_argument("--coincident", action="store_true", default=None,
                   help="allow d=0 (all emitters on one point)")

    p = sub.add_parser("dynamics", parents=[common], help="emission-rate trace R(t)",
                       epilog="example: superradiance dynamics --method lindblad --env bic "
                              "--n 9 --t-end 3 --out runs/dyn")
    p.add_argument("--method", choices=["lindblad", "ladder", "meanfield", "closed"])
    p.add_argument("--n", type=int, help="number of emitters")
    p.add_argument("--n-side", type=int, help="lattice side when --n is not given")
    p.add_argument("--t-end", type=float, help="final time in 1/gamma")
    p.add_argument("--n-steps", type=int, help="number of output intervals")
    p.add_argument("--max-emitters", type=int, help="Lindblad size cap (default 12)")

    p = sub.add_parser("disorder", parents=[common], help="disorder Monte Carlo",
                       epilog="example: superradiance disorder --env bic --mode orientation "
                              "--delta-theta 90 --n-side 3 --samples 1000 --out runs/dtheta90")
    p.add_argument("--mode", choices=["filling", "position", "orientation"])
    p.add_argument("--eta", type=float, help="filling fraction")
    p.add_argument("--delta-r", type=float, help="maximum in-plane shift (nm)")
    p.add_argument("--delta-theta", type=float, help="maximum angle shift (degrees)")
    p.add_argument("--steps", type=int, help="jitter discretisation (default 100)")
    p.add_argument("--n-side", type=int, help="lattice side (default 11)")
    p.add_argument("--samples", type=int, help="number of realisations")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--bins", type=int, help="histogram bins")

    p = sub.add_parser("validate", parents=[common], help="check a decay-matrix file",
                       epilog="example: superradiance validate rates.csv")
    p.add_argument("matrix", nargs="?", help="decay-matrix CSV or JSON")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(COMMON_DEFAULTS)
    cfg.update(COMMAND_DEFAULTS[args.command])
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        if "config" in doc and "command" in doc:
            doc = doc["config"]
        unknown = set(doc) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(doc)
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        cfg[key] = value
    return cfg


def make_environment(cfg: dict):
    env = cfg.get("env")
    if not env:
        raise UsageError("an environment is required (--env)")
    if env == "freespace":
        return FreeSpace()
    if env == "bic":
        axis = cfg.get("mode_axis")
        return SingleModeBIC(cfg["gamma"], cfg["beta"], tuple(axis) if axis else None)
    if env == "dicke":
        return IdealDicke(cfg["gamma"])
    if env == "independent":
        return Independent(cfg["gamma"])
    if env.startswith("tabulated:"):
        path = env.split(":", 1)[1]
        decay, coupling = import_decay_matrix(path, cfg.get("delta_file"))
        return Tabulated(decay, coupling, source=path)
    raise UsageError(f"unknown environment {env!r}")


def lattice_spec(cfg: dict, n_side: int, d_nm: float | None = None) -> LatticeSpec:
    return LatticeSpec(int(n_side), cfg["d_nm"] if d_nm is None else d_nm,
                       cfg["x0_nm"], cfg["z_nm"])


def centered_indices(big_side: int, side: int) -> np.ndarray:
    """Row-major indices of the centred ``side x side`` block of a ``big_side`` lattice."""
    if side > big_side:
        raise UsageError(f"size {side} exceeds the tabulated {big_side}x{big_side} lattice")
    if (big_side - side) % 2:
        raise UsageError(f"cannot centre a {side}x{side} block in {big_side}x{big_side}")
    o = (big_side - side) // 2
    return np.array([(o + i) * big_side + (o + j) for i in range(side) for j in range(side)])


def _side_of(n: int) -> int:
    side = math.isqrt(n)
    if side * side != n:
        raise UsageError(f"tabulated matrix of size {n} is not a square lattice")
    return side


def _write_csv(path: Path, header: str, rows) -> None:
    lines = [header] + [",".join(v if isinstance(v, str) else format_float(v) for v in r)
                        for r in rows]
    path.write_text("\n".join(lines) + "\n")


def cmd_scan_n(cfg: dict, out: Path) -> dict:
    sizes = cfg["sizes"]
    if not sizes:
        raise UsageError("--sizes must not be empty")
    env = make_environment(cfg)
    with_bic = isinstance(env, SingleModeBIC)
    header = "n_side,n_total,g2,g2_independent,g2_dicke" + (",g2_bic_analytic" if with_bic else "")
    rows = []
    for side in sizes:
        side = int(side)
        if isinstance(env, Tabulated):
            idx = centered_indices(_side_of(env.decay.n), side)
            decay = env.decay.subsample(idx)
        else:
            array = build_square_lattice(lattice_spec(cfg, side), cfg["lambda0_nm"])
            decay = build_matrices(array, env)[0]
        b = corr.check_bounds(decay)
        row = [str(side), str(side * side), b.value, b.lower, b.upper]
        if with_bic:
            row.append(corr.g2_bic_analytic(side * side, env.beta))
        rows.append(row)
    _write_csv(out / "scan_n.csv", header, rows)
    return {"outputs": ["scan_n.csv"], "rows": len(rows)}


def cmd_scan_d(cfg: dict, out: Path) -> dict:
    lam = cfg["lambda0_nm"]
    if cfg.get("d_values"):
        d_values = [float(v) for v in cfg["d_values"]]
    elif cfg.get("d_over_lambda"):
        d_values = [float(v) * lam for v in cfg["d_over_lambda"]]
    else:
        raise UsageError("give --d-values or --d-over-lambda")
    env = make_environment(cfg)
    if isinstance(env, Tabulated):
        raise UsageError("a tabulated matrix has a fixed geometry; scan-d needs a model environment")
    rows = []
    for d in d_values:
        if d < 0:
            raise UsageError("lattice constants must be non-negative")
        if d == 0 and not cfg["coincident"]:
            raise UsageError("d=0 places every emitter on one point; pass --coincident")
        array = build_square_lattice(lattice_spec(cfg, cfg["n_side"], d), lam,
                                     coincident=(d == 0))
        decay = build_matrices(array, env)[0]
        rows.append([d, d / lam, corr.g2_spectral(decay).value])
    _write_csv(out / "scan_d.csv", "d_nm,d_over_lambda,g2", rows)
    return {"outputs": ["scan_d.csv"], "rows": len(rows)}


def _line_array(n: int, lam: float) -> EmitterArray:
    pos = np.column_stack([np.arange(n) * 1.0, np.zeros(n), np.zeros(n)])
    return EmitterArray(pos, np.tile([0.0, 1.0, 0.0], (n, 1)), lam)


def _ladder_params(cfg: dict, env):
    if isinstance(env, SingleModeBIC):
        return env.gamma, env.beta
    if isinstance(env, IdealDicke):
        return env.gamma, 1.0
    if isinstance(env, Independent):
        return env.gamma, 0.0
    raise UsageError("ladder, meanfield and closed methods need env bic, dicke or independent")


def cmd_dynamics(cfg: dict, out: Path) -> dict:
    env = make_environment(cfg)
    method = cfg["method"]
    t_end, n_steps = float(cfg["t_end"]), int(cfg["n_steps"])
    if method == "lindblad":
        if isinstance(env, Tabulated):
            decay, coupling = env.decay, env.coupling
        else:
            if cfg.get("n") is not None and not isinstance(env, FreeSpace):
                array = _line_array(int(cfg["n"]), cfg["lambda0_nm"])
            else:
                array = build_square_lattice(lattice_spec(cfg, cfg["n_side"]), cfg["lambda0_nm"])
            decay, coupling = build_matrices(array, env)
        if decay.n > int(cfg["max_emitters"]):
            raise UsageError(f"{decay.n} emitters exceeds the Lindblad cap {cfg['max_emitters']}")
        trace = dyn.lindblad_rate_trace(decay, coupling, t_end, n_steps, int(cfg["max_emitters"]))
        n = decay.n
    else:
        gamma, beta = _ladder_params(cfg, env)
        n = int(cfg["n"]) if cfg.get("n") is not None else int(cfg["n_side"]) ** 2
        if method == "ladder":
            trace = dyn.ladder_rate_trace(n, gamma, beta, t_end, n_steps)
        elif method == "meanfield":
            trace = dyn.meanfield_rate_trace(n, gamma, beta, t_end, n_steps)
        else:
            trace = dyn.closed_form_trace(n, gamma, beta, t_end, n_steps)
    trace.to_csv(out / "trace.csv")
    meta = {
        "method": method,
        "n_emitters": n,
        "peak_rate": trace.peak_rate,
        "peak_time": trace.peak_time,
        "integrated_rate": dyn.integrated_emission(trace),
    }
    if method == "closed":
        meta["peak_time"] = trace.meta["t_peak"]
        for key in ("t0_exact", "t0_prime", "t0_quasi_dicke"):
            meta[key] = trace.meta[key]
    (out / "trace_meta.json").write_text(json.dumps(meta, indent=1) + "\n")
    return {"outputs": ["trace.csv", "trace_meta.json"], **meta}


def _disorder_config(cfg: dict) -> DisorderConfig:
    env = make_environment(cfg)
    kind = cfg["mode"]
    if kind == "filling":
        mode = FillingMode(float(cfg["eta"]))
    elif kind == "position":
        mode = PositionMode(float(cfg["delta_r"]), int(cfg["steps"]))
    elif kind == "orientation":
        mode = OrientationMode(float(cfg["delta_theta"]), int(cfg["steps"]))
    else:
        raise UsageError(f"unknown disorder mode {kind!r}")
    side = cfg["n_side"]
    if isinstance(env, Tabulated):
        side = _side_of(env.decay.n)
    try:
        return DisorderConfig(lattice_spec(cfg, side), env, mode, cfg["samples"],
                              int(cfg["seed"]), cfg["lambda0_nm"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_disorder(cfg: dict, out: Path) -> dict:
    config = _disorder_config(cfg)
    dist = run_disorder(config, workers=int(cfg["workers"]))
    dist.to_json(out / "distribution.json")
    histogram(dist.samples, int(cfg["bins"])).to_csv(out / "histogram.csv")
    (out / "stats.csv").write_text(format_stats_table([stats_row(dist)]))
    return {"outputs": ["distribution.json", "histogram.csv", "stats.csv"],
            "mean": dist.mean, "std": dist.std,
            "skewness": None if math.isnan(dist.skewness) else dist.skewness}


def cmd_validate(cfg: dict, out: Path | None) -> int:
    if not cfg.get("matrix"):
        raise UsageError("a matrix file is required")
    decay, _ = import_decay_matrix(cfg["matrix"], cfg.get("delta_file"), validate=False)
    report = validate_physical(decay)
    print(json.dumps(report.to_dict(), indent=1))
    return EXIT_OK if report.ok else EXIT_VALIDATION


COMMANDS = {
    "scan-n": cmd_scan_n,
    "scan-d": cmd_scan_d,
    "dynamics": cmd_dynamics,
    "disorder": cmd_disorder,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "validate":
            return cmd_validate(cfg, None)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.command](cfg, out)
        manifest = {"command": args.command, "config": cfg}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        print(json.dumps(summary, indent=1))
        return EXIT_OK
    except UnphysicalMatrixError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        if args.command == "validate":
            print(json.dumps(exc.report.to_dict(), indent=1))
        return EXIT_VALIDATION
    except (OSError, MatrixFormatError, json.JSONDecodeError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (dyn.IntegrationError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
