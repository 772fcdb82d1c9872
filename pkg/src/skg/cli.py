"""Command-line entry point: ``skg <kind> [flags]``.

Every kind reads its parameters from built-in defaults, then an optional
JSON file (``--config``), then flags, later sources winning. The result is
a CSV table (stdout, or ``--out``) and, when writing to a file, a JSON
sidecar next to it recording the resolved config, version, seed and wall
time.

Exit codes: 0 success, 2 invalid config, 3 a verification check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .deterministic import (
    decompose_layers,
    det_capacity,
    det_layer_sum,
    det_upper_bound,
    random_nested_family,
    run_layered_protocol,
    shift_family,
)
from .erasure import ErasureConfig, erasure_capacity, run_protocol
from .gaussian import achievable_rate, dof, dof_upper, gauss_upper_bound, layer_rates
from .gf import prime_power
from .kkt import grid_oracle, optimize
from .profiles import SUM_TOL, GainProfile, StateProfile, db_to_linear

__all__ = ["KINDS", "ExperimentConfig", "ConfigError", "VerificationError", "validate", "run", "main"]

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 2, 3
GRID_TOL = 1e-3


class ConfigError(ValueError):
    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics


class VerificationError(RuntimeError):
    """An invariant that every correct run satisfies did not hold."""


# parameter name -> (parser, default); lists are comma-separated on the command line
_FLOATS = "floats"
_INTS = "ints"

_COMMON = {"seed": (int, 0)}
_GAUSS = {
    "gains_db": (_FLOATS, [-10.0, 0.0, 10.0]),
    "deltas": (_FLOATS, [1 / 3, 1 / 3, 1 / 3]),
    "p_max": (float, 10.0),
    "L": (int, 1),
    "complex": (bool, False),
}
SCHEMAS: dict[str, dict[str, tuple[Any, Any]]] = {
    "erasure-sim": {
        **_COMMON, "m": (int, 3), "n": (int, 2000), "L": (int, 16), "q": (int, 65536),
        "delta": (float, 0.5), "delta_e": (float, 0.5), "trials": (int, 1),
        "leakage": (bool, True), "eve_count_known": (bool, False),
    },
    "det-sim": {
        **_COMMON, "L": (int, 3), "q": (int, 65536), "ranks": (_INTS, [0, 1, 3]),
        "deltas": (_FLOATS, [1 / 3, 1 / 3, 1 / 3]), "m": (int, 3), "n": (int, 3000),
        "trials": (int, 1), "family": (str, "shift"), "leakage": (bool, True),
        "eve_count_known": (bool, False),
    },
    "det-capacity": {
        **_COMMON, "L": (int, 3), "q": (int, 2), "ranks": (_INTS, [0, 1, 3]),
        "deltas": (_FLOATS, [1 / 3, 1 / 3, 1 / 3]), "family": (str, "shift"),
    },
    "gauss-optimize": {**_GAUSS, "grid": (int, 0)},
    "gauss-bounds": dict(_GAUSS),
    "dof": {"gammas": (_FLOATS, [0.1, 1.0, 2.0]), "deltas": (_FLOATS, [1 / 3, 1 / 3, 1 / 3]), "L": (int, 1)},
    "example1": {
        "p_max": (float, 10.0), "h0_db": (float, -5.0), "h2_db": (float, 30.0),
        "grid": (int, 200), "L": (int, 1), "complex": (bool, False),
    },
    "example2": {
        "p_max": (float, 10.0), "h0_db": (float, -5.0), "h3_db": (float, 30.0),
        "grid": (int, 36), "L": (int, 1), "complex": (bool, False),
    },
    "example3": {
        "p_max_values": (_FLOATS, [0.1, 1.0, 10.0, 100.0]), "lo_db": (float, -5.0),
        "hi_db": (float, 30.0), "states": (int, 36), "L": (int, 1), "complex": (bool, False),
    },
}
KINDS = tuple(SCHEMAS)


@dataclass
class ExperimentConfig:
    kind: str
    params: dict[str, Any] = field(default_factory=dict)

    def resolved(self) -> dict[str, Any]:
        """Defaults overlaid with the given parameters."""
        base = {k: (list(v) if isinstance(v, list) else v) for k, (_, v) in SCHEMAS[self.kind].items()}
        base.update(self.params)
        return base


# ---------------------------------------------------------------------------
# validation


def _check_deltas(deltas, diag: list[str], states: int | None = None):
    d = np.asarray(deltas, dtype=float)
    if d.ndim != 1 or d.size < 1:
        diag.append("deltas must be a non-empty list")
        return
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        diag.append("deltas must be non-negative")
    if abs(float(d.sum()) - 1.0) > SUM_TOL:
        diag.append(f"deltas must sum to 1 within {SUM_TOL:g} (got {float(d.sum()):.15g})")
    if states is not None and d.size != states:
        diag.append(f"need {states} deltas, got {d.size}")


def _check_increasing(values, name: str, diag: list[str]):
    v = np.asarray(values, dtype=float)
    if v.size < 1:
        diag.append(f"{name} must be non-empty")
    elif np.any(np.diff(v) <= 0):
        diag.append("gains must be strictly increasing" if name == "gains" else f"{name} must be strictly increasing")


def _check_field(q, diag: list[str]):
    try:
        p, e = prime_power(int(q))
    except ValueError as exc:
        diag.append(str(exc))
        return
    if q > 1 << 16:
        diag.append("field size must be at most 65536")


def _check_family(p: dict, diag: list[str]):
    L, ranks = p["L"], list(p["ranks"])
    if L < 1:
        diag.append("L must be positive")
    if len(ranks) < 2 or ranks[0] != 0 or ranks[-1] != L:
        diag.append(f"ranks must start at 0 and end at L={L}")
    if any(b < a for a, b in zip(ranks, ranks[1:])):
        diag.append("ranks must be non-decreasing")
    if p["family"] not in ("shift", "random"):
        diag.append("family must be 'shift' or 'random'")
    _check_field(p["q"], diag)
    _check_deltas(p["deltas"], diag, len(ranks))


def validate(config: ExperimentConfig | dict) -> list[str]:
    """Schema violations of ``config``, without running anything."""
    if isinstance(config, dict):
        kind = config.get("kind")
        if kind not in SCHEMAS:
            return [f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}"]
        config = ExperimentConfig(kind, {k: v for k, v in config.items() if k != "kind"})
    if config.kind not in SCHEMAS:
        return [f"unknown kind {config.kind!r}; expected one of {', '.join(KINDS)}"]
    schema = SCHEMAS[config.kind]
    diag = [f"unknown parameter {k!r}" for k in config.params if k not in schema]
    if diag:
        return diag
    p = config.resolved()
    kind = config.kind
    if "seed" in p and not (isinstance(p["seed"], int) and 0 <= p["seed"] < 1 << 64):
        diag.append("seed must be an unsigned 64-bit integer")
    if "trials" in p and p["trials"] < 1:
        diag.append("trials must be positive")
    if kind == "erasure-sim":
        if p["m"] < 2:
            diag.append("m must be at least 2")
        if p["n"] < 1 or p["L"] < 1:
            diag.append("n and L must be positive")
        for k in ("delta", "delta_e"):
            if not 0.0 <= p[k] <= 1.0:
                diag.append(f"{k} must lie in [0, 1]")
        _check_field(p["q"], diag)
    elif kind in ("det-sim", "det-capacity"):
        _check_family(p, diag)
        if kind == "det-sim":
            if p["m"] < 2:
                diag.append("m must be at least 2")
            if p["n"] < 1:
                diag.append("n must be positive")
    elif kind in ("gauss-optimize", "gauss-bounds"):
        _check_increasing(p["gains_db"], "gains", diag)
        _check_deltas(p["deltas"], diag, len(p["gains_db"]))
        if not p["p_max"] >= 0:
            diag.append("p_max must be non-negative")
        if p["L"] < 1:
            diag.append("L must be positive")
        if kind == "gauss-optimize" and p["grid"] and (p["grid"] < 1 or len(p["gains_db"]) > 5):
            diag.append("grid check needs grid >= 1 and at most 4 layers")
    elif kind == "dof":
        g = np.asarray(p["gammas"], dtype=float)
        if np.any(g <= 0):
            diag.append("gammas must be positive")
        _check_increasing(g, "gammas", diag)
        _check_deltas(p["deltas"], diag, g.size)
    elif kind == "example1":
        if not p["h0_db"] < p["h2_db"]:
            diag.append("gains must be strictly increasing")
        if p["grid"] < 1 or not p["p_max"] >= 0:
            diag.append("grid must be positive and p_max non-negative")
    elif kind == "example2":
        if not p["h0_db"] < p["h3_db"]:
            diag.append("gains must be strictly increasing")
        if p["grid"] < 2 or not p["p_max"] >= 0:
            diag.append("grid must be at least 2 and p_max non-negative")
    elif kind == "example3":
        if p["states"] < 2 or not p["lo_db"] < p["hi_db"]:
            diag.append("need at least two states and lo_db < hi_db")
        if any(not v >= 0 for v in p["p_max_values"]):
            diag.append("p_max_values must be non-negative")
    return diag


# ---------------------------------------------------------------------------
# runners; each returns (header, rows, extra sidecar fields)


Table = tuple[list[str], list[list[Any]], dict[str, Any]]


def _gauss_inputs(p) -> tuple[GainProfile, StateProfile]:
    return GainProfile(db_to_linear(p["gains_db"]), p["p_max"], p["L"]), StateProfile(p["deltas"])


def _run_erasure(p) -> Table:
    rows = []
    cap = erasure_capacity(p["delta"], p["delta_e"], p["L"], p["q"])
    for t in range(p["trials"]):
        cfg = ErasureConfig(p["m"], p["n"], p["L"], p["q"], p["delta"], p["delta_e"],
                            seed=p["seed"] + t, eve_count_known=p["eve_count_known"])
        out = run_protocol(cfg, compute_leakage=p["leakage"])
        if not out.agreement:
            raise VerificationError(f"honest keys differ (seed {cfg.seed})")
        if p["eve_count_known"] and out.leakage_bits:
            raise VerificationError(f"nonzero leakage with known Eve counts (seed {cfg.seed})")
        rows.append([cfg.seed, out.n_star, out.h, out.l, out.rate, cap, int(out.agreement),
                     "" if out.leakage_bits is None else out.leakage_bits])
    header = ["seed", "n_star", "h", "l", "rate", "capacity", "agreement", "leakage_bits"]
    return header, rows, {"capacity": cap}


def _family(p):
    if p["family"] == "shift":
        return shift_family(p["L"], p["q"], p["ranks"])
    return random_nested_family(p["L"], p["q"], p["ranks"], p["seed"])


def _run_det_sim(p) -> Table:
    fam = _family(p)
    prof = StateProfile(p["deltas"])
    cap = det_capacity(fam, prof)
    rows = []
    for t in range(p["trials"]):
        seed = p["seed"] + t
        out = run_layered_protocol(fam, prof, p["m"], p["n"], seed=seed,
                                   eve_count_known=p["eve_count_known"], compute_leakage=p["leakage"])
        if not out.agreement:
            raise VerificationError(f"honest keys differ or layers undecodable (seed {seed})")
        if p["eve_count_known"] and out.leakage_bits:
            raise VerificationError(f"nonzero leakage with known Eve counts (seed {seed})")
        leak = out.leakage_bits
        rows.append([seed, out.key_bits, out.rate, cap, int(out.agreement), "" if leak is None else leak])
    return ["seed", "key_bits", "rate", "capacity", "agreement", "leakage_bits"], rows, {"capacity": cap}


def _run_det_capacity(p) -> Table:
    fam = _family(p)
    problems = fam.check()
    if problems:
        raise VerificationError("; ".join(problems))
    prof = StateProfile(p["deltas"])
    cap = det_capacity(fam, prof)
    layer = det_layer_sum(decompose_layers(fam), prof, fam.q)
    upper = det_upper_bound(fam, prof)
    if not (math.isclose(cap, layer, rel_tol=1e-12, abs_tol=1e-12)
            and math.isclose(cap, upper, rel_tol=1e-12, abs_tol=1e-12)):
        raise VerificationError(f"capacity formulas disagree: {cap}, {layer}, {upper}")
    return ["capacity", "layer_sum", "upper_bound"], [[cap, layer, upper]], {}


def _run_gauss_optimize(p) -> Table:
    gains, prof = _gauss_inputs(p)
    best, rate = optimize(gains, prof, complex_channel=p["complex"])
    extra: dict[str, Any] = {"rate": rate, "interference": best.interference.tolist(),
                             "multipliers": best.multipliers.tolist()}
    if p["grid"]:
        _, grid_rate = grid_oracle(gains, prof, gains.p_max / p["grid"], complex_channel=p["complex"])
        extra["grid_rate"] = grid_rate
        if rate < grid_rate - GRID_TOL * (1 + rate):
            raise VerificationError(f"grid search beats the KKT optimum: {grid_rate} > {rate}")
    alloc = best.allocation
    r = layer_rates(alloc, gains, p["complex"])
    rows = [[i + 1, best.interference[i + 1], alloc.powers[i], alloc.fractions[i], r[i]] for i in range(gains.s)]
    return ["layer", "interference", "power", "fraction", "layer_rate"], rows, extra


def _run_gauss_bounds(p) -> Table:
    gains, prof = _gauss_inputs(p)
    best, rate = optimize(gains, prof, complex_channel=p["complex"])
    upper = gauss_upper_bound(gains, prof, p["complex"])
    if rate > upper * (1 + 1e-12) + 1e-15:
        raise VerificationError(f"achievable rate {rate} exceeds upper bound {upper}")
    return ["achievable", "upper_bound"], [[rate, upper]], {"powers": best.powers.tolist()}


def _run_dof(p) -> Table:
    prof = StateProfile(p["deltas"])
    lo, hi = dof(prof, p["gammas"], p["L"]), dof_upper(prof, p["gammas"], p["L"])
    if not math.isclose(lo, hi, rel_tol=1e-12, abs_tol=1e-12):
        raise VerificationError(f"lower and upper DoF differ: {lo} vs {hi}")
    return ["dof", "dof_upper"], [[lo, hi]], {}


def _open_sweep(lo: float, hi: float, points: int) -> np.ndarray:
    """``points`` evenly spaced values strictly inside ``(lo, hi)``."""
    return np.linspace(lo, hi, points + 2)[1:-1]


def _bounds_at(gains_db, p_max, L, prof, complex_channel) -> tuple[float, float]:
    gains = GainProfile(db_to_linear(gains_db), p_max, L)
    _, rate = optimize(gains, prof, complex_channel=complex_channel)
    upper = gauss_upper_bound(gains, prof, complex_channel)
    if rate > upper * (1 + 1e-12) + 1e-15:
        raise VerificationError(f"achievable rate exceeds upper bound at gains {list(gains_db)} dB")
    return rate, upper


def _run_example1(p) -> Table:
    prof = StateProfile.uniform(3)
    rows = []
    for h1 in _open_sweep(p["h0_db"], p["h2_db"], p["grid"]):
        a, u = _bounds_at([p["h0_db"], h1, p["h2_db"]], p["p_max"], p["L"], prof, p["complex"])
        rows.append([h1, a, u])
    return ["h1_db", "achievable", "upper_bound"], rows, {}


def _run_example2(p) -> Table:
    prof = StateProfile.uniform(4)
    sweep = _open_sweep(p["h0_db"], p["h3_db"], p["grid"])
    rows = []
    skipped = 0
    for g1 in sweep:
        for g2 in sweep:
            if g1 == g2:  # h_1 = h_2 is outside the strictly ordered model
                skipped += 1
                continue
            a, u = _bounds_at([p["h0_db"], min(g1, g2), max(g1, g2), p["h3_db"]],
                              p["p_max"], p["L"], prof, p["complex"])
            rows.append([g1, g2, a, u])
    return ["g1_db", "g2_db", "achievable", "upper_bound"], rows, {"skipped_diagonal": skipped}


def example3_gains_db(states: int = 36, lo_db: float = -5.0, hi_db: float = 30.0) -> np.ndarray:
    return np.linspace(lo_db, hi_db, states)


def _run_example3(p) -> Table:
    prof = StateProfile.uniform(p["states"])
    gains_db = example3_gains_db(p["states"], p["lo_db"], p["hi_db"])
    rows = []
    rates = {}
    for pm in p["p_max_values"]:
        gains = GainProfile(db_to_linear(gains_db), pm, p["L"])
        best, rate = optimize(gains, prof, complex_channel=p["complex"])
        frac = best.allocation.fractions
        if pm > 0 and abs(float(frac.sum()) - 1.0) > 1e-9:
            raise VerificationError(f"power fractions sum to {frac.sum()} at p_max={pm}")
        rates[repr(float(pm))] = rate
        rows.extend([pm, i + 1, f] for i, f in enumerate(frac))
    return ["p_max", "layer", "fraction"], rows, {"rates": rates}


RUNNERS: dict[str, Callable[[dict], Table]] = {
    "erasure-sim": _run_erasure,
    "det-sim": _run_det_sim,
    "det-capacity": _run_det_capacity,
    "gauss-optimize": _run_gauss_optimize,
    "gauss-bounds": _run_gauss_bounds,
    "dof": _run_dof,
    "example1": _run_example1,
    "example2": _run_example2,
    "example3": _run_example3,
}


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def render_csv(header: list[str], rows: list[list[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows([_fmt(v) for v in row] for row in rows)
    return buf.getvalue()


def describe_version() -> str:
    """Package version, plus ``git describe`` output when run from a checkout."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return __version__
    desc = out.stdout.strip()
    return f"{__version__}+{desc}" if out.returncode == 0 and desc else __version__


def sidecar_path(out: Path) -> Path:
    return out.with_name(out.name + ".json")


def run(config: ExperimentConfig, out: Path | None = None, stdout=None) -> int:
    """Validate, execute and write artifacts; returns the exit status."""
    stdout = sys.stdout if stdout is None else stdout
    diag = validate(config)
    if diag:
        _error("config", diag)
        return EXIT_CONFIG
    params = config.resolved()
    start = time.perf_counter()
    try:
        header, rows, extra = RUNNERS[config.kind](params)
    except VerificationError as exc:
        _error("verification", [str(exc)])
        return EXIT_VERIFY
    wall = time.perf_counter() - start
    text = render_csv(header, rows)
    if out is None:
        stdout.write(text)
        return EXIT_OK
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    meta = {
        "kind": config.kind,
        "config": params,
        "version": describe_version(),
        "seed": params.get("seed"),
        "wall_time_s": wall,
        "csv": out.name,
        "columns": header,
        **extra,
    }
    sidecar_path(out).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def _error(kind: str, messages: list[str]):
    sys.stderr.write(json.dumps({"error": kind, "diagnostics": messages}) + "\n")


# ---------------------------------------------------------------------------
# argument parsing


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _list_parser(kind):
    conv = float if kind == _FLOATS else int

    def parse(text: str):
        try:
            return [conv(x) for x in text.replace(" ", "").split(",") if x]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skg", description="Group secret-key generation toolkit.")
    sub = parser.add_subparsers(dest="kind", required=True, metavar="KIND")
    for kind, schema in SCHEMAS.items():
        sp = sub.add_parser(kind, help=f"run {kind}")
        sp.add_argument("--config", type=Path, help="JSON file with parameters")
        sp.add_argument("--out", type=Path, help="CSV path; a .json sidecar is written next to it")
        sp.add_argument("--validate-only", action="store_true", help="print diagnostics and exit")
        for name, (kind_, _) in schema.items():
            flag = "--" + name.replace("_", "-")
            if kind_ is bool:
                if name == "complex":
                    sp.add_argument(flag, dest=name, action="store_const", const=True, default=None,
                                    help="complex-valued channel (drops the 1/2 rate factor)")
                else:
                    sp.add_argument(flag, dest=name, type=_parse_bool, default=None, metavar="BOOL")
            elif kind_ in (_FLOATS, _INTS):
                sp.add_argument(flag, dest=name, type=_list_parser(kind_), default=None, metavar="A,B,...")
            else:
                sp.add_argument(flag, dest=name, type=kind_, default=None)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    params: dict[str, Any] = {}
    if args.config is not None:
        try:
            doc = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([f"cannot read config {args.config}: {exc}"]) from None
        if not isinstance(doc, dict):
            raise ConfigError(["config file must hold a JSON object"])
        if doc.get("kind", args.kind) != args.kind:
            raise ConfigError([f"config kind {doc['kind']!r} does not match subcommand {args.kind!r}"])
        params.update({k: v for k, v in doc.items() if k != "kind"})
    for name in SCHEMAS[args.kind]:
        v = getattr(args, name, None)
        if v is not None:
            params[name] = v
    return ExperimentConfig(args.kind, params)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
    except ConfigError as exc:
        _error("config", exc.diagnostics)
        return EXIT_CONFIG
    if args.validate_only:
        diag = validate(config)
        print(json.dumps({"kind": config.kind, "diagnostics": diag}))
        return EXIT_CONFIG if diag else EXIT_OK
    return run(config, args.out)


if __name__ == "__main__":
    sys.exit(main())
