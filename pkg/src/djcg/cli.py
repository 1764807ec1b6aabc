"""Command-line front end.

    djcg spectrum    --config run.json [--out out.json] [--format json|csv] [--precision 17] [--initial prev.json]
    djcg formfactors --config run.json ...
    djcg scan        --config run.json ...
    djcg verify      --config run.json ...

Exit codes: 0 ok, 1 configuration error, 2 convergence failure,
3 normalization failure, 4 failed verification.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from .determinants import eigenstate_record, norm_product
from .ed import MAX_DIM
from .errors import ConvergenceError, DJCGError, NormalizationError, OracleTooLargeError
from .formfactors import OPERATOR_NAMES, form_factor_table, sector_shift
from .model import LambdaState, ModelParams, Rep, check_sector
from .qbe import (
    SolverConfig,
    charge_sort_key,
    charges_from_lambda,
    hole_from_particle,
    newton_solve,
    residual_norm,
    solve_sector,
)
from .sweep import scan
from .verify import DEFAULT_SEED, DEFAULT_TOLERANCES, run_all

log = logging.getLogger("djcg")

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_NORMALIZATION, EXIT_VERIFY = 0, 1, 2, 3, 4


# --------------------------------------------------------------------------
# configuration


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelBlock(_Strict):
    realization: Literal["spin_boson", "spin_only"]
    epsilons: list[float]
    omega: Optional[float] = None
    V: Optional[float] = None
    g: Optional[float] = None

    def build(self) -> ModelParams:
        return ModelParams(self.realization, self.epsilons, omega=self.omega, V=self.V, g=self.g)


class SectorBlock(_Strict):
    M: Optional[int] = None
    M_range: Optional[tuple[int, int]] = None

    @model_validator(mode="after")
    def _one_of(self):
        if (self.M is None) == (self.M_range is None):
            raise ValueError("give exactly one of M and M_range")
        if self.M_range is not None and self.M_range[0] > self.M_range[1]:
            raise ValueError("M_range must be increasing")
        return self

    def sectors(self) -> list[int]:
        if self.M is not None:
            return [self.M]
        return list(range(self.M_range[0], self.M_range[1] + 1))


class SolverBlock(_Strict):
    newton_tol: float = 1e-13
    max_newton_iters: int = 50
    homotopy_start_coupling: Optional[float] = None
    homotopy_steps: int = 64
    step_backoff_factor: float = 0.5
    min_step_fraction: float = 1e-4

    def build(self) -> SolverConfig:
        return SolverConfig(**self.model_dump())


class OutputBlock(_Strict):
    format: Literal["json", "csv"] = "json"
    path: Optional[str] = None
    precision: int = 17


class FormFactorBlock(_Strict):
    operators: list[str]
    bra_M: int
    ket_M: int
    sites: Optional[list[int]] = None


class GridBlock(_Strict):
    start: float
    stop: float
    num: int


class ScanBlock(_Strict):
    parameter: Literal["V", "g", "omega"]
    grid: list[float] | GridBlock
    M: int

    def values(self) -> list[float]:
        if isinstance(self.grid, GridBlock):
            return np.linspace(self.grid.start, self.grid.stop, self.grid.num).tolist()
        return list(self.grid)


class VerifyBlock(_Strict):
    tolerances: dict[str, float] = {}
    max_sector_dimension: int = MAX_DIM
    seed: int = DEFAULT_SEED


class RunConfig(_Strict):
    model: Optional[ModelBlock] = None
    sector: Optional[SectorBlock] = None
    solver: SolverBlock = SolverBlock()
    output: OutputBlock = OutputBlock()
    formfactors: Optional[FormFactorBlock] = None
    scan: Optional[ScanBlock] = None
    verify: VerifyBlock = VerifyBlock()


class ConfigError(Exception):
    pass


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def _require(cfg: RunConfig, *blocks: str):
    for b in blocks:
        if getattr(cfg, b) is None:
            raise ConfigError(f"config needs a '{b}' block for this command")


# --------------------------------------------------------------------------
# serialization


def _round(x, digits: int):
    if x is None:
        return None
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_round(v, digits) for v in x]
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": _round(x.real, digits), "im": _round(x.imag, digits)}
    if isinstance(x, (float, np.floating)):
        return float(f"{float(x):.{digits}g}") if np.isfinite(x) else None
    return x


def state_record(params: ModelParams, index: int, state: LambdaState, digits: int) -> tuple[dict, list[str]]:
    """One spectrum entry; normalization problems are reported, not fatal."""
    notes = []
    rec = {
        "index": index,
        "M": state.M,
        "lambda_particle": _round(state.values, digits),
        "charges": _round(charges_from_lambda(params, state), digits),
        "residual": _round(residual_norm(params, state), digits),
    }
    try:
        full = eigenstate_record(params, state)
    except NormalizationError as exc:
        rec["lambda_hole"] = _round(hole_from_particle(params, state).values, digits)
        rec["norm_product"] = _round(norm_product(params, state), digits)
        rec["norm_ratio"] = None
        rec["reference"] = None
        notes.append(f"state {index} of sector {state.M}: {exc}")
        return rec, notes
    if full.norm_product == 0.0:
        notes.append(f"state {index} of sector {state.M}: degenerate hole representation (zero norm product)")
    rec["lambda_hole"] = _round(full.lambda_hole.values, digits)
    rec["norm_product"] = _round(full.norm_product, digits)
    rec["norm_ratio"] = _round(full.norm_ratio, digits)
    rec["reference"] = {"n_b": full.reference.n_b, "flipped": list(full.reference.flipped)}
    return rec, notes


def _flatten_states(states: list[dict]) -> dict:
    cols = ["index", "M"]
    N = len(states[0]["lambda_particle"]) if states else 0
    cols += [f"lambda_particle_{i}" for i in range(N)] + [f"lambda_hole_{i}" for i in range(N)]
    cols += [f"charge_{i}" for i in range(N)] + ["norm_product", "norm_ratio", "residual"]
    rows = [
        [s["index"], s["M"], *s["lambda_particle"], *s["lambda_hole"], *s["charges"], s["norm_product"], s["norm_ratio"], s["residual"]]
        for s in states
    ]
    return {"columns": cols, "rows": rows}


def _matrix_table(matrix, digits: int) -> dict:
    m = np.asarray(matrix)
    return {"columns": ["bra"] + [f"ket_{j}" for j in range(m.shape[1])], "rows": [[i, *_round(row, digits)] for i, row in enumerate(m)]}


def write_output(doc: dict, out: str | None, fmt: str):
    if fmt == "json":
        text = json.dumps(doc, indent=2, allow_nan=False)
        if out is None:
            sys.stdout.write(text + "\n")
        else:
            Path(out).write_text(text + "\n", encoding="utf-8")
        return
    if out is None:
        raise ConfigError("csv output needs --out (one file per table is written next to it)")
    base = Path(out)
    stem = base.with_suffix("")
    for name, table in doc["tables"].items():
        safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in name)
        with open(f"{stem}.{safe}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(table["columns"])
            w.writerows([["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row] for row in table["rows"]])


def load_initial(path: str) -> dict[int, list[np.ndarray]]:
    """Lambda vectors per sector from a previous spectrum output."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    out: dict[int, list[np.ndarray]] = {}
    for s in doc.get("states", []):
        out.setdefault(int(s["M"]), []).append(np.array(s["lambda_particle"], dtype=float))
    return out


# --------------------------------------------------------------------------
# commands


def _solve(params, M, cfg, initial):
    if initial and M in initial:
        states = [newton_solve(params, M, Rep.PARTICLE, LambdaState(v, M, Rep.PARTICLE), cfg) for v in initial[M]]
        return sorted(states, key=lambda st: charge_sort_key(params, st))
    return solve_sector(params, M, Rep.PARTICLE, cfg)


def cmd_spectrum(cfg: RunConfig, initial: dict | None = None) -> tuple[int, dict]:
    _require(cfg, "model", "sector")
    params = cfg.model.build()
    digits = cfg.output.precision
    sectors = [check_sector(params, M) for M in cfg.sector.sectors()]
    states, diags, code = [], [], EXIT_OK
    for M in sectors:
        try:
            solved = _solve(params, M, cfg.solver.build(), initial)
        except ConvergenceError as exc:
            diags.append({"level": "error", "M": M, "message": f"{type(exc).__name__}: {exc}"})
            code = EXIT_CONVERGENCE
            continue
        for i, st in enumerate(solved):
            rec, notes = state_record(params, i, st, digits)
            states.append(rec)
            diags.extend({"level": "warning", "M": M, "message": n} for n in notes)
    doc = {
        "model": params.to_dict(),
        "sector": {"M": sectors},
        "states": states,
        "tables": {"states": _flatten_states(states)},
        "diagnostics": diags,
    }
    return code, doc


def _records(params, M, cfg):
    return [eigenstate_record(params, st) for st in solve_sector(params, M, Rep.PARTICLE, cfg)]


def cmd_formfactors(cfg: RunConfig) -> tuple[int, dict]:
    _require(cfg, "model", "formfactors")
    params = cfg.model.build()
    ff = cfg.formfactors
    digits = cfg.output.precision
    for op in ff.operators:
        if op not in OPERATOR_NAMES:
            raise ConfigError(f"unknown operator {op!r}; expected one of {OPERATOR_NAMES}")
        if op in ("Bdag", "B", "NumberB") and not params.is_spin_boson:
            raise ConfigError(f"operator {op} needs the spin_boson realization")
        if ff.bra_M - ff.ket_M != sector_shift(op):
            raise ConfigError(f"operator {op} maps sector {ff.ket_M} to {ff.ket_M + sector_shift(op)}, not {ff.bra_M}")
    sites = ff.sites if ff.sites is not None else list(range(params.N))
    for k in sites:
        if not 0 <= k < params.N:
            raise ConfigError(f"site {k} outside 0..{params.N - 1}")
    check_sector(params, ff.bra_M)
    check_sector(params, ff.ket_M)
    solver = cfg.solver.build()
    bras = _records(params, ff.bra_M, solver)
    kets = bras if ff.bra_M == ff.ket_M else _records(params, ff.ket_M, solver)
    tables = {}
    for op in ff.operators:
        for k in sites if op in ("Splus", "Sminus", "Sz") else [None]:
            key = op if k is None else f"{op}[k={k}]"
            tables[f"{key}.normalized"] = _matrix_table(form_factor_table(params, op, bras, kets, k, True), digits)
            if op not in ("Sminus", "B"):
                tables[f"{key}.unnormalized"] = _matrix_table(form_factor_table(params, op, bras, kets, k, False), digits)
    states = []
    for role, recs in (("bra", bras), ("ket", kets)):
        for i, r in enumerate(recs):
            states.append(
                {
                    "role": role,
                    "index": i,
                    "M": r.M,
                    "lambda_particle": _round(r.lambda_particle.values, digits),
                    "lambda_hole": _round(r.lambda_hole.values, digits),
                    "charges": _round(r.charges, digits),
                    "norm_product": _round(r.norm_product, digits),
                    "norm_ratio": _round(r.norm_ratio, digits),
                }
            )
    doc = {
        "model": params.to_dict(),
        "sector": {"bra_M": ff.bra_M, "ket_M": ff.ket_M},
        "states": states,
        "tables": tables,
        "diagnostics": [],
    }
    return EXIT_OK, doc


def cmd_scan(cfg: RunConfig) -> tuple[int, dict]:
    _require(cfg, "model", "scan")
    params = cfg.model.build()
    sc = cfg.scan
    digits = cfg.output.precision
    check_sector(params, sc.M)
    try:
        points = scan(params, sc.M, sc.parameter, sc.values(), cfg.solver.build())
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    states, diags, rows = [], [], []
    for p_idx, pt in enumerate(points):
        for i, st in enumerate(pt.states):
            entry = {
                "point": p_idx,
                sc.parameter: _round(pt.value, digits),
                "index": i,
                "lambda_particle": _round(st.values, digits),
                "charges": _round(pt.charges[i], digits),
                "residual": _round(pt.residuals[i], digits),
            }
            states.append(entry)
            rows.append([p_idx, entry[sc.parameter], i, *entry["lambda_particle"], *entry["charges"], entry["residual"]])
        diags.extend({"level": "warning", "point": p_idx, "message": c} for c in pt.collisions)
        diags.extend({"level": "info", "point": p_idx, "message": n} for n in pt.notes)
    N = params.N
    cols = ["point", sc.parameter, "index"] + [f"lambda_{i}" for i in range(N)] + [f"charge_{i}" for i in range(N)] + ["residual"]
    doc = {
        "model": params.to_dict(),
        "sector": {"M": sc.M},
        "states": states,
        "tables": {"scan": {"columns": cols, "rows": rows}},
        "diagnostics": diags,
    }
    return EXIT_OK, doc


def cmd_verify(cfg: RunConfig) -> tuple[int, dict]:
    v = cfg.verify
    if cfg.model is not None or cfg.sector is not None:
        log.warning("verify runs its own seeded models; the model and sector blocks are ignored")
    unknown = set(v.tolerances) - set(DEFAULT_TOLERANCES)
    if unknown:
        raise ConfigError(f"unknown tolerance keys {sorted(unknown)}; known: {sorted(DEFAULT_TOLERANCES)}")
    results = run_all(v.tolerances, v.seed, cfg.solver.build(), v.max_sector_dimension)
    for r in results:
        log.info(r.line())
    checks = [
        {"name": r.name, "error": _round(r.error, 6), "tolerance": r.tolerance, "passed": r.passed, "runtime": round(r.runtime, 3), "detail": r.detail}
        for r in results
    ]
    doc = {
        "model": None,
        "sector": None,
        "states": [],
        "tables": {
            "checks": {
                "columns": ["name", "error", "tolerance", "passed", "runtime", "detail"],
                "rows": [[c["name"], c["error"], c["tolerance"], c["passed"], c["runtime"], c["detail"]] for c in checks],
            }
        },
        "diagnostics": [{"level": "info" if r.passed else "error", "message": r.line()} for r in results],
    }
    return (EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY), doc


COMMANDS = {"spectrum": cmd_spectrum, "formfactors": cmd_formfactors, "scan": cmd_scan, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="djcg", description="Eigenvalue-based Bethe ansatz solver for Gaudin models.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output path (json: file, csv: stem for one file per table)")
        p.add_argument("--format", choices=["json", "csv"])
        p.add_argument("--precision", type=int, help="significant digits of floats (default 17)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "spectrum":
            p.add_argument("--initial", help="previous spectrum output used as Newton starting points")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        out = cfg.output.model_copy(
            update={k: v for k, v in (("format", args.format), ("path", args.out), ("precision", args.precision)) if v is not None}
        )
        if not 1 <= out.precision <= 17:
            raise ConfigError("precision must lie between 1 and 17 significant digits")
        cfg = cfg.model_copy(update={"output": out})
        if args.command == "spectrum":
            code, doc = cmd_spectrum(cfg, load_initial(args.initial) if args.initial else None)
        else:
            code, doc = COMMANDS[args.command](cfg)
        write_output(doc, out.path, out.format)
    except (ConfigError, OracleTooLargeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NormalizationError as exc:
        print(f"normalization error: {exc}", file=sys.stderr)
        return EXIT_NORMALIZATION
    except ConvergenceError as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except DJCGError as exc:
        # invalid models, sectors and realizations are configuration problems
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for d in doc.get("diagnostics", []):
        if d.get("level") in ("warning", "error"):
            print(f"{d['level']}: {d['message']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
