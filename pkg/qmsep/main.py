# qmsep/main.py - Command-line entry point
"""
Batch command-line surface. Every subcommand prints one JSON report on
stdout; logs go to stderr.

    python -m qmsep.main gen cycle --n 3 --lam 2 --mu 1 --out cycle.json
    python -m qmsep.main ep cycle.json --limit-check 1e-2,1e-3,1e-4 --csv trace.csv
    python -m qmsep.main balance cycle.json

Exit codes: 0 success, 2 invalid input, 3 numerical inconsistency.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd
import pydantic
import scipy
from pydantic import ValidationError

from qmsep import __version__
from qmsep.config import settings
from qmsep.schemas import MatrixObject, ModelFile, digest, dumps, validation_messages
from qmsep.services.analyzer import SemigroupAnalyzer
from qmsep.services.errors import NumericalInconsistencyError
from qmsep.services.gksl import (
    DensityMatrix,
    GkslGenerator,
    apply_L,
    apply_Lstar,
    build_generator,
    invariant_states,
    is_special,
    kernel_dimension,
    lindblad_residual,
    make_special,
)
from qmsep.services.matops import matrix_unit, opnorm
from qmsep.services.models import (
    CycleSpec,
    GenericSpec,
    cycle_model,
    generic_invariant_state,
    generic_model,
    two_level_model,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


class CommandError(Exception):
    def __init__(self, exit_code: int, detail: str):
        super().__init__(detail)
        self.exit_code = exit_code
        self.detail = detail


def _verdict(holds: bool, tolerance: float) -> Dict[str, Any]:
    return {"holds": bool(holds), "tolerance": tolerance}


def _base_report(command: str, inputs: List[Path], analyzer: SemigroupAnalyzer) -> Dict[str, Any]:
    return {
        "command": command,
        "inputs_digest": digest(inputs) if inputs else None,
        "log_base": "nats",
        "tolerances": analyzer.tolerances(),
        "versions": {"qmsep": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "pandas": pd.__version__, "pydantic": pydantic.VERSION},
    }


def _read_json(path: Path) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise CommandError(EXIT_INVALID, f"Cannot read {path}: {e}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise CommandError(EXIT_INVALID, f"Malformed JSON in {path}: line {e.lineno} column {e.colno}: {e.msg}")


def load_model(path: Path) -> ModelFile:
    try:
        return ModelFile.model_validate(_read_json(path))
    except ValidationError as e:
        raise CommandError(EXIT_INVALID, f"Invalid model file {path}: {validation_messages(e)}")


def load_rho(path: Path, dim: int) -> DensityMatrix:
    """A rho file holds either a bare matrix object or {"rho": matrix object}."""
    data = _read_json(path)
    if isinstance(data, dict) and "rho" in data:
        data = data["rho"]
    try:
        matrix = MatrixObject.model_validate(data)
    except ValidationError as e:
        raise CommandError(EXIT_INVALID, f"Invalid state file {path}: {validation_messages(e)}")
    if matrix.shape != (dim, dim):
        raise CommandError(EXIT_INVALID, f"State in {path} has shape {matrix.shape}, expected {(dim, dim)}")
    return DensityMatrix(matrix.to_array())


def generator_from(model: ModelFile) -> GkslGenerator:
    return build_generator(model.hamiltonian(), model.jumps())


def resolve_state(gen: GkslGenerator, model: ModelFile, rho_path: Optional[Path]) -> DensityMatrix:
    if rho_path is not None:
        return load_rho(rho_path, model.dim)
    if model.rho is not None:
        return DensityMatrix(model.rho.to_array())

    logger.info("🔍 No state given; solving for the invariant state")
    states = invariant_states(gen)
    if kernel_dimension(gen) == 1 and len(states) == 1 and states[0].is_faithful:
        return states[0]
    candidates = [{"eigenvalues": s.eigenvalues.tolist(), "faithful": s.is_faithful} for s in states]
    raise CommandError(EXIT_INVALID, f"No unique faithful invariant state; pass --rho. Candidates: "
                                     f"{json.dumps(candidates)}")


def _prepared(args) -> tuple:
    model = load_model(args.model)
    gen = generator_from(model)
    rho = resolve_state(gen, model, args.rho)
    inputs = [args.model] + ([args.rho] if args.rho else [])
    return make_special(gen, rho), rho, inputs


def cmd_validate(args, analyzer: SemigroupAnalyzer) -> Dict[str, Any]:
    model = load_model(args.model)
    raw_H = model.hamiltonian()
    gen = generator_from(model)
    n = gen.dim
    tol = analyzer.tol
    report = _base_report("validate", [args.model], analyzer)

    units = [matrix_unit(n, j, k) for j in range(n) for k in range(n)]
    residuals = {
        "hermiticity": opnorm(raw_H - raw_H.conj().T),
        "unitality": opnorm(apply_L(gen, np.eye(n))),
        "trace_preservation": max(abs(np.trace(apply_Lstar(gen, E))) for E in units),
    }
    verdicts = {}
    if model.rho is not None:
        rho = DensityMatrix(model.rho.to_array())
        residuals["invariance"] = lindblad_residual(gen, rho)
        verdicts["rho_faithful"] = _verdict(rho.is_faithful, analyzer.rel_tol)
        verdicts["rho_invariant"] = _verdict(residuals["invariance"] <= tol * gen.rate_scale, tol)
        verdicts["special_form"] = _verdict(is_special(gen, rho), tol)
    report.update(values={"dim": n, "num_jumps": gen.num_jumps}, residuals=residuals, verdicts=verdicts)
    logger.info(f"✅ Model {args.model} is a valid {n}-level generator with {gen.num_jumps} jumps")
    return report


def cmd_invariant(args, analyzer: SemigroupAnalyzer) -> Dict[str, Any]:
    model = load_model(args.model)
    gen = generator_from(model)
    states = invariant_states(gen)
    dimension = kernel_dimension(gen)
    report = _base_report("invariant", [args.model], analyzer)
    report.update(
        values={"kernel_dimension": dimension,
                "states": [{"rho": s.mat, "eigenvalues": s.eigenvalues.tolist(), "faithful": s.is_faithful}
                           for s in states]},
        verdicts={"unique": _verdict(dimension == 1, analyzer.rel_tol)},
        residuals={"invariance": [lindblad_residual(gen, s) for s in states]},
    )
    return report


def _time_grid(text: str) -> List[float]:
    try:
        times = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Expected comma-separated times, got {text!r}")
    if not times or any(t <= 0 for t in times):
        raise argparse.ArgumentTypeError("Limit-check times must be positive")
    return times


def cmd_ep(args, analyzer: SemigroupAnalyzer) -> Dict[str, Any]:
    gen, rho, inputs = _prepared(args)
    ep = analyzer.entropy_production(gen, rho)
    report = _base_report("ep", inputs, analyzer)
    report.update(
        values={"ep": ep.value},
        verdicts={"phi_supports_equal": _verdict(ep.support_diagnosis["spans_equal"], analyzer.rel_tol),
                  "equal_two_point_supports": _verdict(bool(ep.fbs and ep.fbs["holds"]), ep.tolerance)},
        residuals={"phi_support": ep.support_diagnosis.get("residual", 0.0)},
        details={"support_diagnosis": ep.support_diagnosis, "formula_terms": ep.formula_terms,
                 "fbs": ep.fbs, "fbs_method": ep.fbs_method, "special_form": ep.special_form},
    )
    if args.limit_check:
        samples = analyzer.limit_trace(gen, rho, args.limit_check)
        frame = pd.DataFrame([sample.model_dump() for sample in samples], columns=["t", "S", "S_over_t"])
        report["limit_trace"] = samples
        report["limit_trace_csv"] = frame.to_csv(index=False).strip().splitlines()
        if args.csv:
            frame.to_csv(args.csv, index=False)
            logger.info(f"💾 Limit trace written to {args.csv}")
    logger.info(f"✅ Entropy production: {ep.value}")
    return report


def cmd_balance(args, analyzer: SemigroupAnalyzer) -> Dict[str, Any]:
    gen, rho, inputs = _prepared(args)
    balance = analyzer.balance(gen, rho)
    tol = balance.tolerance
    report = _base_report("balance", inputs, analyzer)
    report.update(
        verdicts={"sqdb": _verdict(balance.sqdb_holds, tol),
                  "sqdb_theta": _verdict(balance.sqdb_theta_holds, tol),
                  "g_theta_invariant": _verdict(balance.g_theta_invariant, tol),
                  "g_commutes_with_rho": _verdict(balance.g_commutes_with_rho, tol)},
        values={"u": balance.u, "u_theta": balance.u_theta, "K": balance.K},
        residuals={"jump": balance.residual_jump, "unitary": balance.residual_unitary,
                   "symmetric": balance.residual_symmetric, "jump_theta": balance.residual_jump_theta,
                   "unitary_theta": balance.residual_unitary_theta,
                   "selfadjoint": balance.residual_selfadjoint,
                   "g_condition": balance.g_condition_residual,
                   "derivation": balance.derivation_residual,
                   "K_rho_commutator": balance.K_rho_commutator},
    )
    return report


def cmd_support(args, analyzer: SemigroupAnalyzer) -> Dict[str, Any]:
    gen, rho, inputs = _prepared(args)
    support = analyzer.support(gen, rho)
    span_holds, span_dims = support["hs_span_condition"], support["span_dims"]
    diagnosis, fbs = support["phi_support"], support["fbs"]
    report = _base_report("support", inputs, analyzer)
    report.update(
        verdicts={"hs_span_condition": _verdict(span_holds, analyzer.rel_tol),
                  "phi_supports_equal": _verdict(diagnosis["spans_equal"], analyzer.rel_tol),
                  "equal_two_point_supports": _verdict(fbs["holds"], analyzer.tol)},
        values={"fbs_method": fbs["method"], "span_dims": span_dims, "phi_support": diagnosis},
        details={"fbs": fbs},
    )
    return report


def _floats(text: Optional[str]) -> Optional[List[float]]:
    if text is None:
        return None
    return [float(part) for part in text.split(",") if part.strip()]


def cmd_gen(args, analyzer: SemigroupAnalyzer) -> Dict[str, Any]:
    metadata = {"kind": args.kind}
    if args.kind == "cycle":
        spec = CycleSpec(n=args.n, lam=args.lam, mu=args.mu, h_diag=_floats(args.h))
        gen, rho = cycle_model(spec)
        metadata.update(n=str(spec.n), lam=repr(spec.lam), mu=repr(spec.mu))
    elif args.kind == "generic":
        try:
            gamma = json.loads(args.gamma)
        except json.JSONDecodeError as e:
            raise CommandError(EXIT_INVALID, f"--gamma is not valid JSON: {e.msg}")
        if not isinstance(gamma, list):
            raise CommandError(EXIT_INVALID, "--gamma must be a JSON array of rows")
        spec = GenericSpec(n=len(gamma), gamma=gamma, h_diag=_floats(args.h))
        gen = generic_model(spec)
        rho = generic_invariant_state(spec)
        if not rho.is_faithful:
            logger.warning("⚠️ Chain has transient states; writing the model without rho")
            rho = None
        metadata.update(gamma=json.dumps(gamma))
    else:
        gen, rho = two_level_model(args.kappa)
        metadata.update(kappa=repr(args.kappa))

    model = ModelFile(dim=gen.dim, H=MatrixObject.from_array(gen.H),
                      L=[MatrixObject.from_array(L) for L in gen.jumps],
                      rho=MatrixObject.from_array(rho.mat) if rho is not None else None,
                      metadata=metadata)
    out = Path(args.out)
    out.write_text(json.dumps(model.model_dump(exclude_none=True), indent=2, sort_keys=True), encoding="utf-8")
    logger.info(f"💾 Model written to {out}")
    report = _base_report("gen", [out], analyzer)
    report.update(values={"kind": args.kind, "out": str(out), "dim": gen.dim, "num_jumps": gen.num_jumps})
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmsep", description="Entropy production and detailed balance "
                                                               "for finite quantum Markov semigroups")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
                        default=None, help="overrides QMSEP_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def model_command(name: str, handler: Callable, help_text: str, with_rho: bool = True):
        command = sub.add_parser(name, help=help_text)
        command.add_argument("model", type=Path, help="model JSON file")
        if with_rho:
            command.add_argument("--rho", type=Path, default=None, help="state JSON file")
        command.set_defaults(handler=handler)
        return command

    model_command("validate", cmd_validate, "check a model file", with_rho=False)
    model_command("invariant", cmd_invariant, "list invariant states", with_rho=False)
    ep = model_command("ep", cmd_ep, "entropy production")
    ep.add_argument("--limit-check", type=_time_grid, default=None,
                    help="comma-separated times for S(t)/t samples")
    ep.add_argument("--csv", type=Path, default=None, help="write the limit trace as CSV")
    model_command("balance", cmd_balance, "detailed-balance checks")
    model_command("support", cmd_support, "support conditions")

    gen = sub.add_parser("gen", help="write an example model file")
    gen.set_defaults(handler=cmd_gen)
    kinds = gen.add_subparsers(dest="kind", required=True)
    cycle = kinds.add_parser("cycle")
    cycle.add_argument("--n", type=int, required=True)
    cycle.add_argument("--lam", type=float, required=True)
    cycle.add_argument("--mu", type=float, required=True)
    cycle.add_argument("--h", default=None, help="comma-separated Hamiltonian diagonal")
    generic = kinds.add_parser("generic")
    generic.add_argument("--gamma", required=True, help="rate matrix as JSON, e.g. [[0,1],[2,0]]")
    generic.add_argument("--h", default=None, help="comma-separated Hamiltonian diagonal")
    twolevel = kinds.add_parser("twolevel")
    twolevel.add_argument("--kappa", type=float, required=True)
    for kind in (cycle, generic, twolevel):
        kind.add_argument("--out", type=Path, required=True)
    return parser


def _failure(exit_code: int, detail: str) -> int:
    logger.error(f"❌ {detail}")
    print(dumps({"success": False, "exit_code": exit_code, "error": detail}))
    return exit_code


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level or settings.log_level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    logger.info(f"🚀 Running {args.command}")
    try:
        analyzer = SemigroupAnalyzer()
        report = args.handler(args, analyzer)
    except CommandError as e:
        return _failure(e.exit_code, e.detail)
    except NumericalInconsistencyError as e:
        return _failure(EXIT_NUMERICAL, str(e))
    except (ValueError, OSError) as e:
        return _failure(EXIT_INVALID, str(e))
    print(dumps(report))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
