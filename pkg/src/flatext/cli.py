"""Command-line interface: validate | check-flat | extend | atoms | represent | gen | verify.

Exit codes: 0 success, 2 not flat, 3 hypothesis or certificate failure,
4 input error.  A JSON report is written for codes 0, 2 and 3 (and, when
possible, for 4 as well).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from scipy.linalg import cholesky

from . import __version__
from .algebra import NCPolynomial, heisenberg, su2
from .datasets import PRESET_REPS, preset
from .exceptions import FlatExtError, HypothesisError, InputError, NotFlat, ParseError, ValidationError
from .extension import (
    certificates,
    extend,
    extended_functional,
    gns_representation,
    kernel_ideal_residual,
    uniqueness_check,
)
from .filtration import build_truncated_basis, check_hypotheses
from .hankel import PSD_TOL, build_hankel, is_flat
from .io import format_polynomial, parse_problem, problem_from_functional, write_problem, write_report
from .solvers import (
    extract_atoms_commutative,
    generic_representation,
    solve_cylinder,
    solve_enveloping,
    solve_matrix_poly,
    vector_functional,
)

log = logging.getLogger("flatext")

EXIT_OK, EXIT_NOT_FLAT, EXIT_HYPOTHESIS, EXIT_INPUT = 0, 2, 3, 4
DEFAULT_RESIDUAL = 1e-8


class CertificateFailure(FlatExtError):
    def __init__(self, failed):
        self.failed = failed
        super().__init__("certificate checks failed: " + ", ".join(failed))


def _setup_logging():
    level = os.environ.get("FLATEXT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _encode_matrix(M):
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(M)]


# -- pipeline stages -------------------------------------------------------

def _tolerances(problem, args):
    tol = dict(problem.tolerances)
    if args.tol_rank is not None:
        tol["rank"] = args.tol_rank
    return tol.get("rank"), tol.get("psd", PSD_TOL), tol.get("residual", DEFAULT_RESIDUAL)


def _load(problem):
    pres = problem.presentation()
    chain = problem.chain(pres)
    return chain, problem.functional(chain)


def _gate_hypotheses(chain, report):
    hyp = check_hypotheses(chain)
    report["hypotheses"] = hyp.to_dict()
    if not hyp.passed:
        raise HypothesisError("truncation violates the hypotheses: " + ", ".join(hyp.failures()), hyp)


def _flatness(problem, args, report):
    rank_tol, psd, _ = _tolerances(problem, args)
    if problem.is_matrix:
        H = problem.hankel_matrix()
    else:
        chain, L = _load(problem)
        _gate_hypotheses(chain, report)
        H = build_hankel(L)
    cert = is_flat(H, rank_tol, psd)
    report["flatness"] = cert.to_dict()
    if not cert.is_flat:
        raise NotFlat(cert)
    return cert


def _run_extend(problem, args, report):
    if problem.is_matrix:
        raise InputError("extension needs an algebra problem, not a bare block matrix")
    rank_tol, psd, resid = _tolerances(problem, args)
    chain, L = _load(problem)
    _gate_hypotheses(chain, report)
    try:
        result = extend(L, rank_tol, psd)
    except NotFlat as exc:
        report["flatness"] = exc.certificate.to_dict()
        raise
    report["flatness"] = result.certificate.to_dict()
    certs = certificates(result)
    report["extension"] = certs
    report["kernel_generators"] = [format_polynomial(p, chain.pres, 1e-12) for p in result.kernel_polys()]
    failed = [
        k for k in ("relation_residual", "adjoint_residual", "projection_identity_residual",
                    "kernel_generator_residual", "extension_agreement")
        if certs[k] > resid
    ]
    report["certificates_passed"] = not failed
    return result, failed


def _finish(failed):
    if failed:
        raise CertificateFailure(failed)


def cmd_validate(problem, args, report):
    if problem.is_matrix:
        H = problem.hankel_matrix()
        report["validation"] = {"kind": "hankel", "dim": H.dim, "b_size": H.b_size}
        return
    chain, L = _load(problem)
    report["validation"] = {
        "kind": chain.pres.kind,
        "dim_B": chain.b_size,
        "dim_C": chain.dim,
        "n_moments": len(L.values),
        "hermitian_defect": L.hermitian_defect(),
    }
    _gate_hypotheses(chain, report)


def cmd_check_flat(problem, args, report):
    _flatness(problem, args, report)


def cmd_extend(problem, args, report):
    result, failed = _run_extend(problem, args, report)
    report["bprime"] = certificate_labels(result)
    report["operators"] = [_encode_matrix(X) for X in result.ops.X]
    _finish(failed)


def certificate_labels(result):
    return [format_polynomial(p, result.pres, 1e-14) for p in result.prime_polys()]


def cmd_atoms(problem, args, report):
    result, failed = _run_extend(problem, args, report)
    pres = result.pres
    if getattr(pres, "cylinder", False):
        measure = solve_cylinder(result, args.seed)
        report["marginal"] = measure.marginal.to_dict()
    elif pres.kind == "commutative" or (pres.kind == "lie" and pres.is_commutative):
        measure = extract_atoms_commutative(result, args.seed)
    else:
        raise InputError(f"atoms needs a commutative or cylinder algebra, got {pres.kind}")
    report["measure"] = measure.to_dict()
    _, _, resid = _tolerances(problem, args)
    if measure.certificate.get("reproduction_error", 0.0) > resid:
        failed.append("reproduction_error")
    _finish(failed)


def cmd_represent(problem, args, report):
    result, failed = _run_extend(problem, args, report)
    pres = result.pres
    _, _, resid = _tolerances(problem, args)
    if pres.kind == "matrix_poly":
        sol = solve_matrix_poly(result, args.seed)
        report["decomposition"] = sol.to_dict()
        if sol.certificate["reproduction_error"] > resid:
            failed.append("reproduction_error")
    elif pres.kind == "lie":
        sol = solve_enveloping(result)
        report["package"] = sol.to_dict()
        for k in ("commutator_residual", "moment_residual"):
            if sol.certificate[k] > resid:
                failed.append(k)
    else:
        mats, frame = generic_representation(result)
        report["representation"] = {
            "frame": frame,
            "generators": {pres.gens.names[i]: _encode_matrix(M) for i, M in enumerate(mats)},
        }
    _finish(failed)


def _random_polys(pres, rng, n, degree):
    words = pres.truncation_words(degree)
    out = []
    for _ in range(n):
        idx = rng.choice(len(words), size=min(3, len(words)), replace=False)
        coef = rng.standard_normal(len(idx)) + 1j * rng.standard_normal(len(idx))
        p = NCPolynomial.zero()
        for c, i in zip(coef, idx):
            p = p + NCPolynomial.word(words[i], c)
        out.append(p)
    return out


def verify_result(result, seed=0, n_pairs=50, residual=DEFAULT_RESIDUAL):
    """Invariant suite on one extension: uniqueness, positivity transfer, representation laws, kernel ideal."""
    rng = np.random.default_rng(seed)
    pres, chain = result.pres, result.chain
    out = {}
    # uniqueness under the reversed pivot order
    order = list(range(chain.b_size))[::-1]
    other = extend(result.functional, result.certificate.tol, order=order)
    out["uniqueness"] = uniqueness_check(result, other)
    # positivity transfer on A_{m+2}
    if result.certificate.is_positive and not result.is_zero:
        m = chain.m or 0
        cap = None if chain.y_cap is None else chain.y_cap + 1
        big = build_truncated_basis(pres, m + 1, y_cap=cap)
        H = build_hankel(extended_functional(result, big))
        lmin = float(np.linalg.eigvalsh(H.G).min())
        out["positivity"] = {"min_eigenvalue": lmin, "gram_norm": H.norm,
                             "passed": lmin >= -1e-9 * max(H.norm, 1e-300)}
    # representation laws
    r = result.dim
    a_list = _random_polys(pres, rng, n_pairs, 3)
    b_list = _random_polys(pres, rng, n_pairs, 3)
    mult, mult_raw, adj = 0.0, 0.0, 0.0
    gram = result.prime.gram
    # operator norms are taken in the GNS inner product <a, b> = L~(b* a); raw
    # B′ coordinates are not orthonormal and inflate residuals by cond(gram)
    try:
        R = cholesky(gram, lower=False) if r else np.zeros((0, 0))
        Rinv = np.linalg.inv(R)
    except np.linalg.LinAlgError:
        R = Rinv = np.eye(r)
    for a, b in zip(a_list, b_list):
        ra, rb = gns_representation(a, result), gns_representation(b, result)
        rab = gns_representation(pres.multiply(a, b), result)
        if r:
            defect = rab - ra @ rb
            mult = max(mult, float(np.linalg.norm(R @ defect @ Rinv, 2)))
            mult_raw = max(mult_raw, float(np.linalg.norm(defect, 2)))
        ras = gns_representation(pres.star(a), result)
        if r:
            adj = max(adj, float(np.linalg.norm(gram @ ra - ras.conj().T @ gram, 2))
                      / max(float(np.linalg.norm(gram, 2)), 1e-300))
    unit = gns_representation(NCPolynomial.one(), result)
    out["representation"] = {
        "unit_exact": bool(np.array_equal(unit, np.eye(r))),
        "multiplicativity": mult,
        "multiplicativity_bprime_coordinates": mult_raw,
        "adjointness": adj,
        "passed": bool(np.array_equal(unit, np.eye(r))) and mult <= 1e-10 and adj <= 1e-9,
    }
    kern = kernel_ideal_residual(result, a_list[:20])
    out["kernel_ideal"] = {"max_abs": kern, "passed": kern <= 1e-8}
    out["certificates"] = certificates(result)
    out["passed"] = all(v.get("passed", True) for v in out.values() if isinstance(v, dict) and "passed" in v)
    return out


def cmd_verify(problem, args, report):
    result, failed = _run_extend(problem, args, report)
    report["verify"] = verify_result(result, args.seed)
    if not report["verify"]["passed"]:
        failed.append("invariants")
    _finish(failed)


COMMANDS = {
    "validate": cmd_validate,
    "check-flat": cmd_check_flat,
    "extend": cmd_extend,
    "atoms": cmd_atoms,
    "represent": cmd_represent,
    "verify": cmd_verify,
}


def run_one(command, path, args):
    """Run one problem file; returns (exit code, report dict)."""
    report = {"command": command, "input": Path(path).name, "seed": args.seed, "version": __version__}
    try:
        problem = parse_problem(path)
        COMMANDS[command](problem, args, report)
        report["status"] = "ok"
        code = EXIT_OK
    except NotFlat as exc:
        report["status"] = "not_flat"
        report["flatness"] = exc.certificate.to_dict()
        report["reason"] = f"not flat: rank gap {exc.certificate.rank_gap}"
        code = EXIT_NOT_FLAT
    except HypothesisError as exc:
        report["status"] = "hypothesis_failure"
        report["reason"] = str(exc)
        if getattr(exc, "report", None) is not None:
            report["hypotheses"] = exc.report.to_dict()
        code = EXIT_HYPOTHESIS
    except CertificateFailure as exc:
        report["status"] = "certificate_failure"
        report["reason"] = str(exc)
        code = EXIT_HYPOTHESIS
    except (InputError, ParseError, ValidationError) as exc:
        report["status"] = "input_error"
        report["reason"] = str(exc)
        report["error"] = _error_details(exc)
        code = EXIT_INPUT
    except FlatExtError as exc:
        report["status"] = "certificate_failure"
        report["reason"] = f"{type(exc).__name__}: {exc}"
        code = EXIT_HYPOTHESIS
    return code, report


def _error_details(exc):
    out = {"type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ParseError):
        out.update(line=exc.line, column=exc.column)
    if isinstance(exc, ValidationError):
        out["path"] = list(exc.path)
    return out


def _output_for(args, path, many):
    if not many:
        return args.output
    out = Path(args.output or ".")
    out.mkdir(parents=True, exist_ok=True)
    return str(out / (Path(path).stem + ".report.json"))


def _run_files(args):
    paths = args.input
    many = len(paths) > 1

    def job(path):
        code, report = run_one(args.command, path, args)
        write_report(report, _output_for(args, path, many))
        if code:
            print(f"{path}: {report.get('reason', report['status'])}", file=sys.stderr)
        return code

    if many and args.jobs > 1:
        with ThreadPoolExecutor(args.jobs) as pool:
            codes = list(pool.map(job, paths))
    else:
        codes = [job(p) for p in paths]
    return max(codes)


def cmd_gen(args):
    rng = np.random.default_rng(args.seed)
    try:
        pres, mats, v, m, y_cap = preset(args.rep, args.kind, rng)
        if args.m is not None:
            m = args.m
        chain = build_truncated_basis(pres, m, y_cap=y_cap)
        L = vector_functional(mats, v, chain)
    except FlatExtError as exc:
        print(f"gen: {exc}", file=sys.stderr)
        write_report({"command": "gen", "status": "input_error", "reason": str(exc),
                      "error": _error_details(exc)}, None if args.output is None else args.output + ".error.json")
        return EXIT_INPUT
    algebra = _algebra_spec(pres)
    trunc = {"m": m} if y_cap is None else {"m": m, "y_cap": y_cap}
    tol = {"rank": args.tol_rank} if args.tol_rank is not None else {}
    problem = problem_from_functional(L, algebra, trunc, tol)
    write_problem(problem, args.output)
    return EXIT_OK


def _algebra_spec(pres):
    if pres.kind == "commutative":
        return {"kind": "cylinder" if pres.cylinder else "commutative", "d": pres.d}
    if pres.kind == "matrix_poly":
        return {"kind": "matrix_poly", "n": pres.n, "d": pres.d}
    if pres.kind == "lie":
        for name, ref in (("su2", su2()), ("heisenberg", heisenberg())):
            if np.array_equal(ref.structure_constants, pres.structure_constants):
                return {"kind": "lie", "preset": name}
        return {"kind": "lie", "structure_constants": pres.structure_constants.tolist()}
    raise InputError(f"cannot serialize algebra kind {pres.kind}")


def build_parser():
    p = argparse.ArgumentParser(prog="flatext", description="Flat extensions of truncated hermitian functionals.")
    p.add_argument("--version", action="version", version=f"flatext {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--input", "-i", nargs="+", required=True, help="problem file(s)")
        s.add_argument("--output", "-o", help="report path (directory when several inputs); default stdout")
        s.add_argument("--tol-rank", type=float, default=None, help="relative rank threshold")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--jobs", type=int, default=1, help="process several inputs concurrently")
    g = sub.add_parser("gen", help="write a vector-functional problem file")
    g.add_argument("--rep", choices=PRESET_REPS, required=True)
    g.add_argument("--kind", choices=["commutative", "cylinder", "matrix_poly", "lie", "su2", "heisenberg"])
    g.add_argument("--m", type=int, default=None, help="truncation degree (default: smallest flat)")
    g.add_argument("--output", "-o", required=True)
    g.add_argument("--tol-rank", type=float, default=None)
    g.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.command == "gen":
        return cmd_gen(args)
    if args.jobs < 1:
        print("--jobs must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    return _run_files(args)


if __name__ == "__main__":
    sys.exit(main())
