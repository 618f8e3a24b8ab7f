"""Problem files, word notation and JSON reports."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import jsonschema
import numpy as np

from . import algebra as alg
from .algebra import NCPolynomial, word_involution
from .exceptions import InputError, ParseError, ValidationError
from .filtration import build_truncated_basis, chain_from_words
from .hankel import HankelMatrix, TruncatedFunctional

HERMITIAN_PAIR_TOL = 1e-12

_TOKEN = re.compile(r"^([A-Za-z][A-Za-z0-9_]*?)(?:\^(\d+))?$")
_EXPONENT = re.compile(r"(?:^|[^A-Za-z0-9_])[0-9.]+[eE]$")


# -- word notation ---------------------------------------------------------

def _letter(name, pres):
    """Generator index and scalar for a letter; lie files may use ``y_j = -i x_j``."""
    names = pres.gens.names
    if name in names:
        return names.index(name), 1.0
    if pres.kind == "lie" and name.startswith("y"):
        alias = "x" + name[1:]
        if alias in names:
            return names.index(alias), -1j
    raise ParseError(f"unknown generator {name!r}")


def parse_word(text, pres):
    """``"x1^2*x2"`` -> ``((0, 0, 1), coef)``; ``"1"`` is the empty word.

    ``coef`` is 1 except for lie y-aliases, where each ``y_j`` contributes ``-i``.
    """
    text = text.strip()
    if text in ("1", ""):
        return (), 1.0
    word, coef = [], 1.0
    for tok in text.split("*"):
        tok = tok.strip()
        hit = _TOKEN.match(tok)
        if not hit:
            raise ParseError(f"malformed word token {tok!r} in {text!r}")
        letter, scale = _letter(hit.group(1), pres)
        power = int(hit.group(2) or 1)
        if power < 1:
            raise ParseError(f"exponent must be positive in {tok!r}")
        word += [letter] * power
        coef = coef * scale**power
    return tuple(word), coef


def format_word(w, pres):
    return pres.format_word(tuple(w))


def _parse_scalar(text):
    t = text.strip().replace(" ", "")
    if t.startswith("(") and t.endswith(")"):
        t = t[1:-1]
    if t in ("i", "j"):
        return 1j
    try:
        return complex(t.replace("i", "j"))
    except ValueError:
        raise ParseError(f"malformed coefficient {text!r}") from None


def _split_terms(text):
    """Split on top-level + and - (not inside parentheses or exponents)."""
    terms, depth, cur, sign = [], 0, "", 1
    prev = ""
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        exponent = _EXPONENT.search(cur.rstrip()) is not None
        if ch in "+-" and depth == 0 and prev not in ("^", "*", "") and not exponent:
            if cur.strip():
                terms.append((sign, cur))
            sign, cur = (1 if ch == "+" else -1), ""
        elif ch in "+-" and depth == 0 and prev == "" and not cur.strip():
            sign = 1 if ch == "+" else -1
        else:
            cur += ch
        if not ch.isspace():
            prev = ch
    if cur.strip():
        terms.append((sign, cur))
    return terms


def parse_polynomial(text, pres, reduce=True):
    """Parse ``"2*x1^2 - (0.5+1j)*x2 + 3"``; the result is in normal form unless ``reduce=False``."""
    if not text.strip():
        raise ParseError("empty polynomial")
    out = NCPolynomial.zero()
    for sign, body in _split_terms(text):
        factors = [f.strip() for f in body.split("*")]
        coef, letters = 1.0 * sign, []
        for f in factors:
            if _TOKEN.match(f) and not (f in ("i", "j") and f not in pres.gens.names):
                letters.append(f)
            else:
                coef = coef * _parse_scalar(f)
        w, c = parse_word("*".join(letters), pres) if letters else ((), 1.0)
        out = out + NCPolynomial.word(w, coef * c)
    return pres.normal_form(out) if reduce else out


def format_polynomial(p, pres, atol=0.0):
    parts = []
    for w, c in sorted(p.items(), key=lambda t: (len(t[0]), t[0])):
        if abs(c) <= atol:
            continue
        parts.append(f"({c.real:.12g}{c.imag:+.12g}j)*{pres.format_word(w)}")
    return " + ".join(parts) if parts else "0"


# -- problem files ---------------------------------------------------------

@lru_cache(maxsize=1)
def problem_schema():
    text = resources.files("flatext").joinpath("data/problem.schema.json").read_text("utf-8")
    return json.loads(text)


def _load_json(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None


def _validate_schema(doc):
    validator = jsonschema.Draft202012Validator(problem_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ValidationError(err.message, err.absolute_path)


def _complex_matrix(rows):
    return np.array([[complex(*x) if isinstance(x, list) else complex(x) for x in row] for row in rows])


@dataclass
class ProblemFile:
    """Parsed and validated problem: algebra, truncation, moments (word text -> value), tolerances."""

    algebra: dict = field(default_factory=dict)
    truncation: dict = field(default_factory=dict)
    moments: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    hankel: dict | None = None

    @property
    def is_matrix(self):
        return self.hankel is not None

    def presentation(self):
        return build_presentation(self.algebra)

    def chain(self, pres=None):
        pres = pres or self.presentation()
        t = self.truncation
        basis = t.get("basis")
        if basis:
            b = [_normal_word(s, pres, ("truncation", "basis", "B")) for s in basis["B"]]
            c = [_normal_word(s, pres, ("truncation", "basis", "C")) for s in basis["C"]]
            return chain_from_words(pres, b, c, m=t["m"], y_cap=t.get("y_cap"))
        try:
            return build_truncated_basis(pres, t["m"], y_cap=t.get("y_cap"))
        except InputError as exc:
            raise ValidationError(str(exc), ("truncation",)) from None

    def functional(self, chain=None):
        chain = chain or self.chain()
        return moments_to_functional(self.moments, chain)

    def hankel_matrix(self):
        X = _complex_matrix(self.hankel["matrix"])
        if X.ndim != 2 or X.shape[0] != X.shape[1]:
            raise ValidationError("matrix must be square", ("hankel", "matrix"))
        if not 0 <= self.hankel["b_size"] <= X.shape[0]:
            raise ValidationError("b_size exceeds the matrix size", ("hankel", "b_size"))
        if np.linalg.norm(X - X.conj().T) > 1e-8 * max(1.0, np.linalg.norm(X)):
            raise ValidationError("matrix is not hermitian", ("hankel", "matrix"))
        return HankelMatrix.from_matrix((X + X.conj().T) / 2, self.hankel["b_size"])

    def to_dict(self):
        if self.is_matrix:
            out = {"hankel": self.hankel}
        else:
            out = {
                "algebra": self.algebra,
                "truncation": self.truncation,
                "moments": [{"word": w, "re": v.real, "im": v.imag} for w, v in self.moments],
            }
        if self.tolerances:
            out["tolerances"] = self.tolerances
        return out


def build_presentation(spec):
    kind = spec["kind"]
    path = ("algebra",)
    if kind != "free_with_relations" and spec.get("custom_relations"):
        raise ValidationError("custom_relations are only supported for kind free_with_relations", path)
    try:
        if kind in ("commutative", "cylinder"):
            if "d" not in spec:
                raise ValidationError("missing d", path)
            return alg.commutative(spec["d"], cylinder=kind == "cylinder")
        if kind == "matrix_poly":
            if "n" not in spec:
                raise ValidationError("missing n", path)
            return alg.matrix_poly(spec["n"], spec.get("d", 0))
        if kind == "lie":
            if spec.get("preset") == "su2":
                return alg.su2()
            if spec.get("preset") == "heisenberg":
                return alg.heisenberg()
            if "structure_constants" not in spec:
                raise ValidationError("lie algebras need a preset or structure_constants", path)
            return alg.lie(np.array(spec["structure_constants"], dtype=float))
        names = spec.get("generators")
        if not names:
            raise ValidationError("free_with_relations needs generators", path)
        bare = alg.free_with_relations(names, {}, spec.get("involution"))
        rules = {}
        for k, rel in enumerate(spec.get("custom_relations", [])):
            lhs = parse_polynomial(rel["lhs"], bare, reduce=False)
            if len(lhs) != 1 or next(iter(lhs.items()))[1] != 1:
                raise ValidationError("rule left side must be a single word", path + ("custom_relations", k))
            rules[next(iter(lhs.words()))] = parse_polynomial(rel["rhs"], bare, reduce=False)
        return alg.free_with_relations(names, rules, spec.get("involution"))
    except ValidationError:
        raise
    except (InputError, ValueError) as exc:
        raise ValidationError(str(exc), path) from None


def _normal_word(text, pres, path):
    try:
        w, c = parse_word(text, pres)
    except ParseError as exc:
        raise ValidationError(str(exc), path) from None
    if c != 1 or pres.reduce_word(w) != {w: 1.0}:
        raise ValidationError(f"basis word {text!r} is not a normal-form monomial", path)
    return w


def moments_to_functional(moments, chain):
    """TruncatedFunctional on C² from ``[(word text, value)]``.

    Words must be normal-form monomials of C².  A missing word whose adjoint is
    a listed single word is filled in by hermitian symmetry.
    """
    pres = chain.pres
    need = set(chain.square_words())
    values, text_of = {}, {}
    for k, (text, v) in enumerate(moments):
        path = ("moments", k, "word")
        try:
            w, c = parse_word(text, pres)
        except ParseError as exc:
            raise ValidationError(str(exc), path) from None
        if pres.reduce_word(w) != {w: 1.0}:
            raise ValidationError(f"{text!r} is not in normal form", path)
        if w not in need:
            raise ValidationError(f"{text!r} is not a basis word of C²", path)
        if w in values:
            raise ValidationError(f"duplicate moment for {text!r}", path)
        values[w] = complex(v) / c
        text_of[w] = text
    scale = max([1.0] + [abs(v) for v in values.values()])
    for w, v in list(values.items()):
        adj = pres.reduce_word(word_involution(w, pres.gens))
        if len(adj) != 1:
            continue
        (u, c), = adj.items()
        if u in values:
            if abs(c * values[u] - np.conj(v)) > HERMITIAN_PAIR_TOL * scale:
                raise ValidationError(
                    f"moments of {text_of[w]!r} and its adjoint {text_of[u]!r} are not conjugate",
                    ("moments",),
                )
        elif u in need:
            values[u] = np.conj(v) / c
    return TruncatedFunctional(values, chain)


def problem_from_dict(doc):
    _validate_schema(doc)
    tol = dict(doc.get("tolerances", {}))
    if "hankel" in doc:
        return ProblemFile(hankel=doc["hankel"], tolerances=tol)
    moments = [(m["word"], complex(m["re"], m.get("im", 0.0))) for m in doc["moments"]]
    prob = ProblemFile(dict(doc["algebra"]), dict(doc["truncation"]), moments, tol)
    return prob


def parse_problem(path):
    """Read and strictly validate a problem file; ParseError carries line and column."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise ParseError(f"file is not UTF-8: {exc.reason}") from None
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    prob = problem_from_dict(_load_json(text))
    if not prob.is_matrix:
        prob.functional()  # moment words must parse and be consistent
    else:
        prob.hankel_matrix()
    return prob


def problem_from_functional(L, algebra, truncation, tolerances=None):
    pres = L.pres
    moments = [(pres.format_word(w), complex(v)) for w, v in sorted(L.values.items(), key=lambda t: (len(t[0]), t[0]))]
    return ProblemFile(dict(algebra), dict(truncation), moments, dict(tolerances or {}))


def write_problem(problem, path):
    _write_json(problem.to_dict(), path)


# -- reports ---------------------------------------------------------------

def to_jsonable(obj):
    """numpy / complex aware conversion; complex -> [re, im], non-finite floats -> strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(float(obj.real)), to_jsonable(float(obj.imag))]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
        return x
    return obj


def _write_json(doc, path):
    text = json.dumps(to_jsonable(doc), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if path in (None, "-"):
        print(text, end="")
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def write_report(report, path):
    """Deterministic JSON (sorted keys, no timestamps)."""
    _write_json(report, path)


__all__ = [
    "ProblemFile",
    "build_presentation",
    "format_polynomial",
    "format_word",
    "moments_to_functional",
    "parse_polynomial",
    "parse_problem",
    "parse_word",
    "problem_from_dict",
    "problem_from_functional",
    "problem_schema",
    "to_jsonable",
    "write_problem",
    "write_report",
]
