"""Candidate-function libraries.

A library is an ordered list of terms. Each term is a product of factors drawn
from a small closed set (state powers, sin/cos of integer combinations of the
states, sign, a first-derivative channel, an exogenous input). Column order of
the evaluated matrix follows term order and is part of a model's identity.

Text form (one statement per ';' or newline)::

    states(th1, th2, w1, w2); inputs(tau)
    1; x; x^2*y; sin(th1-th2)*w2^2; dstate(w1)*cos(th1-th2); sign(p); input(tau)
    poly(3, deg=3)
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgument, LibrarySyntaxError


# --------------------------------------------------------------------------- factors


@dataclass(frozen=True)
class Power:
    var: int
    exp: int


@dataclass(frozen=True)
class Trig:
    func: str  # "sin" | "cos"
    coeffs: tuple[int, ...]  # integer weights over states


@dataclass(frozen=True)
class Sign:
    var: int
    of_deriv: bool = False


@dataclass(frozen=True)
class Deriv:
    var: int


@dataclass(frozen=True)
class Input:
    index: int


Factor = Power | Trig | Sign | Deriv | Input


def _lincomb_label(coeffs: Sequence[int], names: Sequence[str]) -> str:
    out = ""
    for c, name in zip(coeffs, names):
        if c == 0:
            continue
        mag = abs(c)
        piece = name if mag == 1 else f"{mag}*{name}"
        if not out:
            out = piece if c > 0 else "-" + piece
        else:
            out += ("+" if c > 0 else "-") + piece
    return out or "0"


def _factor_label(f: Factor, names: Sequence[str], inputs: Sequence[str]) -> str:
    if isinstance(f, Power):
        return names[f.var] if f.exp == 1 else f"{names[f.var]}^{f.exp}"
    if isinstance(f, Trig):
        return f"{f.func}({_lincomb_label(f.coeffs, names)})"
    if isinstance(f, Sign):
        inner = f"dstate({names[f.var]})" if f.of_deriv else names[f.var]
        return f"sign({inner})"
    if isinstance(f, Deriv):
        return f"dstate({names[f.var]})"
    return f"input({inputs[f.index]})"


def _factor_rank(f: Factor) -> tuple:
    # canonical display order inside a product
    if isinstance(f, Deriv):
        return (0, f.var)
    if isinstance(f, Trig):
        return (1, f.func, tuple(-c for c in f.coeffs))
    if isinstance(f, Sign):
        return (2, f.of_deriv, f.var)
    if isinstance(f, Power):
        return (3, f.var)
    return (4, f.index)


def _canonical(factors: Sequence[Factor]) -> tuple[Factor, ...]:
    powers: dict[int, int] = {}
    rest = []
    for f in factors:
        if isinstance(f, Power):
            powers[f.var] = powers.get(f.var, 0) + f.exp
        else:
            rest.append(f)
    rest.extend(Power(v, e) for v, e in powers.items() if e > 0)
    return tuple(sorted(rest, key=_factor_rank))


@dataclass(frozen=True)
class Term:
    factors: tuple[Factor, ...]
    label: str

    @property
    def kind(self) -> str:
        if not self.factors or all(isinstance(f, Power) for f in self.factors):
            return "monomial"
        if len(self.factors) == 1:
            f = self.factors[0]
            return {Trig: "trig", Sign: "sign", Input: "input", Deriv: "deriv_weighted"}[type(f)]
        if any(isinstance(f, Deriv) for f in self.factors):
            return "deriv_weighted"
        return "product"

    @property
    def deriv_channels(self) -> frozenset[int]:
        return frozenset(f.var for f in self.factors if isinstance(f, Deriv)
                         or (isinstance(f, Sign) and f.of_deriv))


# --------------------------------------------------------------------------- evaluation


def _factor_value(f: Factor, S, D, U) -> np.ndarray:
    if isinstance(f, Power):
        return S[:, f.var] ** f.exp
    if isinstance(f, Trig):
        arg = S @ np.asarray(f.coeffs, dtype=float)
        return np.sin(arg) if f.func == "sin" else np.cos(arg)
    if isinstance(f, Sign):
        return np.sign(D[:, f.var] if f.of_deriv else S[:, f.var])
    if isinstance(f, Deriv):
        return D[:, f.var]
    return U[:, f.index]


def _factor_grads(f: Factor, S, D):
    """Yield (wrt_deriv, channel, d factor / d channel) for nonzero partials."""
    if isinstance(f, Power):
        v = f.exp * S[:, f.var] ** (f.exp - 1) if f.exp > 1 else np.ones(len(S))
        yield False, f.var, v
    elif isinstance(f, Trig):
        arg = S @ np.asarray(f.coeffs, dtype=float)
        d = np.cos(arg) if f.func == "sin" else -np.sin(arg)
        for k, c in enumerate(f.coeffs):
            if c:
                yield False, k, c * d
    elif isinstance(f, Deriv):
        yield True, f.var, np.ones(len(S))
    # Sign and Input: zero partials everywhere


@dataclass(frozen=True)
class CandidateLibrary:
    terms: tuple[Term, ...]
    state_names: tuple[str, ...]
    input_names: tuple[str, ...] = ()
    spec_text: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.terms:
            raise InvalidArgument("library must contain at least one term")
        labels = self.labels
        if len(set(labels)) != len(labels):
            dup = next(l for l in labels if labels.count(l) > 1)
            raise InvalidArgument(f"duplicate term label {dup!r}")

    @property
    def labels(self) -> list[str]:
        return [t.label for t in self.terms]

    @property
    def l(self) -> int:
        return len(self.terms)

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    @property
    def uses_derivatives(self) -> bool:
        return any(t.deriv_channels for t in self.terms)

    @property
    def uses_inputs(self) -> bool:
        return any(isinstance(f, Input) for t in self.terms for f in t.factors)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def _check(self, states, state_derivs, inputs):
        S = np.atleast_2d(np.asarray(states, dtype=float))
        if S.shape[1] != self.n_states:
            raise InvalidArgument(f"expected {self.n_states} state columns, got {S.shape[1]}")
        D = U = None
        if self.uses_derivatives:
            if state_derivs is None:
                raise InvalidArgument("library needs state derivatives")
            D = np.atleast_2d(np.asarray(state_derivs, dtype=float))
            if D.shape != S.shape:
                raise InvalidArgument(f"state_derivs shape {D.shape} != states shape {S.shape}")
        if self.uses_inputs:
            if inputs is None:
                raise InvalidArgument(f"library needs inputs {self.input_names}")
            U = np.asarray(inputs, dtype=float)
            if U.ndim == 1:
                U = U[:, None]
            if U.shape != (S.shape[0], len(self.input_names)):
                raise InvalidArgument(f"inputs shape {U.shape} does not match "
                                      f"({S.shape[0]}, {len(self.input_names)})")
        return S, D, U

    def evaluate(self, states, state_derivs=None, inputs=None) -> np.ndarray:
        S, D, U = self._check(states, state_derivs, inputs)
        Phi = np.empty((S.shape[0], self.l))
        for j, term in enumerate(self.terms):
            col = np.ones(S.shape[0])
            for f in term.factors:
                col = col * _factor_value(f, S, D, U)
            Phi[:, j] = col
        return Phi

    def partials(self, states, state_derivs=None, inputs=None) -> tuple[np.ndarray, np.ndarray]:
        """Return (dPhi/dstates, dPhi/dstate_derivs), each (N, l, n)."""
        S, D, U = self._check(states, state_derivs, inputs)
        N, n = S.shape
        dS = np.zeros((N, self.l, n))
        dD = np.zeros((N, self.l, n))
        for j, term in enumerate(self.terms):
            values = [_factor_value(f, S, D, U) for f in term.factors]
            for a, f in enumerate(term.factors):
                others = np.ones(N)
                for b, v in enumerate(values):
                    if b != a:
                        others = others * v
                for wrt_deriv, k, g in _factor_grads(f, S, D):
                    (dD if wrt_deriv else dS)[:, j, k] += g * others
        return dS, dD

    def render(self) -> str:
        head = f"states({', '.join(self.state_names)})"
        if self.input_names:
            head += f"; inputs({', '.join(self.input_names)})"
        return head + "\n" + ";\n".join(self.labels)


def make_term(factors: Sequence[Factor], state_names, input_names=()) -> Term:
    factors = _canonical(factors)
    if not factors:
        return Term((), "1")
    return Term(factors, "*".join(_factor_label(f, state_names, input_names) for f in factors))


def _default_names(n: int) -> tuple[str, ...]:
    return ("x", "y", "z")[:n] if n <= 3 else tuple(f"x{i + 1}" for i in range(n))


def _monomials(n: int, max_degree: int):
    for deg in range(max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(n), deg):
            yield [Power(v, 1) for v in combo]


def polynomial_library(n_states: int, max_degree: int, state_names=None) -> CandidateLibrary:
    if n_states < 1 or max_degree < 0:
        raise InvalidArgument("need n_states >= 1 and max_degree >= 0")
    names = tuple(state_names) if state_names else _default_names(n_states)
    terms = tuple(make_term(m, names) for m in _monomials(n_states, max_degree))
    return CandidateLibrary(terms, names, spec_text=f"poly({n_states}, deg={max_degree})")


def double_pendulum_library() -> CandidateLibrary:
    names = ("th1", "th2", "w1", "w2")
    dtheta = Trig("sin", (1, -1, 0, 0))
    thetas = [Trig("sin", (1, 0, 0, 0)), Trig("sin", (0, 1, 0, 0)), dtheta]
    omegas = [[], [Power(2, 1)], [Power(3, 1)], [Power(2, 2)], [Power(3, 2)], [Power(2, 1), Power(3, 1)]]
    terms = [make_term([th, *om], names) for th in thetas for om in omegas]
    cos_dtheta = Trig("cos", (1, -1, 0, 0))
    terms += [make_term([Deriv(2), cos_dtheta], names), make_term([Deriv(3), cos_dtheta], names)]
    lib = CandidateLibrary(tuple(terms), names)
    return parse_library_spec(lib.render())


def emps_library() -> CandidateLibrary:
    return parse_library_spec("states(q, p); inputs(tau)\n"
                              "q; q^2; p; p^2; sign(p); input(tau); 1")


# --------------------------------------------------------------------------- parser

_TOKEN = re.compile(r"(?:(?P<num>\d+)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[;()*^+\-,=\n]))")


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        ch = text[pos]
        if ch in " \t\r":
            pos += 1
            continue
        if ch == "#":  # comment to end of line
            while pos < len(text) and text[pos] != "\n":
                pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise LibrarySyntaxError(f"unexpected character {ch!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        tok_text = m.group(kind)
        start = m.start(kind)
        if tok_text == "\n":
            toks.append(_Tok("op", ";", line, start - line_start + 1))
            line += 1
            line_start = m.end()
        else:
            toks.append(_Tok(kind, tok_text, line, start - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def cur(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.cur
        raise LibrarySyntaxError(msg, tok.line, tok.col)

    def take(self, text: str | None = None, kind: str | None = None) -> _Tok:
        tok = self.cur
        if (text is not None and tok.text != text) or (kind is not None and tok.kind != kind):
            want = repr(text) if text is not None else kind
            self.error(f"expected {want}, found {tok.text or 'end of input'!r}")
        self.i += 1
        return tok

    def accept(self, text: str) -> bool:
        if self.cur.text == text and self.cur.kind != "eof":
            self.i += 1
            return True
        return False

    def statements(self):
        out = []
        while self.cur.kind != "eof":
            if self.accept(";"):
                continue
            out.append(self.statement())
            if self.cur.kind != "eof":
                self.take(";")
        return out

    def names(self) -> list[str]:
        self.take("(")
        names = [self.take(kind="name").text]
        while self.accept(","):
            names.append(self.take(kind="name").text)
        self.take(")")
        return names

    def statement(self):
        tok = self.cur
        if tok.kind == "name" and tok.text in ("states", "inputs") and self.toks[self.i + 1].text == "(":
            self.i += 1
            return (tok.text, self.names(), tok)
        if tok.kind == "name" and tok.text == "poly" and self.toks[self.i + 1].text == "(":
            self.i += 1
            self.take("(")
            n = int(self.take(kind="num").text)
            deg = 1
            if self.accept(","):
                self.take("deg")
                self.take("=")
                deg = int(self.take(kind="num").text)
            self.take(")")
            return ("poly", (n, deg), tok)
        factors = [self.factor()]
        while self.accept("*"):
            factors.append(self.factor())
        return ("term", factors, tok)

    def ref(self):
        tok = self.cur
        if tok.kind == "num":
            self.i += 1
            return ("idx", int(tok.text), tok)
        return ("name", self.take(kind="name").text, tok)

    def factor(self):
        tok = self.cur
        if tok.kind == "num":
            if tok.text != "1":
                self.error("only the constant 1 is allowed as a numeric factor")
            self.i += 1
            return ("one",)
        name = self.take(kind="name").text
        if name in ("sin", "cos"):
            self.take("(")
            comb = self.lincomb()
            self.take(")")
            return ("trig", name, comb, tok)
        if name == "sign":
            self.take("(")
            if self.cur.text == "dstate":
                self.i += 1
                self.take("(")
                r = self.ref()
                self.take(")")
                self.take(")")
                return ("sign", r, True)
            r = self.ref()
            self.take(")")
            return ("sign", r, False)
        if name == "dstate":
            self.take("(")
            r = self.ref()
            self.take(")")
            return ("deriv", r)
        if name == "input":
            self.take("(")
            inp = self.take(kind="name")
            self.take(")")
            return ("input", inp.text, inp)
        exp = 1
        if self.accept("^"):
            exp = int(self.take(kind="num").text)
        return ("power", ("name", name, tok), exp)

    def lincomb(self):
        items = []
        sign = -1 if self.accept("-") else 1
        while True:
            coeff = 1
            if self.cur.kind == "num":
                coeff = int(self.take(kind="num").text)
                self.take("*")
            ref = ("name", self.take(kind="name").text, self.toks[self.i - 1])
            items.append((sign * coeff, ref))
            if self.accept("+"):
                sign = 1
            elif self.accept("-"):
                sign = -1
            else:
                return items


def parse_library_spec(text: str, state_names: Sequence[str] | None = None,
                       input_names: Sequence[str] | None = None) -> CandidateLibrary:
    """Parse the library mini-language into a :class:`CandidateLibrary`.

    State names come from a ``states(...)`` statement, else from
    ``state_names``, else from first appearance in the text.
    """
    stmts = _Parser(text).statements()
    if not any(kind in ("term", "poly") for kind, *_ in stmts):
        raise LibrarySyntaxError("empty library", 1, 1)

    declared = [s for s in stmts if s[0] == "states"]
    names: list[str] = list(declared[0][1]) if declared else list(state_names or [])
    fixed_names = bool(names)
    inputs: list[str] = list(input_names or [])
    for kind, payload, _ in stmts:
        if kind == "inputs":
            inputs = list(payload)

    def resolve(ref) -> int:
        kind, value, tok = ref
        if kind == "idx":
            if value >= len(names):
                raise LibrarySyntaxError(f"state index {value} out of range", tok.line, tok.col)
            return value
        if value not in names:
            if fixed_names:
                raise LibrarySyntaxError(f"unknown state {value!r}", tok.line, tok.col)
            names.append(value)
        return names.index(value)

    # first pass fixes the state count so trig coefficient vectors have full length
    raw_terms = []
    for kind, payload, tok in stmts:
        if kind == "poly":
            n, deg = payload
            if not names:
                names.extend(_default_names(n))
                fixed_names = True
            if n > len(names):
                raise LibrarySyntaxError(f"poly({n}) needs {n} states, have {len(names)}",
                                         tok.line, tok.col)
            for mono in _monomials(n, deg):
                raw_terms.append(("resolved", mono, tok))
        elif kind == "term":
            resolved = []
            for fac in payload:
                tag = fac[0]
                if tag == "one":
                    continue
                if tag == "power":
                    resolved.append(("power", resolve(fac[1]), fac[2]))
                elif tag == "trig":
                    resolved.append(("trig", fac[1], [(c, resolve(r)) for c, r in fac[2]]))
                elif tag == "sign":
                    resolved.append(("sign", resolve(fac[1]), fac[2]))
                elif tag == "deriv":
                    resolved.append(("deriv", resolve(fac[1])))
                elif tag == "input":
                    if fac[1] not in inputs:
                        inputs.append(fac[1])
                    resolved.append(("input", inputs.index(fac[1])))
            raw_terms.append(("raw", resolved, tok))

    terms: list[Term] = []
    seen: dict[str, _Tok] = {}
    for kind, payload, tok in raw_terms:
        if kind == "resolved":
            factors = payload
        else:
            factors = []
            for fac in payload:
                if fac[0] == "power":
                    factors.append(Power(fac[1], fac[2]))
                elif fac[0] == "trig":
                    coeffs = [0] * len(names)
                    for c, k in fac[2]:
                        coeffs[k] += c
                    factors.append(Trig(fac[1], tuple(coeffs)))
                elif fac[0] == "sign":
                    factors.append(Sign(fac[1], fac[2]))
                elif fac[0] == "deriv":
                    factors.append(Deriv(fac[1]))
                else:
                    factors.append(Input(fac[1]))
        term = make_term(factors, names, inputs)
        if term.label in seen:
            raise LibrarySyntaxError(f"duplicate term {term.label!r}", tok.line, tok.col)
        seen[term.label] = tok
        terms.append(term)
    return CandidateLibrary(tuple(terms), tuple(names), tuple(inputs), spec_text=text)
