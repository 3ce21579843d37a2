"""Discovered models: rendering, explicit vector fields, scoring and JSON files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .errors import DataError, IntegrationError, InvalidArgument
from .library import CandidateLibrary, Deriv, Sign, parse_library_spec
from .objective import equation_channels

FORMAT = "sparsespline-model/1"


@dataclass
class DiscoveredModel:
    """Sparse coefficients over a candidate library.

    ``order == 2`` means the library states are positions followed by
    velocities and each equation gives one acceleration; the velocity
    identities are structural and not stored.
    """

    library: CandidateLibrary
    coefficients: np.ndarray  # (l, n_eq)
    order: int = 1
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.order not in (1, 2):
            raise InvalidArgument("order must be 1 or 2")
        n = self.library.n_states
        if n % self.order:
            raise InvalidArgument(f"{n} library states cannot form an order-{self.order} system")
        if self.coefficients.shape != (self.library.l, n // self.order):
            raise InvalidArgument(f"coefficients shape {self.coefficients.shape}, expected "
                                  f"({self.library.l}, {n // self.order})")

    @property
    def n_eq(self) -> int:
        return self.coefficients.shape[1]

    @property
    def equation_channels(self) -> list[int]:
        return equation_channels(self.order, self.n_eq)

    @property
    def equation_names(self) -> list[str]:
        return [self.library.state_names[c] for c in self.equation_channels]

    @property
    def support(self) -> np.ndarray:
        return self.coefficients != 0

    def equations(self) -> dict[str, dict[str, float]]:
        labels = self.library.labels
        return {name: {labels[j]: float(self.coefficients[j, i])
                       for j in np.flatnonzero(self.coefficients[:, i])}
                for i, name in enumerate(self.equation_names)}

    # ------------------------------------------------------------------ rendering

    def render(self, precision: int = 3) -> str:
        return render_equations(self, precision)

    # ------------------------------------------------------------------ dynamics

    def vector_field(self, input_fn: Callable | None = None) -> Callable:
        """Explicit ``f(t, y)`` over the library states.

        Terms that contain a state derivative are moved to the left-hand side
        and the resulting small linear system is solved at every call; such
        terms must be affine in the derivatives.
        """
        lib = self.library
        if lib.uses_inputs and input_fn is None:
            raise InvalidArgument(f"model needs an input signal for {lib.input_names}")
        Lam = self.coefficients
        active = np.any(Lam != 0, axis=1)
        for j in np.flatnonzero(active):
            fs = lib.terms[j].factors
            n_deriv = sum(isinstance(f, Deriv) for f in fs)
            if n_deriv > 1 or any(isinstance(f, Sign) and f.of_deriv for f in fs):
                raise InvalidArgument(f"term {lib.terms[j].label!r} is not affine in the "
                                      "state derivatives; cannot form an explicit system")
        n_fit = self.n_eq
        chans = self.equation_channels
        implicit = lib.uses_derivatives and any(
            lib.terms[j].deriv_channels & set(chans) for j in np.flatnonzero(active))

        def inputs_at(t):
            if not lib.uses_inputs:
                return None
            return np.asarray(input_fn(t), dtype=float).reshape(1, -1)

        def rhs(t, y):
            y = np.asarray(y, dtype=float)
            S = y[None, :]
            U = inputs_at(t)
            D0 = None
            if lib.uses_derivatives:
                D0 = np.zeros_like(S)
                if self.order == 2:
                    D0[0, :n_fit] = y[n_fit:]
            b = (lib.evaluate(S, D0, U) @ Lam)[0]
            if implicit:
                A = np.empty((n_fit, n_fit))
                for k, c in enumerate(chans):
                    Dk = D0.copy()
                    Dk[0, c] = 1.0
                    A[:, k] = (lib.evaluate(S, Dk, U) @ Lam)[0] - b
                M = np.eye(n_fit) - A
                if abs(np.linalg.det(M)) < 1e-12:
                    raise IntegrationError(f"implicit system is singular at state {y.tolist()}", t)
                b = np.linalg.solve(M, b)
            return b if self.order == 1 else np.concatenate([y[n_fit:], b])

        return rhs

    # ------------------------------------------------------------------ files

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "order": self.order,
            "library": self.library.render(),
            "columns": self.library.labels,
            "equations": self.equations(),
            "coefficients": self.coefficients.tolist(),
            "provenance": self.provenance,
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path

    @classmethod
    def from_dict(cls, d: Mapping) -> "DiscoveredModel":
        if d.get("format") != FORMAT:
            raise DataError(f"not a model file (format {d.get('format')!r})")
        lib = parse_library_spec(d["library"])
        if lib.labels != list(d["columns"]):
            raise DataError("library text and column list disagree")
        return cls(lib, np.array(d["coefficients"], dtype=float), int(d["order"]),
                   dict(d.get("provenance", {})))

    @classmethod
    def load(cls, path) -> "DiscoveredModel":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: {exc}") from None
        return cls.from_dict(d)


def _fmt_term(coef: float, label: str, precision: int, first: bool) -> str:
    mag = f"{abs(coef):.{precision}f}"
    body = mag if label == "1" else f"{mag}*{label}"
    if first:
        return f"-{body}" if coef < 0 else body
    return f" - {body}" if coef < 0 else f" + {body}"


def render_equations(model: DiscoveredModel, precision: int = 3) -> str:
    """One ``dname/dt = ...`` line per equation, terms in library order."""
    lines = []
    labels = model.library.labels
    for i, name in enumerate(model.equation_names):
        col = model.coefficients[:, i]
        nz = np.flatnonzero(col)
        rhs = "".join(_fmt_term(col[j], labels[j], precision, k == 0) for k, j in enumerate(nz))
        lines.append(f"d{name}/dt = {rhs or '0'}")
    return "\n".join(lines)


@dataclass(frozen=True)
class EquationScore:
    name: str
    found: dict[str, bool]
    false_positives: tuple[str, ...]
    relative_errors: dict[str, float]

    @property
    def false_negatives(self) -> tuple[str, ...]:
        return tuple(k for k, v in self.found.items() if not v)

    @property
    def exact(self) -> bool:
        return not self.false_positives and not self.false_negatives

    @property
    def max_relative_error(self) -> float:
        return max(self.relative_errors.values(), default=0.0)


def score_against_reference(model: DiscoveredModel,
                            reference: Mapping[str, Mapping[str, float]]) -> dict[str, EquationScore]:
    """Compare found terms with reference terms, per equation name."""
    labels = set(model.library.labels)
    eqs = model.equations()
    out = {}
    for name, ref in reference.items():
        if name not in eqs:
            raise InvalidArgument(f"model has no equation for {name!r}")
        missing = [lab for lab in ref if lab not in labels]
        if missing:
            raise InvalidArgument(f"reference terms {missing} are not in the model's library")
        found_terms = eqs[name]
        found = {lab: lab in found_terms for lab in ref}
        fps = tuple(lab for lab in found_terms if lab not in ref)
        rel = {lab: abs(found_terms[lab] - v) / abs(v) if v else abs(found_terms[lab])
               for lab, v in ref.items() if lab in found_terms}
        out[name] = EquationScore(name, found, fps, rel)
    return out
