"""Verification reports, convergence-time bounds and the symbolic logical fixed-point check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

from .code import CodeSpec, ToricLayout, build_toric, logical_paulis, make_code
from .pauli import PauliOp, commutes


def lemma2_time(L: int, epsilon: float) -> float:
    """``4 ln2 L + 2 ln(1/eps)``: time after which ``tr(Q_perp rho_t) <= eps``."""
    _check_time_args(L, epsilon)
    return 4 * math.log(2) * L + 2 * math.log(1 / epsilon)


def theorem_time(L: int, epsilon: float) -> float:
    """``4 ln2 L + 2 ln(16/eps^2)``: time after which the output is eps-close to the encoded state."""
    _check_time_args(L, epsilon)
    return 4 * math.log(2) * L + 2 * math.log(16 / epsilon**2)


def _check_time_args(L: int, epsilon: float) -> None:
    if L < 2:
        raise ValueError(f"L must be >= 2, got {L}")
    if not 0 < epsilon <= 1:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")


@dataclass
class Check:
    name: str
    passed: bool
    value: Any = None
    bound: Any = None
    tolerance: Any = None
    detail: str = ""

    def line(self) -> str:
        parts = [f"[{'PASS' if self.passed else 'FAIL'}] {self.name}"]
        if self.value is not None:
            parts.append(f"value={_fmt(self.value)}")
        if self.bound is not None:
            parts.append(f"bound={_fmt(self.bound)}")
        if self.tolerance is not None:
            parts.append(f"tol={_fmt(self.tolerance)}")
        if self.detail:
            parts.append(self.detail)
        return " ".join(parts)


def _fmt(v) -> str:
    return f"{v:.6g}" if isinstance(v, float) else str(v)


@dataclass
class VerificationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, passed: bool, **kw) -> Check:
        c = Check(name, bool(passed), **kw)
        self.checks.append(c)
        return c

    def extend(self, other: VerificationReport) -> None:
        self.checks.extend(other.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "value": c.value, "bound": c.bound, "tolerance": c.tolerance, "detail": c.detail}
                for c in self.checks
            ],
        }

    def summary(self) -> str:
        return "\n".join(c.line() for c in self.checks)


def verify_logical_fixedpoint(spec: CodeSpec) -> VerificationReport:
    """Every nontrivial logical Pauli must commute with every generator and every correction.

    Then each ``T_j`` fixes the logical in the Heisenberg picture, so its expectation
    is conserved exactly.  One check per logical, naming the offending sites.
    """
    rep = VerificationReport()
    for label, op in logical_paulis(spec).items():
        bad = []
        for j in range(spec.num_sites):
            if not commutes(op, spec.sites[j]):
                bad.append(f"S@{spec.names[j]}")
            if not commutes(op, spec.corrections[j]):
                bad.append(f"C@{spec.names[j]}")
        rep.add(f"logical {label} fixed", not bad, detail=("offending: " + ", ".join(bad[:6])) if bad else "")
    return rep


# -- mutation fixtures ------------------------------------------------------------------


def _with_correction(spec: CodeSpec, j: int, corr: PauliOp) -> CodeSpec:
    corrections = list(spec.corrections)
    corrections[j] = corr
    return make_code(spec.n, spec.sites, corrections, spec.logicals, spec.names, spec.sectors)


def mutated_toric(L: int, kind: str) -> tuple[CodeSpec, ToricLayout]:
    """Toric code with one deliberately broken correction.

    ``"logical-support"``: the correction at plaquette (1, 0) moves onto ``h(1, 0)``,
    which lies on the support of logical Z1.  ``"wrong-type"``: the same correction
    becomes a Z, which commutes with its own generator.  ``"identity"``: every
    correction is the identity (legal, logicals trivially fixed).
    """
    spec, lay = build_toric(L)
    j = spec.index("p(1,0)")
    if kind == "logical-support":
        return _with_correction(spec, j, PauliOp.on(spec.n, [lay.h(1, 0)], "X")), lay
    if kind == "wrong-type":
        return _with_correction(spec, j, PauliOp.on(spec.n, [lay.v(1, 0)], "Z")), lay
    if kind == "identity":
        ident = [PauliOp.identity(spec.n)] * spec.num_sites
        return make_code(spec.n, spec.sites, ident, spec.logicals, spec.names, spec.sectors), lay
    raise ValueError(f"unknown mutation {kind!r}")
