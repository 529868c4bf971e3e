"""Stabilizer-code descriptions for the dissipative encoder and the toric-code instance.

A :class:`CodeSpec` pairs every stabilizer generator ``S_j`` with a single Pauli
correction ``C_j`` (identity for sinks).  Firing site ``j`` means: measure ``S_j``
and apply ``C_j`` on outcome -1.  From the corrections follow

* ``pred[j]``: sites whose correction anticommutes with ``S_j``,
* ``successor[k]``: the single foreign site ``C_k`` excites, if unique,
* ``f[j]``: moves an excitation at ``j`` needs before it is gone or parked in a sink,
* ``m``: the largest number of foreign generators one correction excites.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

from .pauli import PauliOp, commutes


class InvalidCodeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CodeSpec:
    n: int
    sites: tuple[PauliOp, ...]
    corrections: tuple[PauliOp, ...]
    logicals: dict[str, PauliOp]
    names: tuple[str, ...]
    sectors: tuple[str, ...]
    successor: tuple[int | None, ...]
    pred: tuple[frozenset[int], ...] = ()
    m: int = 0
    f_values: tuple[int, ...] | None = None

    @property
    def num_sites(self) -> int:
        return len(self.sites)

    def is_sink(self, j: int) -> bool:
        return self.corrections[j].is_identity

    @property
    def sinks(self) -> list[int]:
        return [j for j in range(self.num_sites) if self.is_sink(j)]

    def excited_by(self, k: int) -> list[int]:
        """Foreign sites whose syndrome flips when correction ``k`` is applied."""
        return [j for j in range(self.num_sites) if k in self.pred[j]]

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class ToricLayout:
    """Edge, plaquette and vertex indexing of an L x L torus.

    ``E_h(x, y)`` joins vertices (x, y) and (x+1, y); ``E_v(x, y)`` joins (x, y)
    and (x, y+1).  Plaquette (x, y) has lower-left corner at vertex (x, y).
    """

    L: int
    include_sinks: bool = True
    roles: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def h(self, x: int, y: int) -> int:
        return (y % self.L) * self.L + x % self.L

    def v(self, x: int, y: int) -> int:
        return self.L * self.L + (y % self.L) * self.L + x % self.L

    def plaquette(self, x: int, y: int) -> int:
        return (y % self.L) * self.L + x % self.L

    def vertex(self, x: int, y: int) -> int:
        return self.L * self.L + (y % self.L) * self.L + x % self.L

    @property
    def n(self) -> int:
        return 2 * self.L * self.L

    def plaquette_edges(self, x: int, y: int) -> tuple[int, int, int, int]:
        return (self.h(x, y), self.h(x, y + 1), self.v(x, y), self.v(x + 1, y))

    def vertex_edges(self, x: int, y: int) -> tuple[int, int, int, int]:
        return (self.h(x, y), self.h(x - 1, y), self.v(x, y), self.v(x, y - 1))

    def plaquette_sector(self, x: int, y: int) -> str:
        if (x, y) == (0, 0):
            return "sink"
        return "equator" if y == 0 else "bulk"

    def vertex_sector(self, x: int, y: int) -> str:
        if (x, y) == (0, 0):
            return "sink"
        return "equator" if x == 0 else "bulk"

    def role_of(self, q: int) -> str:
        for name, qubits in self.roles.items():
            if q in qubits:
                return name
        raise KeyError(q)

    def f_closed_form(self, kind: str, x: int, y: int) -> int:
        L = self.L
        if kind == "p":
            return x + y - 1
        return (L - x) % L + (L - y) % L - 1


# -- derived quantities ---------------------------------------------------------


def compute_pred_and_m(sites: Sequence[PauliOp], corrections: Sequence[PauliOp]):
    """``pred[j] = {k != j : C_k anticommutes with S_j}`` and ``m = max_k |{j : k in pred[j]}|``."""
    on_qubit: dict[int, list[int]] = {}
    for j, s in enumerate(sites):
        for q in s.support:
            on_qubit.setdefault(q, []).append(j)
    pred_sets: list[set[int]] = [set() for _ in sites]
    load = [0] * len(sites)
    for k, c in enumerate(corrections):
        # only generators sharing a qubit with C_k can anticommute with it
        near = {j for q in c.support for j in on_qubit.get(q, ())}
        for j in near:
            if j != k and not commutes(c, sites[j]):
                pred_sets[j].add(k)
                load[k] += 1
    return tuple(frozenset(p) for p in pred_sets), max(load, default=0)


def _excited(pred) -> list[list[int]]:
    out: list[list[int]] = [[] for _ in pred]
    for j, ks in enumerate(pred):
        for k in ks:
            out[k].append(j)
    return out


def compute_f(spec: CodeSpec) -> tuple[int, ...]:
    """Hop counts along the correction flow: -1 on sinks, ``1 + max f`` over excited sites otherwise.

    A correction that excites nothing else removes the excitation in one move (f = 0).
    With a unique successor this is exactly the successor hop count.
    """
    excited = _excited(spec.pred)
    f: list[int | None] = [None] * spec.num_sites
    state = [0] * spec.num_sites  # 0 new, 1 on stack, 2 done

    for root in range(spec.num_sites):
        if state[root]:
            continue
        stack = [(root, iter(() if spec.is_sink(root) else excited[root]))]
        state[root] = 1
        while stack:
            node, children = stack[-1]
            child = next(children, None)
            if child is not None:
                if state[child] == 1:
                    raise InvalidCodeError(f"successor cycle through site {spec.names[child]}")
                if state[child] == 0:
                    state[child] = 1
                    stack.append((child, iter(() if spec.is_sink(child) else excited[child])))
                continue
            stack.pop()
            state[node] = 2
            if spec.is_sink(node):
                f[node] = -1
            else:
                f[node] = 1 + max((f[c] for c in excited[node]), default=-1)
    return tuple(f)  # type: ignore[arg-type]


def make_code(
    n: int,
    sites: Sequence[PauliOp],
    corrections: Sequence[PauliOp],
    logicals: dict[str, PauliOp],
    names: Sequence[str] | None = None,
    sectors: Sequence[str] | None = None,
    successor: Sequence[int | None] | None = None,
) -> CodeSpec:
    """Assemble a CodeSpec and fill in pred, m, successor and (if acyclic) f."""
    if len(sites) != len(corrections):
        raise InvalidCodeError("one correction per generator required")
    pred, m = compute_pred_and_m(sites, corrections)
    if successor is None:
        excited = _excited(pred)
        successor = [ex[0] if len(ex) == 1 else None for ex in excited]
    spec = CodeSpec(
        n=n,
        sites=tuple(sites),
        corrections=tuple(corrections),
        logicals=dict(logicals),
        names=tuple(names) if names else tuple(f"s{j}" for j in range(len(sites))),
        sectors=tuple(sectors) if sectors else ("z",) * len(sites),
        successor=tuple(successor),
        pred=pred,
        m=m,
    )
    try:
        f = compute_f(spec)
    except InvalidCodeError:
        f = None
    return replace(spec, f_values=f)


def toric_layout(L: int, include_sinks: bool = True) -> ToricLayout:
    """Layout with qubit roles: inputs A1/A2, logical-X supports B/B', logical-Z supports C/C', rest D."""
    lay = ToricLayout(L, include_sinks)
    roles = {
        "A1": (lay.h(0, 0),),
        "A2": (lay.v(0, 0),),
        "B": tuple(lay.h(0, y) for y in range(1, L)),
        "C": tuple(lay.h(x, 0) for x in range(1, L)),
        "Bp": tuple(lay.v(x, 0) for x in range(1, L)),
        "Cp": tuple(lay.v(0, y) for y in range(1, L)),
    }
    used = set(itertools.chain.from_iterable(roles.values()))
    roles["D"] = tuple(q for q in range(lay.n) if q not in used)
    return replace(lay, roles=roles)


def build_toric(L: int, include_sinks: bool = True) -> tuple[CodeSpec, ToricLayout]:
    """Toric code on 2L^2 edges with corrections flowing toward ``p* = P(0,0)`` and ``v* = V(0,0)``.

    Plaquette excitations move down their column to the row y = 0, then left along
    it; vertex excitations move right along their row to the column x = 0, then up.
    """
    if L < 2:
        raise InvalidCodeError(f"lattice side must be >= 2, got {L}")
    lay = ToricLayout(L, include_sinks)
    n = lay.n

    sites, corr, names, sectors, succ = [], [], [], [], []
    for y in range(L):
        for x in range(L):
            sites.append(PauliOp.on(n, lay.plaquette_edges(x, y), "Z"))
            names.append(f"p({x},{y})")
            sectors.append("p")
            if (x, y) == (0, 0):
                corr.append(PauliOp.identity(n))
                succ.append(None)
            elif y != 0:
                corr.append(PauliOp.on(n, [lay.h(x, y)], "X"))
                succ.append(lay.plaquette(x, y - 1))
            else:
                corr.append(PauliOp.on(n, [lay.v(x, 0)], "X"))
                succ.append(lay.plaquette(x - 1, 0))
    for y in range(L):
        for x in range(L):
            sites.append(PauliOp.on(n, lay.vertex_edges(x, y), "X"))
            names.append(f"v({x},{y})")
            sectors.append("v")
            if (x, y) == (0, 0):
                corr.append(PauliOp.identity(n))
                succ.append(None)
            elif x != 0:
                corr.append(PauliOp.on(n, [lay.h(x, y)], "Z"))
                succ.append(lay.vertex(x + 1, y))
            else:
                corr.append(PauliOp.on(n, [lay.v(0, y)], "Z"))
                succ.append(lay.vertex(0, y + 1))

    lay = toric_layout(L, include_sinks)

    logicals = {
        "X1": PauliOp.on(n, [lay.h(0, y) for y in range(L)], "X"),
        "Z1": PauliOp.on(n, [lay.h(x, 0) for x in range(L)], "Z"),
        "X2": PauliOp.on(n, [lay.v(x, 0) for x in range(L)], "X"),
        "Z2": PauliOp.on(n, [lay.v(0, y) for y in range(L)], "Z"),
    }

    if not include_sinks:
        keep = [j for j, c in enumerate(corr) if not c.is_identity]
        remap = {old: new for new, old in enumerate(keep)}
        sites = [sites[j] for j in keep]
        corr = [corr[j] for j in keep]
        names = [names[j] for j in keep]
        sectors = [sectors[j] for j in keep]
        succ = [remap.get(succ[j]) for j in keep]

    spec = make_code(n, sites, corr, logicals, names, sectors, succ)
    if spec.f_values is None:
        raise InvalidCodeError("toric correction flow is cyclic")
    return spec, lay


def build_repetition(n: int) -> CodeSpec:
    """Bit-flip repetition code: ``S_i = Z_i Z_{i+1}`` with ``C_i = X_{i+1}`` (0-indexed).

    Excitations drift toward the chain end, where ``X_{n-1}`` removes the last one
    without exciting anything else.
    """
    if n < 2:
        raise InvalidCodeError(f"repetition code needs n >= 2, got {n}")
    sites = [PauliOp.on(n, [i, i + 1], "Z") for i in range(n - 1)]
    corr = [PauliOp.on(n, [i + 1], "X") for i in range(n - 1)]
    logicals = {"X1": PauliOp.on(n, range(n), "X"), "Z1": PauliOp.on(n, [0], "Z")}
    return make_code(n, sites, corr, logicals)


def weight_sum(spec: CodeSpec, alpha: float) -> float:
    """Sum of ``alpha**f(j)`` over all sites, sinks contributing ``1/alpha``."""
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    if spec.f_values is None:
        raise InvalidCodeError("f is undefined for this code")
    return math.fsum(alpha**f for f in spec.f_values)


def toric_weight_sum_closed_form(L: int, alpha: float) -> float:
    if alpha == 1:
        return 2.0 * L * L
    return 2 / alpha * ((alpha**L - 1) / (alpha - 1)) ** 2


# -- logical group --------------------------------------------------------------


def logical_qubits(spec: CodeSpec) -> int:
    return sum(1 for name in spec.logicals if name.startswith("X"))


def logical_paulis(spec: CodeSpec) -> dict[str, PauliOp]:
    """All nontrivial products of logical Paulis, keyed by unencoded label (``"XI"``, ``"YZ"``, ...)."""
    k = logical_qubits(spec)
    singles = []
    for i in range(1, k + 1):
        X, Z = spec.logicals[f"X{i}"], spec.logicals[f"Z{i}"]
        singles.append({"I": PauliOp.identity(spec.n), "X": X, "Z": Z, "Y": (X * Z).scaled(1)})
    out = {}
    for letters in itertools.product("IXYZ", repeat=k):
        if set(letters) == {"I"}:
            continue
        op = PauliOp.identity(spec.n)
        for i, ch in enumerate(letters):
            op = op * singles[i][ch]
        out["".join(letters)] = op
    return out


# -- validation -----------------------------------------------------------------


@dataclass
class Violation:
    kind: str
    detail: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.detail}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def add(self, kind: str, detail: str) -> None:
        self.violations.append(Violation(kind, detail))


def validate_code(spec: CodeSpec) -> ValidationReport:
    rep = ValidationReport()
    name = spec.names
    S, C = spec.sites, spec.corrections

    for j, s in enumerate(S):
        if not s.is_hermitian:
            rep.add("hermitian", f"generator {name[j]} is not Hermitian")
    for j, k in itertools.combinations(range(len(S)), 2):
        if not commutes(S[j], S[k]):
            rep.add("generator-commutation", f"{name[j]} and {name[k]} anticommute")
    for j in range(len(S)):
        if not C[j].is_identity and commutes(C[j], S[j]):
            rep.add("correction-anticommutation", f"C at {name[j]} commutes with its generator")
    for label, lop in spec.logicals.items():
        for j in range(len(S)):
            if not commutes(lop, S[j]):
                rep.add("logical-commutation", f"{label} anticommutes with generator {name[j]}")
            if not commutes(lop, C[j]):
                rep.add("logical-commutation", f"{label} anticommutes with correction at {name[j]}")

    pred, m = compute_pred_and_m(S, C)
    if pred != spec.pred:
        rep.add("pred", "stored pred sets disagree with anticommutation")
    if m != spec.m:
        rep.add("m", f"stored m={spec.m}, recomputed {m}")
    for k, ex in enumerate(_excited(pred)):
        succ = spec.successor[k]
        if succ is not None and ex != [succ]:
            rep.add("successor", f"C at {name[k]} excites {[name[j] for j in ex]}, not {name[succ]}")
        elif succ is None and len(ex) == 1:
            rep.add("successor", f"C at {name[k]} has a unique target but no successor")

    try:
        f = compute_f(spec)
    except InvalidCodeError as exc:
        rep.add("f-undefined", str(exc))
        return rep
    if spec.f_values is not None and tuple(spec.f_values) != f:
        rep.add("f", "stored f differs from hop count")
    for j in range(len(S)):
        for k in pred[j]:
            if f[k] < f[j] + 1:
                rep.add("f-monotonicity", f"f({name[k]})={f[k]} < f({name[j]})+1={f[j] + 1}")
    return rep


# -- JSON -------------------------------------------------------------------------


def _op_to_json(p: PauliOp) -> dict:
    return {"x": hex(p.x), "z": hex(p.z), "phase": p.phase}


def _op_from_json(n: int, d: dict) -> PauliOp:
    return PauliOp(n, int(d["x"], 16), int(d["z"], 16), int(d["phase"]))


def spec_to_json(spec: CodeSpec) -> dict:
    return {
        "n": spec.n,
        "sites": [
            {
                "name": spec.names[j],
                "sector": spec.sectors[j],
                "generator": _op_to_json(spec.sites[j]),
                "correction": _op_to_json(spec.corrections[j]),
                "successor": spec.successor[j],
                "f": None if spec.f_values is None else spec.f_values[j],
            }
            for j in range(spec.num_sites)
        ],
        "logicals": {k: _op_to_json(v) for k, v in spec.logicals.items()},
        "m": spec.m,
    }


def spec_from_json(doc: dict) -> CodeSpec:
    n = int(doc["n"])
    rows = doc["sites"]
    return make_code(
        n,
        [_op_from_json(n, r["generator"]) for r in rows],
        [_op_from_json(n, r["correction"]) for r in rows],
        {k: _op_from_json(n, v) for k, v in doc["logicals"].items()},
        [r["name"] for r in rows],
        [r["sector"] for r in rows],
        [r["successor"] for r in rows],
    )
