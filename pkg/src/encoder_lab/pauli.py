"""Binary-symplectic Pauli operators and a stabilizer tableau with Pauli measurement.

A Pauli operator on ``n`` qubits is stored as two bit masks and a phase exponent::

    op = i**phase * prod_q X_q**x_q * Z_q**z_q        (X left of Z on each qubit)

Bit ``q`` of a mask refers to qubit ``q``.  Masks are plain Python integers, so
row operations are word-parallel and the qubit count is unbounded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

_LETTERS = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}


class PauliError(ValueError):
    """Raised for size mismatches and non-Hermitian operands."""


def _popcount(v: int) -> int:
    return v.bit_count()


@dataclass(frozen=True)
class PauliOp:
    n: int
    x: int = 0
    z: int = 0
    phase: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise PauliError(f"qubit count must be positive, got {self.n}")
        if self.x >> self.n or self.z >> self.n or self.x < 0 or self.z < 0:
            raise PauliError("mask wider than qubit count")
        object.__setattr__(self, "phase", self.phase % 4)

    # -- construction -------------------------------------------------------

    @classmethod
    def identity(cls, n: int) -> PauliOp:
        return cls(n)

    @classmethod
    def from_label(cls, label: str) -> PauliOp:
        """Hermitian Pauli from a string like ``"+XIZY"`` or ``"-ZZ"``; qubit 0 first."""
        sign = 0
        if label[0] in "+-":
            sign = 0 if label[0] == "+" else 2
            label = label[1:]
        x = z = 0
        for q, ch in enumerate(label.upper()):
            try:
                bx, bz = _LETTERS[ch]
            except KeyError:
                raise PauliError(f"bad Pauli letter {ch!r}") from None
            x |= bx << q
            z |= bz << q
        return cls(len(label), x, z, sign + _popcount(x & z))

    @classmethod
    def on(cls, n: int, qubits: Iterable[int], letter: str) -> PauliOp:
        """Hermitian product of the same single-qubit Pauli on every listed qubit."""
        bx, bz = _LETTERS[letter.upper()]
        mask = 0
        for q in qubits:
            if not 0 <= q < n:
                raise PauliError(f"qubit {q} out of range for n={n}")
            mask |= 1 << q
        x, z = mask * bx, mask * bz
        return cls(n, x, z, _popcount(x & z))

    # -- algebra ------------------------------------------------------------

    def __mul__(self, other: PauliOp) -> PauliOp:
        return pauli_mul(self, other)

    def __neg__(self) -> PauliOp:
        return PauliOp(self.n, self.x, self.z, self.phase + 2)

    def scaled(self, power_of_i: int) -> PauliOp:
        return PauliOp(self.n, self.x, self.z, self.phase + power_of_i)

    def commutes(self, other: PauliOp) -> bool:
        return commutes(self, other)

    @property
    def is_hermitian(self) -> bool:
        return (self.phase - _popcount(self.x & self.z)) % 2 == 0

    @property
    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    @property
    def sign(self) -> int:
        """+1 or -1 relative to the tensor product of I, X, Y, Z (Hermitian only)."""
        if not self.is_hermitian:
            raise PauliError("sign is only defined for Hermitian operators")
        return 1 if (self.phase - _popcount(self.x & self.z)) % 4 == 0 else -1

    @property
    def support(self) -> list[int]:
        mask, out = self.x | self.z, []
        while mask:
            low = mask & -mask
            out.append(low.bit_length() - 1)
            mask ^= low
        return out

    @property
    def weight(self) -> int:
        return _popcount(self.x | self.z)

    def label(self) -> str:
        letters = "".join("IXZY"[(self.x >> q & 1) | (self.z >> q & 1) << 1] for q in range(self.n))
        if self.is_hermitian:
            return ("+" if self.sign == 1 else "-") + letters
        rel = (self.phase - _popcount(self.x & self.z)) % 4
        return ("+i", "-i")[rel == 3] + letters

    def __repr__(self) -> str:
        return f"PauliOp({self.label()!r})"


def _check_sizes(a: PauliOp, b: PauliOp) -> None:
    if a.n != b.n:
        raise PauliError(f"size mismatch: {a.n} vs {b.n} qubits")


def pauli_mul(a: PauliOp, b: PauliOp) -> PauliOp:
    """Operator product ``a @ b`` with exact phase."""
    _check_sizes(a, b)
    # moving b's X block left through a's Z block costs (-1)**|z_a & x_b|
    phase = a.phase + b.phase + 2 * _popcount(a.z & b.x)
    return PauliOp(a.n, a.x ^ b.x, a.z ^ b.z, phase)


def commutes(a: PauliOp, b: PauliOp) -> bool:
    _check_sizes(a, b)
    return _popcount((a.x & b.z) ^ (a.z & b.x)) % 2 == 0


def _anti(ax: int, az: int, bx: int, bz: int) -> int:
    return _popcount((ax & bz) ^ (az & bx)) & 1


def _require_hermitian(p: PauliOp) -> None:
    if not p.is_hermitian:
        raise PauliError(f"{p!r} is not Hermitian")


# -- stabilizer tableau -------------------------------------------------------

PRODUCT_TAGS = ("Z+", "Z-", "X+", "X-", "Y+", "Y-", "MIXED")


class StabilizerTableau:
    """Stabilizer state, possibly mixed, as ``s <= n`` stabilizer/destabilizer row pairs.

    With ``s < n`` the state is maximally mixed on the degrees of freedom not fixed
    by the rows.  Stabilizer rows carry signs through their phase exponent;
    destabilizer signs are irrelevant and kept canonical.

    Applied Paulis are accumulated in a frame ``F`` (masks ``fx``, ``fz``): the state
    is ``F rho F^dag`` with ``rho`` described by the stored rows, so conjugating by
    a Pauli costs one XOR and row signs are corrected only when read.
    """

    __slots__ = ("n", "sx", "sz", "sp", "dx", "dz", "fx", "fz")

    def __init__(self, n: int):
        self.n = n
        self.sx: list[int] = []
        self.sz: list[int] = []
        self.sp: list[int] = []
        self.dx: list[int] = []
        self.dz: list[int] = []
        self.fx = 0
        self.fz = 0

    @property
    def s(self) -> int:
        return len(self.sx)

    def copy(self) -> StabilizerTableau:
        t = StabilizerTableau(self.n)
        t.sx, t.sz, t.sp = self.sx[:], self.sz[:], self.sp[:]
        t.dx, t.dz = self.dx[:], self.dz[:]
        t.fx, t.fz = self.fx, self.fz
        return t

    def _flipped(self, px: int, pz: int) -> int:
        """1 if ``P`` anticommutes with the frame, so its stored sign reads negated."""
        return ((px & self.fz) ^ (pz & self.fx)).bit_count() & 1

    def stabilizers(self) -> list[PauliOp]:
        return [PauliOp(self.n, x, z, p ^ (2 * self._flipped(x, z))) for x, z, p in zip(self.sx, self.sz, self.sp)]

    def destabilizers(self) -> list[PauliOp]:
        return [PauliOp(self.n, x, z, _popcount(x & z)) for x, z in zip(self.dx, self.dz)]

    def __repr__(self) -> str:
        rows = ", ".join(p.label() for p in self.stabilizers())
        return f"StabilizerTableau(n={self.n}, s={self.s}, [{rows}])"

    # -- construction -------------------------------------------------------

    @classmethod
    def from_product(cls, tags: Sequence[str]) -> StabilizerTableau:
        t = cls(len(tags))
        for q, tag in enumerate(tags):
            if tag not in PRODUCT_TAGS:
                raise PauliError(f"unknown product-state tag {tag!r}")
            if tag == "MIXED":
                continue
            bit = 1 << q
            letter, sgn = tag[0], tag[1]
            x = bit if letter in "XY" else 0
            z = bit if letter in "ZY" else 0
            t.sx.append(x)
            t.sz.append(z)
            t.sp.append(_popcount(x & z) + (2 if sgn == "-" else 0))
            # Z anticommutes with X and Y; X anticommutes with Z
            t.dx.append(bit if letter == "Z" else 0)
            t.dz.append(0 if letter == "Z" else bit)
        return t

    @classmethod
    def from_generators(cls, n: int, generators: Iterable[PauliOp]) -> StabilizerTableau:
        """State stabilized by independent commuting Hermitian generators (signs included)."""
        t = cls(n)
        for g in generators:
            if g.n != n:
                raise PauliError("generator size mismatch")
            _require_hermitian(g)
            if any(_anti(g.x, g.z, x, z) for x, z in zip(t.sx, t.sz)):
                raise PauliError(f"{g!r} anticommutes with an earlier generator")
            prod = t._group_part(g.x, g.z)
            if prod[:2] == (g.x, g.z):
                raise PauliError(f"{g!r} is dependent on earlier generators")
            t._append(g.x, g.z, g.phase, prod)
        return t

    # -- internals ----------------------------------------------------------

    def _row_product(self, idx: Iterable[int]) -> tuple[int, int, int]:
        x = z = p = 0
        sx, sz, sp = self.sx, self.sz, self.sp
        for i in idx:
            p += sp[i] + 2 * _popcount(z & sx[i])
            x ^= sx[i]
            z ^= sz[i]
        return x, z, p % 4

    def _append(self, px: int, pz: int, pphase: int, prod: tuple[int, int, int]) -> None:
        # new row = P * prod(stab[idx]) commutes with every destabilizer
        qx, qz, qp = prod
        rx, rz = px ^ qx, pz ^ qz
        rp = (pphase + qp + 2 * _popcount(pz & qx)) % 4
        # partner: a single-qubit Pauli anticommuting with the row, then
        # symplectic Gram-Schmidt against the existing pairs
        q = ((rx | rz) & -(rx | rz)).bit_length() - 1
        wx, wz = (0, 1 << q) if rx >> q & 1 else (1 << q, 0)
        for sx, sz, dx, dz in zip(self.sx, self.sz, self.dx, self.dz):
            if ((wx & sz) ^ (wz & sx)).bit_count() & 1:
                wx ^= dx
                wz ^= dz
            if ((wx & dz) ^ (wz & dx)).bit_count() & 1:
                wx ^= sx
                wz ^= sz
        self.sx.append(rx)
        self.sz.append(rz)
        self.sp.append(rp)
        self.dx.append(wx)
        self.dz.append(wz)

    def _group_part(self, px: int, pz: int) -> tuple[int, int, int]:
        """Product of the stabilizer rows whose destabilizers anticommute with ``P``."""
        idx = [i for i, (x, z) in enumerate(zip(self.dx, self.dz)) if ((px & z) ^ (pz & x)).bit_count() & 1]
        return self._row_product(idx)

    @staticmethod
    def _value_from(px: int, pz: int, pphase: int, prod: tuple[int, int, int]) -> int | None:
        qx, qz, qp = prod
        if qx != px or qz != pz:
            return None
        return 1 if (pphase - qp) % 4 == 0 else -1

    def _deterministic_value(self, px: int, pz: int, pphase: int) -> int | None:
        """+1/-1 if +-P lies in the stabilizer group, None otherwise (P commutes with all rows)."""
        return self._value_from(px, pz, pphase, self._group_part(px, pz))

    # -- public operations --------------------------------------------------

    def expectation(self, p: PauliOp) -> int:
        _require_hermitian(p)
        if p.n != self.n:
            raise PauliError("size mismatch")
        px, pz = p.x, p.z
        for x, z in zip(self.sx, self.sz):
            if ((px & z) ^ (pz & x)).bit_count() & 1:
                return 0
        value = self._deterministic_value(px, pz, p.phase)
        if value is None:
            return 0
        return -value if self._flipped(px, pz) else value

    def measure(self, p: PauliOp, rng=None, forced: int | None = None) -> tuple[int, bool]:
        """Measure Hermitian ``p``; returns ``(outcome, deterministic)`` and updates in place.

        Random outcomes come from ``rng.random() < 0.5`` unless ``forced`` fixes them.
        """
        _require_hermitian(p)
        if p.n != self.n:
            raise PauliError("size mismatch")
        # measuring P on F rho F^dag with outcome o is measuring P on rho with outcome +-o
        if self._flipped(p.x, p.z):
            outcome, det = self._measure_raw(p, rng, None if forced is None else -forced)
            return -outcome, det
        return self._measure_raw(p, rng, forced)

    def _measure_raw(self, p: PauliOp, rng, forced: int | None) -> tuple[int, bool]:
        px, pz, pphase = p.x, p.z, p.phase
        sx, sz, sp, dx, dz = self.sx, self.sz, self.sp, self.dx, self.dz
        anti = [i for i, (x, z) in enumerate(zip(sx, sz)) if ((px & z) ^ (pz & x)).bit_count() & 1]
        if not anti:
            prod = self._group_part(px, pz)
            value = self._value_from(px, pz, pphase, prod)
            if value is not None:
                return value, True
            outcome = forced if forced is not None else (1 if rng.random() < 0.5 else -1)
            self._append(px, pz, pphase + (0 if outcome == 1 else 2), prod)
            return outcome, False

        outcome = forced if forced is not None else (1 if rng.random() < 0.5 else -1)
        piv = anti[0]
        bx, bz, bp = sx[piv], sz[piv], sp[piv]
        for i in anti[1:]:
            sp[i] = (sp[i] + bp + 2 * _popcount(sz[i] & bx)) % 4
            sx[i] ^= bx
            sz[i] ^= bz
        for i, (x, z) in enumerate(zip(dx, dz)):
            if i != piv and ((px & z) ^ (pz & x)).bit_count() & 1:
                dx[i] ^= bx
                dz[i] ^= bz
        dx[piv], dz[piv] = bx, bz
        sx[piv], sz[piv] = px, pz
        sp[piv] = (pphase + (0 if outcome == 1 else 2)) % 4
        return outcome, False

    def apply_pauli(self, c: PauliOp) -> None:
        """Conjugate the state by ``c`` (negates every anticommuting stabilizer)."""
        if c.n != self.n:
            raise PauliError("size mismatch")
        self.fx ^= c.x
        self.fz ^= c.z

    def check(self) -> None:
        """Raise AssertionError if a tableau invariant is broken."""
        s = self.s
        for i in range(s):
            if (self.sp[i] - _popcount(self.sx[i] & self.sz[i])) % 2:
                raise AssertionError(f"stabilizer row {i} is not Hermitian")
            for k in range(s):
                if k > i and _anti(self.sx[i], self.sz[i], self.sx[k], self.sz[k]):
                    raise AssertionError(f"stabilizer rows {i},{k} anticommute")
                if k > i and _anti(self.dx[i], self.dz[i], self.dx[k], self.dz[k]):
                    raise AssertionError(f"destabilizer rows {i},{k} anticommute")
                pair = _anti(self.dx[i], self.dz[i], self.sx[k], self.sz[k])
                if pair != (i == k):
                    raise AssertionError(f"destabilizer {i} / stabilizer {k} pairing broken")
        # pairing already implies independence; the rank check guards the pairing logic itself
        if _gf2_rank([(x << self.n) | z for x, z in zip(self.sx, self.sz)]) != s:
            raise AssertionError("stabilizer rows are dependent")


def _gf2_rank(vectors: list[int]) -> int:
    basis: list[int] = []
    for v in vectors:
        for b in basis:
            v = min(v, v ^ b)
        if v:
            basis.append(v)
    return len(basis)


def tableau_from_product(tags: Sequence[str]) -> StabilizerTableau:
    return StabilizerTableau.from_product(tags)


def measure_pauli(t: StabilizerTableau, p: PauliOp, rng=None, forced: int | None = None):
    """Functional form of :meth:`StabilizerTableau.measure`; returns ``(outcome, deterministic, t)``."""
    outcome, det = t.measure(p, rng, forced)
    return outcome, det, t


def apply_pauli(t: StabilizerTableau, c: PauliOp) -> StabilizerTableau:
    t.apply_pauli(c)
    return t


def pauli_expectation(t: StabilizerTableau, p: PauliOp) -> int:
    return t.expectation(p)


def code_overlap(t: StabilizerTableau, generators: Sequence[PauliOp]) -> float:
    """Probability that every generator measures +1, i.e. ``tr(Q rho)`` for the code projector Q."""
    work = t.copy()
    prob = 1.0
    for g in generators:
        outcome, det = work.measure(g, forced=1)
        if det and outcome == -1:
            return 0.0
        if not det:
            prob *= 0.5
    return prob
