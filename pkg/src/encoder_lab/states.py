"""Two-qubit input states and the encoder's product initialization of the toric lattice."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .code import CodeSpec, ToricLayout
from .pauli import PauliOp, StabilizerTableau

_S = 1 / np.sqrt(2)

PSI_PRESETS: dict[str, np.ndarray] = {
    "00": np.array([1, 0, 0, 0], dtype=complex),
    "0+": np.array([_S, _S, 0, 0], dtype=complex),
    "++": np.array([0.5, 0.5, 0.5, 0.5], dtype=complex),
    "bell": np.array([_S, 0, 0, _S], dtype=complex),
    # (|0> + e^{i pi/4}|1>)/sqrt2 on A1, |0> on A2
    "magic": np.array([_S, 0, _S * np.exp(1j * np.pi / 4), 0], dtype=complex),
}

# stabilizer generators on (A1, A2); None marks non-stabilizer inputs
PSI_STABILIZERS: dict[str, tuple[str, ...] | None] = {
    "00": ("+ZI", "+IZ"),
    "0+": ("+ZI", "+IX"),
    "++": ("+XI", "+IX"),
    "bell": ("+XX", "+ZZ"),
    "magic": None,
}

RHO_D_CHOICES = ("mixed", "zero")


def psi_vector(psi: str | Sequence[complex]) -> np.ndarray:
    """Amplitudes over |A1 A2> with A1 the more significant bit."""
    if isinstance(psi, str):
        try:
            return PSI_PRESETS[psi].copy()
        except KeyError:
            raise ValueError(f"unknown psi preset {psi!r}; choose from {sorted(PSI_PRESETS)}") from None
    vec = np.asarray(psi, dtype=complex)
    if vec.shape != (4,):
        raise ValueError("explicit psi must have 4 amplitudes")
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ValueError("psi must be nonzero")
    return vec / norm


def is_stabilizer_psi(psi) -> bool:
    return isinstance(psi, str) and PSI_STABILIZERS.get(psi) is not None


_PAULI2 = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def unencoded_expectation(psi, label: str) -> float:
    """<Psi| P1 (x) P2 |Psi> for a two-letter label like ``"XZ"``."""
    vec = psi_vector(psi)
    op = np.kron(_PAULI2[label[0]], _PAULI2[label[1]])
    return float(np.real(np.vdot(vec, op @ vec)))


def theorem_tags(layout: ToricLayout, rho_d: str = "mixed") -> list[str]:
    """Per-qubit product tags for everything except A1/A2 (tagged ``"A"``).

    Qubits on X-logical supports (B, B') start in |+>, those on Z-logical
    supports (C, C') in |0>.
    """
    if rho_d not in RHO_D_CHOICES:
        raise ValueError(f"rho_d must be one of {RHO_D_CHOICES}")
    tags = ["?"] * layout.n
    for role, tag in (("B", "X+"), ("Bp", "X+"), ("C", "Z+"), ("Cp", "Z+"), ("A1", "A"), ("A2", "A")):
        for q in layout.roles[role]:
            tags[q] = tag
    for q in layout.roles["D"]:
        tags[q] = "MIXED" if rho_d == "mixed" else "Z+"
    return tags


def initial_tableau(spec: CodeSpec, layout: ToricLayout, psi: str = "00", rho_d: str = "mixed") -> StabilizerTableau:
    if not is_stabilizer_psi(psi):
        raise ValueError(f"psi {psi!r} is not a stabilizer state; use the exact engine")
    tags = ["MIXED" if t == "A" else t for t in theorem_tags(layout, rho_d)]
    tab = StabilizerTableau.from_product(tags)
    a1, a2 = layout.roles["A1"][0], layout.roles["A2"][0]
    # the input pair starts maximally mixed; projecting onto its stabilizers prepares psi
    for lab in PSI_STABILIZERS[psi]:  # type: ignore[union-attr]
        op = PauliOp.identity(spec.n)
        for q, ch in zip((a1, a2), lab[1:]):
            if ch != "I":
                op = op * PauliOp.on(spec.n, [q], ch)
        tab.measure(op, forced=1 if lab[0] == "+" else -1)
    return tab


SINGLE_QUBIT_DM = {
    "Z+": np.array([[1, 0], [0, 0]], dtype=complex),
    "Z-": np.array([[0, 0], [0, 1]], dtype=complex),
    "X+": np.array([[1, 1], [1, 1]], dtype=complex) / 2,
    "X-": np.array([[1, -1], [-1, 1]], dtype=complex) / 2,
    "Y+": np.array([[1, -1j], [1j, 1]], dtype=complex) / 2,
    "Y-": np.array([[1, 1j], [-1j, 1]], dtype=complex) / 2,
    "MIXED": np.eye(2, dtype=complex) / 2,
}


def initial_factors(layout: ToricLayout, psi="00", rho_d: str = "mixed") -> list[tuple[tuple[int, ...], np.ndarray]]:
    """(qubits, density matrix) factors of the encoder's initial product state."""
    tags = theorem_tags(layout, rho_d)
    vec = psi_vector(psi)
    a1, a2 = layout.roles["A1"][0], layout.roles["A2"][0]
    factors = [((a1, a2), np.outer(vec, vec.conj()))]
    factors += [((q,), SINGLE_QUBIT_DM[tag]) for q, tag in enumerate(tags) if tag != "A"]
    return factors
