"""Observable names shared by all engines, and the sums built from per-site occupations."""

from __future__ import annotations

import numpy as np

from .code import CodeSpec

DEFAULT_ALPHAS = (1.5, 2.0, 3.0)


def occupation_name(spec: CodeSpec, j: int) -> str:
    return f"P-[{spec.names[j]}]"


def potential_name(alpha: float) -> str:
    return f"D({alpha:g})"


def logical_name(label: str) -> str:
    return f"logical[{label}]"


def potential_weights(spec: CodeSpec, alpha: float) -> np.ndarray:
    """``alpha**f(j)`` on non-sink sites, 0 on sinks."""
    f = np.array(spec.f_values, dtype=float)
    sink = np.array([spec.is_sink(j) for j in range(spec.num_sites)])
    return np.where(sink, 0.0, float(alpha) ** f)


def aggregate_names(spec: CodeSpec, alphas=DEFAULT_ALPHAS) -> list[str]:
    names = ["H"]
    for sector in sorted(set(spec.sectors)):
        names.append(f"N_{sector}")
    names += [potential_name(a) for a in alphas]
    return names


def aggregate_matrix(spec: CodeSpec, alphas=DEFAULT_ALPHAS) -> np.ndarray:
    """Rows map the per-site occupation vector to ``aggregate_names`` values."""
    rows = [np.ones(spec.num_sites)]
    sectors = np.array(spec.sectors)
    for sector in sorted(set(spec.sectors)):
        rows.append((sectors == sector).astype(float))
    rows += [potential_weights(spec, a) for a in alphas]
    return np.vstack(rows)
