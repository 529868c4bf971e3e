"""Classical excitation dynamics behind the encoder.

All generators commute, so each ``T_j`` maps syndrome configurations to syndrome
configurations: firing an occupied site clears it and toggles every site its
correction anticommutes with.  For the toric flow that means "hop to the
successor, annihilating if it is occupied".  Only occupied firing sites have a
nonzero rate, so the Gillespie loop runs over those alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .code import CodeSpec, ToricLayout, _excited, toric_layout
from .observables import DEFAULT_ALPHAS, potential_name
from .rng import stream
from .states import psi_vector, theorem_tags
from .trajectory import EnsembleStats, map_indexed, summarize
from .verify import lemma2_time

# -- site tables ------------------------------------------------------------------


@dataclass(frozen=True)
class ChainTables:
    """Flat description of a code's excitation flow.

    ``targets[indptr[j]:indptr[j+1]]`` are the foreign sites toggled when ``j`` fires.
    """

    names: tuple[str, ...]
    sectors: tuple[str, ...]
    sector_id: np.ndarray
    fires: np.ndarray
    indptr: np.ndarray
    targets: np.ndarray
    f: np.ndarray

    @property
    def num_sites(self) -> int:
        return len(self.names)

    @property
    def sector_names(self) -> list[str]:
        return sorted(set(self.sectors))

    def weights(self, alphas: Sequence[float]) -> np.ndarray:
        w = np.array([float(a) ** self.f.astype(float) for a in alphas]).reshape(len(alphas), -1)
        w[:, ~self.fires] = 0.0
        return w


def _pack(names, sectors, fires, flips, f) -> ChainTables:
    indptr = np.zeros(len(names) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(x) for x in flips])
    targets = np.array([k for x in flips for k in x], dtype=np.int64)
    order = sorted(set(sectors))
    sid = np.array([order.index(s) for s in sectors], dtype=np.int64)
    return ChainTables(
        tuple(names), tuple(sectors), sid, np.asarray(fires, dtype=np.bool_), indptr, targets, np.asarray(f, dtype=np.int64)
    )


def tables_from_spec(spec: CodeSpec) -> ChainTables:
    if spec.f_values is None:
        raise ValueError("excitation flow is cyclic")
    fires = [not spec.is_sink(j) for j in range(spec.num_sites)]
    return _pack(spec.names, spec.sectors, fires, _excited(spec.pred), spec.f_values)


def toric_tables(L: int) -> ChainTables:
    """Same tables as ``tables_from_spec(build_toric(L)[0])`` without building Pauli operators."""
    lay = ToricLayout(L)
    names, sectors, fires, flips, f = [], [], [], [], []
    for y in range(L):
        for x in range(L):
            names.append(f"p({x},{y})")
            sectors.append("p")
            fires.append((x, y) != (0, 0))
            f.append(lay.f_closed_form("p", x, y) if (x, y) != (0, 0) else -1)
            if (x, y) == (0, 0):
                flips.append(())
            elif y != 0:
                flips.append((lay.plaquette(x, y - 1),))
            else:
                flips.append((lay.plaquette(x - 1, 0),))
    for y in range(L):
        for x in range(L):
            names.append(f"v({x},{y})")
            sectors.append("v")
            fires.append((x, y) != (0, 0))
            f.append(lay.f_closed_form("v", x, y) if (x, y) != (0, 0) else -1)
            if (x, y) == (0, 0):
                flips.append(())
            elif x != 0:
                flips.append((lay.vertex(x + 1, y),))
            else:
                flips.append((lay.vertex(0, y + 1),))
    return _pack(names, sectors, fires, flips, f)


# -- initial configurations ----------------------------------------------------------


@dataclass
class SyndromeConfig:
    """Excitation grids indexed ``[y, x]``; plaquette (x, y) and vertex (x, y) as in ToricLayout."""

    L: int
    plaq: np.ndarray
    vert: np.ndarray

    def __post_init__(self):
        self.plaq = np.asarray(self.plaq, dtype=np.uint8).reshape(self.L, self.L)
        self.vert = np.asarray(self.vert, dtype=np.uint8).reshape(self.L, self.L)

    def parity_ok(self) -> bool:
        return int(self.plaq.sum()) % 2 == 0 and int(self.vert.sum()) % 2 == 0

    def occupancy(self) -> np.ndarray:
        """Flat site vector in toric site order (plaquettes, then vertices)."""
        return np.concatenate([self.plaq.reshape(-1), self.vert.reshape(-1)]).astype(np.uint8)

    @classmethod
    def empty(cls, L: int) -> SyndromeConfig:
        return cls(L, np.zeros((L, L)), np.zeros((L, L)))

    @classmethod
    def from_sites(cls, L: int, sites: Sequence[int]) -> SyndromeConfig:
        occ = np.zeros(2 * L * L, dtype=np.uint8)
        for j in sites:
            occ[j] ^= 1
        return cls(L, occ[: L * L], occ[L * L :])


def _edge_arrays(L: int) -> tuple[np.ndarray, np.ndarray]:
    lay = ToricLayout(L)
    pe = np.array([lay.plaquette_edges(x, y) for y in range(L) for x in range(L)])
    ve = np.array([lay.vertex_edges(x, y) for y in range(L) for x in range(L)])
    return pe, ve


_H2 = np.kron(np.array([[1, 1], [1, -1]]), np.array([[1, 1], [1, -1]])) / 2.0


def _basis_values(tags: Sequence[str], basis: str, rng: np.random.Generator, pair=None) -> np.ndarray:
    """One +-1 value per qubit from its marginal in the Z or X basis."""
    n = len(tags)
    u = rng.random(n)
    vals = np.where(u < 0.5, 1, -1).astype(np.int8)
    for q, tag in enumerate(tags):
        if tag[0] == basis and tag[1] in "+-":
            vals[q] = 1 if tag[1] == "+" else -1
    if pair is not None:
        psi, a1, a2 = pair
        amp = psi_vector(psi) if basis == "Z" else _H2 @ psi_vector(psi)
        prob = np.abs(amp) ** 2
        k = int(np.searchsorted(np.cumsum(prob), rng.random() * prob.sum(), side="right"))
        k = min(k, 3)
        vals[a1] = 1 - 2 * (k >> 1)
        vals[a2] = 1 - 2 * (k & 1)
    return vals


def sample_initial_syndrome(
    layout: ToricLayout, tags: Sequence[str], rng: np.random.Generator, psi=None
) -> SyndromeConfig:
    """Sample plaquette occupancies from Z-basis values and vertex occupancies from X-basis values.

    ``tags`` holds one of Z+, Z-, X+, X-, Y+, Y-, MIXED per edge; a pair of ``"A"``
    tags marks the two input qubits, sampled jointly from ``psi``.  Every plaquette
    or vertex touching an input qubit also touches a qubit whose value in that
    basis is uniform, so the two sectors may be sampled independently.
    """
    L = layout.L
    if len(tags) != layout.n:
        raise ValueError(f"expected {layout.n} tags, got {len(tags)}")
    a_qubits = [q for q, t in enumerate(tags) if t == "A"]
    pair = None
    if a_qubits:
        if psi is None or len(a_qubits) != 2:
            raise ValueError("'A' tags need exactly two qubits and a psi")
        pair = (psi, layout.roles["A1"][0], layout.roles["A2"][0])
    pe, ve = _edge_arrays(L)
    zv = _basis_values(tags, "Z", rng, pair)
    xv = _basis_values(tags, "X", rng, pair)
    plaq = (np.prod(zv[pe], axis=1) == -1).astype(np.uint8)
    vert = (np.prod(xv[ve], axis=1) == -1).astype(np.uint8)
    return SyndromeConfig(L, plaq, vert)


# -- the chain -------------------------------------------------------------------------


@numba.njit(cache=True)
def _chain_kernel(indptr, targets, fires, sector_id, n_sectors, weights, occ0, times, t_max, max_events, gen, keep_sites):
    S = occ0.shape[0]
    T = times.shape[0]
    occ = occ0.copy()
    active = np.empty(S, dtype=np.int64)
    pos = np.full(S, -1, dtype=np.int64)
    counts = np.zeros(n_sectors, dtype=np.int64)
    K = 0
    for j in range(S):
        if occ[j]:
            counts[sector_id[j]] += 1
            if fires[j]:
                active[K] = j
                pos[j] = K
                K += 1

    N = np.zeros((T, n_sectors), dtype=np.int64)
    D = np.zeros((T, weights.shape[0]))
    sites = np.zeros((T if keep_sites else 0, S), dtype=np.uint8)
    t = 0.0
    events = 0
    k = 0
    absorbed_at = np.inf
    while True:
        if K == 0:
            t_next = np.inf
        else:
            t_next = t - math.log1p(-gen.random()) / K
        while k < T and times[k] < t_next:
            for s in range(n_sectors):
                N[k, s] = counts[s]
            for i in range(K):
                j = active[i]
                for a in range(weights.shape[0]):
                    D[k, a] += weights[a, j]
            if keep_sites:
                sites[k, :] = occ
            k += 1
        if K == 0:
            if counts.sum() == 0:
                absorbed_at = t
            break
        if t_next > t_max or events >= max_events:
            break
        t = t_next
        events += 1
        i = min(int(gen.random() * K), K - 1)
        j = active[i]
        # clear j, then toggle its targets
        last = active[K - 1]
        active[i] = last
        pos[last] = i
        pos[j] = -1
        K -= 1
        occ[j] = 0
        counts[sector_id[j]] -= 1
        for p in range(indptr[j], indptr[j + 1]):
            q = targets[p]
            if occ[q]:
                occ[q] = 0
                counts[sector_id[q]] -= 1
                if pos[q] >= 0:
                    i2 = pos[q]
                    last = active[K - 1]
                    active[i2] = last
                    pos[last] = i2
                    pos[q] = -1
                    K -= 1
            else:
                occ[q] = 1
                counts[sector_id[q]] += 1
                if fires[q]:
                    active[K] = q
                    pos[q] = K
                    K += 1
    return N, D, sites, absorbed_at, events


@dataclass
class ChainResult:
    times: np.ndarray
    counts: dict[str, np.ndarray]
    potential: dict[float, np.ndarray]
    absorption_time: float  # inf when not absorbed within t_max
    events: int
    sites: np.ndarray | None = None

    @property
    def absorbed(self) -> bool:
        return math.isfinite(self.absorption_time)

    @property
    def N_p(self) -> np.ndarray:
        return self.counts["p"]

    @property
    def N_v(self) -> np.ndarray:
        return self.counts["v"]


def simulate_chain(
    occupancy: SyndromeConfig | np.ndarray,
    tables: ChainTables,
    t_max: float,
    sample_times: Sequence[float],
    gen: np.random.Generator,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    keep_sites: bool = False,
    max_events: int = 10**10,
) -> ChainResult:
    """Gillespie run of the excitation chain; ``t_max = inf`` runs to absorption."""
    occ = occupancy.occupancy() if isinstance(occupancy, SyndromeConfig) else np.asarray(occupancy, dtype=np.uint8)
    if occ.shape != (tables.num_sites,):
        raise ValueError("occupancy does not match the site tables")
    times = np.asarray(sample_times, dtype=np.float64)
    if times.size and (np.any(np.diff(times) < 0) or times[0] < 0 or times[-1] > t_max):
        raise ValueError("sample times must be sorted and lie in [0, t_max]")
    alphas = tuple(alphas)
    sec = tables.sector_names
    N, D, sites, absorbed_at, events = _chain_kernel(
        tables.indptr,
        tables.targets,
        tables.fires,
        tables.sector_id,
        len(sec),
        tables.weights(alphas) if alphas else np.zeros((0, tables.num_sites)),
        occ,
        times,
        float(t_max),
        int(max_events),
        gen,
        keep_sites,
    )
    return ChainResult(
        times,
        {s: N[:, i] for i, s in enumerate(sec)},
        {a: D[:, i] for i, a in enumerate(alphas)},
        float(absorbed_at),
        int(events),
        sites if keep_sites else None,
    )


# -- ensembles -----------------------------------------------------------------------------


def chain_observable_names(tables: ChainTables, alphas=DEFAULT_ALPHAS, keep_sites: bool = False) -> list[str]:
    names = ["H"] + [f"N_{s}" for s in tables.sector_names] + [potential_name(a) for a in alphas]
    if keep_sites:
        names += [f"P-[{n}]" for n in tables.names]
    return names + ["absorbed"]


@dataclass
class ChainEnsemble:
    stats: EnsembleStats
    absorption_times: np.ndarray  # per chain, inf if not absorbed


def _chain_chunk(args):
    L, psi, rho_d, t_max, times, master_seed, key, lo, hi, alphas, keep_sites = args
    tables = toric_tables(L)
    lay = toric_layout(L)
    tags = theorem_tags(lay, rho_d)
    rows, absorb = [], []
    for i in range(lo, hi):
        gen = stream(master_seed, *key, i)
        cfg = sample_initial_syndrome(lay, tags, gen, psi)
        res = simulate_chain(cfg, tables, t_max, times, gen, alphas, keep_sites)
        cols = [sum(res.counts.values())] + [res.counts[s] for s in tables.sector_names]
        cols += [res.potential[a] for a in alphas]
        block = np.column_stack([np.asarray(c, dtype=float) for c in cols])
        if keep_sites:
            block = np.hstack([block, res.sites.astype(float)])
        done = (times >= res.absorption_time).astype(float)[:, None]
        rows.append(np.hstack([block, done]))
        absorb.append(res.absorption_time)
    return np.array(rows), np.array(absorb)


def _chain_rows(args):
    rows, absorb = _chain_chunk(args)
    return np.concatenate([rows.reshape(len(absorb), -1), absorb[:, None]], axis=1)


def run_chain_ensemble(
    L: int,
    t_max: float,
    sample_times: Sequence[float],
    ntraj: int,
    master_seed: int,
    psi="00",
    rho_d: str = "mixed",
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    keep_sites: bool = False,
    workers: int | None = None,
    key: tuple[int, ...] = (),
) -> ChainEnsemble:
    """Chains from the encoder's initial product state; chain ``i`` uses stream ``(master_seed, *key, i)``."""
    if ntraj < 1:
        raise ValueError("ntraj must be >= 1")
    times = np.asarray(sample_times, dtype=float)
    alphas = tuple(alphas)
    tables = toric_tables(L)
    names = chain_observable_names(tables, alphas, keep_sites)
    flat = map_indexed(
        _chain_rows,
        lambda lo, hi: (L, psi, rho_d, t_max, times, master_seed, key, lo, hi, alphas, keep_sites),
        ntraj,
        workers,
    )
    absorb = flat[:, -1]
    samples = flat[:, :-1].reshape(ntraj, len(times), len(names))
    return ChainEnsemble(summarize(samples, times, names), absorb)


# -- convergence-time scaling ----------------------------------------------------------------


@dataclass
class ScalingRow:
    L: int
    ntraj: int
    mean: float
    stderr: float
    median: float
    quantile: float  # (1 - epsilon) quantile
    bound: float
    exceeding: list[tuple[int, float]] = field(default_factory=list)  # (chain index, time) above the bound

    @property
    def passed(self) -> bool:
        return self.quantile <= self.bound


def convergence_experiment(
    L_list: Sequence[int],
    epsilon: float,
    ntraj: int,
    master_seed: int,
    psi="00",
    rho_d: str = "mixed",
    workers: int | None = None,
) -> list[ScalingRow]:
    """Absorption-time statistics per L; chains are keyed by ``(master_seed, L, i)``."""
    rows = []
    for L in L_list:
        ens = run_chain_ensemble(L, math.inf, [], ntraj, master_seed, psi, rho_d, alphas=(), workers=workers, key=(L,))
        t = ens.absorption_times
        bound = lemma2_time(L, epsilon)
        rows.append(
            ScalingRow(
                L=L,
                ntraj=ntraj,
                mean=float(t.mean()),
                stderr=float(t.std(ddof=1) / math.sqrt(ntraj)) if ntraj > 1 else math.nan,
                median=float(np.median(t)),
                quantile=float(np.quantile(t, 1 - epsilon)),
                bound=bound,
                exceeding=[(i, float(x)) for i, x in enumerate(t) if x > bound],
            )
        )
    return rows


def linear_fit(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares ``y = slope x + intercept``; returns (slope, intercept, R^2)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2
