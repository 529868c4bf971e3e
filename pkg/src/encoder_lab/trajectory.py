"""Monte Carlo unraveling of ``e^{tL}`` on stabilizer states.

With ``L = |S| (T_av - id)`` the semigroup is a Poisson mixture of powers of the
averaged channel: events arrive at total rate ``|S|``, each picks a site uniformly
and applies ``T_j`` as "measure ``S_j``, correct on -1".  On a stabilizer state
every such step keeps the state a (possibly mixed) stabilizer state.

Syndromes that are already definite are cached, so the common case "fire a site
whose value is known" costs a dictionary lookup instead of a tableau scan.
"""

from __future__ import annotations

import functools
import math
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .code import CodeSpec, _excited, logical_paulis
from .observables import DEFAULT_ALPHAS, aggregate_matrix, aggregate_names, logical_name, occupation_name
from .pauli import StabilizerTableau, code_overlap
from .rng import UniformStream, stream


@functools.lru_cache(maxsize=16)
def _flip_table(spec: CodeSpec) -> tuple[tuple[int, ...], ...]:
    """Sites whose generator anticommutes with each correction (including the site itself)."""
    excited = _excited(spec.pred)
    return tuple(
        tuple(sorted(excited[k] + ([] if c.commutes(spec.sites[k]) else [k])))
        for k, c in enumerate(spec.corrections)
    )


@dataclass
class Trajectory:
    tableau: StabilizerTableau
    rng: UniformStream
    clock: float = 0.0
    event_count: int = 0
    # site -> +1/-1 for syndromes known to be definite, and how many of those are -1
    known: dict[int, int] = field(default_factory=dict)
    known_minus: int = 0

    def learn(self, j: int, v: int) -> None:
        old = self.known.get(j)
        self.known[j] = v
        self.known_minus += (v == -1) - (old == -1)

    def syndrome(self, spec: CodeSpec, j: int) -> int:
        """Expectation of ``S_j``: +1/-1 if definite, else 0."""
        v = self.known.get(j)
        if v is None:
            v = self.tableau.expectation(spec.sites[j])
            if v:
                self.learn(j, v)
        return v

    def absorbed(self, spec: CodeSpec) -> bool:
        """All syndromes definite and +1: the state is in the code space."""
        return len(self.known) == spec.num_sites and self.known_minus == 0


def new_trajectory(tableau: StabilizerTableau, master_seed: int, index: int = 0) -> Trajectory:
    return Trajectory(tableau.copy(), UniformStream(stream(master_seed, index)))


def fire_site(traj: Trajectory, spec: CodeSpec, j: int) -> Trajectory:
    """Apply ``T_j`` to one trajectory: measure ``S_j``, apply ``C_j`` on outcome -1."""
    known = traj.known
    outcome = known.get(j)
    if outcome is None:
        outcome, _ = traj.tableau.measure(spec.sites[j], traj.rng)
        traj.learn(j, outcome)
    if outcome == -1:
        c = spec.corrections[j]
        if not c.is_identity:
            traj.tableau.apply_pauli(c)
            for k in _flip_table(spec)[j]:
                v = known.get(k)
                if v is not None:
                    known[k] = -v
                    traj.known_minus += v
    traj.event_count += 1
    return traj


def trajectory_observable_names(
    spec: CodeSpec, alphas: Sequence[float] = DEFAULT_ALPHAS, logicals: bool = True, overlap: bool = True
) -> list[str]:
    names = [logical_name(k) for k in logical_paulis(spec)] if logicals else []
    names += [occupation_name(spec, j) for j in range(spec.num_sites)]
    names += aggregate_names(spec, alphas)
    if overlap:
        names += ["code_overlap", "Qperp"]
    names.append("events")
    return names


def _record(traj: Trajectory, spec: CodeSpec, agg: np.ndarray, logical_ops, overlap: bool) -> list[float]:
    tab = traj.tableau
    row = [float(tab.expectation(p)) for p in logical_ops]
    syn = np.array([traj.syndrome(spec, j) for j in range(spec.num_sites)], dtype=float)
    occ = (1.0 - syn) / 2.0
    row += occ.tolist()
    row += (agg @ occ).tolist()
    if overlap:
        if len(traj.known) == spec.num_sites:
            q = 1.0 if all(v == 1 for v in traj.known.values()) else 0.0
        else:
            q = code_overlap(tab, spec.sites)
        row += [q, 1.0 - q]
    row.append(float(traj.event_count))
    return row


def _check_times(t_max: float, sample_times: Sequence[float]) -> np.ndarray:
    times = np.asarray(sample_times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("need at least one sample time")
    if np.any(np.diff(times) < 0):
        raise ValueError("sample times must be sorted")
    if times[0] < 0 or times[-1] > t_max:
        raise ValueError("sample times must lie in [0, t_max]")
    return times


def run_trajectory(
    spec: CodeSpec,
    tableau: StabilizerTableau,
    t_max: float,
    sample_times: Sequence[float],
    master_seed: int,
    index: int = 0,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    logicals: bool = True,
    overlap: bool = True,
    check_logicals: bool = False,
) -> np.ndarray:
    """One unraveled trajectory; returns an array of shape (len(sample_times), n_observables).

    Columns follow :func:`trajectory_observable_names`.  ``check_logicals`` asserts
    after every event that definite logical values are unchanged and the tableau is
    consistent (slow; for tests).
    """
    times = _check_times(t_max, sample_times)
    traj = new_trajectory(tableau, master_seed, index)
    agg = aggregate_matrix(spec, alphas)
    logical_ops = list(logical_paulis(spec).values()) if logicals else []
    watch = {}
    if check_logicals:
        watch = {i: v for i, p in enumerate(logical_paulis(spec).values()) if (v := traj.tableau.expectation(p))}
        watched_ops = list(logical_paulis(spec).values())

    nsites = spec.num_sites
    rng = traj.rng
    absorbed = traj.absorbed(spec)
    next_event = rng.exponential(nsites)
    out = []
    for ts in times:
        while not absorbed and next_event <= ts:
            traj.clock = next_event
            j = min(int(rng.random() * nsites), nsites - 1)
            fire_site(traj, spec, j)
            absorbed = traj.absorbed(spec)
            if check_logicals:
                traj.tableau.check()
                for i, v in watch.items():
                    if traj.tableau.expectation(watched_ops[i]) != v:
                        raise AssertionError(f"logical {i} changed at t={traj.clock}")
            next_event += rng.exponential(nsites)
        if absorbed:
            # later events are no-ops; waiting times are memoryless, so only a Poisson count remains
            traj.event_count += int(rng.gen.poisson(nsites * (ts - traj.clock)))
            traj.clock = ts
        out.append(_record(traj, spec, agg, logical_ops, overlap))
    return np.array(out)


@dataclass
class EnsembleStats:
    times: np.ndarray
    names: list[str]
    mean: np.ndarray  # (n_times, n_observables)
    stderr: np.ndarray
    ntraj: int

    def column(self, name: str) -> int:
        return self.names.index(name)

    def get(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        k = self.column(name)
        return self.mean[:, k], self.stderr[:, k]


def summarize(samples: np.ndarray, times, names) -> EnsembleStats:
    """Mean and standard error over axis 0; stderr is NaN for a single sample."""
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    if n > 1:
        stderr = samples.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        stderr = np.full_like(mean, np.nan)
    return EnsembleStats(np.asarray(times, dtype=float), list(names), mean, stderr, n)


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get("ENCODER_LAB_THREADS")
    n = requested if requested is not None else (os.cpu_count() or 1)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def _run_chunk(args) -> np.ndarray:
    spec, initial, t_max, times, master_seed, lo, hi, kw = args
    rows = []
    for i in range(lo, hi):
        tab = initial(i) if callable(initial) else initial
        rows.append(run_trajectory(spec, tab, t_max, times, master_seed, i, **kw))
    return np.array(rows)


def map_indexed(fn: Callable, make_args: Callable[[int, int], tuple], total: int, workers: int | None) -> np.ndarray:
    """Run ``fn`` over contiguous index chunks and concatenate in index order."""
    workers = min(worker_count(workers), total)
    if workers <= 1:
        return fn(make_args(0, total))
    bounds = np.linspace(0, total, workers * 4 + 1).astype(int)
    chunks = [make_args(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(workers, mp_context=ctx) as pool:
        parts = list(pool.map(fn, chunks))
    return np.concatenate(parts, axis=0)


def run_ensemble(
    spec: CodeSpec,
    initial: StabilizerTableau | Callable[[int], StabilizerTableau],
    t_max: float,
    sample_times: Sequence[float],
    ntraj: int,
    master_seed: int,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    logicals: bool = True,
    overlap: bool = True,
    workers: int | None = None,
) -> EnsembleStats:
    """Average ``ntraj`` trajectories; trajectory ``i`` uses stream ``(master_seed, i)``."""
    if ntraj < 1:
        raise ValueError("ntraj must be >= 1")
    times = _check_times(t_max, sample_times)
    kw = dict(alphas=tuple(alphas), logicals=logicals, overlap=overlap)
    samples = map_indexed(
        _run_chunk,
        lambda lo, hi: (spec, initial, t_max, times, master_seed, lo, hi, kw),
        ntraj,
        workers,
    )
    return summarize(samples, times, trajectory_observable_names(spec, alphas, logicals, overlap))
