"""The acceptance suite: nine end-to-end checks, each with its own runtime budget."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .code import build_repetition, build_toric, logical_paulis, validate_code, weight_sum
from .exact import (
    apply_channel_T,
    dm_from_product,
    encoded_state,
    evolve,
    expectation,
    trace_distance,
)
from .observables import logical_name
from .pauli import StabilizerTableau
from .rng import stream
from .states import initial_factors, initial_tableau, unencoded_expectation
from .syndrome import convergence_experiment, linear_fit, run_chain_ensemble
from .trajectory import run_ensemble
from .verify import VerificationReport, lemma2_time, mutated_toric, theorem_time, verify_logical_fixedpoint


def _exact_run(psi, rho_d, t, times, L=2):
    spec, lay = build_toric(L)
    rho = dm_from_product(initial_factors(lay, psi, rho_d))
    return spec, lay, evolve(rho, spec, t, times)


def logical_preservation(seed: int = 0) -> VerificationReport:
    rep = VerificationReport()
    times = [0.0, 2.0, 5.0, 10.0, 20.0]
    for psi in ("00", "++", "bell", "magic"):
        for rho_d in ("zero", "mixed"):
            spec, _, res = _exact_run(psi, rho_d, 20.0, times)
            worst = max(
                float(np.max(np.abs(res.observables[logical_name(k)] - unencoded_expectation(psi, k))))
                for k in logical_paulis(spec)
            )
            rep.add(f"logicals conserved psi={psi} rho_D={rho_d}", worst <= 1e-6, value=worst, bound=1e-6)
    return rep


def logical_fixed_point(seed: int = 0) -> VerificationReport:
    rep = VerificationReport()
    failing = [L for L in range(2, 17) if not verify_logical_fixedpoint(build_toric(L)[0]).passed]
    rep.add("fixed point L=2..16", not failing, detail=f"failing L={failing}" if failing else "")
    for kind in ("logical-support", "wrong-type"):
        spec, _ = mutated_toric(3, kind)
        caught = not verify_logical_fixedpoint(spec).passed
        rep.add(f"mutation '{kind}' rejected", caught)
    return rep


def _random_density(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def energy_lowering(seed: int = 0, samples: int = 200) -> VerificationReport:
    rep = VerificationReport()
    spec, _ = build_toric(2)
    rng = stream(seed, 3)
    worst = -math.inf
    for _ in range(samples):
        rho = _random_density(1 << spec.n, rng)
        for j, s in enumerate(spec.sites):
            before = (1 - expectation(rho, s).real) / 2
            after = (1 - expectation(apply_channel_T(rho, spec, j), s).real) / 2
            worst = max(worst, after - before)
    rep.add(f"tr(T_j(rho) P_j^-) <= tr(rho P_j^-) over {samples} states", worst <= 1e-10, value=worst, bound=1e-10)
    return rep


def convergence_envelope(seed: int = 0) -> VerificationReport:
    rep = VerificationReport()
    eps_list = (0.1, 0.01)
    t_eps = [lemma2_time(2, e) for e in eps_list]
    times = sorted(set(np.linspace(0, 25, 51).tolist() + t_eps))
    spec, _, res = _exact_run("bell", "mixed", 25.0, times)
    qperp = res.observables["Qperp"]
    env = 16 * np.exp(-np.asarray(times) / 2)
    rep.add("Qperp <= 16 exp(-t/2) on [0, 25]", bool(np.all(qperp <= env)), value=float(np.max(qperp - env)), bound=0.0)
    for e, t in zip(eps_list, t_eps):
        q = float(qperp[times.index(t)])
        rep.add(f"Qperp at lemma2_time(2, {e}) = {t:.4g}", q <= e, value=q, bound=e)
    return rep


def theorem_end_to_end(seed: int = 0) -> VerificationReport:
    rep = VerificationReport()
    eps, eps2 = 0.25, 0.01
    t1, t2 = lemma2_time(2, eps2), theorem_time(2, eps)
    spec, lay = build_toric(2)
    target = np.asarray(encoded_state("bell", spec, lay))
    for rho_d in ("mixed", "zero"):
        rho = dm_from_product(initial_factors(lay, "bell", rho_d))
        res = evolve(rho, spec, t2, [t1, t2], keep_states=True)
        d1 = trace_distance(res.states[0], target)
        d2 = trace_distance(res.states[1], target)
        rep.add(f"distance at theorem_time(2, {eps}) = {t2:.4g}, rho_D={rho_d}", d2 <= eps, value=d2, bound=eps)
        rep.add(f"distance at lemma2_time(2, {eps2}) = {t1:.4g}, rho_D={rho_d}", d1 <= 4 * math.sqrt(eps2), value=d1, bound=4 * math.sqrt(eps2))
    return rep


def potential_decay(seed: int = 0, ntraj: int = 2000) -> VerificationReport:
    rep = VerificationReport()
    times = np.linspace(0, 20, 41)
    _, _, res = _exact_run("bell", "mixed", 20.0, times)
    d = res.observables["D(2)"]
    env = d[0] * np.exp(-times / 2) + 1e-6
    rep.add("exact L=2: <D(2)>_t <= <D(2)>_0 exp(-t/2)", bool(np.all(d <= env)), value=float(np.max(d - env)), bound=0.0)

    spec, lay = build_toric(4)
    times = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0]
    st = run_ensemble(spec, initial_tableau(spec, lay, "bell", "mixed"), 8.0, times, ntraj, seed, logicals=False, overlap=False)
    m, s = st.get("D(2)")
    env = m[0] * np.exp(-np.asarray(times) / 2)
    excess = (m - env)[1:] / s[1:]
    rep.add(
        f"trajectory L=4 ({ntraj}): <D(2)>_t <= <D(2)>_0 exp(-t/2) + 4 se",
        bool(np.all(excess <= 4)),
        value=float(np.max(excess)),
        bound=4.0,
        detail="value in standard errors",
    )
    return rep


def _sigma(a, sa, b, sb):
    return np.abs(a - b) / np.hypot(sa, sb)


def cross_engine(seed: int = 0, ntraj: int = 10_000) -> VerificationReport:
    rep = VerificationReport()
    times = [0.25, 0.5, 1.0, 2.0, 3.0]
    spec, lay, res = _exact_run("bell", "mixed", 3.0, times)
    st = run_ensemble(spec, initial_tableau(spec, lay, "bell", "mixed"), 3.0, times, ntraj, seed, logicals=False, overlap=False)
    m, s = st.get("H")
    z = np.abs(m - res.observables["H"]) / s
    rep.add(f"L=2 exact vs trajectory <H> ({ntraj})", bool(np.all(z <= 4)), value=float(np.max(z)), bound=4.0, detail="sigma")

    spec, lay = build_toric(4)
    times = [0.5, 1.0, 2.0, 4.0, 8.0]
    tr = run_ensemble(spec, initial_tableau(spec, lay, "bell", "mixed"), 8.0, times, ntraj, seed + 1, logicals=False, overlap=False)
    ch = run_chain_ensemble(4, 8.0, times, ntraj, seed + 2, psi="bell").stats
    for name in ("N_p", "N_v"):
        z = _sigma(*tr.get(name), *ch.get(name))
        rep.add(f"L=4 trajectory vs chain <{name}> ({ntraj} each)", bool(np.all(z <= 4)), value=float(np.max(z)), bound=4.0, detail="sigma")
    return rep


def linear_scaling(seed: int = 0, ntraj: int = 200, L_list=(8, 16, 32, 64, 128)) -> VerificationReport:
    rep = VerificationReport()
    eps = 0.01
    rows = convergence_experiment(L_list, eps, ntraj, seed)
    for r in rows:
        rep.add(
            f"L={r.L}: {1 - eps:g}-quantile of absorption time",
            r.quantile <= 4 * math.log(2) * r.L + 2 * math.log(100),
            value=r.quantile,
            bound=r.bound,
            detail=f"mean={r.mean:.4g}",
        )
    slope, intercept, r2 = linear_fit([r.L for r in rows], [r.mean for r in rows])
    rep.add("mean absorption time linear in L", r2 >= 0.99 and slope > 0, value=r2, bound=0.99, detail=f"slope={slope:.4g}")
    return rep


def repetition_regression(seed: int = 0, n: int = 5, ntraj: int = 2000) -> VerificationReport:
    rep = VerificationReport()
    spec = build_repetition(n)
    v = validate_code(spec)
    rep.add(f"repetition n={n} validates", v.passed, detail="; ".join(map(str, v.violations[:3])))
    rep.add(f"repetition n={n} logical fixed point", verify_logical_fixedpoint(spec).passed)
    alpha = 2.0
    w = weight_sum(spec, alpha)
    rate = 1 - spec.m / alpha
    times = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0]
    env = w * np.exp(-rate * np.asarray(times))
    tab = StabilizerTableau.from_product(["MIXED"] * n)
    st = run_ensemble(spec, tab, 8.0, times, ntraj, seed, logicals=False)
    m, s = st.get("Qperp")
    excess = np.max(m - env - 4 * np.nan_to_num(s))
    rep.add(f"trajectory Qperp <= {w:g} exp(-{rate:g} t)", excess <= 0, value=float(excess), bound=0.0)
    res = evolve(dm_from_product([((q,), np.eye(2) / 2) for q in range(n)]), spec, 8.0, times)
    excess = float(np.max(res.observables["Qperp"] - env))
    rep.add(f"exact Qperp <= {w:g} exp(-{rate:g} t)", excess <= 1e-9, value=excess, bound=0.0)
    return rep


@dataclass(frozen=True)
class Criterion:
    number: int
    title: str
    run: Callable[..., VerificationReport]
    budget: float  # seconds


CRITERIA = (
    Criterion(1, "logical preservation (exact)", logical_preservation, 120),
    Criterion(2, "logical fixed point (symbolic)", logical_fixed_point, 1),
    Criterion(3, "energy lowering", energy_lowering, 60),
    Criterion(4, "convergence envelope", convergence_envelope, 120),
    Criterion(5, "encoder end to end", theorem_end_to_end, 120),
    Criterion(6, "potential decay", potential_decay, 180),
    Criterion(7, "cross-engine agreement", cross_engine, 300),
    Criterion(8, "linear scaling of convergence time", linear_scaling, 300),
    Criterion(9, "generic-code regression", repetition_regression, 60),
)


@dataclass
class CriterionResult:
    criterion: Criterion
    report: VerificationReport
    seconds: float

    @property
    def within_budget(self) -> bool:
        return self.seconds <= self.criterion.budget

    @property
    def passed(self) -> bool:
        return self.report.passed and self.within_budget

    def line(self) -> str:
        c = self.criterion
        status = "PASS" if self.passed else "FAIL"
        return f"criterion {c.number} {status}: {c.title} ({self.seconds:.1f}s, budget {c.budget:g}s)"


def run_criterion(number: int, seed: int = 0) -> CriterionResult:
    crit = CRITERIA[number - 1]
    t0 = time.perf_counter()
    report = crit.run(seed)
    return CriterionResult(crit, report, time.perf_counter() - t0)
