import math

import numpy as np
import pytest

from encoder_lab.code import build_toric, toric_layout
from encoder_lab.exact import dm_from_product, evolve
from encoder_lab.rng import stream
from encoder_lab.states import initial_factors, theorem_tags
from encoder_lab.syndrome import (
    SyndromeConfig,
    convergence_experiment,
    linear_fit,
    run_chain_ensemble,
    sample_initial_syndrome,
    simulate_chain,
    tables_from_spec,
    toric_tables,
)
from encoder_lab.code import build_repetition
from encoder_lab.verify import lemma2_time, theorem_time


@pytest.mark.parametrize("L", (2, 3, 4, 6))
def test_closed_form_tables_match_spec(L):
    a, b = toric_tables(L), tables_from_spec(build_toric(L)[0])
    assert a.names == b.names and a.sectors == b.sectors
    for field in ("indptr", "targets", "f", "fires", "sector_id"):
        assert np.array_equal(getattr(a, field), getattr(b, field))


def test_all_z_plus_has_no_plaquette_excitations():
    lay = toric_layout(4)
    cfg = sample_initial_syndrome(lay, ["Z+"] * lay.n, stream(0, 0))
    assert cfg.plaq.sum() == 0


def test_theorem_tags_give_even_parity():
    lay = toric_layout(5)
    gen = stream(1, 0)
    tags = theorem_tags(lay, "mixed")
    for _ in range(50):
        cfg = sample_initial_syndrome(lay, tags, gen, psi="bell")
        assert cfg.parity_ok()


def test_all_mixed_plaquette_is_fair_coin():
    lay = toric_layout(3)
    gen = stream(2, 0)
    hits = [sample_initial_syndrome(lay, ["MIXED"] * lay.n, gen).plaq[1, 1] for _ in range(4000)]
    assert abs(np.mean(hits) - 0.5) < 4 * 0.5 / math.sqrt(4000)


def test_empty_config_is_absorbed_at_zero():
    res = simulate_chain(SyndromeConfig.empty(4), toric_tables(4), 10.0, [0.0, 5.0], stream(0, 0))
    assert res.absorption_time == 0.0 and res.events == 0
    assert np.all(res.N_p == 0) and np.all(res.N_v == 0)


def _mean_absorption(L, sites, n=4000, seed=0):
    tables = toric_tables(L)
    times = [
        simulate_chain(SyndromeConfig.from_sites(L, sites), tables, math.inf, [], stream(seed, i)).absorption_time
        for i in range(n)
    ]
    return np.mean(times), np.std(times, ddof=1) / math.sqrt(n)


def test_sink_neighbour_pair_absorbs_after_one_event():
    lay = toric_layout(4)
    m, s = _mean_absorption(4, [lay.plaquette(0, 0), lay.plaquette(1, 0)])
    assert abs(m - 1) < 4 * s


@pytest.mark.parametrize("x", (2, 3))
def test_equator_excitation_walks_to_sink(x):
    lay = toric_layout(5)
    m, s = _mean_absorption(5, [lay.plaquette(0, 0), lay.plaquette(x, 0)])
    assert abs(m - x) < 4 * s


def test_counts_never_increase_and_parity_holds():
    lay = toric_layout(6)
    tables = toric_tables(6)
    tags = theorem_tags(lay, "mixed")
    times = np.linspace(0, 30, 61)
    for i in range(30):
        gen = stream(4, i)
        cfg = sample_initial_syndrome(lay, tags, gen, psi="00")
        res = simulate_chain(cfg, tables, 30.0, times, gen)
        for n in (res.N_p, res.N_v):
            assert np.all(np.diff(n) <= 0) and np.all(n % 2 == 0)


def test_determinism_and_stderr_scaling():
    a = run_chain_ensemble(4, 5.0, [1.0, 2.0], 200, 9)
    b = run_chain_ensemble(4, 5.0, [1.0, 2.0], 200, 9)
    assert np.array_equal(a.stats.mean, b.stats.mean)
    big = run_chain_ensemble(4, 5.0, [1.0, 2.0], 800, 9)
    ratio = a.stats.get("H")[1] / big.stats.get("H")[1]
    assert np.all((ratio > 1.6) & (ratio < 2.4))  # sqrt(4) = 2


def test_potential_decays_in_expectation():
    times = [0.0, 1.0, 2.0, 4.0, 8.0]
    st = run_chain_ensemble(6, 8.0, times, 2000, 1).stats
    m, s = st.get("D(2)")
    assert np.all(m[1:] <= m[0] * np.exp(-np.array(times[1:]) / 2) + 4 * s[1:])


def test_per_site_occupations_match_exact():
    spec, lay = build_toric(2)
    times = [0.5, 1.5]
    ex = evolve(dm_from_product(initial_factors(lay, "bell", "mixed")), spec, 1.5, times)
    st = run_chain_ensemble(2, 1.5, times, 20000, 3, psi="bell", keep_sites=True).stats
    for j in range(spec.num_sites):
        name = f"P-[{spec.names[j]}]"
        m, s = st.get(name)
        assert np.all(np.abs(m - ex.observables[name]) <= 4 * np.maximum(s, 1e-12)), name


def test_generic_tables():
    spec = build_repetition(5)
    t = tables_from_spec(spec)
    res = simulate_chain(np.array([1, 0, 0, 0], dtype=np.uint8), t, math.inf, [], stream(0, 0))
    assert res.absorbed and res.events == 4  # hops 0 -> 1 -> 2 -> 3 -> gone


def test_time_bounds():
    assert theorem_time(2, 0.5) == pytest.approx(13.863, abs=1e-3)
    assert theorem_time(2, 0.25) == pytest.approx(16.636, abs=1e-3)
    assert lemma2_time(2, 1.0) == pytest.approx(5.545, abs=1e-3)
    assert lemma2_time(128, 0.01) == pytest.approx(364.1, abs=0.05)
    assert theorem_time(4, 0.1) > theorem_time(4, 0.2)
    for eps in (0.01, 0.5, 1.0):
        assert lemma2_time(3, eps) <= theorem_time(3, eps)
    for bad in ((1, 0.5), (2, 0.0), (2, 1.5)):
        with pytest.raises(ValueError):
            theorem_time(*bad)


def test_convergence_experiment_small():
    rows = convergence_experiment([4, 8, 12], 0.1, 100, 0)
    assert all(r.passed for r in rows)
    slope, _, r2 = linear_fit([r.L for r in rows], [r.mean for r in rows])
    assert slope > 0 and r2 > 0.95
