import numpy as np
import pytest

from encoder_lab.code import build_toric
from encoder_lab.exact import dm_from_product, evolve
from encoder_lab.pauli import PauliOp, StabilizerTableau
from encoder_lab.states import initial_factors, initial_tableau
from encoder_lab.trajectory import fire_site, new_trajectory, run_ensemble, run_trajectory, trajectory_observable_names


def code_tableau(spec):
    gens = [s for j, s in enumerate(spec.sites) if not spec.is_sink(j)]
    gens += [spec.logicals["Z1"], spec.logicals["Z2"]]
    return StabilizerTableau.from_generators(spec.n, gens)


@pytest.fixture(scope="module")
def toric3():
    return build_toric(3)


def test_code_space_firing_is_trivial(toric3):
    spec, _ = toric3
    traj = new_trajectory(code_tableau(spec), 0)
    before = traj.tableau.stabilizers()
    for j in range(spec.num_sites):
        fire_site(traj, spec, j)
    assert traj.tableau.stabilizers() == before
    assert traj.event_count == spec.num_sites
    assert traj.absorbed(spec)


def test_single_error_moves_to_successor(toric3):
    spec, lay = toric3
    tab = code_tableau(spec)
    j = lay.plaquette(2, 2)
    # h(2,2) is shared by p(2,2) and p(2,1), its successor
    err = PauliOp.on(spec.n, [lay.h(2, 2)], "X")
    tab.apply_pauli(err)
    excited = {k for k, s in enumerate(spec.sites) if tab.expectation(s) == -1}
    assert excited == {j, lay.plaquette(2, 1)}
    traj = new_trajectory(tab, 0)
    fire_site(traj, spec, j)
    assert traj.syndrome(spec, j) == 1
    assert traj.syndrome(spec, spec.successor[j]) == 1  # annihilated with the partner
    assert all(traj.syndrome(spec, k) == 1 for k in range(spec.num_sites))


def test_single_excitation_hops(toric3):
    spec, lay = toric3
    tab = code_tableau(spec)
    j = lay.plaquette(2, 2)
    # h(2,0) wraps around: bottom edge of p(2,0), top edge of p(2,2)
    tab.apply_pauli(PauliOp.on(spec.n, [lay.h(2, 0)], "X"))
    assert tab.expectation(spec.sites[j]) == -1
    traj = new_trajectory(tab, 0)
    fire_site(traj, spec, j)
    succ = spec.successor[j]
    assert succ == lay.plaquette(2, 1)
    assert traj.syndrome(spec, j) == 1 and traj.syndrome(spec, succ) == -1


def test_sink_never_corrects(toric3):
    spec, lay = toric3
    tab = code_tableau(spec)
    tab.apply_pauli(PauliOp.on(spec.n, [lay.v(1, 0)], "X"))  # excites p(0,0) and p(1,0)
    sink = lay.plaquette(0, 0)
    traj = new_trajectory(tab, 0)
    stabs = traj.tableau.stabilizers()
    fire_site(traj, spec, sink)
    assert traj.tableau.stabilizers() == stabs
    assert traj.syndrome(spec, sink) == -1


def test_encoded_input_stays_put(toric3):
    spec, _ = toric3
    times = [0.0, 1.0, 3.0]
    out = run_trajectory(spec, code_tableau(spec), 3.0, times, 1, 0)
    names = trajectory_observable_names(spec)
    h = out[:, names.index("H")]
    assert np.all(h == 0)
    assert np.all(out[:, names.index("logical[ZI]")] == 1)


def test_definite_logicals_never_change():
    spec, lay = build_toric(3)
    tab = initial_tableau(spec, lay, "bell", "mixed")
    for i in range(10):
        run_trajectory(spec, tab, 6.0, [6.0], 11, i, check_logicals=True)


def test_determinism_and_single_trajectory(toric3):
    spec, lay = toric3
    tab = initial_tableau(spec, lay, "00", "mixed")
    a = run_ensemble(spec, tab, 2.0, [0.5, 2.0], 20, 42)
    b = run_ensemble(spec, tab, 2.0, [0.5, 2.0], 20, 42)
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.stderr, b.stderr)
    one = run_ensemble(spec, tab, 2.0, [0.5, 2.0], 1, 42)
    assert np.array_equal(one.mean, run_trajectory(spec, tab, 2.0, [0.5, 2.0], 42, 0))
    assert np.all(np.isnan(one.stderr))
    with pytest.raises(ValueError):
        run_ensemble(spec, tab, 2.0, [1.0], 0, 42)


def test_parallel_matches_serial(toric3, monkeypatch):
    spec, lay = toric3
    tab = initial_tableau(spec, lay, "00", "mixed")
    monkeypatch.delenv("ENCODER_LAB_THREADS", raising=False)
    serial = run_ensemble(spec, tab, 2.0, [1.0, 2.0], 12, 3, workers=1)
    parallel = run_ensemble(spec, tab, 2.0, [1.0, 2.0], 12, 3, workers=3)
    assert np.array_equal(serial.mean, parallel.mean)


def test_absorbed_state_is_frozen(toric3):
    spec, lay = toric3
    tab = initial_tableau(spec, lay, "00", "zero")
    times = np.linspace(0, 40, 41)
    out = run_trajectory(spec, tab, 40.0, times, 5, 0, logicals=False)
    names = trajectory_observable_names(spec, logicals=False)
    h = out[:, names.index("H")]
    first = int(np.argmax(h == 0))
    assert h[-1] == 0
    frozen = [k for k, n in enumerate(names) if n != "events"]
    assert np.all(out[first:, frozen] == out[-1, frozen])


def test_event_count_is_poisson(toric3):
    spec, lay = toric3
    tab = initial_tableau(spec, lay, "00", "mixed")
    st = run_ensemble(spec, tab, 2.0, [2.0], 400, 8, logicals=False, overlap=False)
    m, s = st.get("events")
    assert abs(m[0] - spec.num_sites * 2.0) <= 3 * s[0]


def test_agrees_with_exact_at_l2():
    spec, lay = build_toric(2)
    times = [0.5, 1.0, 2.0]
    ex = evolve(dm_from_product(initial_factors(lay, "++", "zero")), spec, 2.0, times)
    st = run_ensemble(spec, initial_tableau(spec, lay, "++", "zero"), 2.0, times, 3000, 2)
    for name in ("H", "Qperp", "P-[p(1,1)]"):
        m, s = st.get(name)
        assert np.all(np.abs(m - ex.observables[name]) <= 4 * s), name
    m, s = st.get("logical[XI]")
    assert np.all(m == 1)


def test_potential_decays():
    spec, lay = build_toric(3)
    times = [0.0, 1.0, 2.0, 4.0]
    st = run_ensemble(spec, initial_tableau(spec, lay, "00", "mixed"), 4.0, times, 500, 6, logicals=False, overlap=False)
    m, s = st.get("D(2)")
    assert np.all(m[1:] <= m[0] * np.exp(-np.array(times[1:]) / 2) + 4 * s[1:])
