import math

import numpy as np
import pytest

from encoder_lab.code import build_repetition, build_toric, logical_paulis, weight_sum
from encoder_lab.exact import (
    DensityMatrix,
    apply_channel_T,
    average_channel,
    code_projection_distance,
    code_projector,
    dm_from_product,
    encoded_state,
    evolve,
    expectation,
    ground_overlap,
    liouvillian_apply,
    pauli_matrix,
    trace_distance,
    uniformized_evolution,
    _model,
)
from encoder_lab.rng import stream
from encoder_lab.states import initial_factors, unencoded_expectation


@pytest.fixture(scope="module")
def toric2():
    return build_toric(2)


def random_density(dim, gen):
    g = gen.standard_normal((dim, dim)) + 1j * gen.standard_normal((dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def test_channel_matches_projector_form(toric2):
    spec, _ = toric2
    rho = random_density(256, stream(1, 0))
    for j in (0, 3, 5):
        s = pauli_matrix(spec.sites[j])
        c = pauli_matrix(spec.corrections[j])
        pp, pm = (np.eye(256) + s) / 2, (np.eye(256) - s) / 2
        ref = pp @ rho @ pp + c @ pm @ rho @ pm @ c.conj().T
        assert np.allclose(apply_channel_T(rho, spec, j), ref, atol=1e-13)


def test_pauli_generator_matches_dense(toric2):
    spec, _ = toric2
    gen = _model(spec).generator
    rho = random_density(256, stream(2, 0))
    c = gen.to_pauli(rho)
    assert np.allclose(gen.from_pauli(c), rho, atol=1e-14)
    assert np.allclose(gen.from_pauli(gen.apply(c)), liouvillian_apply(rho, spec), atol=1e-13)


def test_channels_are_trace_preserving_and_positive(toric2):
    spec, _ = toric2
    rho = random_density(256, stream(3, 0))
    out = average_channel(rho, spec)
    assert np.isclose(np.trace(out), 1)
    assert np.linalg.eigvalsh((out + out.conj().T) / 2)[0] > -1e-12


def test_energy_lowering(toric2):
    spec, _ = toric2
    gen = stream(4, 0)
    for _ in range(5):
        rho = random_density(256, gen)
        for j, s in enumerate(spec.sites):
            before = (1 - expectation(rho, s).real) / 2
            after = (1 - expectation(apply_channel_T(rho, spec, j), s).real) / 2
            assert after <= before + 1e-10
            if not spec.is_sink(j):
                assert abs(after) < 1e-12


def test_evolve_matches_uniformization(toric2):
    spec, lay = toric2
    rho = dm_from_product(initial_factors(lay, "magic", "mixed"))
    res = evolve(rho, spec, 1.5, [1.5], keep_states=True)
    ref = uniformized_evolution(rho, spec, 1.5)
    assert np.max(np.abs(np.asarray(res.states[0]) - ref)) < 1e-8


def test_logicals_conserved_and_code_space_reached(toric2):
    spec, lay = toric2
    rho = dm_from_product(initial_factors(lay, "bell", "mixed"))
    times = [0.0, 2.0, 5.0, 10.0, 20.0]
    res = evolve(rho, spec, 20.0, times)
    for label in logical_paulis(spec):
        assert np.allclose(res.observables[f"logical[{label}]"], unencoded_expectation("bell", label), atol=1e-9)
    q = res.observables["Qperp"]
    assert np.all(np.diff(q) < 0) and q[-1] < 1e-6
    assert np.allclose(res.observables["trace"], 1, atol=1e-10)
    assert np.all(res.observables["min_eig"] > -1e-7)
    assert res.observables["H"][0] == pytest.approx(4.0)


def test_encoded_state(toric2):
    spec, lay = toric2
    for psi in ("00", "bell", "magic"):
        rho = encoded_state(psi, spec, lay)
        assert ground_overlap(rho, spec) == pytest.approx(1.0)
        for label, op in logical_paulis(spec).items():
            assert expectation(rho, op).real == pytest.approx(unencoded_expectation(psi, label), abs=1e-12)


def test_gentle_measurement_bound(toric2):
    spec, lay = toric2
    rho = dm_from_product(initial_factors(lay, "00", "mixed"))
    eps, dist = code_projection_distance(rho, spec)
    assert eps == pytest.approx(1 - 1 / 64)
    assert dist <= 2 * math.sqrt(eps)


def test_projector_is_projector(toric2):
    spec, _ = toric2
    q = code_projector(spec)
    assert np.allclose(q @ q, q) and np.isclose(np.trace(q).real, 4)


def test_trace_distance_has_no_half():
    a = np.diag([1.0, 0.0])
    b = np.diag([0.0, 1.0])
    assert trace_distance(a, b) == pytest.approx(2.0)


def test_generic_code():
    spec = build_repetition(4)
    rho = dm_from_product([((q,), np.eye(2) / 2) for q in range(4)])
    res = evolve(rho, spec, 10.0, [0.0, 10.0])
    assert res.observables["Qperp"][0] == pytest.approx(7 / 8)
    assert res.observables["Qperp"][-1] <= weight_sum(spec, 2.0) * math.exp(-5.0)
    assert set(k for k in res.observables if k.startswith("logical")) == {"logical[X]", "logical[Y]", "logical[Z]"}


def test_guards():
    with pytest.raises(ValueError):
        DensityMatrix(np.eye(3) / 3)
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([1.5, -0.5]))
    with pytest.raises(ValueError):
        DensityMatrix(np.eye(1 << 13) / (1 << 13), check=False)
    spec, _ = build_toric(3)
    with pytest.raises(ValueError):
        apply_channel_T(np.eye(2) / 2, spec, 0)
    with pytest.raises(ValueError):
        dm_from_product([((0,), np.eye(2) / 2), ((0,), np.eye(2) / 2)])
