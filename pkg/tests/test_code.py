import itertools
import math

import pytest

from encoder_lab.code import (
    InvalidCodeError,
    build_repetition,
    build_toric,
    compute_f,
    logical_paulis,
    make_code,
    spec_from_json,
    spec_to_json,
    toric_weight_sum_closed_form,
    validate_code,
    weight_sum,
)
from encoder_lab.pauli import PauliOp, commutes
from encoder_lab.verify import mutated_toric, verify_logical_fixedpoint


@pytest.mark.parametrize("L", range(2, 9))
def test_toric_validates(L):
    spec, lay = build_toric(L)
    rep = validate_code(spec)
    assert rep.passed, rep.violations
    assert spec.m == 1
    assert spec.num_sites == 2 * L * L and spec.n == 2 * L * L
    assert len(spec.sinks) == 2


@pytest.mark.parametrize("L", (2, 3, 5))
def test_roles_partition_edges(L):
    _, lay = build_toric(L)
    sizes = {k: len(v) for k, v in lay.roles.items()}
    assert sizes == {"A1": 1, "A2": 1, "B": L - 1, "C": L - 1, "Bp": L - 1, "Cp": L - 1, "D": 2 * L * L - 4 * L + 2}
    assert sorted(itertools.chain.from_iterable(lay.roles.values())) == list(range(lay.n))


@pytest.mark.parametrize("L", (2, 4, 7))
def test_f_closed_form_and_successor(L):
    spec, lay = build_toric(L)
    for y in range(L):
        for x in range(L):
            if (x, y) == (0, 0):
                continue
            for kind, site in (("p", lay.plaquette(x, y)), ("v", lay.vertex(x, y))):
                assert spec.f_values[site] == lay.f_closed_form(kind, x, y)
                succ = spec.successor[site]
                assert spec.f_values[succ] == spec.f_values[site] - 1


@pytest.mark.parametrize("L", (2, 3, 4, 6))
@pytest.mark.parametrize("alpha", (1.0, 1.5, 2.0, 3.0))
def test_weight_sum_closed_form(L, alpha):
    spec, _ = build_toric(L)
    assert math.isclose(weight_sum(spec, alpha), toric_weight_sum_closed_form(L, alpha), rel_tol=1e-12)


def test_weight_sum_values():
    assert weight_sum(build_toric(2)[0], 2.0) == 9.0
    assert weight_sum(build_toric(3)[0], 2.0) == 49.0


def test_logicals():
    spec, lay = build_toric(3)
    logicals = spec.logicals
    for a, b in itertools.combinations(logicals, 2):
        anti = a[1] == b[1] and a[0] != b[0]
        assert commutes(logicals[a], logicals[b]) != anti
    ops = logical_paulis(spec)
    assert len(ops) == 15 and all(p.is_hermitian for p in ops.values())
    assert set(logicals["X1"].support) == set(lay.roles["A1"] + lay.roles["B"])
    assert set(logicals["Z1"].support) == set(lay.roles["A1"] + lay.roles["C"])
    assert set(logicals["X2"].support) == set(lay.roles["A2"] + lay.roles["Bp"])
    assert set(logicals["Z2"].support) == set(lay.roles["A2"] + lay.roles["Cp"])


def test_without_sinks():
    spec, _ = build_toric(3, include_sinks=False)
    assert spec.num_sites == 16 and not spec.sinks
    assert validate_code(spec).passed


def test_repetition():
    spec = build_repetition(5)
    assert spec.f_values == (3, 2, 1, 0)
    assert spec.m == 1
    assert validate_code(spec).passed
    assert verify_logical_fixedpoint(spec).passed
    two = build_repetition(2)
    assert two.m == 0 and two.pred == (frozenset(),)


def test_mutations_are_caught():
    spec, _ = mutated_toric(3, "logical-support")
    assert "logical-commutation" in validate_code(spec).kinds()
    failing = [c for c in verify_logical_fixedpoint(spec).checks if not c.passed]
    assert failing and all("C@p(1,0)" in c.detail for c in failing)
    spec, _ = mutated_toric(3, "wrong-type")
    assert "correction-anticommutation" in validate_code(spec).kinds()
    spec, _ = mutated_toric(3, "identity")
    assert verify_logical_fixedpoint(spec).passed


def test_cycle_is_rejected():
    n = 3
    z = lambda *q: PauliOp.on(n, q, "Z")
    x = lambda q: PauliOp.on(n, [q], "X")
    spec = make_code(n, [z(0, 1), z(1, 2), z(2, 0)], [x(1), x(2), x(0)], {})
    assert spec.f_values is None
    assert "f-undefined" in validate_code(spec).kinds()
    with pytest.raises(InvalidCodeError):
        compute_f(spec)


def test_branching_flow_has_m_two():
    n = 4
    z = lambda *q: PauliOp.on(n, q, "Z")
    x = lambda q: PauliOp.on(n, [q], "X")
    spec = make_code(n, [z(0, 1), z(1, 2), z(1, 3)], [x(1), x(2), x(3)], {})
    assert spec.m == 2
    assert spec.successor[0] is None
    assert validate_code(spec).passed


def test_json_round_trip():
    spec, _ = build_toric(3)
    back = spec_from_json(spec_to_json(spec))
    assert back.sites == spec.sites and back.corrections == spec.corrections
    assert back.f_values == spec.f_values and back.successor == spec.successor and back.m == spec.m


def test_small_lattice_rejected():
    with pytest.raises(InvalidCodeError):
        build_toric(1)
