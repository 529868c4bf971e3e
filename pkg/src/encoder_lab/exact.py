"""Exact evolution of small systems under ``L = sum_j (T_j - id)``.

Dense matrices use big-endian qubit order: qubit 0 is the most significant bit of
the basis index, matching ``np.kron(rho_0, rho_1, ...)``.

The integrator works on the Pauli coefficients ``c_P = tr(P rho)``.  There each
channel ``T_j`` maps a Pauli either to zero, to itself, or to ``P + P S_j``, so a
Liouvillian application is one mask-and-gather per site and never touches a
``4^n x 4^n`` superoperator.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import hadamard

from .code import CodeSpec, ToricLayout, logical_paulis
from .observables import (
    DEFAULT_ALPHAS,
    aggregate_matrix,
    aggregate_names,
    logical_name,
    occupation_name,
)
from .pauli import PauliOp
from .states import psi_vector

MAX_QUBITS = 12


class IntegrationError(RuntimeError):
    pass


def _check_n(n: int) -> None:
    if n > MAX_QUBITS:
        raise ValueError(f"exact engine limited to {MAX_QUBITS} qubits, got {n}")


class DensityMatrix:
    def __init__(self, data: np.ndarray, check: bool = True):
        data = np.asarray(data, dtype=complex)
        dim = data.shape[0]
        n = dim.bit_length() - 1
        if data.shape != (dim, dim) or 1 << n != dim:
            raise ValueError(f"bad density-matrix shape {data.shape}")
        _check_n(n)
        self.n = n
        self.data = data
        if check:
            self.validate()

    def validate(self, pos_tol: float = 1e-10, tol: float = 1e-12) -> None:
        d = self.data
        if np.max(np.abs(d - d.conj().T)) > tol:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(d) - 1) > tol * d.shape[0]:
            raise ValueError(f"trace {np.trace(d).real} != 1")
        if self.min_eigenvalue() < -pos_tol:
            raise ValueError("density matrix has a negative eigenvalue")

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.data)[0])

    @property
    def trace(self) -> float:
        return float(np.trace(self.data).real)

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


@dataclass
class EvolutionResult:
    times: np.ndarray
    observables: dict[str, np.ndarray]
    states: list[DensityMatrix] = field(default_factory=list)


# -- dense Pauli arithmetic -----------------------------------------------------


def _dense_mask(mask: int, n: int) -> int:
    return int(format(mask, f"0{n}b")[::-1], 2) if mask else 0


def _parity(v: np.ndarray) -> np.ndarray:
    return (np.bitwise_count(v) & 1).astype(np.int8)


class _DensePauli:
    """Row/column action of a Pauli on dense 2^n arrays."""

    def __init__(self, p: PauliOp):
        n = p.n
        self.x = _dense_mask(p.x, n)
        zd = _dense_mask(p.z, n)
        b = np.arange(1 << n)
        self.perm = b ^ self.x
        # left:  (P A)[r] = i^p (-1)^{z.(r^x)} A[r^x]
        self.left_phase = (1j**p.phase) * (1 - 2 * _parity(self.perm & zd))
        # right: (A P)[:, c] = A[:, c^x] i^p (-1)^{z.c}
        self.right_phase = (1j**p.phase) * (1 - 2 * _parity(b & zd))

    def left(self, a: np.ndarray) -> np.ndarray:
        return self.left_phase.reshape((-1,) + (1,) * (a.ndim - 1)) * a[self.perm]

    def right(self, a: np.ndarray) -> np.ndarray:
        return a[:, self.perm] * self.right_phase[None, :]

    def conj(self, a: np.ndarray) -> np.ndarray:
        return self.right(self.left(a))


def _canonical(p: PauliOp) -> PauliOp:
    return PauliOp(p.n, p.x, p.z, (p.x & p.z).bit_count())


def pauli_matrix(p: PauliOp) -> np.ndarray:
    """Dense matrix by Kronecker products (slow reference construction)."""
    mats = {
        (0, 0): np.eye(2),
        (1, 0): np.array([[0, 1], [1, 0]]),
        (0, 1): np.array([[1, 0], [0, -1]]),
        (1, 1): np.array([[0, -1], [1, 0]]),  # X Z
    }
    out = np.array([[1.0 + 0j]])
    for q in range(p.n):
        out = np.kron(out, mats[(p.x >> q & 1, p.z >> q & 1)])
    return (1j**p.phase) * out


def dm_from_product(factors: Sequence[tuple[Sequence[int], np.ndarray]]) -> DensityMatrix:
    """Tensor product of factors, each given as ``(qubits, rho)`` with qubits in factor order."""
    order = [q for qubits, _ in factors for q in qubits]
    n = len(order)
    if sorted(order) != list(range(n)):
        raise ValueError("factors must cover qubits 0..n-1 exactly once")
    _check_n(n)
    data = np.array([[1.0 + 0j]])
    for qubits, rho in factors:
        rho = np.asarray(rho, dtype=complex)
        if rho.shape != (1 << len(qubits),) * 2:
            raise ValueError(f"factor on {len(qubits)} qubits has shape {rho.shape}")
        ev = np.linalg.eigvalsh((rho + rho.conj().T) / 2)
        if np.max(np.abs(rho - rho.conj().T)) > 1e-12 or ev[0] < -1e-12 or abs(np.trace(rho) - 1) > 1e-12:
            raise ValueError(f"factor on qubits {tuple(qubits)} is not a density matrix")
        data = np.kron(data, rho)
    axes = [order.index(q) for q in range(n)]
    data = data.reshape((2,) * (2 * n)).transpose(axes + [a + n for a in axes]).reshape(1 << n, 1 << n)
    return DensityMatrix(data)


def expectation(rho: DensityMatrix | np.ndarray, p: PauliOp) -> complex:
    a = np.asarray(rho)
    act = _DensePauli(p)
    return complex(np.einsum("ii->", act.left(a)))


# -- per-code precomputation ----------------------------------------------------


def _stabilizer_group(spec: CodeSpec) -> list[PauliOp]:
    """All elements of the group generated by the site operators."""
    basis: list[PauliOp] = []
    reduced: list[int] = []
    for s in spec.sites:
        v = (s.x << spec.n) | s.z
        for b in reduced:
            v = min(v, v ^ b)
        if v:
            reduced.append(v)
            basis.append(s)
    group = []
    for bits in itertools.product((0, 1), repeat=len(basis)):
        g = PauliOp.identity(spec.n)
        for use, s in zip(bits, basis):
            if use:
                g = g * s
        group.append(g)
    return group


class _Model:
    """Precomputed arrays for one CodeSpec."""

    def __init__(self, spec: CodeSpec):
        _check_n(spec.n)
        self.spec = spec
        self.n = spec.n
        self.dense_sites = [_DensePauli(s) for s in spec.sites]
        self.dense_corr = [_DensePauli(_canonical(c)) for c in spec.corrections]
        self._generator = None
        self._projector = None
        self._group = None

    # Pauli-coefficient layout: index = x_dense * 2^n + z_dense
    def pauli_index(self, p: PauliOp) -> tuple[int, int]:
        """(index, sign) with ``p = sign * R_index`` for Hermitian p."""
        n = self.n
        return (_dense_mask(p.x, n) << n) | _dense_mask(p.z, n), p.sign

    @property
    def generator(self):
        if self._generator is None:
            self._generator = _PauliGenerator(self)
        return self._generator

    @property
    def group(self) -> tuple[np.ndarray, np.ndarray]:
        if self._group is None:
            elems = _stabilizer_group(self.spec)
            idx, sgn = zip(*(self.pauli_index(g) for g in elems))
            self._group = (np.array(idx), np.array(sgn, dtype=float))
        return self._group

    @property
    def projector(self) -> np.ndarray:
        if self._projector is None:
            q = np.eye(1 << self.n, dtype=complex)
            for act in self.dense_sites:
                q = (q + act.left(q)) / 2
            self._projector = q
        return self._projector


class _PauliGenerator:
    """Liouvillian acting on Pauli coefficient vectors."""

    def __init__(self, model: _Model):
        n = model.n
        N = 1 << n
        k = np.arange(N * N, dtype=np.int64)
        px, pz = k >> n, k & (N - 1)
        cp = np.bitwise_count(px & pz).astype(np.int64)
        self.n = n
        self.size = N * N
        self.hadamard = hadamard(N).astype(float)
        self.i_pow = 1j ** (cp % 4)  # R_P = i^{|x&z|} X^x Z^z

        keep_total = np.zeros(N * N)
        self.terms: list[tuple[np.ndarray, np.ndarray]] = []
        for s, c in zip(model.spec.sites, model.spec.corrections):
            s_idx, s_sign = model.pauli_index(s)
            c_idx, _ = model.pauli_index(_canonical(c))
            sx, sz = s_idx >> n, s_idx & (N - 1)
            cx, cz = c_idx >> n, c_idx & (N - 1)
            comm_s = _parity((px & sz) ^ (pz & sx)) == 0
            comm_c = _parity((px & cz) ^ (pz & cx)) == 0
            # omega(P) in R_P R_S = omega R_{P^S}
            qx, qz = px ^ sx, pz ^ sz
            w = (cp + (sx & sz).bit_count() + 2 * np.bitwise_count(pz & sx) - np.bitwise_count(qx & qz)) % 4
            omega = np.where(w == 0, 1.0, -1.0)
            if not c.commutes(s):
                keep = comm_s & comm_c
                move = keep
            else:
                keep = comm_s & comm_c
                move = comm_s & ~comm_c
            keep_total += keep.astype(float) - 1.0
            coef = np.where(move, s_sign * omega, 0.0)
            if np.any(coef):
                self.terms.append((coef, k ^ s_idx))
        self.keep_total = keep_total

    def apply(self, c: np.ndarray) -> np.ndarray:
        out = self.keep_total * c
        for coef, perm in self.terms:
            out += (coef * c)[perm]
        return out

    def to_pauli(self, rho: np.ndarray) -> np.ndarray:
        N = 1 << self.n
        b = np.arange(N)
        v = rho[b[:, None], b[:, None] ^ b[None, :]]  # v[b, x] = rho[b, b^x]
        w = self.hadamard @ v  # w[z, x]
        c = w.T.reshape(-1) * self.i_pow
        return c.real.copy()

    def from_pauli(self, c: np.ndarray) -> np.ndarray:
        N = 1 << self.n
        u = (c * np.conj(self.i_pow)).reshape(N, N).T  # u[z, x]
        v = self.hadamard @ u / N
        b = np.arange(N)
        rho = np.empty((N, N), dtype=complex)
        rho[b[:, None], b[:, None] ^ b[None, :]] = v
        return rho


@functools.lru_cache(maxsize=16)
def _model(spec: CodeSpec) -> _Model:
    return _Model(spec)


# -- channels --------------------------------------------------------------------


def _check_dim(rho: np.ndarray, spec: CodeSpec) -> None:
    if rho.shape != (1 << spec.n, 1 << spec.n):
        raise ValueError(f"state of shape {rho.shape} does not match {spec.n} qubits")


def _channel(model: _Model, a: np.ndarray, j: int) -> np.ndarray:
    s = model.dense_sites[j]
    sa = s.left(a)
    as_ = s.right(a)
    sas = s.right(sa)
    plus = (a + sa + as_ + sas) / 4
    minus = (a - sa - as_ + sas) / 4
    return plus + model.dense_corr[j].conj(minus)


def apply_channel_T(rho: DensityMatrix | np.ndarray, spec: CodeSpec, j: int) -> np.ndarray:
    """``P+ rho P+ + C P- rho P- C^dagger`` for site j."""
    a = np.asarray(rho)
    _check_dim(a, spec)
    return _channel(_model(spec), a, j)


def liouvillian_apply(rho: DensityMatrix | np.ndarray, spec: CodeSpec) -> np.ndarray:
    a = np.asarray(rho)
    _check_dim(a, spec)
    model = _model(spec)
    return sum(_channel(model, a, j) for j in range(spec.num_sites)) - spec.num_sites * a


def average_channel(rho: DensityMatrix | np.ndarray, spec: CodeSpec) -> np.ndarray:
    a = np.asarray(rho)
    _check_dim(a, spec)
    model = _model(spec)
    return sum(_channel(model, a, j) for j in range(spec.num_sites)) / spec.num_sites


# -- projections and distances ------------------------------------------------------


def code_projector(spec: CodeSpec) -> np.ndarray:
    return _model(spec).projector


def ground_overlap(rho: DensityMatrix | np.ndarray, spec: CodeSpec) -> float:
    a = np.asarray(rho)
    _check_dim(a, spec)
    return float(np.real(np.vdot(code_projector(spec).conj().T, a)))


def trace_distance(a: DensityMatrix | np.ndarray, b: DensityMatrix | np.ndarray) -> float:
    """Trace norm ``||a - b||_1`` (no factor 1/2)."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    return float(np.sum(np.abs(np.linalg.eigvalsh(a - b))))


def code_projection_distance(rho: DensityMatrix | np.ndarray, spec: CodeSpec) -> tuple[float, float]:
    """``(eps, ||rho - Q rho Q / tr(Q rho)||_1)`` with ``eps = tr(Q_perp rho)``."""
    a = np.asarray(rho)
    q = code_projector(spec)
    overlap = ground_overlap(a, spec)
    if overlap <= 0:
        raise ValueError("state has no overlap with the code space")
    projected = q @ a @ q / overlap
    eps = max(0.0, 1.0 - overlap)
    dist = trace_distance(a, projected)
    if dist > 2 * math.sqrt(eps) + 1e-9:
        raise RuntimeError(f"gentle-measurement bound violated: {dist} > 2 sqrt({eps})")
    return eps, dist


def encoded_state(psi, spec: CodeSpec, layout: ToricLayout) -> DensityMatrix:
    """Normalized ``Q (|Psi>_A |+>_{BB'} |0>_{CC'} |0...0>_D)`` as a pure density matrix."""
    n = spec.n
    _check_n(n)
    plus = np.array([1, 1], dtype=complex) / math.sqrt(2)
    zero = np.array([1, 0], dtype=complex)
    a1, a2 = layout.roles["A1"][0], layout.roles["A2"][0]
    order = [a1, a2]
    vec = psi_vector(psi)
    for q in range(n):
        if q in (a1, a2):
            continue
        order.append(q)
        vec = np.kron(vec, plus if layout.role_of(q) in ("B", "Bp") else zero)
    axes = [order.index(q) for q in range(n)]
    vec = vec.reshape((2,) * n).transpose(axes).reshape(-1)
    for act in _model(spec).dense_sites:
        vec = (vec + act.left(vec)) / 2
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        raise ValueError("initial product state is orthogonal to the code space")
    vec /= norm
    return DensityMatrix(np.outer(vec, vec.conj()))


# -- time evolution -----------------------------------------------------------------

# Dormand-Prince 5(4)
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def _dopri_segment(f, y, t0: float, t1: float, h: float, tol: float, k1=None):
    """Advance y from t0 to t1; returns (y, h_next, k1_next, steps)."""
    t = t0
    if k1 is None:
        k1 = f(y)
    steps = 0
    while t < t1:
        clipped = h >= t1 - t
        hs = t1 - t if clipped else h
        if hs <= 1e-12 * max(1.0, t1):
            raise IntegrationError(f"step size underflow at t={t}")
        ks = [k1]
        for stage in range(1, 7):
            yi = y.copy()
            for a, k in zip(_A[stage], ks):
                if a:
                    yi += (hs * a) * k
            ks.append(f(yi))
        # the 7th stage point is the 5th-order solution (FSAL)
        err = np.zeros_like(y)
        for e, k in zip(_E, ks):
            if e:
                err += (hs * e) * k
        err_norm = float(np.max(np.abs(err)))
        factor = 5.0 if err_norm == 0 else min(5.0, max(0.2, 0.9 * (tol / err_norm) ** 0.2))
        if err_norm <= tol:
            t = t1 if clipped else t + hs
            y = yi
            k1 = ks[6]
            steps += 1
            # a step shortened to hit t1 says nothing against the longer one
            h = max(h, hs * factor) if clipped else hs * factor
        else:
            h = hs * factor
    return y, h, k1, steps


def evolve(
    rho0: DensityMatrix | np.ndarray,
    spec: CodeSpec,
    t: float,
    sample_times: Iterable[float] | None = None,
    tol: float = 1e-9,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    keep_states: bool = False,
    pos_floor: float = -1e-7,
    max_refinements: int = 3,
) -> EvolutionResult:
    """Integrate ``d rho/dt = L(rho)`` up to ``t``, recording observables at ``sample_times``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    times = np.array(sorted(sample_times) if sample_times is not None else [t], dtype=float)
    if times.size and (times[0] < 0 or times[-1] > t + 1e-12):
        raise ValueError("sample times must lie in [0, t]")
    a = np.asarray(rho0)
    _check_dim(a, spec)
    model = _model(spec)
    gen = model.generator

    labels = logical_paulis(spec)
    obs_idx = {logical_name(k): model.pauli_index(p) for k, p in labels.items()}
    site_idx = [model.pauli_index(s) for s in spec.sites]
    agg_names = aggregate_names(spec, alphas)
    agg = aggregate_matrix(spec, alphas)
    g_idx, g_sgn = model.group

    names = list(obs_idx) + [occupation_name(spec, j) for j in range(spec.num_sites)]
    names += agg_names + ["code_overlap", "Qperp", "trace", "min_eig"]
    records = {k: [] for k in names}
    states = []

    def record(c: np.ndarray, dense: np.ndarray, min_eig: float) -> None:
        for name, (i, sg) in obs_idx.items():
            records[name].append(sg * c[i])
        occ = np.array([(1 - sg * c[i]) / 2 for i, sg in site_idx])
        for j in range(spec.num_sites):
            records[occupation_name(spec, j)].append(occ[j])
        for name, val in zip(agg_names, agg @ occ):
            records[name].append(val)
        overlap = float(np.dot(g_sgn, c[g_idx])) / len(g_idx)
        records["code_overlap"].append(overlap)
        records["Qperp"].append(1 - overlap)
        records["trace"].append(c[0])
        records["min_eig"].append(min_eig)
        if keep_states:
            states.append(DensityMatrix(dense, check=False))

    c = gen.to_pauli(a)
    t_now, h, k1 = 0.0, 1e-3, None
    local_tol = tol
    for ts in times:
        for attempt in range(max_refinements + 1):
            c_try, h_try, k1_try, _ = _dopri_segment(gen.apply, c, t_now, ts, h, local_tol, k1)
            dense = gen.from_pauli(c_try)
            dense = (dense + dense.conj().T) / 2
            min_eig = float(np.linalg.eigvalsh(dense)[0])
            if min_eig >= pos_floor:
                break
            if attempt == max_refinements:
                raise IntegrationError(f"positivity lost at t={ts} (min eigenvalue {min_eig})")
            local_tol /= 100
            h, k1 = min(h, 1e-3), None
        c, h, k1, t_now = c_try, h_try, k1_try, ts
        record(c, dense, min_eig)

    return EvolutionResult(times, {k: np.array(v) for k, v in records.items()}, states)


def uniformized_evolution(rho0, spec: CodeSpec, t: float, tail: float = 1e-14) -> np.ndarray:
    """``e^{tL}`` as a Poisson mixture of powers of the averaged channel.

    ``L = |S| (T_av - id)`` so ``e^{tL} = sum_k Poi(k; |S| t) T_av^k``; every term is
    a channel, which makes this a slow but independent reference for :func:`evolve`.
    """
    a = np.asarray(rho0).astype(complex)
    lam = spec.num_sites * t
    weight = math.exp(-lam)
    out = weight * a
    acc, k = weight, 0
    while 1 - acc > tail:
        k += 1
        a = average_channel(a, spec)
        weight *= lam / k
        out = out + weight * a
        acc += weight
        if k > 10 * lam + 200:
            break
    return out
