"""Random commuting Hamiltonians and the phase-estimation phase channel.

The channel acts on a system register and an ancilla of ``m = m1 + m2 + m3``
qubits: phase estimation writes an estimate ``y`` of the eigenphase, a fixed
offset ``S`` is added to the low ``m2 + m3`` bits, a phase depending only on
the top ``m1`` bits is applied, and the first two steps are undone.

Because the system part stays diagonal in the eigenbasis, the channel on an
eigenstate ``k`` reduces to an ancilla unitary ``G_k``.  In the frame after
the Hadamard layer it is ``conj(d_k) * ifft(Phi * fft(d_k * z))`` with
``d_k(x) = exp(2 pi i x lambda_k)``, which is what the fast routines use.  A
dense circuit construction is kept for small registers as an independent check.
"""

from __future__ import annotations

import hashlib
import hmac
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np
import scipy.fft as sfft

from .ecru import haar_unitary

__all__ = [
    "DESK_QUBIT_CAP",
    "digitize_gaussian",
    "lemma_precision",
    "CommutingEnsembleSpec",
    "CommutingHamiltonian",
    "sample_hamiltonian",
    "min_gap",
    "separated_phases",
    "GapStatistics",
    "gap_statistics",
    "QpeRegisters",
    "normalize_phases",
    "qpe_amplitudes",
    "qpe_amplitudes_formula",
    "prf_bit",
    "PhaseChannel",
    "build_channel",
    "random_function_channel",
    "dense_channel",
    "BoundaryStatistics",
    "boundary_weights",
    "offset_boundary_test",
    "secure_query_bound",
    "offset_bound",
    "return_fidelity_bounds",
    "adaptive_distinguish",
    "DistinguishResult",
    "SecureQueryReport",
    "secure_query_estimate",
    "RandomFunctionChannelSampler",
    "ExtendedSampler",
]

DESK_QUBIT_CAP = 24


# ---------------------------------------------------------------------------
# digitised Gaussian coefficients


def _check_grid(R: float, delta: float) -> None:
    if R <= 0 or delta <= 0:
        raise ValueError("R and delta must be positive")
    ratio = R / delta
    k = round(ratio)
    if abs(ratio - k) > 1e-9 * max(1.0, ratio) or k % 2 == 0:
        raise ValueError(f"R/delta = {ratio} is not an odd integer")


def digitize_gaussian(sample, R: float, delta: float):
    """Round to the grid ``{-R, ..., -delta, 0, delta, ..., R}``.

    Bins are ``((k - 1/2) delta, (k + 1/2) delta]``; values at or below
    ``-R + delta/2`` map to ``-R`` and values above ``R - delta/2`` to ``R``.
    """
    _check_grid(R, delta)
    j = np.asarray(sample, dtype=float)
    k = np.ceil(j / delta - 0.5)
    out = k * delta
    out = np.where(j <= -R + delta / 2, -R, out)
    out = np.where(j > R - delta / 2, R, out)
    return float(out) if out.ndim == 0 else out


def lemma_precision(n: int, beta: float = 1.0, n_terms: int | None = None) -> tuple[float, float]:
    """``(R, delta)`` with ``delta`` the largest power of two below ``1/(e^{beta n} M)``
    and ``R`` the odd multiple of ``delta`` closest above ``n``."""
    M = n_terms or n
    delta = 2.0 ** -math.ceil(math.log2(math.exp(beta * n) * M))
    k = math.ceil(n / delta)
    if k % 2 == 0:
        k += 1
    return k * delta, delta


@dataclass(frozen=True)
class CommutingEnsembleSpec:
    """Terms ``h_i`` placed on ``supports[i]``; only computational-basis-diagonal templates.

    The certificate is the table of quantum numbers: row ``l`` lists the
    eigenvalue of every term on basis state ``l``, and rows must be distinct.
    """

    n: int
    templates: tuple[tuple[float, ...], ...]  # diagonal of each template
    supports: tuple[tuple[int, ...], ...]
    R: float
    delta: float

    def __post_init__(self):
        _check_grid(self.R, self.delta)
        if len(self.templates) != len(self.supports):
            raise ValueError("one support per template")
        covered = set()
        for diag, sup in zip(self.templates, self.supports):
            if len(diag) != 2 ** len(sup):
                raise ValueError("template size does not match its support")
            if len(set(diag)) != len(diag):
                raise ValueError("templates must be non-degenerate")
            covered.update(sup)
        if covered != set(range(self.n)):
            raise ValueError("supports must cover every qubit")
        q = self.quantum_numbers
        if len({tuple(r) for r in q}) != 2**self.n:
            raise ValueError("terms do not form a complete set: quantum numbers repeat")

    @classmethod
    def z_fields(cls, n: int, R: float | None = None, delta: float | None = None, beta: float = 1.0):
        if R is None or delta is None:
            R, delta = lemma_precision(n, beta)
        return cls(n, ((1.0, -1.0),) * n, tuple((i,) for i in range(n)), R, delta)

    @property
    def n_terms(self) -> int:
        return len(self.templates)

    @cached_property
    def quantum_numbers(self) -> np.ndarray:
        bits = (np.arange(2**self.n)[:, None] >> (self.n - 1 - np.arange(self.n))[None, :]) & 1
        cols = []
        for diag, sup in zip(self.templates, self.supports):
            local = np.zeros(2**self.n, dtype=np.int64)
            for b in sup:
                local = local * 2 + bits[:, b]
            cols.append(np.asarray(diag)[local])
        return np.stack(cols, axis=1)


@dataclass(frozen=True)
class CommutingHamiltonian:
    spec: CommutingEnsembleSpec
    coefficients: np.ndarray
    eigenvalues: np.ndarray  # indexed by computational basis state

    def matrix(self) -> np.ndarray:
        return np.diag(self.eigenvalues)


def sample_hamiltonian(spec: CommutingEnsembleSpec, seed: int) -> CommutingHamiltonian:
    rng = np.random.default_rng(seed)
    J = digitize_gaussian(rng.standard_normal(spec.n_terms), spec.R, spec.delta)
    return CommutingHamiltonian(spec, J, spec.quantum_numbers @ J)


def min_gap(eigenvalues) -> float:
    e = np.sort(np.asarray(eigenvalues))
    return float(np.min(np.diff(e)))


def separated_phases(spec: CommutingEnsembleSpec, min_sep: float, seed: int = 0, max_tries: int = 1000):
    """First sample at or after ``seed`` whose normalised phases are ``min_sep`` apart.

    Returns ``(seed_used, hamiltonian, phases)``.
    """
    for s in range(seed, seed + max_tries):
        h = sample_hamiltonian(spec, s)
        if min_gap(h.eigenvalues) > 0:
            ph = normalize_phases(h.eigenvalues)
            if min_gap(ph) > min_sep:
                return s, h, ph
    raise ValueError(f"no sample in {max_tries} seeds has phases {min_sep} apart")


@dataclass(frozen=True)
class GapStatistics:
    n: int
    threshold: float
    R: float
    delta: float
    min_gaps: np.ndarray

    @property
    def below(self) -> int:
        return int(np.sum(self.min_gaps <= self.threshold))


def gap_statistics(n: int, seeds, beta: float = 1.0, n_terms: int | None = None) -> GapStatistics:
    R, delta = lemma_precision(n, beta, n_terms)
    spec = CommutingEnsembleSpec.z_fields(n, R, delta)
    gaps = np.array([min_gap(sample_hamiltonian(spec, int(s)).eigenvalues) for s in seeds])
    return GapStatistics(n, 2.0 ** (-beta * n), R, delta, gaps)


# ---------------------------------------------------------------------------
# registers and phase estimation


@dataclass(frozen=True)
class QpeRegisters:
    n: int
    m1: int
    m2: int
    m3: int

    def __post_init__(self):
        if min(self.n, self.m1, self.m2, self.m3) < 1:
            raise ValueError("register sizes must be positive")
        if self.n + self.m > DESK_QUBIT_CAP:
            raise ValueError(f"{self.n + self.m} qubits exceed the cap of {DESK_QUBIT_CAP}")

    @property
    def m(self) -> int:
        return self.m1 + self.m2 + self.m3

    @property
    def fine(self) -> int:
        return self.m2 + self.m3

    def regime_ok(self, beta: float) -> bool:
        """Whether the sizes satisfy the inequalities needed by the error bounds."""
        return self.m1 > beta * self.n and self.m2 > self.n + 2 and self.m3 > 2 * self.n and self.m1 > self.m3


def normalize_phases(energies, lo: float = 0.25, hi: float = 0.75) -> np.ndarray:
    """Affine map of the spectrum onto ``[lo, hi]`` inside ``[0, 1)``."""
    e = np.asarray(energies, dtype=float)
    span = e.max() - e.min()
    if span == 0:
        return np.full_like(e, (lo + hi) / 2)
    return lo + (e - e.min()) / span * (hi - lo)


def qpe_amplitudes(theta: float, m: int) -> np.ndarray:
    """Ancilla amplitudes after phase estimation of eigenphase ``theta``."""
    x = np.arange(2**m)
    return sfft.fft(np.exp(2j * np.pi * ((x * theta) % 1.0))) / 2**m


def qpe_amplitudes_formula(theta: float, m: int) -> np.ndarray:
    M = 2**m
    delta = theta - np.arange(M) / M
    num = 1 - np.exp(2j * np.pi * ((M * delta) % 1.0))
    den = 1 - np.exp(2j * np.pi * (delta % 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den / M
    return np.where(np.abs(den) < 1e-15, 1.0 + 0j, out)


def prf_bit(key: bytes, x: int) -> int:
    """Keyed SHA-256 truncated to one bit."""
    return hmac.new(key, int(x).to_bytes(8, "big"), hashlib.sha256).digest()[0] & 1


# ---------------------------------------------------------------------------
# the channel


@dataclass
class PhaseChannel:
    phases: np.ndarray  # eigenphases lambda_k in [0, 1)
    regs: QpeRegisters
    coarse_phase: np.ndarray  # f over the 2**m1 coarse values
    offset: int
    eigvecs: np.ndarray | None = None  # columns; identity when None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not 0 <= self.offset < 2**self.regs.fine:
            raise ValueError("offset must fit in the fine register")
        if len(self.coarse_phase) != 2**self.regs.m1:
            raise ValueError("phase function must cover every coarse value")
        if np.any((self.phases < 0) | (self.phases >= 1)):
            raise ValueError("eigenphases must lie in [0, 1)")

    @property
    def M(self) -> int:
        return 2**self.regs.m

    def coarse_of(self, y) -> np.ndarray:
        return ((np.asarray(y) + self.offset) % self.M) >> self.regs.fine

    @cached_property
    def phase_diagonal(self) -> np.ndarray:
        return np.exp(1j * self.coarse_phase[self.coarse_of(np.arange(self.M))])

    def ideal_bin(self, k: int) -> int:
        return int(math.floor(2**self.regs.m1 * (self.phases[k] + self.offset / self.M))) % 2**self.regs.m1

    def ideal_phase(self, k: int) -> complex:
        return complex(np.exp(1j * self.coarse_phase[self.ideal_bin(k)]))

    def bins_injective(self) -> bool:
        bins = [self.ideal_bin(k) for k in range(len(self.phases))]
        return len(set(bins)) == len(bins)

    def qpe_vector(self, k: int) -> np.ndarray:
        key = ("phi", k)
        if key not in self._cache:
            self._cache[key] = qpe_amplitudes(self.phases[k], self.regs.m)
        return self._cache[key]

    def _d(self, k: int) -> np.ndarray:
        key = ("d", k)
        if key not in self._cache:
            x = np.arange(self.M)
            self._cache[key] = np.exp(2j * np.pi * ((x * self.phases[k]) % 1.0))
        return self._cache[key]

    def return_amplitude(self, k: int) -> complex:
        """``<0_A| G_k |0_A>`` for eigenstate ``k``."""
        phi = self.qpe_vector(k)
        return complex(np.vdot(phi, self.phase_diagonal * phi))

    def apply_frame(self, k: int, z: np.ndarray, adjoint: bool = False) -> np.ndarray:
        """``G_k`` (or its adjoint) in the post-Hadamard frame."""
        d = self._d(k)
        ph = self.phase_diagonal.conj() if adjoint else self.phase_diagonal
        return d.conj() * sfft.ifft(ph * sfft.fft(d * z))

    def word_amplitudes(self, t: int) -> np.ndarray:
        """``<0|G_{k_t} ... G_{k_1}|0>`` for every word, indexed ``[k_1, ..., k_t]``.

        Meets in the middle: words of the first ``ceil(t/2)`` queries act on
        the right, adjoints of the remaining queries act on the left.
        """
        K = len(self.phases)
        u0 = np.full(self.M, 1 / np.sqrt(self.M), dtype=complex)
        r = (t + 1) // 2
        right = {(): u0}
        for _ in range(r):
            right = {w + (k,): self.apply_frame(k, v) for w, v in right.items() for k in range(K)}
        left = {(): u0}
        for _ in range(t - r):
            left = {(k,) + w: self.apply_frame(k, v, adjoint=True) for w, v in left.items() for k in range(K)}
        rw, lw = list(right), list(left)
        R = np.stack([right[w] for w in rw])
        L = np.stack([left[w] for w in lw])
        G = L.conj() @ R.T
        out = np.empty((K,) * t, dtype=complex)
        for i, wl in enumerate(lw):
            for j, wr in enumerate(rw):
                out[wr + wl] = G[i, j]
        return out

    def system_unitary(self) -> np.ndarray:
        """Ideal phase unitary ``sum_k e^{i f(bin_k)} |k><k|``."""
        diag = np.array([self.ideal_phase(k) for k in range(len(self.phases))])
        v = np.eye(len(diag)) if self.eigvecs is None else self.eigvecs
        return (v * diag[None, :]) @ v.conj().T

    def matrix(self) -> np.ndarray:
        """Full unitary on system (x) ancilla from the eigen-frame formulas."""
        K, M = len(self.phases), self.M
        v = np.eye(K) if self.eigvecs is None else self.eigvecs
        H = _hadamard(self.regs.m)
        out = np.zeros((K * M, K * M), dtype=complex)
        for k in range(K):
            d = self._d(k)
            gk = H @ (d.conj()[:, None] * sfft.ifft(self.phase_diagonal[:, None] * sfft.fft(d[:, None] * H, axis=0), axis=0))
            out += np.kron(np.outer(v[:, k], v[:, k].conj()), gk)
        return out


def _hadamard(m: int) -> np.ndarray:
    h = np.array([[1.0]])
    for _ in range(m):
        h = np.kron(h, np.array([[1, 1], [1, -1]]) / np.sqrt(2))
    return h


def dense_channel(ch: PhaseChannel) -> np.ndarray:
    """Gate-by-gate construction: Hadamards, controlled powers, inverse QFT, offset, phase."""
    K, m, M = len(ch.phases), ch.regs.m, ch.M
    v = np.eye(K) if ch.eigvecs is None else ch.eigvecs
    ident = np.eye(K)
    had = np.kron(ident, _hadamard(m))
    ctrl = np.zeros((K * M, K * M), dtype=complex)
    for x in range(M):
        ux = (v * np.exp(2j * np.pi * ((x * ch.phases) % 1.0))[None, :]) @ v.conj().T
        sel = np.zeros((M, M))
        sel[x, x] = 1
        ctrl += np.kron(ux, sel)
    y = np.arange(M)
    iqft = np.exp(-2j * np.pi * np.outer(y, y) / M) / np.sqrt(M)
    qpe = np.kron(ident, iqft) @ ctrl @ had
    shift = np.zeros((M, M))
    shift[(y + ch.offset) % M, y] = 1
    o_s = np.kron(ident, shift)
    o_f = np.kron(ident, np.diag(np.exp(1j * ch.coarse_phase[y >> ch.regs.fine])))
    return qpe.conj().T @ o_s.T @ o_f @ o_s @ qpe


def build_channel(phases, regs: QpeRegisters, prf_key: bytes | None, offset_S: int, seed: int = 0, eigvecs=None) -> PhaseChannel:
    """Binary phase channel: ``(-1)^{g(coarse)}`` with ``g`` a keyed hash bit."""
    if prf_key is None:
        prf_key = np.random.default_rng(seed).bytes(32)
    g = np.array([prf_bit(prf_key, c) for c in range(2**regs.m1)])
    return PhaseChannel(np.asarray(phases, dtype=float), regs, np.pi * g, int(offset_S), eigvecs)


def random_function_channel(phases, regs: QpeRegisters, rng: np.random.Generator, eigvecs=None) -> PhaseChannel:
    """Uniform phase per coarse value and uniform offset."""
    f = rng.uniform(0, 2 * np.pi, 2**regs.m1)
    S = int(rng.integers(0, 2**regs.fine))
    return PhaseChannel(np.asarray(phases, dtype=float), regs, f, S, eigvecs)


# ---------------------------------------------------------------------------
# error budgets


def offset_bound(regs: QpeRegisters) -> float:
    """Per-eigenstate probability of a boundary hit: ``2^{-(m2-2)}``."""
    return 2.0 ** -(regs.m2 - 2)


def return_fidelity_bounds(regs: QpeRegisters) -> dict:
    n, m3 = regs.n, regs.m3
    return {
        "loose": 1 - 2.0 ** (-m3 / 2 + 3 + n),
        "stated": 1 - 2.0 ** -(m3 / 2 + 2 + n),
        "derived": 1 - 2.0 ** (-m3 / 2 + 2 + n),
    }


def secure_query_bound(regs: QpeRegisters, t: int, alpha: float = math.inf) -> float:
    approx = 0.0 if math.isinf(alpha) else 2.0 ** (-alpha * regs.n)
    return t * (2.0 ** -(regs.m3 / 2 + 1 + regs.n) + approx) + 2.0 ** -(regs.m2 - regs.n - 3)


# ---------------------------------------------------------------------------
# boundary hits


@dataclass(frozen=True)
class BoundaryStatistics:
    hit_rates: np.ndarray
    bound: float
    sigma: np.ndarray
    threshold: float
    trials: int

    @property
    def ok(self) -> bool:
        return bool(np.all(self.hit_rates <= self.bound + 3 * self.sigma))


def boundary_weights(phase: float, regs: QpeRegisters) -> np.ndarray:
    """Norm of the near-boundary component for every offset ``S``.

    The window keeps ancilla values within ``2^{m3}`` grid points (strictly)
    of a multiple of ``2^{m2+m3}``; the weight for all offsets at once is a
    cyclic correlation of ``|phi|^2`` with that window.
    """
    M, B = 2**regs.m, 2**regs.fine
    p = np.abs(qpe_amplitudes(phase, regs.m)) ** 2
    r = (np.arange(M) % B)
    window = ((r < 2**regs.m3) | (r > B - 2**regs.m3)).astype(float)
    # weight^2(S) = sum_y p(y) window(y + S)
    corr = np.real(sfft.ifft(np.conj(sfft.fft(p)) * sfft.fft(window)))
    return np.sqrt(np.clip(corr[:B], 0, None))


def offset_boundary_test(phases, regs: QpeRegisters, trials: int, seed: int) -> BoundaryStatistics:
    rng = np.random.default_rng(seed)
    S = rng.integers(0, 2**regs.fine, trials)
    thr = 2.0 ** (-regs.m3 / 2)
    rates = np.array([np.mean(boundary_weights(ph, regs)[S] > thr) for ph in phases])
    sigma = np.sqrt(np.maximum(rates * (1 - rates), 1.0 / trials) / trials)
    return BoundaryStatistics(rates, offset_bound(regs), sigma, thr, trials)


# ---------------------------------------------------------------------------
# adaptive distinguishers


@dataclass(frozen=True)
class DistinguishResult:
    trace_distance: float
    noise_floor: float
    rho_a: np.ndarray
    rho_b: np.ndarray


class RandomFunctionChannelSampler:
    """Samples ``U_{f,S}`` as dense matrices (small registers only)."""

    def __init__(self, phases, regs: QpeRegisters, eigvecs=None):
        self.phases, self.regs, self.eigvecs = np.asarray(phases, float), regs, eigvecs

    def sample(self, seed: int):
        ch = random_function_channel(self.phases, self.regs, np.random.default_rng(seed), self.eigvecs)
        return _Fixed(ch.matrix())


class ExtendedSampler:
    """Tensor a system sampler with the identity on an ancilla of dimension ``extra``."""

    def __init__(self, sampler, extra: int):
        self.sampler, self.extra = sampler, extra

    def sample(self, seed: int):
        return _Fixed(np.kron(self.sampler.sample(seed).matrix(), np.eye(self.extra)))


@dataclass
class _Fixed:
    u: np.ndarray

    def matrix(self):
        return self.u


def _pipeline_state(u: np.ndarray, interleavers: list[np.ndarray]) -> np.ndarray:
    dim_b = interleavers[0].shape[0] // u.shape[0]
    big = np.kron(u, np.eye(dim_b))
    psi = np.zeros(interleavers[0].shape[0], dtype=complex)
    psi[0] = 1.0
    psi = interleavers[0] @ psi
    for a in interleavers[1:]:
        psi = a @ (big @ psi)
    return psi


def adaptive_distinguish(channel_a, channel_b, t: int, interleavers: list[np.ndarray], trials: int, seed: int = 0) -> DistinguishResult:
    """Trace distance between the averaged outputs of two adaptive pipelines.

    Each pipeline starts from ``|0>``, applies ``A_1``, then ``t`` rounds of
    (channel sample, next interleaver); one channel sample is shared by all
    rounds of a trial.  The noise floor compares the two halves of each arm.
    """
    if len(interleavers) != t + 1:
        raise ValueError("need t + 1 interleavers")
    ua = channel_a.sample(0).matrix()
    ub = channel_b.sample(0).matrix()
    if ua.shape != ub.shape or interleavers[0].shape[0] % ua.shape[0]:
        raise ValueError("channels act on different registers")
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**63, size=(2, trials))

    def arm(sampler, ss):
        half = trials // 2
        d = interleavers[0].shape[0]
        sums = np.zeros((2, d, d), dtype=complex)
        for i, s in enumerate(ss):
            psi = _pipeline_state(sampler.sample(int(s)).matrix(), interleavers)
            sums[int(i >= half)] += np.outer(psi, psi.conj())
        split = 0.5 * np.abs(np.linalg.eigvalsh(sums[0] / half - sums[1] / (trials - half))).sum()
        return sums.sum(0) / trials, split

    ra, fa = arm(channel_a, seeds[0])
    rb, fb = arm(channel_b, seeds[1])
    dist = 0.5 * float(np.abs(np.linalg.eigvalsh(ra - rb)).sum())
    # halves have twice the variance of a full arm; the difference of two full arms matches one half split
    return DistinguishResult(dist, float((fa + fb) / 2), ra, rb)


@dataclass(frozen=True)
class SecureQueryReport:
    lower: float
    upper: float
    sigma: float
    bound: float
    mean_leak: float
    injective: bool
    samples: int

    @property
    def ok(self) -> bool:
        return self.upper + 3 * self.sigma < self.bound


def secure_query_estimate(
    phases, regs: QpeRegisters, t: int, samples: int, seed: int, dim_b: int = 2, alpha: float = math.inf
) -> SecureQueryReport:
    """l1 distance between the averaged adaptive outputs of ``U_{f,S}`` and random phases.

    System eigenstates are the computational basis.  Per sample the ancilla
    returns to ``|0>`` with amplitude ``<0|G_w|0>`` for each query word ``w``;
    the leftover ``Psi_perp`` bounds the off-diagonal blocks.  The
    ancilla-``|0>`` block is estimated against the ideal pipeline with the same
    ``(f, S)``, whose average equals the random-phase average when the coarse
    bins of distinct eigenstates differ for every offset.
    """
    phases = np.asarray(phases, float)
    K = len(phases)
    rng = np.random.default_rng(seed)
    A = [haar_unitary(K * dim_b, rng) for _ in range(t + 1)]
    proj = [np.kron(np.diag(np.eye(K)[k]), np.eye(dim_b)) for k in range(K)]
    words = list(product(range(K), repeat=t))
    coeff = {}
    for w in words:
        psi = A[0][:, 0].copy()
        for i, k in enumerate(w):
            psi = A[i + 1] @ (proj[k] @ psi)
        coeff[w] = psi
    groups: dict[tuple, np.ndarray] = {}
    for w in words:
        key = tuple(sorted(w))
        groups[key] = groups.get(key, 0) + coeff[w]
    C = np.stack([coeff[w] for w in words])

    injective = True
    probe = PhaseChannel(phases, regs, np.zeros(2**regs.m1), 0)
    for S in range(2**regs.fine):
        probe.offset = S
        if not probe.bins_injective():
            injective = False
            break

    deltas, leaks = [], []
    for _ in range(samples):
        ch = random_function_channel(phases, regs, rng)
        amp = ch.word_amplitudes(t)
        ideal = np.array([ch.ideal_phase(k) for k in range(K)])
        a_w = np.array([amp[w] for w in words])
        v_w = np.array([np.prod(ideal[list(w)]) for w in words])
        psi0 = a_w @ C
        psiv = v_w @ C
        deltas.append(np.outer(psi0, psi0.conj()) - np.outer(psiv, psiv.conj()))
        leaks.append(max(0.0, 1.0 - float(np.vdot(psi0, psi0).real)))
    deltas = np.array(deltas)
    x = deltas.mean(0)
    x_norm = float(np.abs(np.linalg.eigvalsh(x)).sum())
    leaks = np.array(leaks)
    perp = np.sqrt(leaks)
    d = x.shape[0]
    spread = np.sqrt(((np.abs(deltas - x) ** 2).sum(axis=(1, 2))).sum() / max(samples * (samples - 1), 1))
    sigma = float(np.sqrt(d) * spread + 2 * perp.std(ddof=1) / np.sqrt(samples) if samples > 1 else np.inf)
    lower = x_norm + float(leaks.mean())
    upper = x_norm + 2 * float(perp.mean()) + float(leaks.mean())
    return SecureQueryReport(lower, upper, sigma, secure_query_bound(regs, t, alpha), float(leaks.mean()), injective, samples)
