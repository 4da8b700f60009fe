"""Energy-conserving random unitaries, the measurement protocol and the solver loop.

A sampled unitary is block diagonal in the energy eigenbasis: every cluster
of (numerically) equal energies gets an independent Haar-random block, and a
one-dimensional cluster gets a uniform phase.  Only clusters overlapping the
vector being transformed are ever sampled.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .confgraph import ConfigGraph, build_graph, config_at
from .hamiltonian import SparseHamiltonian, compile_hamiltonian, computation_hamiltonian, effective_hopping
from .rtm import TuringMachine, input_configuration
from .spectral import DEFAULT_TOL, SpectralBlock, class_block

__all__ = [
    "ClusterError",
    "Eigensystem",
    "ComputationModel",
    "haar_unitary",
    "cluster_energies",
    "BlockRandomUnitary",
    "EcHaarSampler",
    "DenseSampler",
    "IdentitySampler",
    "MeasurementOutcome",
    "PspaceResult",
    "pspace_solve",
    "failure_envelopes",
    "monte_carlo_collapse",
    "monte_carlo_second_half",
    "haar_energy_std",
    "pauli_product_states",
    "EnergyTestResult",
    "energy_distinguisher",
]

log = logging.getLogger(__name__)

SOLVER_QUERIES = 15


class ClusterError(RuntimeError):
    pass


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar sample: QR of a complex Gaussian matrix with the phases of R's diagonal removed."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * ph[None, :]


def _random_sphere(d: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return z / np.linalg.norm(z)


# ---------------------------------------------------------------------------
# eigensystems


@dataclass
class Eigensystem:
    """Orthonormal eigenvectors grouped into invariant sectors.

    Sector ``s`` covers basis indices ``indices[s]``; its eigenvectors are the
    columns of ``vectors[s]`` and its eigenvalues ``energies[s]``.  Eigenvector
    ``j`` of sector ``s`` has global number ``offsets[s] + j``.
    """

    dim: int
    indices: list[np.ndarray]
    vectors: list[np.ndarray]
    energies: list[np.ndarray]
    klass: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.offsets = np.cumsum([0] + [len(e) for e in self.energies])
        self.sector_of_index = np.full(self.dim, -1, dtype=np.int64)
        for s, idx in enumerate(self.indices):
            self.sector_of_index[idx] = s

    @property
    def all_energies(self) -> np.ndarray:
        return np.concatenate(self.energies)

    @classmethod
    def from_dense(cls, h: np.ndarray) -> "Eigensystem":
        w, v = np.linalg.eigh(h)
        return cls(h.shape[0], [np.arange(h.shape[0])], [v], [w], ["dense"])

    @classmethod
    def from_diagonal(cls, diag: np.ndarray) -> "Eigensystem":
        n = len(diag)
        return cls(n, [np.array([i]) for i in range(n)], [np.ones((1, 1))] * n, [np.array([d]) for d in diag], ["diag"] * n)

    def matrix(self) -> np.ndarray:
        m = np.zeros((self.dim, self.dim), dtype=complex)
        for idx, vec, e in zip(self.indices, self.vectors, self.energies):
            m[np.ix_(idx, idx)] += (vec * e[None, :]) @ vec.conj().T
        return m


@dataclass
class ComputationModel:
    """A duplicated machine together with its graph, operator and eigensystem.

    The eigensystem covers the one-state sector only; each component's
    spectrum comes from the closed-form chain solutions.
    """

    tm: TuringMachine
    graph: ConfigGraph
    hamiltonian: SparseHamiltonian
    eigensystem: Eigensystem
    blocks: list[SpectralBlock]

    @classmethod
    def build(cls, tm: TuringMachine) -> "ComputationModel":
        if not tm.duplicated:
            raise ValueError("expected a duplicated machine")
        graph = build_graph(tm)
        h = computation_hamiltonian(compile_hamiltonian(tm), tm)
        csr = h.to_csr()
        indices, vectors, energies, klass, blocks = [], [], [], [], []
        for comp in graph.components:
            hop = effective_hopping(graph, csr, comp)
            block = class_block(hop.klass, comp.length)
            indices.append(np.asarray(comp.nodes))
            vectors.append(block.eigvecs)
            energies.append(block.energies)
            klass.append(hop.klass)
            blocks.append(block)
        eig = Eigensystem(graph.n_nodes, indices, vectors, energies, klass)
        return cls(tm, graph, h, eig, blocks)

    @cached_property
    def flavor_of_index(self) -> np.ndarray:
        n_tape = self.tm.n_symbols**self.tm.tape_length
        states = (np.arange(self.graph.n_nodes) // n_tape) % self.tm.n_states
        codes = np.array([{"": 0, "a": 1, "r": 2}[f] for f in self.tm.flavors])
        return codes[states]

    def start_vector(self, x) -> np.ndarray:
        v = np.zeros(self.graph.n_nodes, dtype=complex)
        v[self.graph.index(input_configuration(self.tm, x))] = 1.0
        return v


def cluster_energies(energies: np.ndarray, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, list[np.ndarray]]:
    """Group eigenvalues whose sorted neighbours differ by at most ``tol``.

    Returns the cluster id of every eigenvalue and the members of each
    cluster.  A cluster wider than ``tol`` means the grouping depends on how
    a chain of small gaps is cut, which is reported as an error.
    """
    order = np.argsort(energies, kind="stable")
    e = energies[order]
    gaps = np.diff(e)
    starts = np.concatenate([[0], np.flatnonzero(gaps > tol) + 1])
    ends = np.concatenate([starts[1:], [len(e)]])
    cluster_of = np.empty(len(e), dtype=np.int64)
    members = []
    for c, (a, b) in enumerate(zip(starts, ends)):
        if e[b - 1] - e[a] > tol:
            raise ClusterError(f"ambiguous cluster near E={e[a]:.12f}: gaps {gaps[a:b - 1].tolist()}")
        cluster_of[order[a:b]] = c
        members.append(np.sort(order[a:b]))
    return cluster_of, members


# ---------------------------------------------------------------------------
# samplers


class BlockRandomUnitary:
    """One sampled energy-conserving unitary, materialised cluster by cluster."""

    def __init__(self, eig: Eigensystem, cluster_of: np.ndarray, members: list[np.ndarray], seed: int):
        self.eig = eig
        self.cluster_of = cluster_of
        self.members = members
        self.seed = int(seed)
        self._blocks: dict[int, np.ndarray] = {}
        self._owner = np.searchsorted(eig.offsets, np.arange(eig.offsets[-1]), side="right") - 1

    def block(self, c: int) -> np.ndarray:
        if c not in self._blocks:
            rng = np.random.default_rng([self.seed, c])
            d = len(self.members[c])
            if d == 1:
                self._blocks[c] = np.array([[np.exp(2j * np.pi * rng.random())]])
            else:
                self._blocks[c] = haar_unitary(d, rng)
        return self._blocks[c]

    def _coefficients(self, vec: np.ndarray) -> np.ndarray:
        coef = np.zeros(self.eig.offsets[-1], dtype=complex)
        for s in np.unique(self.eig.sector_of_index[np.flatnonzero(vec)]):
            if s < 0:
                raise ValueError("vector has weight outside the eigensystem")
            idx, v = self.eig.indices[s], self.eig.vectors[s]
            coef[self.eig.offsets[s] : self.eig.offsets[s + 1]] = v.conj().T @ vec[idx]
        return coef

    def _synthesise(self, coef: np.ndarray) -> np.ndarray:
        out = np.zeros(self.eig.dim, dtype=complex)
        for s in np.unique(self._owner[np.flatnonzero(coef)]):
            a, b = self.eig.offsets[s], self.eig.offsets[s + 1]
            out[self.eig.indices[s]] += self.eig.vectors[s] @ coef[a:b]
        return out

    def apply(self, vec: np.ndarray) -> np.ndarray:
        coef = self._coefficients(np.asarray(vec, dtype=complex))
        new = np.zeros_like(coef)
        for c in np.unique(self.cluster_of[np.flatnonzero(np.abs(coef) > 0)]):
            m = self.members[c]
            new[m] = self.block(c) @ coef[m]
        return self._synthesise(new)

    def matrix(self) -> np.ndarray:
        n = self.eig.dim
        return np.stack([self.apply(np.eye(n)[:, j]) for j in range(n)], axis=1)


class EcHaarSampler:
    """Energy-conserving Haar sampler for a fixed eigensystem."""

    def __init__(self, eig: Eigensystem, tol: float = DEFAULT_TOL):
        self.eig = eig
        self.tol = tol
        self.cluster_of, self.members = cluster_energies(eig.all_energies, tol)
        self._proto = BlockRandomUnitary(eig, self.cluster_of, self.members, 0)

    def sample(self, seed: int) -> BlockRandomUnitary:
        return BlockRandomUnitary(self.eig, self.cluster_of, self.members, seed)

    def sample_action(self, vec: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """``U vec`` for a fresh ``U``, drawn directly from its distribution.

        For a Haar block ``W`` and fixed ``u``, ``W u`` is uniform on the sphere
        of radius ``|u|``, so a single application needs no full block.
        """
        coef = self._proto._coefficients(np.asarray(vec, dtype=complex))
        new = np.zeros_like(coef)
        for c in np.unique(self.cluster_of[np.flatnonzero(np.abs(coef) > 0)]):
            m = self.members[c]
            new[m] = np.linalg.norm(coef[m]) * _random_sphere(len(m), rng)
        return self._proto._synthesise(new)


class DenseSampler:
    """Global Haar unitaries on the whole space."""

    def __init__(self, dim: int):
        self.dim = dim

    def sample(self, seed: int):
        return _DenseUnitary(haar_unitary(self.dim, np.random.default_rng(seed)))

    def sample_action(self, vec: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return np.linalg.norm(vec) * _random_sphere(self.dim, rng)


class IdentitySampler:
    """Stub oracle returning the identity."""

    def sample(self, seed: int):
        return _DenseUnitary(None)

    def sample_action(self, vec, rng):
        return np.asarray(vec, dtype=complex).copy()


@dataclass
class _DenseUnitary:
    u: np.ndarray | None

    def apply(self, vec):
        return np.asarray(vec, dtype=complex).copy() if self.u is None else self.u @ vec

    def matrix(self):
        return self.u


# ---------------------------------------------------------------------------
# measurement protocol


@dataclass(frozen=True)
class MeasurementOutcome:
    basis_index: int
    label: str
    contains_qa: bool
    contains_qr: bool


@dataclass
class PspaceResult:
    decision: str
    outcomes: list[MeasurementOutcome]
    default_path: bool

    @property
    def queries(self) -> int:
        return len(self.outcomes)


def _label(model: ComputationModel, i: int) -> str:
    c = config_at(model.tm, i)
    sites = [model.tm.symbols[s] for s in c.tape]
    sites.insert(c.head, f"[{model.tm.states[c.state]}]")
    return " ".join(sites)


def pspace_solve(model: ComputationModel, x, oracle, seed: int, max_queries: int = SOLVER_QUERIES) -> PspaceResult:
    """Repeat: apply a fresh unitary to the start configuration and measure.

    Accept on an accept-flavoured state, reject on a reject-flavoured one,
    and accept by default once ``max_queries`` measurements found neither.
    """
    rng = np.random.default_rng(seed)
    start = model.start_vector(x)
    flavors = model.flavor_of_index
    outcomes = []
    for _ in range(max_queries):
        out = oracle.sample_action(start, rng)
        support = np.flatnonzero(np.abs(out) > 0)
        p = np.abs(out[support]) ** 2
        p /= p.sum()
        i = int(support[rng.choice(len(support), p=p)])
        o = MeasurementOutcome(i, _label(model, i), bool(flavors[i] == 1), bool(flavors[i] == 2))
        outcomes.append(o)
        if o.contains_qa:
            return PspaceResult("Accept", outcomes, False)
        if o.contains_qr:
            return PspaceResult("Reject", outcomes, False)
    log.info("solver exhausted %d queries on input %r; accepting by default", max_queries, x)
    return PspaceResult("Accept", outcomes, True)


def failure_envelopes(per_query: float = 1 / 12) -> dict:
    """Failure bounds for 15 and for 5 independent readouts."""
    return {"queries_15": (1 - per_query) ** 15, "queries_5": (1 - per_query) ** 5}


# ---------------------------------------------------------------------------
# random-phase Monte Carlo


def monte_carlo_collapse(block: SpectralBlock, samples: int, seed: int, chunk: int = 20000) -> tuple[np.ndarray, np.ndarray]:
    """Per-site mean and standard error of ``|<t|U|1>|^2`` under random phases."""
    rng = np.random.default_rng(seed)
    v = block.eigvecs
    a0 = v[0]
    s1 = np.zeros(block.length)
    s2 = np.zeros(block.length)
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        th = rng.uniform(0, 2 * np.pi, (n, block.length))
        amp = (np.exp(1j * th) * a0[None, :]) @ v.T
        p = np.abs(amp) ** 2
        s1 += p.sum(0)
        s2 += (p**2).sum(0)
        done += n
    mean = s1 / samples
    var = np.maximum(s2 / samples - mean**2, 0)
    return mean, np.sqrt(var / samples)


def monte_carlo_second_half(blocks: list[SpectralBlock], samples: int, seed: int, chunk: int = 5000) -> list[tuple[float, float]]:
    """Mean and standard error of the second-half readout probability.

    All blocks share each draw of phases (the first ``T`` columns of one
    ``samples x max T`` table), which keeps the trigonometric work to a single
    table; each block's estimate is still an average of i.i.d. samples.
    """
    rng = np.random.default_rng(seed)
    width = max(b.length for b in blocks)
    sums = np.zeros((len(blocks), 2))
    halves = []
    for b in blocks:
        T = b.length
        v = b.eigvecs.astype(np.float32)
        halves.append(np.ascontiguousarray((v[T // 2 :] * v[0][None, :]).T))
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        th = rng.uniform(0, 2 * np.pi, (n, width)).astype(np.float32)
        c, s = np.cos(th), np.sin(th)
        for i, (b, m) in enumerate(zip(blocks, halves)):
            T = b.length
            re = c[:, :T] @ m
            im = s[:, :T] @ m
            p = (re.astype(np.float64) ** 2 + im.astype(np.float64) ** 2).sum(1)
            sums[i, 0] += p.sum()
            sums[i, 1] += (p**2).sum()
        done += n
    out = []
    for s1, s2 in sums:
        mean = s1 / samples
        out.append((float(mean), float(np.sqrt(max(s2 / samples - mean**2, 0) / samples))))
    return out


# ---------------------------------------------------------------------------
# energy distinguisher


def haar_energy_std(h: np.ndarray) -> float:
    """Standard deviation of ``<psi|U^dag H U|psi>`` for Haar ``U``."""
    d = h.shape[0]
    tr = np.trace(h).real / d
    tr2 = np.trace(h @ h).real / d
    return float(np.sqrt(max(tr2 - tr**2, 0.0) / (d + 1)))


_PAULI_FRAME = np.array(
    [
        [1, 0],
        [0, 1],
        [1 / np.sqrt(2), 1 / np.sqrt(2)],
        [1 / np.sqrt(2), -1 / np.sqrt(2)],
        [1 / np.sqrt(2), 1j / np.sqrt(2)],
        [1 / np.sqrt(2), -1j / np.sqrt(2)],
    ],
    dtype=complex,
)


def pauli_product_states(n: int) -> np.ndarray:
    """All ``6**n`` products of single-qubit Pauli eigenstates, one per row."""
    states = np.ones((1, 1), dtype=complex)
    for _ in range(n):
        states = np.einsum("ai,bj->abij", states, _PAULI_FRAME).reshape(states.shape[0] * 6, -1)
    return states


@dataclass(frozen=True)
class EnergyTestResult:
    decision: str
    statistic: float
    threshold: float
    deviation: float
    haar_std: float
    trials: int


def energy_distinguisher(h: np.ndarray, oracle, trials: int = 200, seed: int = 0, z: float = 5.0) -> EnergyTestResult:
    """Probe whether ``oracle`` preserves the energy of a product state.

    The probe is the Pauli product state whose energy deviates most from
    the infinite-temperature value ``tr H / d``.  The mean absolute deviation
    after the unitary is compared with half of that initial deviation.
    """
    h = np.asarray(h)
    d = h.shape[0]
    n = int(round(np.log2(d)))
    mean_e = np.trace(h).real / d
    states = pauli_product_states(n)
    energies = np.sum(states.conj() * (states @ h.T), axis=1).real
    best = int(np.argmax(np.abs(energies - mean_e)))
    psi, dev = states[best], abs(energies[best] - mean_e)
    if dev <= 1e-12:
        raise ValueError("no product state separates from the infinite-temperature energy")
    sigma = haar_energy_std(h)
    threshold = dev / 2
    if threshold <= sigma:
        raise ValueError("energy separation is within one Haar standard deviation; test cannot decide")
    needed = int(np.ceil((z * sigma / (threshold - sigma)) ** 2))
    if trials < needed:
        raise ValueError(f"{trials} trials are too few; need at least {needed}")
    rng = np.random.default_rng(seed)
    vals = np.empty(trials)
    for t in range(trials):
        phi = oracle.sample_action(psi, rng)
        vals[t] = abs((phi.conj() @ h @ phi).real - mean_e)
    stat = float(vals.mean())
    return EnergyTestResult(
        "EnergyConserving" if stat > threshold else "HaarLike", stat, threshold, float(dev), sigma, trials
    )
