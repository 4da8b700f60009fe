"""Quantified Boolean formulas, oracle-based function inversion and the oracle verifier.

Truth tables are Python integers: with ``v`` quantified variables, bit ``a``
holds the matrix value on the assignment whose ``i``-th quantified variable is
bit ``i`` of ``a``.  Quantifiers are eliminated innermost first by folding the
high half of the table onto the low half.
"""

from __future__ import annotations

import hashlib
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .ecru import ComputationModel, pspace_solve
from .rtm import MachineError

log = logging.getLogger(__name__)

__all__ = [
    "VARIABLE_CAP",
    "QbfError",
    "Circuit",
    "Cnf",
    "CircuitMatrix",
    "QbfFormula",
    "tqbf_eval",
    "truth_table",
    "tseitin",
    "keyed_owf",
    "ExactOracle",
    "NoisyOracle",
    "RandomOracle",
    "RefusingOracle",
    "EcruOracle",
    "AmplifiedOracle",
    "amplify",
    "inversion_formula",
    "InversionResult",
    "invert_with_oracle",
    "verifier_rounds",
    "VerifierResult",
    "verify_oracle",
    "compile_to_input",
    "DistinguisherResult",
    "universal_distinguish",
]

VARIABLE_CAP = 24
EXISTS, FORALL = "E", "A"


class QbfError(ValueError):
    pass


def _pattern(i: int, n_vars: int) -> int:
    """Table whose bit ``a`` is bit ``i`` of ``a``."""
    size, half = 1 << n_vars, 1 << i
    period = half << 1
    block = ((1 << half) - 1) << half
    return block * (((1 << size) - 1) // ((1 << period) - 1))


# ---------------------------------------------------------------------------
# matrices


@dataclass(frozen=True)
class Circuit:
    """Boolean circuit; wires ``0..n_inputs-1`` are inputs, gate ``j`` drives wire ``n_inputs + j``.

    Gates are ``(op, a, b)`` with op in and/or/xor/not (``b`` ignored for not).
    Input ``i`` is bit ``i`` of the integer argument; likewise for outputs.
    """

    n_inputs: int
    gates: tuple[tuple[str, int, int], ...]
    outputs: tuple[int, ...]

    def __post_init__(self):
        for j, (op, a, b) in enumerate(self.gates):
            if op not in ("and", "or", "xor", "not"):
                raise QbfError(f"unknown gate {op!r}")
            if not (0 <= a < self.n_inputs + j and (op == "not" or 0 <= b < self.n_inputs + j)):
                raise QbfError(f"gate {j} reads an undefined wire")
        if any(not 0 <= w < self.n_inputs + len(self.gates) for w in self.outputs):
            raise QbfError("output wire out of range")

    @property
    def n_outputs(self) -> int:
        return len(self.outputs)

    def wires(self, inputs: list[int], mask: int) -> list[int]:
        """Evaluate every wire on bit-parallel input words."""
        w = list(inputs)
        for op, a, b in self.gates:
            if op == "and":
                w.append(w[a] & w[b])
            elif op == "or":
                w.append(w[a] | w[b])
            elif op == "xor":
                w.append(w[a] ^ w[b])
            else:
                w.append(~w[a] & mask)
        return w

    def __call__(self, x: int) -> int:
        w = self.wires([(x >> i) & 1 for i in range(self.n_inputs)], 1)
        return sum(w[o] << j for j, o in enumerate(self.outputs))


@dataclass(frozen=True)
class Cnf:
    """Clauses of signed variable ids (``-v`` is the negation of ``v``)."""

    clauses: tuple[tuple[int, ...], ...]

    def table(self, order: dict[int, int], n_vars: int) -> int:
        full = (1 << (1 << n_vars)) - 1
        out = full
        for clause in self.clauses:
            c = 0
            for lit in clause:
                p = _pattern(order[abs(lit)], n_vars)
                c |= p if lit > 0 else full & ~p
            out &= c
        return out

    def variables(self) -> set[int]:
        return {abs(l) for c in self.clauses for l in c}


@dataclass(frozen=True)
class CircuitMatrix:
    """``C(x) = y`` and ``x`` agrees with ``fixed`` (pairs of input index and bit)."""

    circuit: Circuit
    y: int
    fixed: tuple[tuple[int, int], ...] = ()

    def table(self, order: dict[int, int], n_vars: int) -> int:
        full = (1 << (1 << n_vars)) - 1
        inputs = [_pattern(order[i + 1], n_vars) for i in range(self.circuit.n_inputs)]
        w = self.circuit.wires(inputs, full)
        out = full
        for j, o in enumerate(self.circuit.outputs):
            out &= w[o] if (self.y >> j) & 1 else full & ~w[o]
        for i, bit in self.fixed:
            out &= inputs[i] if bit else full & ~inputs[i]
        return out

    def variables(self) -> set[int]:
        return set(range(1, self.circuit.n_inputs + 1))


@dataclass(frozen=True)
class QbfFormula:
    """Prenex formula; quantifiers run outermost first as ``(kind, variable)`` with variables ``>= 1``."""

    quantifiers: tuple[tuple[str, int], ...]
    matrix: Cnf | CircuitMatrix
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = [v for _, v in self.quantifiers]
        if len(set(names)) != len(names):
            raise QbfError("variable quantified twice")
        if any(q not in (EXISTS, FORALL) for q, _ in self.quantifiers):
            raise QbfError("quantifiers must be 'E' or 'A'")
        free = self.matrix.variables() - set(names)
        if free:
            raise QbfError(f"free variables {sorted(free)}")
        object.__setattr__(self, "_hash", hash((self.quantifiers, self.matrix)))

    def __hash__(self):
        return self._hash

    @property
    def n_vars(self) -> int:
        return len(self.quantifiers)


def truth_table(phi: QbfFormula) -> int:
    if phi.n_vars > VARIABLE_CAP:
        raise QbfError(f"{phi.n_vars} variables exceed the cap of {VARIABLE_CAP}")
    order = {v: i for i, (_, v) in enumerate(phi.quantifiers)}
    return phi.matrix.table(order, phi.n_vars)


def tqbf_eval(phi: QbfFormula) -> bool:
    table = truth_table(phi)
    size = 1 << phi.n_vars
    for kind, _ in reversed(phi.quantifiers):
        size >>= 1
        low, high = table & ((1 << size) - 1), table >> size
        table = (low | high) if kind == EXISTS else (low & high)
    return bool(table & 1)


def tseitin(phi: QbfFormula) -> QbfFormula:
    """Equivalent CNF formula: one existential variable per gate, bound innermost."""
    m = phi.matrix
    if isinstance(m, Cnf):
        return phi
    c = m.circuit
    base = max(v for _, v in phi.quantifiers)
    var = {i: i + 1 for i in range(c.n_inputs)}
    clauses: list[tuple[int, ...]] = []
    for j, (op, a, b) in enumerate(c.gates):
        g = base + 1 + j
        var[c.n_inputs + j] = g
        x = var[a]
        if op == "not":
            clauses += [(-g, -x), (g, x)]
            continue
        y = var[b]
        if op == "and":
            clauses += [(-g, x), (-g, y), (g, -x, -y)]
        elif op == "or":
            clauses += [(g, -x), (g, -y), (-g, x, y)]
        else:
            clauses += [(-g, x, y), (-g, -x, -y), (g, -x, y), (g, x, -y)]
    for j, o in enumerate(c.outputs):
        clauses.append((var[o],) if (m.y >> j) & 1 else (-var[o],))
    for i, bit in m.fixed:
        clauses.append((var[i],) if bit else (-var[i],))
    aux = tuple((EXISTS, base + 1 + j) for j in range(len(c.gates)))
    return QbfFormula(phi.quantifiers + aux, Cnf(tuple(clauses)))


def keyed_owf(key: bytes, n_bits: int, rounds: int = 3) -> Circuit:
    """Toy one-way function: rounds of in-place AND-XOR updates, constant XOR and rotation.

    Each update ``s_i ^= s_{i+1} & s_{i+2}`` is its own inverse, so the map is
    a permutation of ``n_bits``-bit strings; with fewer than three bits the
    nonlinear step is skipped.  Round constants come from SHA-256 of the key
    and round number.
    """
    gates: list[tuple[str, int, int]] = []
    n_wires = n_bits

    def add(op, a, b=0):
        nonlocal n_wires
        gates.append((op, a, b))
        n_wires += 1
        return n_wires - 1

    s = list(range(n_bits))
    for r in range(rounds):
        const = hashlib.sha256(key + bytes([r])).digest()
        if n_bits >= 3:
            for i in range(n_bits):
                s[i] = add("xor", s[i], add("and", s[(i + 1) % n_bits], s[(i + 2) % n_bits]))
        s = [add("not", w) if (const[i // 8] >> (i % 8)) & 1 else w for i, w in enumerate(s)]
        s = s[1:] + s[:1]
    return Circuit(n_bits, tuple(gates), tuple(s))


# ---------------------------------------------------------------------------
# oracles


class Oracle(Protocol):
    kind: str
    queries: int

    def __call__(self, phi: QbfFormula) -> bool: ...


class ExactOracle:
    kind = "exact"

    def __init__(self):
        self.queries = 0
        self._cache: dict[QbfFormula, bool] = {}

    def __call__(self, phi):
        self.queries += 1
        if phi not in self._cache:
            self._cache[phi] = tqbf_eval(phi)
        return self._cache[phi]


class NoisyOracle(ExactOracle):
    """Correct with probability ``p_correct``, independently per query."""

    kind = "noisy"

    def __init__(self, p_correct: float, seed: int = 0):
        super().__init__()
        self.p, self._rng = p_correct, random.Random(seed)

    def __call__(self, phi):
        truth = super().__call__(phi)
        return truth if self._rng.random() < self.p else not truth


class RandomOracle:
    kind = "random"

    def __init__(self, seed: int = 0):
        self.queries, self._rng = 0, random.Random(seed)

    def __call__(self, phi):
        self.queries += 1
        return self._rng.random() < 0.5


class RefusingOracle:
    kind = "refusing"

    def __init__(self):
        self.queries = 0

    def __call__(self, phi):
        self.queries += 1
        return False


class AmplifiedOracle:
    """Majority of ``6k`` base answers; ties answer False."""

    kind = "amplified"

    def __init__(self, base, k: int):
        if k < 1:
            raise ValueError("k must be at least 1")
        self.base, self.k, self.queries = base, k, 0

    def __call__(self, phi):
        self.queries += 1
        votes = sum(bool(self.base(phi)) for _ in range(6 * self.k))
        return 2 * votes > 6 * self.k


def amplify(oracle, k: int) -> AmplifiedOracle:
    return AmplifiedOracle(oracle, k)


def compile_to_input(phi: QbfFormula) -> tuple[str, bool]:
    """Truth-table input for the disjunction machine and whether to negate its answer.

    Only a single quantifier block is supported: an existential block asks
    whether the table contains a 1, a universal block asks the same of the
    complemented table and negates the answer.
    """
    kinds = {q for q, _ in phi.quantifiers}
    if len(kinds) != 1:
        raise MachineError("only single-block formulas compile to the disjunction machine")
    size = 1 << phi.n_vars
    table = truth_table(phi)
    negate = kinds == {FORALL}
    if negate:
        table = ~table & ((1 << size) - 1)
    return "".join("1" if (table >> a) & 1 else "0" for a in range(size)), negate


class EcruOracle:
    """Answers by running the measurement solver with a unitary sampler on the disjunction machine."""

    kind = "ecru"

    def __init__(self, model: ComputationModel, sampler, seed: int = 0):
        self.model, self.sampler = model, sampler
        self.queries = 0
        self.unitary_queries = 0
        self._seeds = np.random.default_rng(seed)

    def __call__(self, phi):
        x, negate = compile_to_input(phi)
        if len(x) > self.model.tm.tape_length:
            raise MachineError(f"formula needs {len(x)} cells, machine has {self.model.tm.tape_length}")
        self.queries += 1
        res = pspace_solve(self.model, x, self.sampler, int(self._seeds.integers(2**63)))
        self.unitary_queries += res.queries
        return (res.decision == "Accept") != negate


# ---------------------------------------------------------------------------
# inversion and verification


def inversion_formula(circuit: Circuit, y: int, fixed: tuple[tuple[int, int], ...] = ()) -> QbfFormula:
    return QbfFormula(tuple((EXISTS, i + 1) for i in range(circuit.n_inputs)), CircuitMatrix(circuit, y, fixed))


@dataclass(frozen=True)
class InversionResult:
    preimage: int | None
    queries: int

    @property
    def failed(self) -> bool:
        return self.preimage is None


def invert_with_oracle(circuit: Circuit, y: int, oracle) -> InversionResult:
    """Satisfiability query, then fix input bits one at a time by asking whether 0 still works."""
    if not oracle(inversion_formula(circuit, y)):
        return InversionResult(None, 1)
    fixed: list[tuple[int, int]] = []
    for i in range(circuit.n_inputs):
        bit = 0 if oracle(inversion_formula(circuit, y, tuple(fixed) + ((i, 0),))) else 1
        fixed.append((i, bit))
    return InversionResult(sum(b << i for i, b in fixed), circuit.n_inputs + 1)


def verifier_rounds(n: int) -> int:
    return math.ceil(100 * math.log(n))


@dataclass
class VerifierResult:
    decision: str  # "True" or "Pseudo"
    successes: int
    rounds: int
    transcript: list[dict]

    @property
    def accepted(self) -> bool:
        return self.decision == "True"


def verify_oracle(oracle, n: int, owf: Callable[[int], Circuit], seed: int, k: int | None = None) -> VerifierResult:
    """Invert random images of ``owf(n')`` with the amplified oracle; accept on two thirds successes."""
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = np.random.default_rng(seed)
    amp = amplify(oracle, 2 * n if k is None else k)
    T = verifier_rounds(n)
    transcript, successes = [], 0
    for _ in range(T):
        n_prime = int(rng.integers(1, n + 1))
        f = owf(n_prime)
        x = int(rng.integers(0, 2**n_prime))
        y = f(x)
        before = amp.queries
        res = invert_with_oracle(f, y, amp)
        ok = not res.failed and f(res.preimage) == y
        successes += ok
        transcript.append({"n_prime": n_prime, "x": x, "y": y, "queries": amp.queries - before, "result": bool(ok)})
    decision = "True" if 3 * successes >= 2 * T else "Pseudo"
    return VerifierResult(decision, successes, T, transcript)


@dataclass
class DistinguisherResult:
    decision: str  # "HaarRandom" or "Pseudorandom"
    verifier: VerifierResult
    unitary_queries: int
    query_bound: int


def universal_distinguish(sampler, model: ComputationModel, n: int, seed: int, key: bytes = b"owf") -> DistinguisherResult:
    """Use the solver over ``sampler`` as a formula oracle and run the verifier on it."""
    oracle = EcruOracle(model, sampler, seed)
    res = verify_oracle(oracle, n, lambda m: keyed_owf(key, m), seed)
    k = 2 * n
    bound = 15 * (n + 1) * 6 * k * res.rounds
    decision = "HaarRandom" if res.accepted else "Pseudorandom"
    return DistinguisherResult(decision, res, oracle.unitary_queries, bound)
