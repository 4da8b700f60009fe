"""Compile a reversible machine into a sparse chain Hamiltonian.

Every transition contributes a two- or three-site pattern pair ``(v_k, v_l)``;
the Hamiltonian is the sum over all ring translations of
``(|v_k> + |v_l>)(<v_k| + <v_l|)``.  Entries are dyadic rationals and are kept
as integer numerators over ``2**DENOMINATOR_EXP`` until converted to floats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .confgraph import Component, ConfigGraph, Kind
from .rtm import Form, Move, TransitionRule, TuringMachine

__all__ = [
    "DENOMINATOR_EXP",
    "STATE_PENALTY",
    "ConsistencyError",
    "CapError",
    "SparseHamiltonian",
    "EffectiveHopping",
    "local_patterns",
    "chain_basis",
    "compile_hamiltonian",
    "computation_hamiltonian",
    "effective_hopping",
    "component_class",
    "write_coo",
]

DENOMINATOR_EXP = 2
STATE_PENALTY = 10
ACCEPT_PENALTY = Fraction(1, 2)
REJECT_PENALTY = Fraction(1, 4)
DEFAULT_DIM_CAP = 2_000_000
_WILD = -1  # placeholder for the spectator symbol carried by 3-site patterns


class ConsistencyError(RuntimeError):
    """The compiled operator disagrees with the configuration graph."""


class CapError(RuntimeError):
    pass


@dataclass(frozen=True)
class SparseHamiltonian:
    """Symmetric operator on a labelled chain basis.

    ``labels[i]`` lists the per-site label of basis vector ``i``: values below
    ``n_symbols`` are tape symbols, ``n_symbols + q`` is state ``q``.  The first
    ``n_one_state`` basis vectors are the one-state configurations in the
    same order as :func:`ecpru.confgraph.config_index`.
    """

    dim: int
    rows: np.ndarray
    cols: np.ndarray
    numerators: np.ndarray
    labels: np.ndarray
    n_symbols: int
    n_one_state: int
    site_names: tuple[str, ...]

    @property
    def denominator(self) -> int:
        return 2**DENOMINATOR_EXP

    def to_csr(self) -> sp.csr_matrix:
        m = sp.coo_matrix(
            (self.numerators.astype(float) / self.denominator, (self.rows, self.cols)), shape=(self.dim, self.dim)
        )
        return m.tocsr()

    def to_dense(self) -> np.ndarray:
        return self.to_csr().toarray()

    def value(self, i: int, j: int) -> Fraction:
        mask = (self.rows == i) & (self.cols == j)
        return Fraction(int(self.numerators[mask].sum()), self.denominator)

    def with_diagonal(self, extra_numerators: np.ndarray) -> "SparseHamiltonian":
        idx = np.flatnonzero(extra_numerators)
        rows = np.concatenate([self.rows, idx])
        cols = np.concatenate([self.cols, idx])
        nums = np.concatenate([self.numerators, extra_numerators[idx]])
        return _canonical(self.dim, rows, cols, nums, self)


def _canonical(dim, rows, cols, nums, like: SparseHamiltonian | None = None, **fields) -> SparseHamiltonian:
    """Sum duplicate entries and drop zeros, keeping integer numerators."""
    m = sp.coo_matrix((nums.astype(np.int64), (rows, cols)), shape=(dim, dim)).tocsr()
    m.sum_duplicates()
    m.eliminate_zeros()
    c = m.tocoo()
    base = dict(
        labels=like.labels if like else None,
        n_symbols=like.n_symbols if like else 0,
        n_one_state=like.n_one_state if like else 0,
        site_names=like.site_names if like else (),
    )
    base.update(fields)
    return SparseHamiltonian(dim, c.row.astype(np.int64), c.col.astype(np.int64), c.data.astype(np.int64), **base)


# ---------------------------------------------------------------------------
# local patterns


def local_patterns(tm: TuringMachine, rule: TransitionRule) -> list[tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]]:
    """Chain windows rewritten by ``rule``.

    Returns ``(offsets, before, after)`` triples; offsets are relative to the
    site holding the old state.  Three-site windows carry a spectator symbol,
    so one triple is produced for each possible spectator.
    """
    g = tm.n_symbols
    q, q2 = g + rule.state_in, g + rule.state_out
    x, x2 = rule.symbol_in, rule.symbol_out
    y = _WILD
    if rule.form is Form.STANDARD:
        if rule.move is Move.RIGHT:
            shape = ((0, 1), (q, x), (x2, q2))
        elif rule.move is Move.STAY:
            shape = ((0, 1), (q, x), (q2, x2))
        else:
            shape = ((-1, 0, 1), (y, q, x), (q2, y, x2))
    elif rule.move is Move.RIGHT:
        shape = ((0, 1, 2), (q, y, x), (y, q2, x2))
    else:
        shape = ((-1, 0), (x, q), (q2, x2))
    offsets, before, after = shape
    if _WILD not in before:
        return [shape]
    out = []
    for sym in range(g):
        fill = lambda t: tuple(sym if v == _WILD else v for v in t)  # noqa: E731
        out.append((offsets, fill(before), fill(after)))
    return out


# ---------------------------------------------------------------------------
# basis


def _one_state_labels(tm: TuringMachine) -> np.ndarray:
    g, nq, L = tm.n_symbols, tm.n_states, tm.tape_length
    tapes = np.array(np.unravel_index(np.arange(g**L), (g,) * L)).T if L else np.zeros((1, 0), int)
    blocks = []
    for head in range(L + 1):
        for state in range(nq):
            block = np.empty((g**L, L + 1), dtype=np.int16)
            block[:, :head] = tapes[:, :head]
            block[:, head] = g + state
            block[:, head + 1 :] = tapes[:, head:]
            blocks.append(block)
    return np.concatenate(blocks)


def _product_labels(alphabet: int, sites: int, offset: int = 0) -> np.ndarray:
    return (np.array(np.unravel_index(np.arange(alphabet**sites), (alphabet,) * sites)).T + offset).astype(np.int16)


def chain_basis(tm: TuringMachine, sectors: str = "computational", cap: int = DEFAULT_DIM_CAP) -> tuple[np.ndarray, int]:
    """Site labels for the requested sectors and the size of the one-state block.

    ``computational``: exactly one state site, then the all-symbol sector.
    ``all``: additionally every configuration with two or more state sites.
    """
    g, nq, L = tm.n_symbols, tm.n_states, tm.tape_length
    d = g + nq
    one = (L + 1) * nq * g**L
    zero = g ** (L + 1)
    total = one + zero if sectors == "computational" else d ** (L + 1)
    if sectors not in ("computational", "all"):
        raise ValueError(f"unknown sector selection {sectors!r}")
    if total > cap:
        raise CapError(f"basis dimension {total} exceeds cap {cap}")
    parts = [_one_state_labels(tm), _product_labels(g, L + 1)]
    if sectors == "all":
        full = _product_labels(d, L + 1)
        many = full[(full >= g).sum(axis=1) >= 2]
        parts.append(many)
    return np.concatenate(parts), one


def _codes(labels: np.ndarray, d: int) -> np.ndarray:
    weights = d ** np.arange(labels.shape[1], dtype=np.int64)
    return labels.astype(np.int64) @ weights


def compile_hamiltonian(tm: TuringMachine, sectors: str = "computational", cap: int = DEFAULT_DIM_CAP) -> SparseHamiltonian:
    """Sum of translated local projector terms, one per rule and spectator symbol."""
    labels, n_one = chain_basis(tm, sectors, cap)
    g, L = tm.n_symbols, tm.tape_length
    n_sites, d = L + 1, g + tm.n_states
    codes = _codes(labels, d)
    order = np.argsort(codes)
    sorted_codes = codes[order]
    pw = d ** np.arange(n_sites, dtype=np.int64)
    rows, cols, nums = [], [], []
    unit = 2**DENOMINATOR_EXP
    for rule in tm.rules:
        for offsets, before, after in local_patterns(tm, rule):
            for i in range(n_sites):
                sites = [(i + o) % n_sites for o in offsets]
                mask = np.ones(len(labels), dtype=bool)
                for s, v in zip(sites, before):
                    mask &= labels[:, s] == v
                k = np.flatnonzero(mask)
                if not len(k):
                    continue
                delta = sum(int(pw[s]) * (a - b) for s, a, b in zip(sites, after, before))
                target = codes[k] + delta
                pos = np.searchsorted(sorted_codes, target)
                if np.any(pos >= len(sorted_codes)) or np.any(sorted_codes[np.minimum(pos, len(sorted_codes) - 1)] != target):
                    raise ConsistencyError("a local term leaves the selected basis sectors")
                l = order[pos]
                rows += [k, l, k, l]
                cols += [k, l, l, k]
                nums += [np.full(len(k), unit, np.int64)] * 4
    names = tuple(tm.symbols) + tuple(tm.states)
    if rows:
        r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(nums)
    else:
        r = c = v = np.zeros(0, np.int64)
    return _canonical(len(labels), r, c, v, labels=labels, n_symbols=g, n_one_state=n_one, site_names=names)


def computation_hamiltonian(h: SparseHamiltonian, tm: TuringMachine) -> SparseHamiltonian:
    """Add on-site penalties: 10 per state site, 1/2 per ``q0^a``, 1/4 per ``q0^r``."""
    if not tm.duplicated:
        raise ValueError("computation Hamiltonian needs a duplicated machine")
    g = h.n_symbols
    unit = 2**DENOMINATOR_EXP
    lab = h.labels
    n_state = (lab >= g).sum(axis=1)
    n_acc = (lab == g + tm.halt_accept).sum(axis=1)
    n_rej = (lab == g + tm.halt_reject).sum(axis=1)
    extra = (
        STATE_PENALTY * unit * n_state
        + int(ACCEPT_PENALTY * unit) * n_acc
        + int(REJECT_PENALTY * unit) * n_rej
    ).astype(np.int64)
    return h.with_diagonal(extra)


# ---------------------------------------------------------------------------
# per-component hopping chains


@dataclass(frozen=True)
class EffectiveHopping:
    length: int
    v_source: float
    v_sink: float
    bulk_diag: float
    klass: str
    periodic: bool = False


def component_class(tm: TuringMachine, comp: Component) -> str:
    if comp.kind is Kind.LOOP:
        return "loop"
    if comp.sink_state == tm.halt_accept:
        return "4a5a"
    if comp.sink_state == tm.halt_reject:
        return "4r5r"
    return "23"


def _expected_block(tm: TuringMachine, comp: Component) -> np.ndarray:
    T = comp.length
    m = np.zeros((T, T))
    edges = [(i, i + 1) for i in range(T - 1)]
    if comp.kind is Kind.LOOP:
        edges.append((T - 1, 0))
    for a, b in edges:
        v = np.zeros(T)
        v[a] += 1
        v[b] += 1
        m += np.outer(v, v)
    m += STATE_PENALTY * np.eye(T)
    if comp.kind is Kind.PATH:
        if comp.sink_state == tm.halt_accept:
            m[-1, -1] += float(ACCEPT_PENALTY)
        elif comp.sink_state == tm.halt_reject:
            m[-1, -1] += float(REJECT_PENALTY)
    return m


def effective_hopping(graph: ConfigGraph, h_comp: SparseHamiltonian | sp.csr_matrix, comp: Component) -> EffectiveHopping:
    """Restrict the operator to one component and read off its chain parameters.

    The restriction is compared entry by entry with the expected hopping
    matrix, and every matrix element leaving the component must vanish.
    """
    csr = h_comp.to_csr() if isinstance(h_comp, SparseHamiltonian) else h_comp
    idx = np.asarray(comp.nodes)
    rows = csr[idx]
    block = rows[:, idx].toarray()
    expected = _expected_block(graph.tm, comp)
    if not np.array_equal(block, expected):
        bad = np.argwhere(block != expected)[0]
        raise ConsistencyError(
            f"component {comp.type_label} of length {comp.length}: entry {tuple(bad)} is {block[tuple(bad)]}, expected {expected[tuple(bad)]}"
        )
    leak = abs(rows).sum() - abs(block).sum()
    if leak != 0:
        raise ConsistencyError(f"component {comp.type_label} couples to configurations outside it")
    klass = component_class(graph.tm, comp)
    T = comp.length
    bulk = 2.0 + STATE_PENALTY
    if comp.kind is Kind.LOOP:
        return EffectiveHopping(T, 0.0, 0.0, bulk, klass, periodic=True)
    if T == 1:
        return EffectiveHopping(1, -1.0, float(block[0, 0]) - bulk + 1.0, bulk, klass)
    return EffectiveHopping(T, float(block[0, 0] - bulk), float(block[-1, -1] - bulk), bulk, klass)


# ---------------------------------------------------------------------------
# export


def write_coo(h: SparseHamiltonian, path: str | Path) -> tuple[Path, Path]:
    """Write ``row col value`` lines plus a JSON sidecar naming each basis label."""
    path = Path(path)
    order = np.lexsort((h.cols, h.rows))
    lines = [f"# dim {h.dim} nnz {len(order)}"]
    for k in order:
        lines.append(f"{h.rows[k]} {h.cols[k]} {float(h.numerators[k] / h.denominator)!r}")
    path.write_text("\n".join(lines) + "\n")
    sidecar = path.with_suffix(path.suffix + ".basis.json")
    sidecar.write_text(
        json.dumps(
            {
                "site_names": list(h.site_names),
                "n_one_state": h.n_one_state,
                "labels": h.labels.tolist(),
            }
        )
    )
    return path, sidecar
