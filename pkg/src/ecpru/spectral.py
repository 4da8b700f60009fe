"""Exact spectra of hopping chains with boundary potentials.

A path of length ``T`` has the tridiagonal matrix with diagonal ``bulk``,
unit hopping and extra potentials ``v_source``/``v_sink`` on its end sites.
With ``v_source = -1`` the eigenvectors are ``sin(k (n - 1/2))`` for
``n = 1..T`` and the momenta solve

    G(k) = sin(k (T + 1/2)) - v_sink * sin(k (T - 1/2)) = 0,

equivalently ``tan(T k) = -((1 + v)/(1 - v)) tan(k / 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "SolverError",
    "SpectralBlock",
    "CLASS_SINK_POTENTIAL",
    "BULK_DIAGONAL",
    "DEFAULT_TOL",
    "hopping_matrix",
    "loop_matrix",
    "solve_hopping",
    "loop_spectrum",
    "class_block",
    "wave_norm",
    "sink_condition",
    "collapse_distribution",
    "first_half_probability",
    "first_half_from_norms",
    "bound_ratios",
    "find_bound_threshold",
    "AuditReport",
    "degeneracy_audit",
    "rational_cosine_matches",
    "RootReport",
    "boundary_polynomial",
    "polynomial_root_check",
]

BULK_DIAGONAL = 12.0
DEFAULT_TOL = 1e-9
CLASS_SINK_POTENTIAL = {"23": -1.0, "4a5a": -0.5, "4r5r": -0.75}
POLY_DEGREE_CAP = 128


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectralBlock:
    """Eigenpairs of one chain.

    ``eigvecs[:, t]`` is the normalised eigenvector for ``momenta[t]``.
    ``norms[t]`` is the squared norm of the unnormalised wave
    ``e^{-ikn} - e^{ik(n-1)}`` over the chain (paths only).
    """

    length: int
    momenta: np.ndarray
    energies: np.ndarray
    eigvecs: np.ndarray
    norms: np.ndarray
    klass: str
    v_source: float = -1.0
    v_sink: float = -1.0
    bulk: float = BULK_DIAGONAL
    periodic: bool = False

    def __post_init__(self):
        for a in (self.momenta, self.energies, self.eigvecs, self.norms):
            a.setflags(write=False)


def hopping_matrix(T: int, v_source: float = -1.0, v_sink: float = -1.0, bulk: float = BULK_DIAGONAL) -> np.ndarray:
    m = np.diag(np.full(T, bulk)) + np.diag(np.ones(T - 1), 1) + np.diag(np.ones(T - 1), -1)
    m[0, 0] += v_source
    m[-1, -1] += v_sink
    return m


def loop_matrix(T: int, bulk: float = BULK_DIAGONAL) -> np.ndarray:
    m = np.diag(np.full(T, bulk))
    for i in range(T):
        m[i, (i + 1) % T] += 1
        m[(i + 1) % T, i] += 1
    return m


def wave_norm(k, M: int):
    """``M - sin(M k) / sin(k)``: squared norm of the first ``M/2`` wave sites.

    Near ``sin k = 0`` the ratio is the Chebyshev value ``U_{M-1}(cos k)``,
    evaluated by its limit ``±M``.
    """
    k = np.asarray(k, dtype=float)
    s = np.sin(k)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.sin(M * k) / s
    near = np.abs(s) < 1e-12
    if np.any(near):
        sign = np.where(np.cos(k) > 0, 1.0, (-1.0) ** (M - 1))
        ratio = np.where(near, sign * M, ratio)
    return M - ratio


def sink_condition(k, T: int, v_sink: float):
    return np.sin(k * (T + 0.5)) - v_sink * np.sin(k * (T - 0.5))


def _path_vectors(T: int, k: np.ndarray) -> np.ndarray:
    n = np.arange(1, T + 1)[:, None]
    v = np.sin(k[None, :] * (n - 0.5))
    return v / np.linalg.norm(v, axis=0)


def _roots(T: int, v_sink: float) -> np.ndarray:
    if v_sink == -1.0:
        return np.arange(1, T + 1) * np.pi / T
    f = lambda k: sink_condition(k, T, v_sink)  # noqa: E731
    roots = []
    for t in range(1, T + 1):
        a, b = (t - 0.5) * np.pi / T, t * np.pi / T
        fa, fb = f(a), f(b)
        if fb == 0.0:
            roots.append(b)
        elif fa * fb < 0:
            roots.append(brentq(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))
        else:
            return _scan_roots(T, v_sink)
    return np.array(roots)


def _scan_roots(T: int, v_sink: float) -> np.ndarray:
    f = lambda k: sink_condition(k, T, v_sink)  # noqa: E731
    grid = np.linspace(0, np.pi, 4 * T + 1)
    vals = f(grid)
    roots = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if a == 0.0:
            continue
        if fb == 0.0:
            roots.append(b)
        elif fa * fb < 0:
            roots.append(brentq(f, a, b, xtol=1e-15, maxiter=200))
    roots = np.array(roots)
    if len(roots) != T:
        raise SolverError(f"found {len(roots)} momenta for a chain of length {T}, expected {T}")
    return roots


@lru_cache(maxsize=4096)
def solve_hopping(T: int, v_source: float = -1.0, v_sink: float = -1.0, bulk: float = BULK_DIAGONAL, klass: str | None = None) -> SpectralBlock:
    """Eigenpairs of a path from the transcendental sink condition."""
    if T < 1:
        raise ValueError("chain length must be positive")
    if v_source != -1.0:
        raise ValueError("only a source potential of -1 is supported")
    if not -1.0 <= v_sink < 1.0:
        raise ValueError("sink potential must lie in [-1, 1)")
    k = _roots(T, float(v_sink))
    if len(k) != T:
        raise SolverError(f"found {len(k)} momenta for a chain of length {T}, expected {T}")
    if klass is None:
        klass = next((c for c, v in CLASS_SINK_POTENTIAL.items() if v == v_sink), "path")
    return SpectralBlock(
        T, k, bulk + 2 * np.cos(k), _path_vectors(T, k), wave_norm(k, 2 * T), klass, v_source, float(v_sink), bulk
    )


@lru_cache(maxsize=4096)
def loop_spectrum(T: int, bulk: float = BULK_DIAGONAL) -> SpectralBlock:
    """Plane waves on a ring: energies ``bulk + 2 cos(2 pi t / T)``."""
    if T < 1:
        raise ValueError("loop length must be positive")
    k = 2 * np.pi * np.arange(T) / T
    n = np.arange(T)[:, None]
    vecs = np.exp(1j * k[None, :] * n) / np.sqrt(T)
    return SpectralBlock(T, k, bulk + 2 * np.cos(k), vecs, np.full(T, float(T)), "loop", 0.0, 0.0, bulk, periodic=True)


def class_block(klass: str, T: int) -> SpectralBlock:
    if klass == "loop":
        return loop_spectrum(T)
    return solve_hopping(T, -1.0, CLASS_SINK_POTENTIAL[klass], BULK_DIAGONAL, klass)


# ---------------------------------------------------------------------------
# collapse probabilities


def collapse_distribution(block: SpectralBlock) -> np.ndarray:
    """Random-phase averaged probability of finding the walker at each site.

    Starting from the first site, ``Pr(t) = sum_k |<t|k>|^2 |<k|1>|^2``.
    """
    if block.periodic:
        raise ValueError("collapse distribution is defined for paths")
    v2 = block.eigvecs**2
    return v2 @ v2[0]


def first_half_probability(block: SpectralBlock) -> float:
    return float(collapse_distribution(block)[: block.length // 2].sum())


def first_half_from_norms(block: SpectralBlock) -> float:
    """Same quantity from the closed-form wave norms.

    ``sum_k C_k(T) / C_k(2T)^2 * |e^{-ik} - 1|^2`` with ``T`` the path length.
    """
    if block.length % 2:
        raise ValueError("first half needs an even path length")
    k, T = block.momenta, block.length
    return float(np.sum(wave_norm(k, T) / wave_norm(k, 2 * T) ** 2 * 4 * np.sin(k / 2) ** 2))


def bound_ratios(T: int, v_sink: float) -> tuple[float, float]:
    """Largest bulk ratio ``C(T)/C(2T)`` and edge ratio ``C(T)/C(2T)^2``."""
    k = solve_hopping(T, -1.0, v_sink).momenta
    c1, c2 = wave_norm(k, T), wave_norm(k, 2 * T)
    bulk = float(np.max(c1[1:-1] / c2[1:-1])) if T > 2 else 0.0
    edge = float(max(c1[0] / c2[0] ** 2, c1[-1] / c2[-1] ** 2))
    return bulk, edge


def find_bound_threshold(
    v_sinks=(-0.5, -0.75), t_max: int = 256, bulk_bound: float = 5 / 6, edge_bound: float = 1 / 96
) -> tuple[int, dict]:
    """Smallest ``T0`` such that both ratio bounds hold for every ``T0 < T <= t_max``."""
    failures = []
    worst = {"bulk": 0.0, "edge": 0.0}
    for T in range(1, t_max + 1):
        for v in v_sinks:
            b, e = bound_ratios(T, v)
            if b > bulk_bound or e > edge_bound:
                failures.append(T)
    T0 = max(failures, default=0)
    for T in range(T0 + 1, t_max + 1):
        for v in v_sinks:
            b, e = bound_ratios(T, v)
            worst["bulk"] = max(worst["bulk"], b)
            worst["edge"] = max(worst["edge"], e)
    return T0, worst


# ---------------------------------------------------------------------------
# degeneracy audit


@dataclass
class AuditReport:
    protected_violations: list = field(default_factory=list)
    allowed_same_length: int = 0
    unprotected_coincidences: list = field(default_factory=list)
    rational_matches: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.protected_violations and not self.rational_matches

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "protected_violations": self.protected_violations,
            "allowed_same_length": self.allowed_same_length,
            "unprotected_coincidences": len(self.unprotected_coincidences),
            "rational_matches": self.rational_matches,
        }


_PROTECTED = ("4a5a", "4r5r")


def _rational_cosines(q_max: int) -> np.ndarray:
    vals = {Fraction(p, q) for q in range(1, q_max + 1) for p in range(0, 2 * q + 1)}
    return np.unique(BULK_DIAGONAL + 2 * np.cos(np.pi * np.array([float(v) for v in vals])))


def rational_cosine_matches(energies, q_max: int = 64, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Energies within ``tol`` of ``12 + 2 cos(pi p/q)`` for some ``q <= q_max``."""
    grid = _rational_cosines(q_max)
    e = np.asarray(energies, dtype=float)
    pos = np.clip(np.searchsorted(grid, e), 1, len(grid) - 1)
    d = np.minimum(np.abs(grid[pos] - e), np.abs(grid[pos - 1] - e))
    return e[d <= tol]


def degeneracy_audit(blocks, tol: float = DEFAULT_TOL, q_max: int = 64) -> AuditReport:
    """Cross-check the energies of distinct (class, length) groups.

    A protected class (``4a5a`` or ``4r5r``) may share energies only with
    blocks of the same class and length.  Coincidences among the other
    classes are recorded but permitted.
    """
    groups: dict[tuple[str, int], np.ndarray] = {}
    counts: dict[tuple[str, int], int] = {}
    for b in blocks:
        key = (b.klass, b.length)
        groups.setdefault(key, b.energies)
        counts[key] = counts.get(key, 0) + 1
    report = AuditReport()
    report.allowed_same_length = sum(c - 1 for c in counts.values())
    keys = sorted(groups)
    energies = np.concatenate([groups[k] for k in keys])
    owner = np.concatenate([[i] * len(groups[k]) for i, k in enumerate(keys)])
    order = np.argsort(energies, kind="stable")
    e, o = energies[order], owner[order]
    # every pair within tol lies inside a run of consecutive sorted energies
    for i in range(len(e)):
        j = i + 1
        while j < len(e) and e[j] - e[i] <= tol:
            a, b = keys[o[i]], keys[o[j]]
            if a != b:
                pair = {"a": list(a), "b": list(b), "energy": float(e[i]), "gap": float(e[j] - e[i])}
                if a[0] in _PROTECTED or b[0] in _PROTECTED:
                    report.protected_violations.append(pair)
                else:
                    report.unprotected_coincidences.append(pair)
            j += 1
    for key in keys:
        if key[0] in _PROTECTED:
            hits = rational_cosine_matches(groups[key], q_max, tol)
            report.rational_matches += [{"class": key[0], "length": key[1], "energy": float(h)} for h in hits]
    return report


# ---------------------------------------------------------------------------
# polynomial form of the sink condition


@dataclass(frozen=True)
class RootReport:
    min_distance: float
    unit_root_distance: tuple[float, float]
    momenta_mismatch: tuple[float, float]


def boundary_polynomial(m: int, N: int) -> np.ndarray:
    """Coefficients (highest first) of ``2^m x^{2N} + (2^{m+1}-1)(x^{2N-1}+...+x) + 2^m``."""
    if 2 * N > POLY_DEGREE_CAP:
        raise ValueError(f"degree {2 * N} exceeds cap {POLY_DEGREE_CAP}")
    c = np.full(2 * N + 1, float(2 ** (m + 1) - 1))
    c[0] = c[-1] = float(2**m)
    return c


def _unit_root_distance(roots: np.ndarray, N: int) -> float:
    unity = np.exp(2j * np.pi * np.arange(2 * N) / (2 * N))
    return float(np.min(np.abs(roots[:, None] - unity[None, :])))


def _momenta_mismatch(roots: np.ndarray, m: int, N: int) -> float:
    ang = np.sort(np.angle(roots[roots.imag > 0]))
    k = solve_hopping(N, -1.0, -(2**m - 1) / 2**m).momenta
    if len(ang) != len(k):
        # the root at x = -1 (k = pi) is real and is not counted above
        ang = np.sort(np.append(ang, np.pi)) if len(ang) + 1 == len(k) else ang
    if len(ang) != len(k):
        return float("inf")
    return float(np.max(np.abs(ang - k)))


def polynomial_root_check(m1: int, N1: int, m2: int, N2: int) -> RootReport:
    """Compare the root sets of two boundary polynomials.

    Also reports the distance of each root set to the ``2N``-th roots of unity
    and how far the root angles in the upper half plane sit from the momenta
    returned by :func:`solve_hopping` for sink potential ``-(2^m - 1)/2^m``.
    """
    r1 = np.roots(boundary_polynomial(m1, N1))
    r2 = np.roots(boundary_polynomial(m2, N2))
    dist = float(np.min(np.abs(r1[:, None] - r2[None, :])))
    return RootReport(
        dist,
        (_unit_root_distance(r1, N1), _unit_root_distance(r2, N2)),
        (_momenta_mismatch(r1, m1, N1), _momenta_mismatch(r2, m2, N2)),
    )

