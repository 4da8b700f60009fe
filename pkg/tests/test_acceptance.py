"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also repeated in the terminal summary.
"""

import itertools
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from ecpru import cpru, spectral
from ecpru.ecru import (
    ComputationModel,
    DenseSampler,
    EcHaarSampler,
    Eigensystem,
    energy_distinguisher,
    failure_envelopes,
    monte_carlo_second_half,
    pspace_solve,
)
from ecpru.rtm import builtin_machine, duplicate
from ecpru.verify import (
    ExactOracle,
    RandomOracle,
    RefusingOracle,
    invert_with_oracle,
    keyed_owf,
    verify_oracle,
)


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def ising_chain(n, seed=0):
    """Open ZZ chain with random longitudinal fields; diagonal, so every term commutes."""
    rng = np.random.default_rng(seed)
    spins = 1 - 2 * ((np.arange(2**n)[:, None] >> np.arange(n)[::-1]) & 1)
    diag = sum(spins[:, i] * spins[:, i + 1] for i in range(n - 1)) + spins @ rng.uniform(0.3, 1.0, n)
    return np.diag(diag.astype(float))


def test_spectral_solver_matches_dense():
    start = time.perf_counter()
    worst_eig, worst_norm = 0.0, 0.0
    for T in range(2, 201):
        for klass in ("23", "4a5a", "4r5r"):
            b = spectral.class_block(klass, T)
            dense = np.linalg.eigvalsh(spectral.hopping_matrix(T, -1.0, spectral.CLASS_SINK_POTENTIAL[klass]))
            worst_eig = max(worst_eig, np.max(np.abs(np.sort(b.energies) - dense)))
            # normalisation from an independent site-by-site sum of |e^{-ikn} - e^{ik(n-1)}|^2
            n = np.arange(1, T + 1)[:, None]
            k = b.momenta
            direct = np.sum(4 * np.sin(k[None, :] * (n - 0.5)) ** 2, axis=0)
            with np.errstate(divide="ignore", invalid="ignore"):
                # at k = pi the ratio is the removable 0/0 with limit -2T
                closed = np.where(np.isclose(k, np.pi, rtol=0, atol=1e-12), 4 * T, 2 * T - np.sin(2 * T * k) / np.sin(k))
            worst_norm = max(worst_norm, np.max(np.abs(direct - closed)), np.max(np.abs(b.norms - closed)))
        loop = spectral.loop_spectrum(T)
        dense = np.linalg.eigvalsh(spectral.loop_matrix(T))
        worst_eig = max(worst_eig, np.max(np.abs(np.sort(loop.energies) - dense)))
    elapsed = time.perf_counter() - start
    ok = worst_eig <= 1e-9 and worst_norm <= 1e-10 and elapsed < 60
    report(1, ok, f"max eigenvalue error {worst_eig:.2e}, max norm error {worst_norm:.2e}, {elapsed:.1f} s")
    assert ok


def test_closed_form_class_23():
    exact = True
    for T in range(1, 201):
        b = spectral.class_block("23", T)
        k = np.arange(1, T + 1) * np.pi / T
        exact &= bool(np.array_equal(b.momenta, k) and np.array_equal(b.energies, 12 + 2 * np.cos(k)))
    report(2, exact, "momenta n pi / T and energies 12 + 2 cos(n pi / T) reproduced bit for bit for T = 1..200")
    assert exact


def test_collapse_bound_and_monte_carlo():
    start = time.perf_counter()
    T0, _ = spectral.find_bound_threshold(t_max=256)
    # even path lengths past the bound threshold, up to 512
    lengths = [L for L in range(T0 + 1, 513) if L % 2 == 0]
    blocks = [spectral.class_block("4a5a", L) for L in lengths]
    exact = np.array([spectral.collapse_distribution(b)[b.length // 2 :].sum() for b in blocks])
    mc = monte_carlo_second_half(blocks, 10**5, seed=2024)
    z = np.array([abs(m - e) / s for (m, s), e in zip(mc, exact)])
    elapsed = time.perf_counter() - start
    ok = bool(exact.min() >= 1 / 12 and z.max() <= 4 and elapsed < 300)
    report(
        3,
        ok,
        f"path lengths {lengths[0]}..{lengths[-1]}: min Pr(second half) {exact.min():.4f} >= 1/12, "
        f"max MC deviation {z.max():.2f} sigma, {elapsed:.0f} s",
    )
    assert ok


def test_bound_threshold():
    T0, worst = spectral.find_bound_threshold(t_max=256)
    ok = T0 <= 64
    report(4, ok, f"T0 = {T0}; worst bulk ratio {worst['bulk']:.4f} <= 5/6, worst edge ratio {worst['edge']:.5f} <= 1/96 up to 256")
    assert ok


def test_degeneracy_audit():
    details, ok = [], True
    for name in ("sweep", "parity"):
        for L in (3, 4, 5):
            model = ComputationModel.build(duplicate(builtin_machine(name, L)))
            rep = spectral.degeneracy_audit(model.blocks, tol=1e-9, q_max=64)
            ok &= rep.ok
            details.append(f"{name}/L={L}: {len(rep.protected_violations)} cross-class, {len(rep.rational_matches)} rational")
    report(5, ok, "; ".join(details))
    assert ok


def test_pspace_solver(machines, parity_model):
    start = time.perf_counter()
    sampler = EcHaarSampler(parity_model.eigensystem)
    rng = np.random.default_rng(7)
    worst, total, correct = 1.0, 0, 0
    inputs = ["".join(p) for n in range(5) for p in itertools.product("01", repeat=n)]
    for x in inputs:
        want = "Accept" if x.count("1") % 2 == 0 else "Reject"
        hits = sum(pspace_solve(parity_model, x, sampler, int(rng.integers(2**63))).decision == want for _ in range(200))
        worst = min(worst, hits / 200)
        total += 200
        correct += hits
    elapsed = time.perf_counter() - start
    env = failure_envelopes()
    ok = worst >= 2 / 3 and elapsed < 600
    report(
        6,
        ok,
        f"{len(inputs)} inputs x 200 trials: worst per-input rate {worst:.3f}, overall {correct / total:.4f}; "
        f"failure envelope (11/12)^15 = {env['queries_15']:.4f}; {elapsed:.0f} s",
    )
    assert ok


def test_energy_distinguisher():
    errors, runs = {}, 100
    for n in range(3, 7):
        h = ising_chain(n, seed=n)
        ec = EcHaarSampler(Eigensystem.from_diagonal(np.diag(h)))
        haar = DenseSampler(2**n)
        wrong = 0
        for r in range(runs):
            wrong += energy_distinguisher(h, ec, trials=100, seed=r).decision != "EnergyConserving"
            wrong += energy_distinguisher(h, haar, trials=100, seed=r).decision != "HaarLike"
        errors[n] = wrong
    ok = sum(errors.values()) == 0
    report(7, ok, "misclassifications per qubit count " + ", ".join(f"n={n}: {e}/{2 * runs}" for n, e in errors.items()))
    assert ok


def test_phase_estimation_channel():
    regs = cpru.QpeRegisters(2, 8, 6, 6)
    spec = cpru.CommutingEnsembleSpec.z_fields(2, beta=3)
    _, _, phases = cpru.separated_phases(spec, 4 * 2.0**-regs.m1, seed=1)
    rng = np.random.default_rng(11)
    fid = min(
        abs(cpru.build_channel(phases, regs, None, int(rng.integers(2**regs.fine)), seed=s).return_amplitude(k))
        for s in range(8)
        for k in range(4)
    )
    fid_bound = cpru.return_fidelity_bounds(regs)["loose"]
    bnd = cpru.offset_boundary_test(phases, regs, 10**4, seed=5)
    sq = cpru.secure_query_estimate(phases, regs, t=3, samples=16, seed=3)
    ok = fid >= fid_bound and bnd.ok and sq.ok
    report(
        8,
        ok,
        f"min return fidelity {fid:.6f} (bound {fid_bound:g}); max boundary hit rate {bnd.hit_rates.max():.4f} "
        f"(bound {bnd.bound:g} + 3 sigma); t=3 distance <= {sq.upper:.4f} + 3 x {sq.sigma:.4f} < {sq.bound:.4f}",
    )
    assert ok


def test_tqbf_pipeline():
    start = time.perf_counter()
    f = keyed_owf(b"acceptance", 8)
    xs = np.random.default_rng(0).integers(0, 256, 100)
    inverted = 0
    for x in xs:
        res = invert_with_oracle(f, f(int(x)), ExactOracle())
        inverted += res.queries == 9 and not res.failed and f(res.preimage) == f(int(x))
    owf = lambda m: keyed_owf(b"owf", m)  # noqa: E731
    n = 8
    rates = {
        "exact": np.mean([verify_oracle(ExactOracle(), n, owf, seed=s).decision == "True" for s in range(50)]),
        "random": np.mean([verify_oracle(RandomOracle(s), n, owf, seed=s).decision == "Pseudo" for s in range(50)]),
        "refusing": np.mean([verify_oracle(RefusingOracle(), n, owf, seed=s).decision == "Pseudo" for s in range(50)]),
    }
    elapsed = time.perf_counter() - start
    ok = inverted == 100 and all(r >= 2 / 3 for r in rates.values()) and elapsed < 120
    report(
        9,
        ok,
        f"{inverted}/100 inversions with 9 queries; correct-decision rates "
        + ", ".join(f"{k} {v:.2f}" for k, v in rates.items())
        + f"; {elapsed:.0f} s",
    )
    assert ok


def test_gap_statistics():
    stats = cpru.gap_statistics(8, range(500))
    ok = stats.below == 0
    report(
        10,
        ok,
        f"{stats.below}/500 spectra have min gap <= 2^-8 (grid step {stats.delta:g}, "
        f"median min gap {np.median(stats.min_gaps):.2e})",
    )
    assert ok
