"""Command-line experiment runner.

Every subcommand writes ``<name>.json`` (sorted keys) and ``<name>.csv`` into
the output directory, optionally PNG figures, and prints one summary line.
Exit codes: 0 success (or True / HaarRandom), 1 for a Pseudo / Pseudorandom
decision, 2 for invalid arguments.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import cpru, ecru, spectral, verify
from .confgraph import build_graph
from .hamiltonian import component_class, compile_hamiltonian, computation_hamiltonian
from .rtm import BUILTIN_MACHINES, MachineError, builtin_machine, check_reversible, duplicate, load_machine

OUT_ENV = "ECPRU_OUT"

# column order of every CSV artifact
CSV_COLUMNS = {
    "compile-report": ["component", "type", "class", "length", "source_state", "sink_state"],
    "spectrum": ["class", "length", "multiplicity", "index", "momentum", "energy"],
    "collapse": ["site", "probability", "half"],
    "pspace": ["input", "trial", "seed", "expected", "decision", "correct", "queries", "default_path"],
    "gapstats": ["seed", "min_gap", "below_threshold"],
    "channel": ["eigenstate", "phase", "return_fidelity", "hit_rate", "hit_sigma"],
    "verify": ["round", "n_prime", "x", "y", "queries", "result"],
    "distinguish": ["round", "n_prime", "x", "y", "queries", "result"],
}


class ConfigError(ValueError):
    pass


def _positive(name, value, cap=None):
    if value is None:
        return
    if value < 1:
        raise ConfigError(f"--{name} must be positive, got {value}")
    if cap is not None and value > cap:
        raise ConfigError(f"--{name} must be at most {cap}, got {value}")


def _non_negative(name, value):
    if value < 0:
        raise ConfigError(f"--{name} must be non-negative, got {value}")


def _machine(args, duplicated=True):
    if getattr(args, "machine_file", None):
        path = Path(args.machine_file)
        if not path.exists():
            raise ConfigError(f"machine file {path} does not exist")
        tm = load_machine(path, args.tape_length)
    else:
        tm = builtin_machine(args.machine, args.tape_length)
    if duplicated and not tm.duplicated:
        rep = check_reversible(tm)
        if not rep:
            raise ConfigError("machine is not reversible: " + "; ".join(f"rules {i} and {j}: {msg}" for i, j, msg in rep.violations))
        tm = duplicate(tm)
    return tm


def _write(out: Path, name: str, payload: dict, rows: list[dict]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.json").write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
    with open(out / f"{name}.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS[name], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


# ---------------------------------------------------------------------------
# subcommands


def cmd_compile_report(args):
    tm = _machine(args)
    graph = build_graph(tm)
    h = computation_hamiltonian(compile_hamiltonian(tm), tm)
    rows = []
    for i, comp in enumerate(graph.components):
        rows.append({
            "component": i,
            "type": comp.type_label,
            "class": component_class(tm, comp),
            "length": comp.length,
            "source_state": tm.states[comp.source_state],
            "sink_state": tm.states[comp.sink_state],
        })
    counts: dict[str, int] = {}
    for r in rows:
        counts[r["type"]] = counts.get(r["type"], 0) + 1
    payload = {
        "machine": args.machine_file or args.machine,
        "tape_length": tm.tape_length,
        "n_states": tm.n_states,
        "n_symbols": tm.n_symbols,
        "configurations": graph.n_nodes,
        "hamiltonian_dim": h.dim,
        "hamiltonian_nnz": len(h.rows),
        "type_counts": counts,
    }
    _write(args.out, "compile-report", payload, rows)
    if args.figures:
        from . import plotting

        plotting.component_lengths([r["type"] for r in rows], [r["length"] for r in rows], args.out / "compile-report.png")
    return payload, f"{graph.n_nodes} configurations, {len(rows)} components, dim {h.dim}"


def cmd_spectrum(args):
    tm = _machine(args)
    graph = build_graph(tm)
    groups: dict[tuple[str, int], int] = {}
    for comp in graph.components:
        key = (component_class(tm, comp), comp.length)
        groups[key] = groups.get(key, 0) + 1
    blocks, rows, per_class = [], [], {}
    for (klass, T), mult in sorted(groups.items()):
        b = spectral.class_block(klass, T)
        blocks.extend([b] * mult)
        per_class.setdefault(klass, []).append({"length": T, "multiplicity": mult, "momenta": b.momenta.tolist(), "energies": b.energies.tolist()})
        for i, (k, e) in enumerate(zip(b.momenta, b.energies)):
            rows.append({"class": klass, "length": T, "multiplicity": mult, "index": i, "momentum": repr(float(k)), "energy": repr(float(e))})
    audit = spectral.degeneracy_audit(blocks, tol=args.tol)
    payload = {"tape_length": tm.tape_length, "classes": per_class, "audit": audit.to_dict()}
    _write(args.out, "spectrum", payload, rows)
    if args.figures:
        from . import plotting

        keys = sorted(groups)
        plotting.spectrum([k for k, _ in keys], [T for _, T in keys], [spectral.class_block(k, T).energies for k, T in keys], args.out / "spectrum.png")
    return payload, f"{len(groups)} distinct blocks, audit {'ok' if audit.ok else 'FAILED'}"


def cmd_collapse(args):
    _positive("T", args.T, 512)
    _non_negative("samples", args.samples)
    length = 2 * args.T
    block = spectral.class_block(args.klass, length)
    prob = spectral.collapse_distribution(block)
    second = float(prob[args.T :].sum())
    mc = ecru.monte_carlo_second_half([block], args.samples, args.seed)[0] if args.samples else None
    payload = {
        "class": args.klass,
        "T": args.T,
        "path_length": length,
        "second_half": second,
        "second_half_from_norms": 1 - spectral.first_half_from_norms(block),
        "bound": 1 / 12,
        "bound_holds": second >= 1 / 12,
        "monte_carlo": None if mc is None else {"samples": args.samples, "mean": mc[0], "stderr": mc[1]},
    }
    rows = [{"site": t + 1, "probability": repr(float(p)), "half": 1 if t < args.T else 2} for t, p in enumerate(prob)]
    _write(args.out, "collapse", payload, rows)
    if args.figures:
        from . import plotting

        plotting.collapse(prob, args.out / "collapse.png")
    return payload, f"Pr(second half) = {second:.6f} (bound 1/12 {'holds' if second >= 1 / 12 else 'FAILS'})"


def cmd_pspace(args):
    _positive("trials", args.trials)
    tm = _machine(args)
    model = ecru.ComputationModel.build(tm)
    sampler = ecru.EcHaarSampler(model.eigensystem)
    inputs = ["".join(p) for n in range(0, (args.max_len if args.max_len is not None else tm.tape_length) + 1) for p in itertools.product(args.alphabet, repeat=n)]
    rows, correct, defaults = [], 0, 0
    rng = np.random.default_rng(args.seed)
    for x in inputs:
        expected = "Accept" if model.graph.path_of_input(x).sink_state == tm.halt_accept else "Reject"
        for t in range(args.trials):
            s = int(rng.integers(2**63))
            res = ecru.pspace_solve(model, x, sampler, s)
            ok = res.decision == expected
            correct += ok
            defaults += res.default_path
            rows.append({"input": x, "trial": t, "seed": s, "expected": expected, "decision": res.decision, "correct": int(ok), "queries": res.queries, "default_path": int(res.default_path)})
    total = len(rows)
    payload = {
        "tape_length": tm.tape_length,
        "inputs": len(inputs),
        "trials_per_input": args.trials,
        "correct_rate": correct / total,
        "default_path_hits": defaults,
        "failure_envelopes": ecru.failure_envelopes(),
    }
    _write(args.out, "pspace", payload, rows)
    if args.figures:
        from . import plotting

        rates = [np.mean([r["correct"] for r in rows if r["input"] == x]) for x in inputs]
        plotting.bar_with_bound([x or "ε" for x in inputs], rates, 2 / 3, "correct rate", args.out / "pspace.png")
    return payload, f"correct rate {correct / total:.4f} over {total} runs, {defaults} default-path hits"


def cmd_gapstats(args):
    _positive("n", args.n, 20)
    _positive("seeds", args.seeds)
    seeds = range(args.seed, args.seed + args.seeds)
    stats = cpru.gap_statistics(args.n, seeds, args.beta)
    rows = [{"seed": s, "min_gap": repr(float(g)), "below_threshold": int(g <= stats.threshold)} for s, g in zip(seeds, stats.min_gaps)]
    payload = {
        "n": args.n,
        "beta": args.beta,
        "R": stats.R,
        "delta": stats.delta,
        "threshold": stats.threshold,
        "samples": args.seeds,
        "below_threshold": stats.below,
        "zero_gap": int(np.sum(stats.min_gaps == 0)),
    }
    _write(args.out, "gapstats", payload, rows)
    if args.figures:
        from . import plotting

        plotting.gap_histogram(stats.min_gaps, stats.threshold, args.out / "gapstats.png")
    return payload, f"{stats.below}/{args.seeds} spectra have min gap <= {stats.threshold:g}"


def cmd_channel(args):
    regs = cpru.QpeRegisters(args.n, args.m1, args.m2, args.m3)
    _positive("trials", args.trials)
    _non_negative("samples", args.samples)
    spec = cpru.CommutingEnsembleSpec.z_fields(args.n, beta=args.beta)
    used, h, phases = cpru.separated_phases(spec, 4 * 2.0**-regs.m1, seed=args.seed)
    ch = cpru.build_channel(phases, regs, None, int(np.random.default_rng(args.seed).integers(2**regs.fine)), seed=args.seed)
    fid = [abs(ch.return_amplitude(k)) for k in range(len(phases))]
    bnd = cpru.offset_boundary_test(phases, regs, args.trials, args.seed)
    sq = cpru.secure_query_estimate(phases, regs, args.t, args.samples, args.seed) if args.samples else None
    fb = cpru.return_fidelity_bounds(regs)
    payload = {
        "registers": {"n": regs.n, "m1": regs.m1, "m2": regs.m2, "m3": regs.m3},
        "asymptotic_regime": regs.regime_ok(args.beta),
        "hamiltonian_seed": used,
        "phases": phases.tolist(),
        "return_fidelity": fid,
        "return_fidelity_bounds": fb,
        "boundary": {"hit_rates": bnd.hit_rates.tolist(), "sigma": bnd.sigma.tolist(), "bound": bnd.bound, "threshold": bnd.threshold, "ok": bnd.ok},
        "secure_query": None if sq is None else {
            "t": args.t, "lower": sq.lower, "upper": sq.upper, "sigma": sq.sigma, "bound": sq.bound,
            "mean_leak": sq.mean_leak, "injective": sq.injective, "samples": sq.samples, "ok": sq.ok,
        },
    }
    rows = [
        {"eigenstate": k, "phase": repr(float(phases[k])), "return_fidelity": repr(fid[k]), "hit_rate": repr(float(bnd.hit_rates[k])), "hit_sigma": repr(float(bnd.sigma[k]))}
        for k in range(len(phases))
    ]
    _write(args.out, "channel", payload, rows)
    if args.figures:
        from . import plotting

        plotting.bar_with_bound([str(k) for k in range(len(phases))], bnd.hit_rates.tolist(), bnd.bound, "boundary hit rate", args.out / "channel.png")
    msg = f"min fidelity {min(fid):.6f}, max hit rate {bnd.hit_rates.max():.4f} (bound {bnd.bound:g})"
    if sq is not None:
        msg += f", distance <= {sq.upper:.4f} (bound {sq.bound:.4f})"
    return payload, msg


_ORACLES = {
    "exact": lambda seed: verify.ExactOracle(),
    "random": lambda seed: verify.RandomOracle(seed),
    "refusing": lambda seed: verify.RefusingOracle(),
    "noisy": lambda seed: verify.NoisyOracle(2 / 3, seed),
}


def _transcript_rows(res: verify.VerifierResult) -> list[dict]:
    return [dict(round=i, **{k: (int(v) if isinstance(v, bool) else v) for k, v in r.items()}) for i, r in enumerate(res.transcript)]


def cmd_verify(args):
    _positive("n", args.n, 16)
    if args.n < 2:
        raise ConfigError("--n must be at least 2")
    oracle = _ORACLES[args.oracle](args.seed)
    res = verify.verify_oracle(oracle, args.n, lambda m: verify.keyed_owf(args.key.encode(), m), args.seed)
    payload = {"oracle": args.oracle, "n": args.n, "rounds": res.rounds, "successes": res.successes, "decision": res.decision, "oracle_queries": oracle.queries}
    _write(args.out, "verify", payload, _transcript_rows(res))
    if args.figures:
        from . import plotting

        plotting.running_successes([r["result"] for r in res.transcript], 2 / 3, args.out / "verify.png")
    return payload, f"{res.decision}: {res.successes}/{res.rounds} inversions", 0 if res.accepted else 1


def cmd_distinguish(args):
    tm = builtin_machine("disjunction", args.tape_length)
    model = ecru.ComputationModel.build(duplicate(tm))
    if 2**args.n > tm.tape_length:
        raise ConfigError(f"--n {args.n} needs {2**args.n} tape cells, machine has {tm.tape_length}")
    sampler = ecru.EcHaarSampler(model.eigensystem) if args.sampler == "ec-haar" else ecru.IdentitySampler()
    res = verify.universal_distinguish(sampler, model, args.n, args.seed, args.key.encode())
    payload = {
        "sampler": args.sampler,
        "n": args.n,
        "decision": res.decision,
        "rounds": res.verifier.rounds,
        "successes": res.verifier.successes,
        "unitary_queries": res.unitary_queries,
        "query_bound": res.query_bound,
    }
    _write(args.out, "distinguish", payload, _transcript_rows(res.verifier))
    if args.figures:
        from . import plotting

        plotting.running_successes([r["result"] for r in res.verifier.transcript], 2 / 3, args.out / "distinguish.png")
    return payload, f"{res.decision}: {res.unitary_queries} unitary queries (bound {res.query_bound})", 0 if res.decision == "HaarRandom" else 1


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecpru", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", type=Path, default=Path(os.environ.get(OUT_ENV, "results")))
        sp.add_argument("--figures", action="store_true", help="also render PNG figures")

    def machine(sp, default="sweep"):
        sp.add_argument("--machine", choices=sorted(BUILTIN_MACHINES), default=default)
        sp.add_argument("--machine-file", help="machine definition file (overrides --machine)")
        sp.add_argument("--tape-length", type=int, default=4)

    sp = sub.add_parser("compile-report", help="configuration graph and compiled operator summary")
    machine(sp)
    common(sp)
    sp.set_defaults(func=cmd_compile_report)

    sp = sub.add_parser("spectrum", help="chain spectra per component class and the degeneracy audit")
    machine(sp)
    sp.add_argument("--tol", type=float, default=spectral.DEFAULT_TOL)
    common(sp)
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("collapse", help="random-phase readout distribution on a halting path")
    sp.add_argument("--T", type=int, default=64, help="half the path length")
    sp.add_argument("--klass", choices=["4a5a", "4r5r"], default="4a5a")
    sp.add_argument("--samples", type=int, default=10000, help="Monte Carlo samples (0 to skip)")
    common(sp)
    sp.set_defaults(func=cmd_collapse)

    sp = sub.add_parser("pspace", help="measurement solver trials over all short inputs")
    machine(sp, default="parity")
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--alphabet", default="01")
    sp.add_argument("--max-len", type=int)
    common(sp)
    sp.set_defaults(func=cmd_pspace)

    sp = sub.add_parser("gapstats", help="minimum gaps of sampled commuting Hamiltonians")
    sp.add_argument("--n", type=int, default=8)
    sp.add_argument("--seeds", type=int, default=500)
    sp.add_argument("--beta", type=float, default=1.0)
    common(sp)
    sp.set_defaults(func=cmd_gapstats)

    sp = sub.add_parser("channel", help="phase-estimation channel error budget")
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--m1", type=int, default=8)
    sp.add_argument("--m2", type=int, default=6)
    sp.add_argument("--m3", type=int, default=6)
    sp.add_argument("--beta", type=float, default=3.0)
    sp.add_argument("--t", type=int, default=3, help="adaptive queries")
    sp.add_argument("--trials", type=int, default=10000, help="random offsets for the boundary test")
    sp.add_argument("--samples", type=int, default=8, help="channel samples for the adaptive test (0 to skip)")
    common(sp)
    sp.set_defaults(func=cmd_channel)

    sp = sub.add_parser("verify", help="formula-oracle verifier")
    sp.add_argument("--oracle", choices=sorted(_ORACLES), default="exact")
    sp.add_argument("--n", type=int, default=8)
    sp.add_argument("--key", default="owf")
    common(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("distinguish", help="universal distinguisher built on the measurement solver")
    sp.add_argument("--sampler", choices=["ec-haar", "identity"], default="ec-haar")
    sp.add_argument("--n", type=int, default=2)
    sp.add_argument("--tape-length", type=int, default=4)
    sp.add_argument("--key", default="owf")
    common(sp)
    sp.set_defaults(func=cmd_distinguish)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if hasattr(args, "tape_length"):
            _positive("tape-length", args.tape_length, 8)
        result = args.func(args)
    except (ConfigError, MachineError, ValueError) as exc:
        print(json.dumps({"command": args.command, "error": type(exc).__name__, "message": str(exc)}, sort_keys=True), file=sys.stderr)
        return 2
    payload, summary, *code = result
    print(f"{args.command}: {summary}")
    return code[0] if code else 0


if __name__ == "__main__":
    sys.exit(main())
