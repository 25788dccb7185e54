"""Command-line entry point: one subcommand per experiment family, JSON
reports on stdout (or --out), optional CSV dumps for distributions.

Exit codes: 0 when every declared bound passes, 1 on a bound failure, 2 on
configuration errors.  The seed flag (or QOBFSIM_SEED) fully determines every
random draw, so reports are reproducible byte-for-byte apart from the
timestamp field.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from qobfsim import analysis as an
from qobfsim import ensembles as ens
from qobfsim import obfuscation as obf
from qobfsim import path_recording as pr
from qobfsim import prp as prp_mod
from qobfsim.circuits import channel_of, choi_matrix, load_circuit
from qobfsim.linalg import SubspaceSpec, dagger, operator_norm

SCHEMA_VERSION = 1


def _report(command: str, config: dict, metrics: dict, passed: bool, out_path: str | None) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "metrics": metrics,
        "passed": bool(passed),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    text = json.dumps(doc, indent=2, sort_keys=True, default=_json_default)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    print(text)


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return [[float(z.real), float(z.imag)] for z in obj.ravel()]
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _matrix_json(mat: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(mat)]


def _load_matrix(path: str) -> np.ndarray:
    if path.endswith(".npy"):
        return np.load(path)
    with open(path) as fh:
        data = json.load(fh)
    return np.array([[complex(re, im) for re, im in row] for row in data])


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int(os.environ.get("QOBFSIM_SEED", "0"))


def _cmd_design_check(args) -> int:
    spec = SubspaceSpec(args.n, args.d)
    rng = np.random.default_rng(_seed(args))
    report = ens.design_check(spec, mode=args.mode, samples=args.samples, rng=rng)
    _report(
        "design-check",
        {"n": args.n, "d": args.d, "mode": args.mode, "samples": args.samples, "seed": _seed(args)},
        report.to_dict(),
        report.passed,
        args.out,
    )
    return 0 if report.passed else 1


def _cmd_prp_test(args) -> int:
    import itertools

    rng = np.random.default_rng(_seed(args))
    d = args.d
    bijective = True
    for _ in range(args.keys):
        if args.mode == "mixer":
            table = prp_mod.prp_table(prp_mod.make_prp(d, prp_mod.random_prp_key(rng)))
        else:
            table = prp_mod.converter_permutation_table(prp_mod.RandomTableOracle(rng), d)
        bijective &= sorted(table) == list(range(d))
    if d <= 6:
        bins = {p: i for i, p in enumerate(itertools.permutations(range(d)))}
        counts = np.zeros(len(bins), dtype=np.int64)
        statistic_label = "full permutation distribution"
    else:
        counts = np.zeros(d, dtype=np.int64)
        statistic_label = "image of input 0"
    for _ in range(args.samples):
        if args.mode == "mixer":
            table = prp_mod.prp_table(prp_mod.make_prp(d, prp_mod.random_prp_key(rng)))
        else:
            table = prp_mod.converter_permutation_table(prp_mod.RandomTableOracle(rng), d)
        if d <= 6:
            counts[bins[tuple(table)]] += 1
        else:
            counts[table[0]] += 1
    from scipy import stats

    chi2, p_value = stats.chisquare(counts)
    passed = bool(bijective and p_value > 0.001)
    _report(
        "prp-test",
        {
            "d": d,
            "keys": args.keys,
            "samples": args.samples,
            "mode": args.mode,
            "seed": _seed(args),
            "statistic": statistic_label,
        },
        {"bijective": bool(bijective), "chi2": float(chi2), "p_value": float(p_value)},
        passed,
        args.out,
    )
    return 0 if passed else 1


def _cmd_pro_compare(args) -> int:
    rng = np.random.default_rng(_seed(args))
    spec = SubspaceSpec(args.n, args.d)
    d = args.d
    if args.adversary == "classical-distinct":
        plan, initial = pr.classical_distinct_plan(d, 0, 1 % d)
        outcome = pr.adversary_run(plan, spec, initial, workspace_dim=d, mode="path-recording", density_cap=0)
        freq, se = pr.haar_two_query_collision(d, 0, 1 % d, samples=args.samples, rng=rng)
        metrics = {
            "recording_collision_probability": outcome.collision_probability,
            "haar_collision_frequency": freq,
            "haar_collision_std_error": se,
            "distinguishing_statistic": abs(freq - outcome.collision_probability),
        }
        rows = [("collision", outcome.collision_probability, freq)]
        passed = outcome.collision_probability == 0.0
    elif args.adversary == "fourier":
        if spec.dim > 64:
            raise ValueError("fourier adversary capped at 6 qubits")
        h_full = ens.fourier_unitary(spec)
        plus = np.zeros(spec.dim, dtype=complex)
        plus[:d] = 1 / math.sqrt(d)
        plan = [pr.QueryStep(direction=1) for _ in range(args.t)]
        initial = plus
        exact = pr.adversary_run(plan, spec, initial, workspace_dim=1, mode="path-recording")
        sampled = pr.adversary_run(
            plan, spec, initial, workspace_dim=1, mode="haar-mc", rng=rng, samples=args.samples
        )
        p_exact = _measure_in_basis(exact.reduced_density, dagger(h_full))
        p_sampled = _measure_in_basis(sampled.reduced_density, dagger(h_full))
        gap = float(np.max(np.abs(p_exact - p_sampled)))
        metrics = {
            "max_outcome_gap": gap,
            "band_3sigma": 3 * float(np.sqrt(0.25 / args.samples)) + 1e-12,
        }
        rows = [(str(i), float(p_exact[i]), float(p_sampled[i])) for i in range(spec.dim)]
        passed = gap <= metrics["band_3sigma"] * 4
    else:
        raise ValueError("custom adversaries: supply a plan via the library API")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("outcome,path_recording,haar_monte_carlo\n")
            for label, a, b in rows:
                fh.write(f"{label},{a},{b}\n")
    _report(
        "pro-compare",
        {
            "n": args.n,
            "d": args.d,
            "t": args.t,
            "samples": args.samples,
            "adversary": args.adversary,
            "seed": _seed(args),
        },
        metrics,
        passed,
        args.out,
    )
    return 0 if passed else 1


def _measure_in_basis(density: np.ndarray, basis_change: np.ndarray) -> np.ndarray:
    rotated = basis_change @ density @ dagger(basis_change)
    return np.real(np.diag(rotated))


def _cmd_spspru_check(args) -> int:
    rng = np.random.default_rng(_seed(args))
    spec = SubspaceSpec(args.n, args.d)
    eye = np.eye(spec.dim)
    worst_fix = 0.0
    worst_uni = 0.0
    deterministic = True
    for _ in range(args.keys):
        key = ens.random_spspru_key(rng)
        u = ens.spspru_build(key, spec)
        for x in spec.fixed_indices():
            worst_fix = max(worst_fix, float(np.abs(u[:, x] - eye[:, x]).max()))
        worst_uni = max(worst_uni, operator_norm(dagger(u) @ u - eye))
        deterministic &= bool(np.array_equal(u, ens.spspru_build(key, spec)))
    passed = worst_fix <= 1e-9 and worst_uni <= 1e-9 and deterministic
    _report(
        "spspru-check",
        {"n": args.n, "d": args.d, "keys": args.keys, "seed": _seed(args)},
        {
            "worst_fixed_sector_error": worst_fix,
            "worst_unitarity_deviation": worst_uni,
            "deterministic": deterministic,
        },
        passed,
        args.out,
    )
    return 0 if passed else 1


def _cmd_channel(args) -> int:
    q = load_circuit(args.circuit)
    ch = channel_of(q)
    if args.emit == "choi":
        payload = {"choi": _matrix_json(choi_matrix(ch))}
    else:
        if args.input.startswith("basis:"):
            k = int(args.input.split(":", 1)[1])
            rho = np.zeros((2**q.n, 2**q.n), dtype=complex)
            rho[k, k] = 1.0
        else:
            rho = _load_matrix(args.input)
        from qobfsim.circuits import channel_apply

        payload = {"output_state": _matrix_json(channel_apply(ch, rho))}
    _report(
        "channel",
        {"circuit": args.circuit, "input": args.input, "emit": args.emit},
        payload,
        True,
        args.out,
    )
    return 0


def _cmd_obfuscate(args) -> int:
    rng = np.random.default_rng(_seed(args))
    q = load_circuit(args.circuit)
    if args.backend != "transparent":
        raise ValueError("only the transparent reference backend is implemented")
    program = obf.qobf(args.lam, q, obf.reference_backend(), rng)
    from qobfsim.circuits import choi_distance

    fidelity_check = choi_distance(obf.qeval_channel(program), channel_of(q))
    metrics = {
        "parameter": list(program.parameter.__dict__.values()),
        "m_prime": program.m_prime,
        "protected_sector_dimension": program.spec.fixed_dim,
        "scrambled_sector_dimension": program.spec.d,
        "backend": program.backend.name,
        "choi_distance_to_circuit_channel": fidelity_check,
    }
    evaluations = {}
    for k in args.eval_basis or []:
        rho = np.zeros((2**q.n, 2**q.n), dtype=complex)
        rho[k, k] = 1.0
        evaluations[str(k)] = _matrix_json(obf.qeval(program, rho))
    if evaluations:
        metrics["evaluations"] = evaluations
    passed = fidelity_check <= 1e-8
    _report(
        "obfuscate",
        {"lambda": args.lam, "circuit": args.circuit, "backend": args.backend, "seed": _seed(args)},
        metrics,
        passed,
        args.out,
    )
    if args.repl:
        print("# enter basis-state indices (one per line, EOF to quit)", file=sys.stderr)
        for line in sys.stdin:
            line = line.strip()
            if not line:
                continue
            k = int(line)
            rho = np.zeros((2**q.n, 2**q.n), dtype=complex)
            rho[k, k] = 1.0
            print(json.dumps({"input": k, "output_state": _matrix_json(obf.qeval(program, rho))}))
    return 0 if passed else 1


def _cmd_ideal_sim(args) -> int:
    rng = np.random.default_rng(_seed(args))
    q = load_circuit(args.circuit)
    plan = [int(tok) for tok in args.plan.split(",") if tok]
    dim = 2 ** (args.lam + q.m)
    report = obf.ideal_compare(args.lam, q, plan, samples=args.samples, rng=rng, initial=args.initial)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("outcome,exact,monte_carlo\n")
            for z in range(dim):
                fh.write(f"{z},{report.exact_distribution[z]},{report.estimated_distribution[z]}\n")
    metrics = {
        "max_outcome_gap": report.statistic,
        "band_3sigma": report.confidence,
        "samples": report.samples,
    }
    _report(
        "ideal-sim",
        {
            "lambda": args.lam,
            "circuit": args.circuit,
            "mode": args.mode,
            "plan": args.plan,
            "samples": args.samples,
            "seed": _seed(args),
            "initial": args.initial,
        },
        metrics,
        report.within_band,
        args.out,
    )
    return 0 if report.within_band else 1


def _cmd_jordan(args) -> int:
    pa = _load_matrix(args.pa)
    pb = _load_matrix(args.pb)
    blocks = an.jordan_decompose(pa, pb)
    ra, rb = an.reconstruct_projectors(blocks)
    payload = {
        "blocks": [
            {
                "kind": b.kind,
                "a": b.a,
                "b": b.b,
                "theta": b.theta,
            }
            for b in blocks
        ],
        "reconstruction_error_a": operator_norm(ra - pa),
        "reconstruction_error_b": operator_norm(rb - pb),
    }
    passed = payload["reconstruction_error_a"] <= 1e-8 and payload["reconstruction_error_b"] <= 1e-8
    _report("jordan", {"pa": args.pa, "pb": args.pb}, payload, passed, args.out)
    return 0 if passed else 1


def _parse_oracle_spec(text: str):
    kind, _, rest = text.partition(":")
    params = {}
    if rest:
        for piece in rest.split(","):
            key, _, val = piece.partition("=")
            params[key] = int(val)
    spec = SubspaceSpec(params.get("n", 4), params.get("d", 8))
    if kind == "hybrid":
        level = params.get("level", 0)
        return spec, (lambda rng, level=level, spec=spec: ens.hybrid_oracle(level, spec, rng))
    return spec, ens.ensemble_sampler(kind, spec)


def _cmd_distinguish(args) -> int:
    rng = np.random.default_rng(_seed(args))
    spec_a, sampler_a = _parse_oracle_spec(args.oracle_a)
    spec_b, sampler_b = _parse_oracle_spec(args.oracle_b)
    if spec_a.dim != spec_b.dim:
        raise ValueError("oracle dimensions differ")
    if args.adversary == "calibrated-probe":
        adversary = an.calibrate_broken_detector(spec_a).adversary
    elif args.adversary == "fourier-probe":
        adversary = an.fourier_probe_adversary(spec_a)
    else:
        raise ValueError("adversary must be calibrated-probe or fourier-probe")
    t = len(adversary.steps)
    bound = 18 * t * (t + 1) / spec_a.d ** (1 / 8)
    report = an.distinguish_experiment(sampler_a, sampler_b, adversary, args.trials, rng, analytic_bound=bound)
    passed = abs(report.advantage) <= 3 * report.std_error
    _report(
        "distinguish",
        {
            "oracle_a": args.oracle_a,
            "oracle_b": args.oracle_b,
            "adversary": args.adversary,
            "trials": args.trials,
            "seed": _seed(args),
        },
        report.to_dict(),
        passed,
        args.out,
    )
    return 0 if passed else 1


def _cmd_acceptance(args) -> int:
    from qobfsim import acceptance

    if args.only is not None:
        results = [acceptance.ALL_CRITERIA[args.only - 1](_seed(args))]
        print(results[0].summary_line())
        for label, ok, obs in results[0].checks:
            print(("   ok: " if ok else "   failed: ") + f"{label} -- {obs}")
    else:
        results = acceptance.run_all(_seed(args))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump([r.to_dict() for r in results], fh, indent=2, sort_keys=True)
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qobfsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=str, default=None, help="also write the JSON report here")

    p = sub.add_parser("design-check", help="restricted-design deviation of the three-fold ensemble")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--mode", choices=["exact", "monte-carlo"], default="exact")
    p.add_argument("--samples", type=int, default=20000)
    common(p)
    p.set_defaults(func=_cmd_design_check)

    p = sub.add_parser("prp-test", help="bijectivity and uniformity of the keyed permutation")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--keys", type=int, default=20)
    p.add_argument("--samples", type=int, default=6000)
    p.add_argument("--mode", choices=["exact", "mixer"], default="exact")
    common(p)
    p.set_defaults(func=_cmd_prp_test)

    p = sub.add_parser("pro-compare", help="path-recording oracle vs sampled Haar unitaries")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--t", type=int, default=2)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--adversary", choices=["classical-distinct", "fourier"], default="classical-distinct")
    p.add_argument("--csv", type=str, default=None)
    common(p)
    p.set_defaults(func=_cmd_pro_compare)

    p = sub.add_parser("spspru-check", help="structure checks of the keyed construction")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--keys", type=int, default=50)
    common(p)
    p.set_defaults(func=_cmd_spspru_check)

    p = sub.add_parser("channel", help="circuit channel: Choi matrix or output state")
    p.add_argument("--circuit", type=str, required=True)
    p.add_argument("--input", type=str, default="basis:0")
    p.add_argument("--emit", choices=["choi", "output-state"], default="choi")
    common(p)
    p.set_defaults(func=_cmd_channel)

    p = sub.add_parser("obfuscate", help="run the pipeline on a circuit with the transparent backend")
    p.add_argument("--lambda", dest="lam", type=int, required=True)
    p.add_argument("--circuit", type=str, required=True)
    p.add_argument("--backend", type=str, default="transparent")
    p.add_argument("--eval-basis", type=int, action="append", default=None)
    p.add_argument("--repl", action="store_true", help="evaluate basis indices read from stdin")
    common(p)
    p.set_defaults(func=_cmd_obfuscate)

    p = sub.add_parser("ideal-sim", help="exact vs sampled-unitary ideal functionality")
    p.add_argument("--lambda", dest="lam", type=int, required=True)
    p.add_argument("--circuit", type=str, required=True)
    p.add_argument("--mode", choices=["compare"], default="compare")
    p.add_argument("--plan", type=str, default="1")
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--initial", type=int, default=0)
    p.add_argument("--csv", type=str, default=None)
    common(p)
    p.set_defaults(func=_cmd_ideal_sim)

    p = sub.add_parser("jordan", help="Jordan decomposition of a projector pair")
    p.add_argument("--pa", type=str, required=True)
    p.add_argument("--pb", type=str, required=True)
    common(p)
    p.set_defaults(func=_cmd_jordan)

    p = sub.add_parser("distinguish", help="Monte-Carlo distinguishing experiment between two oracles")
    p.add_argument("--oracle-a", type=str, required=True, help="e.g. spspru:n=4,d=8 or haar:n=4,d=8")
    p.add_argument("--oracle-b", type=str, required=True)
    p.add_argument("--adversary", type=str, default="calibrated-probe")
    p.add_argument("--trials", type=int, default=10000)
    common(p)
    p.set_defaults(func=_cmd_distinguish)

    p = sub.add_parser("acceptance", help="run the full acceptance suite")
    p.add_argument("--only", type=int, default=None, help="run a single criterion (1..13)")
    common(p)
    p.set_defaults(func=_cmd_acceptance)

    return parser


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
