"""occmark command line.

Exit codes: 0 success/pass, 1 verification failed, 2 invalid input,
3 numerical refusal (non-finite occupancy, singular solve), 4 horizon
insufficient for enumeration.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import _json
from .errors import (
    EnumerationInfeasibleError,
    HorizonInsufficientError,
    InvalidMdpError,
    InvariantViolationError,
    NonFiniteOccupancyError,
    NumericalError,
    SchemaError,
    TreeCapExceededError,
    UsageError,
)
from .mdp import load_mdp, mdp_to_dict
from .occupancy import (
    OccupancyTable,
    conservation_residual,
    occupancy_enumerate,
    occupancy_exact_markovian,
    occupancy_monte_carlo,
    performance_error,
    performance_from_occupancy,
)
from .offline import (
    behavior_mle_discounted,
    behavior_mle_undiscounted,
    bias_experiment,
    collect_dataset,
    compute_counts,
    mle_mdp,
    read_jsonl,
    write_jsonl,
)
from .policy import MarkovianTable, policy_from_dict, policy_to_dict
from .projection import markovianize, require_finite, verify_occupancy_equivalence
from .scenarios import COUNTEREXAMPLES, CorpusLimits, random_corpus, run_suite

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_NUMERIC, EXIT_HORIZON = 0, 1, 2, 3, 4


def _load_policy(path):
    text = Path(path).read_text()
    return policy_from_dict(_json.loads(text, str(path)), text)


def _load_occupancy(path):
    text = Path(path).read_text()
    return OccupancyTable.from_dict(_json.loads(text, str(path)), text)


def _matrix_csv(matrix, header: str) -> str:
    lines = [f"s,a,{header}"]
    for s, row in enumerate(np.asarray(matrix)):
        for a, v in enumerate(row):
            lines.append(f"{s},{a},{format(float(v), '.17g')}")
    return "\n".join(lines) + "\n"


def _emit(args, payload: dict, csv_matrix=None, csv_header="value", text: str | None = None) -> None:
    if args.format == "csv" and csv_matrix is not None:
        out = _matrix_csv(csv_matrix, csv_header)
    elif args.format == "text" and text is not None:
        out = text
    else:
        out = _json.dumps(payload)
    if args.out:
        Path(args.out).write_text(out)
    else:
        sys.stdout.write(out)


# -- subcommands ---------------------------------------------------------------


def cmd_solve(args) -> int:
    mdp = load_mdp(args.mdp)
    policy = _load_policy(args.policy)
    method = args.method or ("exact" if isinstance(policy, MarkovianTable) else "enumerate")
    stderr = None
    if method == "exact":
        if not isinstance(policy, MarkovianTable):
            raise UsageError("method 'exact' needs a Markovian policy")
        table = occupancy_exact_markovian(mdp, policy)
    elif method == "enumerate":
        require_finite(mdp)
        table = occupancy_enumerate(mdp, policy, tol=args.tol or 1e-8, max_depth=args.max_depth)
    elif method == "monte_carlo":
        table, stderr = occupancy_monte_carlo(mdp, policy, args.episodes, args.seed, args.horizon_cap, args.threads)
    else:
        raise UsageError(f"unknown method {method}")
    residual, norm = conservation_residual(mdp, table)
    payload = {
        "method": method,
        "mu": table.mu,
        "tail_bound": table.tail_bound,
        "state_marginal": table.state_marginal,
        "total_mass": table.total_mass,
        "performance": performance_from_occupancy(mdp, table),
        "performance_error": performance_error(mdp, table),
        "conservation": {"residual": residual, "max_norm": norm},
    }
    if stderr is not None:
        payload["stderr"] = stderr
    text = "".join(
        f"mu[{s}][{a}] = {table.mu[s, a]:.12g}\n" for s in range(mdp.num_states) for a in range(mdp.num_actions)
    ) + f"tail_bound = {table.tail_bound:.3g}\nconservation max-norm = {norm:.3g}\n"
    _emit(args, payload, table.mu, "mu", text)
    return EXIT_OK


def cmd_project(args) -> int:
    table = _load_occupancy(args.occupancy)
    rule = args.null_rule if args.null_rule == "uniform" else int(args.null_rule)
    proj = markovianize(table, rule)
    for s in proj.null_states:
        print(f"warning: state {s} has zero occupancy; filled with null rule '{rule}'", file=sys.stderr)
    _emit(args, policy_to_dict(proj.pi_tilde), proj.pi_tilde.probs, "prob")
    return EXIT_OK


def cmd_verify(args) -> int:
    mdp = load_mdp(args.mdp)
    policy = _load_policy(args.policy)
    kwargs = {}
    if args.method == "enumerate":
        kwargs.update(enum_tol=args.enum_tol, max_depth=args.max_depth)
    else:
        kwargs.update(episodes=args.episodes, seed=args.seed, horizon_cap=args.horizon_cap, workers=args.threads)
    report = verify_occupancy_equivalence(mdp, policy, tol=args.tol or 1e-7, method=args.method, **kwargs)
    line = report.summary(Path(args.policy).stem)
    _emit(args, report.to_dict(), text=line + "\n")
    if args.out or args.format != "text":
        print(line, file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_collect(args) -> int:
    mdp = load_mdp(args.mdp)
    policy = _load_policy(args.policy)
    data = collect_dataset(mdp, policy, args.episodes, args.seed, args.horizon_cap, args.threads)
    if not args.out:
        raise UsageError("collect needs --out for the JSON-lines dataset")
    write_jsonl(data, args.out)
    for w in data.provenance["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_clone(args) -> int:
    data = read_jsonl(args.dataset)
    est = behavior_mle_discounted(data, args.gamma)
    for s in np.flatnonzero(est.unobserved):
        print(f"warning: state {s} never observed; uniform row", file=sys.stderr)
    _emit(args, policy_to_dict(est.policy), est.policy.probs, "prob")
    return EXIT_OK


def cmd_counts(args) -> int:
    c = compute_counts(read_jsonl(args.dataset))
    payload = {
        "num_episodes": c.num_episodes,
        "n_sas": c.n_sas,
        "n_sa": c.n_sa,
        "n_s": c.n_s,
        "n0": c.n0,
        "n0_terminal": c.n0_terminal,
    }
    _emit(args, payload, c.n_sa, "count")
    return EXIT_OK


def cmd_mle(args) -> int:
    counts = compute_counts(read_jsonl(args.dataset))
    est = mle_mdp(counts, gamma=args.gamma)
    payload = {
        "mdp": mdp_to_dict(est.mdp),
        "unobserved": est.unobserved,
        "behavior_undiscounted": policy_to_dict(behavior_mle_undiscounted(counts).policy),
    }
    _emit(args, payload)
    return EXIT_OK


def cmd_bias(args) -> int:
    mdp = load_mdp(args.mdp)
    policy = _load_policy(args.policy)
    sizes = [int(x) for x in args.sizes.split(",")]
    report = bias_experiment(mdp, policy, args.gamma, sizes, args.seed, args.horizon_cap)
    lines = [f"{'N':>8} {'disc_gap':>12} {'undisc_gap':>12} {'disc_se':>12}"]
    for r in report.rows:
        lines.append(f"{r.episodes:>8} {r.discounted_gap:>12.4e} {r.undiscounted_gap:>12.4e} {r.discounted_stderr:>12.4e}")
    _emit(args, report.to_dict(), text="\n".join(lines) + "\n")
    return EXIT_OK


def cmd_suite(args) -> int:
    config = None
    if args.config:
        text = Path(args.config).read_text()
        config = _json.loads(text, args.config)
    report = run_suite(config)
    _emit(args, report.to_dict(), text=report.render_text())
    if args.out or args.format != "text":
        sys.stderr.write(report.render_text())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_counterexample(args) -> int:
    if args.name not in COUNTEREXAMPLES:
        raise UsageError(f"unknown counterexample '{args.name}'; known: {sorted(COUNTEREXAMPLES)}")
    params = {}
    if args.name == "alternating_epochs" and args.max_T:
        params["max_T"] = args.max_T
    findings = COUNTEREXAMPLES[args.name](**params)
    _emit(args, findings)
    return EXIT_OK


def cmd_gen_corpus(args) -> int:
    limits = CorpusLimits(max_states=args.max_states, max_actions=args.max_actions, gamma_max=args.gamma_max)
    items = [
        {"mdp": mdp_to_dict(m), "policy": policy_to_dict(p)} for m, p in random_corpus(args.seed, args.count, limits)
    ]
    _emit(args, {"seed": args.seed, "count": args.count, "items": items})
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None, help="tolerance override")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("json", "csv", "text"), default="json")
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sampling")

    parser = argparse.ArgumentParser(prog="occmark", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=fn)
        return p

    def sampling(p):
        p.add_argument("--episodes", type=int, default=100_000)
        p.add_argument("--horizon-cap", type=int, default=10_000)

    p = add("solve", cmd_solve, "occupancy of a policy")
    p.add_argument("mdp")
    p.add_argument("policy")
    p.add_argument("--method", choices=("exact", "enumerate", "monte_carlo"), default=None)
    p.add_argument("--max-depth", type=int, default=100_000)
    sampling(p)

    p = add("project", cmd_project, "Markovian projection of an occupancy table")
    p.add_argument("occupancy")
    p.add_argument("--null-rule", default="uniform", help="'uniform' or an action index")

    p = add("verify", cmd_verify, "check occupancy and return equivalence with the projection")
    p.add_argument("mdp")
    p.add_argument("policy")
    p.add_argument("--method", choices=("enumerate", "monte_carlo"), default="enumerate")
    p.add_argument("--enum-tol", type=float, default=1e-9)
    p.add_argument("--max-depth", type=int, default=100_000)
    sampling(p)

    p = add("collect", cmd_collect, "sample a JSON-lines dataset")
    p.add_argument("mdp")
    p.add_argument("policy")
    sampling(p)

    p = add("clone", cmd_clone, "discounted behavior estimate from a dataset")
    p.add_argument("dataset")
    p.add_argument("--gamma", type=float, required=True)

    p = add("counts", cmd_counts, "sample counts of a dataset")
    p.add_argument("dataset")

    p = add("mle", cmd_mle, "maximum-likelihood MDP of a dataset")
    p.add_argument("dataset")
    p.add_argument("--gamma", type=float, default=1.0)

    p = add("bias", cmd_bias, "estimator bias experiment")
    p.add_argument("mdp")
    p.add_argument("policy")
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--sizes", default="100,1000,10000,100000")
    p.add_argument("--horizon-cap", type=int, default=10_000)

    p = add("suite", cmd_suite, "run the verification suite")
    p.add_argument("config", nargs="?", default=None)

    p = add("counterexample", cmd_counterexample, "undiscounted counterexample findings")
    p.add_argument("name")
    p.add_argument("--max-T", dest="max_T", type=int, default=None)

    p = add("gen-corpus", cmd_gen_corpus, "random (MDP, policy) corpus")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--max-states", type=int, default=6)
    p.add_argument("--max-actions", type=int, default=4)
    p.add_argument("--gamma-max", type=float, default=0.95)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, InvalidMdpError, UsageError, InvariantViolationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NonFiniteOccupancyError, NumericalError) as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except HorizonInsufficientError as exc:
        print(f"horizon insufficient: {exc} (tail bound {exc.tail_bound:.3g})", file=sys.stderr)
        return EXIT_HORIZON
    except (EnumerationInfeasibleError, TreeCapExceededError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
