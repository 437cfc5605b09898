"""Command line entry point: single episodes, batches and the oracle suites."""

from __future__ import annotations

import argparse
import itertools
import math
import sys
from pathlib import Path

import numpy as np

from .world import builtin_scenario, load_scenario


def _scenario(ref: str):
    p = Path(ref)
    return load_scenario(p) if p.suffix == ".scn" or p.exists() else builtin_scenario(ref)


def _seeds(text: str) -> list[int]:
    """'0-9' or '1,4,7' or a mix of both."""
    out: list[int] = []
    for part in filter(None, text.split(",")):
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def _floats(text: str) -> list[float]:
    return [float(x) for x in filter(None, text.split(","))]


def cmd_run(args) -> int:
    from .harness import format_log, reports_to_tsv, run_trial

    scn = _scenario(args.scenario)
    ep, rep = run_trial(scn, args.seed, "baseline" if args.baseline else "full", args.f_priority,
                        workers=args.workers)
    log = format_log(ep)
    if args.out:
        Path(args.out).write_text(log)
    sys.stdout.write(reports_to_tsv([rep]))
    return 0


def cmd_batch(args) -> int:
    from .harness import reports_to_tsv, run_batch, summarize, summary_to_tsv

    scenarios = [_scenario(s) for s in args.scenarios.split(",")]
    sweep = _floats(args.sweep_f) if args.sweep_f else [None]
    out_dir = Path(args.out_dir) if args.out_dir else None
    log_dir = None
    if out_dir is not None:
        log_dir = out_dir / "logs"
        log_dir.mkdir(parents=True, exist_ok=True)
    methods = tuple(args.methods.split(","))
    res = run_batch(scenarios, _seeds(args.seeds), sweep, methods, workers=args.workers, log_dir=log_dir)
    table = summary_to_tsv(summarize(res.reports))
    if out_dir is not None:
        (out_dir / "trials.tsv").write_text(reports_to_tsv(res.reports))
        (out_dir / "summary.tsv").write_text(table)
    sys.stdout.write(table)
    for err in res.errors:
        print("error\t" + "\t".join(map(str, err)), file=sys.stderr)
    return 1 if res.errors else 0


# ---------------------------------------------------------------------------
# oracle suites (small versions of the acceptance oracles)

def _verify_belief(rng) -> tuple[bool, str]:
    from .belief import NULL_OBSERVATION, Belief, SensorModel, ZoneLayout, update_belief
    from .world import NULL_SIGNAL

    layout = ZoneLayout()
    vocab = (NULL_SIGNAL, "north", "south", "east", "west")
    model = SensorModel.compass(vocab, layout)
    n, bad, total = layout.size, 0, 0
    for _ in range(5):
        reach = rng.random((n, n)) < 0.5
        for mask in range(2 ** n):
            prior = tuple(bool(mask >> i & 1) for i in range(n))
            for obs in (NULL_OBSERVATION, "north", "south", "east", "west"):
                got = update_belief(Belief(prior), obs, None, layout, model, reach).bits
                adm = prior if any(prior) else (True,) * n
                want = tuple(
                    not (obs == NULL_OBSERVATION and not any(prior))
                    and any(adm[j] and reach[j, i] for j in range(n))
                    and any(model.output(s, i) == obs for s in vocab)
                    for i in range(n))
                bad += got != want
                total += 1
    return bad == 0, f"{total} belief updates, {bad} mismatches"


def _verify_selection(rng) -> tuple[bool, str]:
    from .tbrrt import DiverseCostWeights, diverse_cost, select_diverse_subset

    w = DiverseCostWeights()
    hits = 0
    for k in range(50):
        n, p = int(rng.integers(4, 11)), int(rng.choice([2, 3]))
        costs, xy = rng.uniform(0.5, 10, n), rng.uniform(0, 10, (n, 2))
        res = select_diverse_subset(costs, xy, p, w, np.random.default_rng(k))
        best = min(diverse_cost(c, costs, xy, w) for c in itertools.combinations(range(n), p))
        hits += res.cost <= best * (1 + 1e-12)
    return hits >= 35, f"diverse selection optimal in {hits}/50"


def _verify_qp(rng) -> tuple[bool, str]:
    from .dynamics import ControlBounds, RobotControl, RobotState
    from .safety import InfeasibleQP, SafetyParams, cbf_constraint, safe_control

    params, bounds = SafetyParams(), ControlBounds()
    worst, count = math.inf, 0
    while count < 200:
        s = RobotState(*rng.uniform(-3, 3, 2), rng.uniform(-math.pi, math.pi))
        h = rng.uniform(-3, 3, 2)
        if (s.x - h[0]) ** 2 + (s.y - h[1]) ** 2 < params.radius ** 2:
            continue
        nom = RobotControl(rng.uniform(-1, 1), rng.uniform(-1.5, 1.5))
        try:
            a = safe_control(s, nom, h, params, bounds)
        except InfeasibleQP:
            continue
        g, c = cbf_constraint(s, h, params)
        worst = min(worst, g[0] * a.v + g[1] * a.omega - c)
        count += 1
    return worst >= -1e-9, f"CBF-QP minimum residual {worst:.3g} over 200 states"


def cmd_verify(args) -> int:
    rng = np.random.default_rng(args.seed)
    ok_all = True
    for name, fn in (("belief", _verify_belief), ("selection", _verify_selection), ("qp", _verify_qp)):
        ok, detail = fn(rng)
        ok_all &= ok
        print(f"{name}\t{'PASS' if ok else 'FAIL'}\t{detail}")
    return 0 if ok_all else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="conav", description="Communicative social-navigation simulator.")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one episode and print its report")
    r.add_argument("--scenario", required=True, help="built-in map name or path to a .scn file")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--baseline", action="store_true", help="disable communication")
    r.add_argument("--f-priority", type=float, default=None, help="robot priority F in [0, 1]")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--out", help="write the trajectory log here")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("batch", help="run seeds x scenarios x methods and summarise")
    b.add_argument("--scenarios", default="basic,hallway,intersection", help="comma-separated")
    b.add_argument("--seeds", default="0-9", help="e.g. 0-9 or 1,3,5")
    b.add_argument("--sweep-f", default="", help="comma-separated F values, e.g. 0,0.5,1")
    b.add_argument("--methods", default="full,baseline")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--out-dir", help="write trials.tsv, summary.tsv and logs/ here")
    b.set_defaults(func=cmd_batch)

    v = sub.add_parser("verify", help="run the quick oracle suites")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
