"""Which planner wins on generated nav2d problems, and does the answer
depend on how the work clock prices operations?

Prints the win counts under the default clock, then re-scores the same
runs with alternative price vectors built from the per-category counts
(collision tests, iterations, nearest-neighbour scans).

    python scripts/planner_survey.py --problems 40 --trials 5
"""
from __future__ import annotations

import argparse
import collections

import numpy as np

from planfolio.env_gen import derive_seed, generate_nav_problem
from planfolio.planners import PlannerId, PlannerParams, label_fastest, measure, plan

PRICES = {"collision only": (1, 0, 0), "default-like": (1, 2, 6), "heavy collision": (20, 1, 1)}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--problems", type=int, default=40)
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--seed", type=int, default=7, help="dataset seed")
    args = ap.parse_args()

    wins = collections.Counter()
    totals = collections.Counter()
    repriced = {name: collections.Counter() for name in PRICES}
    for i in range(args.problems):
        problem = generate_nav_problem(derive_seed(args.seed, i))
        records = {pl: measure(problem, pl, args.trials, PlannerParams(rng_seed=11))
                   for pl in PlannerId}
        for pl, rec in records.items():
            totals[pl.value] += rec.expected_time
        wins[label_fastest(records).value] += 1
        if problem.possibly_infeasible:
            continue
        counts = {}
        for pl in PlannerId:
            acc = np.zeros(3)
            for t in range(args.trials):
                c = plan(problem, pl, PlannerParams(rng_seed=11).for_trial(t)).counts
                acc += [c["states"] * problem.n_obstacles, c["iterations"], c["nearest"]]
            counts[pl.value] = acc / args.trials
        for name, price in PRICES.items():
            cost = {k: float(np.dot(price, v)) for k, v in counts.items()}
            repriced[name][min(cost, key=cost.get)] += 1

    print(f"wins under the work clock: {dict(wins)}")
    print("expected totals (s): " + ", ".join(f"{k} {v:.2f}" for k, v in totals.items()))
    for name, c in repriced.items():
        print(f"wins with {name} pricing (feasible problems): {dict(c)}")


if __name__ == "__main__":
    main()
