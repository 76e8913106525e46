"""RRT, RRTConnect, TRRT and LazyRRT over a shared SearchContext.

Each function returns (solved, path_as_array_list, iterations).  Timeouts
are decided against the context clock once per iteration (and once per
connect step for RRTConnect).
"""
from __future__ import annotations

import math

import numpy as np

from .core import SearchContext, Tree


def rrt(ctx: SearchContext):
    tree = Tree(ctx.start, ctx.space)
    it = 0
    while not ctx.expired():
        it += 1
        ctx.clock.iteration()
        q_rand, is_goal = ctx.sample(ctx.params.goal_bias)
        near, dist = tree.nearest(q_rand)
        ctx.clock.nearest(tree.n)
        q_new, reached = tree.steer(near, q_rand, dist, ctx.step)
        if not ctx.motion(tree.nodes[near], q_new):
            continue
        idx = tree.add(q_new, near)
        if is_goal and reached:
            return True, [tree.nodes[i].copy() for i in tree.path_to(idx)], it
    return False, None, it


def _connect(ctx: SearchContext, tree: Tree, target: np.ndarray):
    """Greedy extension of `tree` toward `target`; returns (reached, last index)."""
    last = -1
    while True:
        if ctx.expired():
            return False, last
        near, dist = tree.nearest(target)
        ctx.clock.nearest(tree.n)
        q_new, reached = tree.steer(near, target, dist, ctx.step)
        if not ctx.motion(tree.nodes[near], q_new):
            return False, last
        last = tree.add(q_new, near)
        if reached:
            return True, last


def rrt_connect(ctx: SearchContext):
    ta = Tree(ctx.start, ctx.space)
    tb = Tree(ctx.goal, ctx.space)
    a_is_start = True
    it = 0
    while not ctx.expired():
        it += 1
        ctx.clock.iteration()
        q_rand, _ = ctx.sample(0.0)
        near, dist = ta.nearest(q_rand)
        ctx.clock.nearest(ta.n)
        q_new, _ = ta.steer(near, q_rand, dist, ctx.step)
        if ctx.motion(ta.nodes[near], q_new):
            ia = ta.add(q_new, near)
            reached, ib = _connect(ctx, tb, q_new)
            if reached:
                pa = [ta.nodes[i].copy() for i in ta.path_to(ia)]
                pb = [tb.nodes[i].copy() for i in tb.path_to(ib)]
                # both halves end at the junction state; keep it once
                if a_is_start:
                    path = pa + pb[::-1][1:]
                else:
                    path = pb + pa[::-1][1:]
                return True, path, it
        ta, tb = tb, ta
        a_is_start = not a_is_start
    return False, None, it


def trrt(ctx: SearchContext):
    """Transition-based RRT with cost 1 / (clearance + 0.01).

    Uphill steps pass when exp(-dc / (K T)) > 0.5; a pass cools T in
    proportion to the climb, a refusal heats it by `trrt_temp_rate`.
    """
    p = ctx.params
    bodies = ctx.checker.dof if ctx.checker.kind else 1

    def cost(q):
        ctx.clock.clearance(bodies)
        return 1.0 / (ctx.checker.clearance(q) + 0.01)

    c_start, c_goal = cost(ctx.start), cost(ctx.goal)
    k_norm = 0.5 * (c_start + c_goal)
    best, worst = min(c_start, c_goal), max(c_start, c_goal)
    temp = p.trrt_temp_init
    tree = Tree(ctx.start, ctx.space)
    tree.cost[0] = c_start
    it = 0
    while not ctx.expired():
        it += 1
        ctx.clock.iteration()
        q_rand, is_goal = ctx.sample(p.goal_bias)
        near, dist = tree.nearest(q_rand)
        ctx.clock.nearest(tree.n)
        q_new, reached = tree.steer(near, q_rand, dist, ctx.step)
        if not ctx.motion(tree.nodes[near], q_new):
            continue
        c_new = cost(q_new)
        climb = c_new - tree.cost[near]
        if climb > 0:
            if math.exp(-climb / (k_norm * temp)) > 0.5:
                spread = worst - best
                if spread > 1e-4:
                    temp /= math.exp(min(climb / (0.1 * spread), 50.0))
            else:
                temp *= p.trrt_temp_rate
                continue
        best, worst = min(best, c_new), max(worst, c_new)
        idx = tree.add(q_new, near, c_new)
        if is_goal and reached:
            return True, [tree.nodes[i].copy() for i in tree.path_to(idx)], it
    return False, None, it


def lazy_rrt(ctx: SearchContext):
    """Grow without collision checks; validate root-first once the goal is hit,
    pruning the subtree behind the first invalid edge."""
    tree = Tree(ctx.start, ctx.space)
    it = 0
    while not ctx.expired():
        it += 1
        ctx.clock.iteration()
        q_rand, is_goal = ctx.sample(ctx.params.goal_bias)
        near, dist = tree.nearest(q_rand)
        ctx.clock.nearest(tree.n_alive)
        q_new, reached = tree.steer(near, q_rand, dist, ctx.step)
        idx = tree.add(q_new, near)
        if not (is_goal and reached):
            continue
        chain = tree.path_to(idx)
        valid = True
        for child in chain[1:]:
            if tree.edge_checked[child]:
                continue
            if ctx.motion(tree.nodes[tree.parent[child]], tree.nodes[child]):
                tree.edge_checked[child] = True
            else:
                tree.prune(child)
                valid = False
                break
        if valid:
            return True, [tree.nodes[i].copy() for i in chain], it
    return False, None, it
