"""Workspace graphs: one node per object, k-nearest-neighbour edges."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import forward_kinematics, normalize_angle

NAV_ROLES = ("start", "obstacle", "goal")
ARM_ROLES = ("obstacle", "active_link", "inactive_link")
NAV_FEATURES = 8
ARM_FEATURES = 13
NAV_K = 3
ARM_K = 4
ACTIVE_THRESHOLD = 1e-6


@dataclass
class WorkspaceGraph:
    node_features: np.ndarray          # (n, d)
    edges: np.ndarray                  # (E, 2) rows of (target, source)
    node_roles: list[str]
    positions: np.ndarray              # (n, 2) node positions used for k-NN
    k: int
    config_vector: Optional[np.ndarray] = None

    @property
    def n_nodes(self) -> int:
        return self.node_features.shape[0]

    def to_json(self) -> str:
        return json.dumps({
            "node_features": self.node_features.tolist(),
            "edges": self.edges.tolist(),
            "node_roles": self.node_roles,
            "k": self.k,
            "config_vector": None if self.config_vector is None else self.config_vector.tolist(),
        }, sort_keys=True)


def knn_edges(positions, k: int, symmetric: bool = False) -> np.ndarray:
    """Edges (target, source) from each node's k nearest other nodes.

    Distance ties go to the lower node index.  With `symmetric=True` the
    reverse of every edge is added (duplicates removed).
    """
    pos = np.asarray(positions, dtype=float)
    n = pos.shape[0]
    if k >= n:
        raise ValueError(f"k={k} needs more than {k} nodes, got {n}")
    if k < 1:
        raise ValueError("k must be >= 1")
    diff = pos[:, None, :] - pos[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    idx = np.arange(n)
    rows = []
    for v in range(n):
        others = idx[idx != v]
        order = np.lexsort((others, d2[v, others]))
        rows.extend((v, int(u)) for u in others[order[:k]])
    edges = np.array(rows, dtype=np.int64).reshape(-1, 2)
    if symmetric:
        both = {tuple(e) for e in edges.tolist()} | {(s, t) for t, s in edges.tolist()}
        edges = np.array(sorted(both), dtype=np.int64)
    return edges


def _one_hot(i: int, n: int = 3) -> list[float]:
    v = [0.0] * n
    v[i] = 1.0
    return v


def encode_nav(problem, k: int = NAV_K, symmetric: bool = False) -> WorkspaceGraph:
    """Nodes: every obstacle, then the start and goal block poses.

    Features: [x, y, theta, width, height, is_start, is_obstacle, is_goal].
    """
    feats, roles, pos = [], [], []
    for b in problem.obstacles:
        feats.append([*b.center, b.angle, b.width, b.height, *_one_hot(1)])
        roles.append("obstacle")
        pos.append(b.center)
    w, h = (2 * e for e in problem.robot.half_extents)
    for q, role in ((problem.start, "start"), (problem.goal, "goal")):
        feats.append([q[0], q[1], q[2], w, h, *_one_hot(NAV_ROLES.index(role))])
        roles.append(role)
        pos.append((q[0], q[1]))
    pos = np.array(pos, dtype=float)
    return WorkspaceGraph(np.array(feats, dtype=float), knn_edges(pos, k, symmetric),
                          roles, pos, k)


def _quat_z(theta: float) -> list[float]:
    return [math.cos(0.5 * theta), 0.0, 0.0, math.sin(0.5 * theta)]


def active_links(start, goal) -> list[bool]:
    """A link is active when it or any joint before it moves."""
    moved = [abs(normalize_angle(g - s)) > ACTIVE_THRESHOLD for s, g in zip(start, goal)]
    out, any_moved = [], False
    for m in moved:
        any_moved = any_moved or m
        out.append(any_moved)
    return out


def encode_arm(problem, k: int = ARM_K, symmetric: bool = False) -> WorkspaceGraph:
    """Nodes: every obstacle plus each link at the start configuration.

    Features: [x, y, z, qw, qx, qy, qz, aabb_w, aabb_h, aabb_d,
    is_obstacle, is_active_link, is_inactive_link]; planar z and depth are 0.
    """
    feats, roles, pos = [], [], []
    for b in problem.obstacles:
        feats.append([*b.center, 0.0, *_quat_z(b.angle), *b.aabb_extents(), 0.0, *_one_hot(0)])
        roles.append("obstacle")
        pos.append(b.center)
    links = forward_kinematics(problem.robot, problem.start)
    for box, active in zip(links, active_links(problem.start, problem.goal)):
        role = "active_link" if active else "inactive_link"
        feats.append([*box.center, 0.0, *_quat_z(box.angle), *box.aabb_extents(), 0.0,
                      *_one_hot(ARM_ROLES.index(role))])
        roles.append(role)
        pos.append(box.center)
    pos = np.array(pos, dtype=float)
    config = np.array([*problem.start, *problem.goal], dtype=float)
    return WorkspaceGraph(np.array(feats, dtype=float), knn_edges(pos, k, symmetric),
                          roles, pos, k, config)


def encode(problem, symmetric: bool = False) -> WorkspaceGraph:
    if problem.kind == "arm":
        return encode_arm(problem, symmetric=symmetric)
    return encode_nav(problem, symmetric=symmetric)
