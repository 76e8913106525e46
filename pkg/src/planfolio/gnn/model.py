"""EdgeConv runtime/portfolio network and the occupancy-grid baseline.

Both encoders share the same head and the same optional side branch for a
flat per-problem vector (arm joint configurations, or start/goal states for
the grid baseline).  Node features and side vectors are normalized inside
the model with statistics fitted on the training split.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from ..env_gen import make_rng
from .layers import MlpSpec, init_mlp, log_softmax, mlp_backward, mlp_forward, softmax

MODEL_VERSION = "planfolio-model/1"
TASKS = ("classify4", "regress1")
ENCODERS = ("gnn", "grid")
N_CLASSES = 4


class ShapeError(ValueError):
    """Input width does not match the model."""


@dataclass(frozen=True)
class ModelConfig:
    task: str = "classify4"
    encoder: str = "gnn"
    in_features: int = 8
    conv_widths: tuple[tuple[int, ...], ...] = ((512, 512), (256, 256))
    grid_cells: int = 64 * 64
    grid_widths: tuple[int, ...] = (512, 256)
    side_in: int = 0
    side_widths: tuple[int, ...] = (512, 256)
    head_widths: tuple[int, ...] = (400, 200)
    seed: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.encoder not in ENCODERS:
            raise ValueError(f"unknown encoder {self.encoder!r}")
        if self.encoder == "gnn" and not self.conv_widths:
            raise ValueError("a gnn encoder needs at least one EdgeConv layer")

    @property
    def out_width(self) -> int:
        return N_CLASSES if self.task == "classify4" else 1

    @property
    def has_side(self) -> bool:
        return self.side_in > 0 and len(self.side_widths) > 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_widths"] = [list(w) for w in self.conv_widths]
        for k in ("grid_widths", "side_widths", "head_widths"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["conv_widths"] = tuple(tuple(w) for w in d["conv_widths"])
        for k in ("grid_widths", "side_widths", "head_widths"):
            d[k] = tuple(d[k])
        return cls(**d)

    # presets

    @classmethod
    def nav(cls, task: str = "classify4", seed: int = 0, encoder: str = "gnn") -> "ModelConfig":
        if encoder == "grid":
            return cls(task=task, encoder="grid", in_features=0, conv_widths=(),
                       side_in=6, side_widths=(100, 50), head_widths=(400, 200), seed=seed)
        return cls(task=task, in_features=8, side_in=0, head_widths=(400, 200), seed=seed)

    @classmethod
    def arm(cls, n_links: int, task: str = "regress1", seed: int = 0) -> "ModelConfig":
        return cls(task=task, in_features=13, side_in=2 * n_links, side_widths=(512, 256),
                   head_widths=(1000,), seed=seed)


@dataclass
class GraphBatch:
    """Several problems stacked for one forward pass.

    `edges` rows are (target, source) in batch-global node indices and
    `offsets[g]:offsets[g+1]` are the nodes of graph g.
    """

    x: np.ndarray
    edges: np.ndarray
    offsets: np.ndarray
    side: Optional[np.ndarray] = None
    grid: Optional[np.ndarray] = None
    targets: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_graphs(self) -> int:
        return len(self.offsets) - 1

    @property
    def node_counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def n_nodes(self) -> int:
        return int(self.offsets[-1])

    def graph_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_graphs), self.node_counts)

    def operators(self):
        """Sparse scatter (target, source) and readout matrices, built once."""
        if "ops" not in self._cache:
            n, e = self.n_nodes, self.edges.shape[0]
            cols = np.arange(e)
            ones = np.ones(e)
            tgt = sp.csr_matrix((ones, (self.edges[:, 0], cols)), shape=(n, e)) if e else \
                sp.csr_matrix((n, 0))
            src = sp.csr_matrix((ones, (self.edges[:, 1], cols)), shape=(n, e)) if e else \
                sp.csr_matrix((n, 0))
            gi = self.graph_index()
            readout = sp.csr_matrix((np.ones(n), (gi, np.arange(n))), shape=(self.n_graphs, n))
            self._cache["ops"] = (tgt, src, readout)
        return self._cache["ops"]

    @classmethod
    def from_parts(cls, features: Sequence[np.ndarray], edges: Sequence[np.ndarray],
                   side: Optional[Sequence[np.ndarray]] = None,
                   grid: Optional[Sequence[np.ndarray]] = None,
                   targets=None) -> "GraphBatch":
        counts = [len(f) for f in features]
        offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        width = features[0].shape[1] if features and len(features[0]) else 0
        x = np.concatenate(features).astype(float) if sum(counts) else np.zeros((0, width))
        shifted = []
        for off, (n, e) in zip(offsets[:-1], zip(counts, edges)):
            e = np.asarray(e, dtype=np.int64).reshape(-1, 2)
            if e.size and (e.min() < 0 or e.max() >= n):
                raise ShapeError("edge endpoint outside its graph")
            shifted.append(e + off)
        all_edges = np.concatenate(shifted) if shifted else np.zeros((0, 2), dtype=np.int64)
        return cls(
            x=x, edges=all_edges, offsets=offsets,
            side=None if side is None else np.asarray(side, dtype=float).reshape(len(counts), -1),
            grid=None if grid is None else np.asarray(grid, dtype=float).reshape(len(counts), -1),
            targets=None if targets is None else np.asarray(targets),
        )

    @classmethod
    def from_graphs(cls, graphs, targets=None, grids=None, side=None) -> "GraphBatch":
        """Batch WorkspaceGraphs; the side vector defaults to each graph's config_vector."""
        if side is None and graphs and graphs[0].config_vector is not None:
            side = [g.config_vector for g in graphs]
        return cls.from_parts([g.node_features for g in graphs], [g.edges for g in graphs],
                              side=side, grid=grids, targets=targets)

    @classmethod
    def grid_only(cls, grids, side, targets=None) -> "GraphBatch":
        b = len(grids)
        return cls(x=np.zeros((0, 0)), edges=np.zeros((0, 2), dtype=np.int64),
                   offsets=np.zeros(b + 1, dtype=np.int64),
                   side=np.asarray(side, dtype=float).reshape(b, -1),
                   grid=np.asarray(grids, dtype=float).reshape(b, -1),
                   targets=None if targets is None else np.asarray(targets))

    def subset(self, idx) -> "GraphBatch":
        idx = np.asarray(idx, dtype=np.int64)
        feats, edges = [], []
        for g in idx:
            a, b = self.offsets[g], self.offsets[g + 1]
            feats.append(self.x[a:b])
            mask = (self.edges[:, 0] >= a) & (self.edges[:, 0] < b)
            edges.append(self.edges[mask] - a)
        if self.x.shape[1] == 0 and self.n_nodes == 0:
            return GraphBatch.grid_only(self.grid[idx], self.side[idx],
                                        None if self.targets is None else self.targets[idx])
        return GraphBatch.from_parts(
            feats, edges,
            side=None if self.side is None else self.side[idx],
            grid=None if self.grid is None else self.grid[idx],
            targets=None if self.targets is None else self.targets[idx],
        )


def _safe_std(x: np.ndarray) -> np.ndarray:
    s = x.std(axis=0)
    return np.where(s > 1e-12, s, 1.0)


class Model:
    """Parameters, normalization statistics and the fixed network wiring."""

    def __init__(self, config: ModelConfig, params: Optional[dict] = None,
                 norm: Optional[dict] = None):
        self.config = config
        self.version = MODEL_VERSION
        self.convs: list[MlpSpec] = []
        width = config.in_features
        if config.encoder == "gnn":
            for widths in config.conv_widths:
                self.convs.append(MlpSpec((2 * width, *widths)))
                width = widths[-1]
            enc_out = sum(w[-1] for w in config.conv_widths)
            self.grid_mlp = None
        else:
            self.grid_mlp = MlpSpec((config.grid_cells, *config.grid_widths))
            enc_out = config.grid_widths[-1]
        self.side = MlpSpec((config.side_in, *config.side_widths)) if config.has_side else None
        head_in = enc_out + (config.side_widths[-1] if self.side else 0)
        final = "softmax" if config.task == "classify4" else "identity"
        self.head = MlpSpec((head_in, *config.head_widths, config.out_width),
                            final_activation=final)
        if params is None:
            params = {}
            rng = make_rng(config.seed, 0x6E6E)
            for i, spec in enumerate(self.convs):
                init_mlp(spec, f"conv{i}", rng, params)
            if self.grid_mlp:
                init_mlp(self.grid_mlp, "grid", rng, params)
            if self.side:
                init_mlp(self.side, "side", rng, params)
            init_mlp(self.head, "head", rng, params)
            if config.task == "regress1":
                # predictions start at the fitted target mean (see out_mean)
                params[f"head.{self.head.n_layers - 1}.W"][:] = 0.0
        self.params = params
        self.norm = norm if norm is not None else self._identity_norm()

    def _identity_norm(self) -> dict:
        c = self.config
        return {
            "feat_mean": np.zeros(c.in_features), "feat_std": np.ones(c.in_features),
            "side_mean": np.zeros(c.side_in), "side_std": np.ones(c.side_in),
            "out_mean": np.zeros(c.out_width), "out_scale": np.ones(c.out_width),
        }

    def fit_normalization(self, batch: GraphBatch) -> None:
        if self.config.encoder == "gnn" and batch.n_nodes:
            self.norm["feat_mean"] = batch.x.mean(axis=0)
            self.norm["feat_std"] = _safe_std(batch.x)
        if self.side is not None and batch.side is not None:
            self.norm["side_mean"] = batch.side.mean(axis=0)
            self.norm["side_std"] = _safe_std(batch.side)
        if self.config.task == "regress1" and batch.targets is not None and len(batch.targets):
            # outputs start on the scale of the targets; the loss is still on raw values
            y = np.asarray(batch.targets, dtype=float).reshape(-1, 1)
            self.norm["out_mean"] = y.mean(axis=0)
            self.norm["out_scale"] = _safe_std(y)

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    # -- forward / backward ------------------------------------------------

    def _check(self, batch: GraphBatch) -> None:
        c = self.config
        if c.encoder == "gnn" and batch.n_nodes and batch.x.shape[1] != c.in_features:
            raise ShapeError(f"expected {c.in_features} node features, got {batch.x.shape[1]}")
        if c.encoder == "grid" and (batch.grid is None or batch.grid.shape[1] != c.grid_cells):
            raise ShapeError(f"expected a grid of {c.grid_cells} cells")
        if self.side is not None and (batch.side is None or batch.side.shape[1] != c.side_in):
            raise ShapeError(f"expected a side vector of width {c.side_in}")

    def forward(self, batch: GraphBatch, keep: bool = False):
        """Head logits (classify4) or raw outputs (regress1), shape (B, out)."""
        self._check(batch)
        cache: dict = {}
        parts = []
        if self.config.encoder == "gnn":
            tgt, src, readout = batch.operators()
            h = (batch.x - self.norm["feat_mean"]) / self.norm["feat_std"]
            t_idx, s_idx = batch.edges[:, 0], batch.edges[:, 1]
            for i, spec in enumerate(self.convs):
                ht = h[t_idx]
                inp = np.concatenate([ht, h[s_idx] - ht], axis=1)
                if keep:
                    msg, c = mlp_forward(spec, self.params, inp, f"conv{i}", keep=True)
                    cache[f"conv{i}"] = c
                else:
                    msg = mlp_forward(spec, self.params, inp, f"conv{i}")
                h = tgt @ msg if msg.shape[0] else np.zeros((batch.n_nodes, spec.out_width))
                parts.append(readout @ h)
        else:
            if keep:
                g, c = mlp_forward(self.grid_mlp, self.params, batch.grid, "grid", keep=True)
                cache["grid"] = c
            else:
                g = mlp_forward(self.grid_mlp, self.params, batch.grid, "grid")
            parts.append(g)
        if self.side is not None:
            s_in = (batch.side - self.norm["side_mean"]) / self.norm["side_std"]
            if keep:
                s, c = mlp_forward(self.side, self.params, s_in, "side", keep=True)
                cache["side"] = c
            else:
                s = mlp_forward(self.side, self.params, s_in, "side")
            parts.append(s)
        z = np.concatenate(parts, axis=1)
        head = self._head_logits_spec()
        mean, scale = self._out_affine()
        if keep:
            out, c = mlp_forward(head, self.params, z, "head", keep=True)
            cache["head"] = c
            cache["widths"] = [p.shape[1] for p in parts]
            return out * scale + mean, cache
        return mlp_forward(head, self.params, z, "head") * scale + mean

    def _out_affine(self):
        w = self.config.out_width
        return self.norm.get("out_mean", np.zeros(w)), self.norm.get("out_scale", np.ones(w))

    def _head_logits_spec(self) -> MlpSpec:
        # the softmax is applied by predict()/the loss, never inside backprop
        return MlpSpec(self.head.widths, self.head.activation, "identity")

    def predict(self, batch: GraphBatch) -> np.ndarray:
        out = self.forward(batch)
        return softmax(out) if self.config.task == "classify4" else out[:, 0]

    def backward(self, batch: GraphBatch, cache: dict, dout: np.ndarray) -> dict:
        """Gradients of a loss w.r.t. every parameter given d(loss)/d(head output)."""
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        dout = dout * self._out_affine()[1]
        dz = mlp_backward(self._head_logits_spec(), self.params, cache["head"], dout, grads, "head")
        splits = np.cumsum(cache["widths"])[:-1]
        dparts = np.split(dz, splits, axis=1)
        if self.side is not None:
            mlp_backward(self.side, self.params, cache["side"], dparts[-1], grads, "side")
            dparts = dparts[:-1]
        if self.config.encoder == "grid":
            mlp_backward(self.grid_mlp, self.params, cache["grid"], dparts[0], grads, "grid")
            return grads
        tgt, src, readout = batch.operators()
        dh = None
        for i in reversed(range(len(self.convs))):
            spec = self.convs[i]
            d_out = readout.T @ dparts[i]
            if dh is not None:
                d_out = d_out + dh
            if batch.edges.shape[0] == 0:
                dh = np.zeros((batch.n_nodes, spec.in_width // 2))
                continue
            dmsg = tgt.T @ d_out
            dinp = mlp_backward(spec, self.params, cache[f"conv{i}"], dmsg, grads, f"conv{i}")
            w = spec.in_width // 2
            d_self, d_diff = dinp[:, :w], dinp[:, w:]
            dh = tgt @ (d_self - d_diff) + src @ d_diff
        return grads


# ---------------------------------------------------------------------------
# losses


def loss_and_grad(out: np.ndarray, targets: np.ndarray, task: str):
    """Mean NLL over softmax(out) or mean squared error; gradient w.r.t. `out`."""
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite network output")
    b = out.shape[0]
    if task == "classify4":
        y = np.asarray(targets, dtype=np.int64)
        logp = log_softmax(out)
        loss = -float(np.mean(logp[np.arange(b), y]))
        g = np.exp(logp)
        g[np.arange(b), y] -= 1.0
        return loss, g / b
    t = np.asarray(targets, dtype=float).reshape(b)
    r = out[:, 0] - t
    loss = float(np.mean(r * r))
    return loss, (2.0 / b) * r[:, None]


def nll(probs: np.ndarray, labels) -> float:
    """Mean negative log-likelihood of integer labels under given probabilities."""
    probs = np.asarray(probs, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    if not np.all(np.isfinite(probs)):
        raise FloatingPointError("non-finite probabilities")
    return -float(np.mean(np.log(probs[np.arange(len(y)), y])))


def mse(pred, target) -> float:
    pred, target = np.asarray(pred, dtype=float), np.asarray(target, dtype=float)
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(target))):
        raise FloatingPointError("non-finite regression values")
    return float(np.mean((pred - target) ** 2))


# ---------------------------------------------------------------------------
# standalone layer ops, used by tests and for inspection


def edgeconv_forward(h: np.ndarray, edges: np.ndarray, spec: MlpSpec, params: dict,
                     prefix: str) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if spec.in_width != 2 * h.shape[1]:
        raise ShapeError(f"MLP input width {spec.in_width} != 2 x {h.shape[1]}")
    out = np.zeros((h.shape[0], spec.out_width))
    if edges.shape[0] == 0:
        return out
    ht = h[edges[:, 0]]
    msg = mlp_forward(spec, params, np.concatenate([ht, h[edges[:, 1]] - ht], axis=1), prefix)
    np.add.at(out, edges[:, 0], msg)
    return out


def readout_sum(h: np.ndarray, offsets) -> np.ndarray:
    offsets = np.asarray(offsets, dtype=np.int64)
    return np.stack([h[a:b].sum(axis=0) for a, b in zip(offsets[:-1], offsets[1:])])
