"""Dynamic dual attention network.

Per snapshot, a content's strategy distribution is an attention-weighted
mix of its authors' distributions, and an author's distribution blends the
prior snapshot's distribution (through a sigmoid gate) with an
attention-weighted mix of the distributions of the contents written in the
snapshot. Both pass through ``tanh`` and L1 normalisation. The circular
dependency is unrolled into ``K`` alternations that start from flat
Dirichlet draws; gradients flow through the unrolled tape.

Separate attention parameters drive the citation space (16 strategies) and
the venue space (8 strategies).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import special

from . import autodiff as ad
from .errors import InvalidDistribution, InvalidParameter, MissingArtifact, NonFiniteLoss, SchemaError
from .features import EmbeddingStore, FieldStore
from .graph import Kind, TemporalGraph, View
from .strategies import LikelihoodTable, Space, StrategyParams, ViewContext, likelihood_table

STATE_VERSION = 1
LOG_FLOOR = 1e-12
GATE_EPS = 1e-12
HEADS = ("ca", "ac", "aa")


def softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - np.max(x))
    return z / z.sum()


def leaky_relu(x, slope: float = 0.2):
    return np.where(x > 0, x, slope * x)


def l1_normalize(x: np.ndarray) -> np.ndarray:
    return x / x.sum(axis=-1, keepdims=True)


# -- scalar reference operations ----------------------------------------------

def attention_logit(h_self, h_other, W, phi, slope=0.2) -> float:
    """LeakyReLU(phi . [W h_self || W h_other])."""
    z = np.concatenate([W @ h_self, W @ h_other])
    return float(leaky_relu(phi @ z, slope))


def content_attention(h_c, author_embeddings, W, phi, slope=0.2) -> np.ndarray:
    """Contribution of each author to one content (sums to one)."""
    if len(author_embeddings) == 0:
        raise InvalidParameter("a content needs at least one author")
    return softmax(np.array([attention_logit(h_c, h_a, W, phi, slope) for h_a in author_embeddings]))


def author_attention(h_a, content_embeddings, W, phi, slope=0.2) -> np.ndarray:
    """Contribution of each content of the snapshot to one author."""
    if len(content_embeddings) == 0:
        raise InvalidParameter("an active author needs at least one content")
    return softmax(np.array([attention_logit(h_a, h_c, W, phi, slope) for h_c in content_embeddings]))


def temporal_gate(h_now, h_prev, W, phi) -> float:
    z = float(phi @ np.concatenate([W @ h_now, W @ h_prev]))
    return GATE_EPS + (1.0 - 2.0 * GATE_EPS) * float(special.expit(z))


def content_strategy(alpha, author_dists) -> np.ndarray:
    mix = np.tensordot(np.asarray(alpha, dtype=float), np.asarray(author_dists, dtype=float), axes=1)
    return l1_normalize(np.tanh(mix))


def author_strategy(beta, d_prev, alpha, content_dists) -> np.ndarray:
    mix = np.tensordot(np.asarray(alpha, dtype=float), np.asarray(content_dists, dtype=float), axes=1)
    return l1_normalize(np.tanh(beta * np.asarray(d_prev, dtype=float) + (1.0 - beta) * mix))


def mixture_nll(dists: np.ndarray, probs: np.ndarray, floor: float = LOG_FLOOR) -> float:
    """-sum log sum_S D[S] P(edge | S) with rows aligned edge by edge."""
    lik = np.sum(np.asarray(dists) * np.asarray(probs), axis=-1)
    return float(-np.sum(np.log(np.maximum(lik, floor))))


# -- configuration and parameters -----------------------------------------------

@dataclass
class TrainConfig:
    unroll_steps: int = 2
    max_epochs: int = 200
    learning_rate: float = 1e-2
    tolerance: float = 1e-4
    optimizer: str = "adam"
    seed: int = 0
    hidden_dim: int = 8
    leaky_slope: float = 0.2

    def __post_init__(self):
        problems = []
        if self.unroll_steps < 1:
            problems.append("unroll_steps must be >= 1")
        if self.max_epochs < 0:
            problems.append("max_epochs must be >= 0")
        if self.tolerance <= 0:
            problems.append("tolerance must be > 0")
        if self.learning_rate <= 0:
            problems.append("learning_rate must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            problems.append("optimizer must be 'adam' or 'sgd'")
        if self.hidden_dim < 1:
            problems.append("hidden_dim must be >= 1")
        if problems:
            raise InvalidParameter("; ".join(problems))


Params = dict  # space -> {f"{head}_W": (F', F), f"{head}_phi": (2F',)}


def init_params(embed_dim: int, cfg: TrainConfig) -> Params:
    rng = np.random.default_rng([cfg.seed, 7919])
    hd = cfg.hidden_dim
    out = {}
    for space in Space:
        p = {}
        for head in HEADS:
            p[f"{head}_W"] = rng.normal(0.0, 1.0 / math.sqrt(embed_dim), size=(hd, embed_dim))
            p[f"{head}_phi"] = rng.normal(0.0, 1.0 / math.sqrt(2 * hd), size=2 * hd)
        out[space.value] = p
    return out


def copy_params(params: Params) -> Params:
    return {s: {k: v.copy() for k, v in p.items()} for s, p in params.items()}


# -- snapshot data -------------------------------------------------------------

def _dirichlet(seed: int, t: int, space: Space, purpose: int, node: int, m: int) -> np.ndarray:
    rng = np.random.default_rng([seed, t, list(Space).index(space), purpose, node])
    return rng.dirichlet(np.ones(m))


@dataclass
class SpaceData:
    space: Space
    d_prev: np.ndarray        # (n_a, m) prior distributions, constants
    d_author0: np.ndarray     # (n_a, m) flat Dirichlet starting point
    d_content0: np.ndarray    # (n_c, m) flat Dirichlet starting point
    tables: dict              # view -> (LikelihoodTable, source positions)


@dataclass
class SnapshotData:
    t: int
    authors: np.ndarray
    contents: np.ndarray
    pair_author: np.ndarray   # authorship pair -> author position
    pair_content: np.ndarray  # authorship pair -> content position
    h_author: np.ndarray
    h_prev: np.ndarray
    h_content: np.ndarray
    spaces: dict              # space value -> SpaceData


def prepare_snapshot(g: TemporalGraph, emb: EmbeddingStore, fields: FieldStore, t: int,
                     priors: dict, cfg: TrainConfig,
                     sparams: StrategyParams | None = None,
                     tables: dict | None = None) -> SnapshotData:
    """Collect the parameter-independent inputs of snapshot ``t``.

    ``priors`` maps space value -> {author: latest fitted distribution}; authors
    without a prior get a flat Dirichlet draw.
    """
    sparams = sparams or StrategyParams()
    snap = g.snapshots[t]
    contents = np.array([c for c in snap.new_contents if g.content_authors[c]], dtype=np.int64)
    authors = np.array(snap.active_authors, dtype=np.int64)
    a_pos = {int(a): i for i, a in enumerate(authors)}
    c_pos = {int(c): i for i, c in enumerate(contents)}
    pairs = [(a_pos[a], c_pos[c]) for a, c in snap.authorship]
    pair_author = np.array([p[0] for p in pairs], dtype=np.int64)
    pair_content = np.array([p[1] for p in pairs], dtype=np.int64)
    spaces = {}
    for space in Space:
        m = space.m
        prior = priors.get(space.value, {})
        d_prev = np.array([prior[int(a)] if int(a) in prior else _dirichlet(cfg.seed, t, space, 0, int(a), m)
                           for a in authors]).reshape(-1, m)
        d_a0 = np.array([_dirichlet(cfg.seed, t, space, 1, int(a), m) for a in authors]).reshape(-1, m)
        d_c0 = np.array([_dirichlet(cfg.seed, t, space, 2, int(c), m) for c in contents]).reshape(-1, m)
        view_tables = {}
        for view in space.views:
            if tables is not None and view in tables:
                table = tables[view]
            else:
                table = likelihood_table(g, fields, view, t, sparams)
            lookup = c_pos if view.source_kind is Kind.CONTENT else a_pos
            keep = np.array([int(s) in lookup for s in table.edges[:, 0]], dtype=bool)
            table = LikelihoodTable(view, t, table.edges[keep], table.probs[keep], table.skipped)
            src = np.array([lookup[int(s)] for s in table.edges[:, 0]], dtype=np.int64)
            view_tables[view] = (table, src)
        spaces[space.value] = SpaceData(space, d_prev, d_a0, d_c0, view_tables)
    return SnapshotData(
        t=t, authors=authors, contents=contents,
        pair_author=pair_author, pair_content=pair_content,
        h_author=emb.author_matrix(authors, t),
        h_prev=emb.author_matrix(authors, t - 1),
        h_content=emb.content_matrix(contents),
        spaces=spaces,
    )


# -- vectorised forward pass ----------------------------------------------------

@dataclass
class Forward:
    d_content: ad.Var
    d_author: ad.Var
    alpha_author: ad.Var      # per pair: author's share of the content (r(a|c))
    alpha_content: ad.Var     # per pair: content's share of the author
    beta: ad.Var              # per author gate
    loss: ad.Var
    view_losses: dict


def _segment_softmax(logits: ad.Var, seg: np.ndarray, n: int) -> ad.Var:
    shift = np.full(n, -np.inf)
    np.maximum.at(shift, seg, logits.value)
    ex = ad.exp(logits - shift[seg])
    den = ad.segment_sum(ex, seg, n)
    return ex / ad.take_rows(den, seg)


def _head_scores(h_first, h_second, W: ad.Var, phi: ad.Var, hd: int):
    # phi . [W x || W y] = x . (W^T phi_1) + y . (W^T phi_2)
    u1 = ad.matmul(phi[:hd], W)
    u2 = ad.matmul(phi[hd:], W)
    return ad.matmul(h_first, u1), ad.matmul(h_second, u2)


def forward(data: SnapshotData, space: str, params: dict, K: int, slope: float = 0.2) -> Forward:
    """Unrolled forward pass; ``params`` maps names to :class:`autodiff.Var`."""
    sd = data.spaces[space]
    n_a, n_c = len(data.authors), len(data.contents)
    pa, pc = data.pair_author, data.pair_content
    hd = params["ca_W"].shape[0]

    s_c, s_a = _head_scores(data.h_content, data.h_author, params["ca_W"], params["ca_phi"], hd)
    e_ac = ad.leaky_relu(ad.take_rows(s_c, pc) + ad.take_rows(s_a, pa), slope)
    alpha_ac = _segment_softmax(e_ac, pc, n_c)

    s_a2, s_c2 = _head_scores(data.h_author, data.h_content, params["ac_W"], params["ac_phi"], hd)
    e_ca = ad.leaky_relu(ad.take_rows(s_a2, pa) + ad.take_rows(s_c2, pc), slope)
    alpha_ca = _segment_softmax(e_ca, pa, n_a)

    g_now, g_prev = _head_scores(data.h_author, data.h_prev, params["aa_W"], params["aa_phi"], hd)
    # Squeezed so that a saturated gate still lies strictly inside (0, 1).
    beta = GATE_EPS + (1.0 - 2.0 * GATE_EPS) * ad.sigmoid(g_now + g_prev)
    beta_col = _as_column(beta)

    d_prev = ad.Var(sd.d_prev)
    d_author = ad.Var(sd.d_author0)
    d_content = ad.Var(sd.d_content0)
    w_ac = _as_column(alpha_ac)
    w_ca = _as_column(alpha_ca)
    for _ in range(K):
        mix_c = ad.segment_sum(w_ac * ad.take_rows(d_author, pa), pc, n_c)
        d_content = _l1(ad.tanh(mix_c))
        mix_a = ad.segment_sum(w_ca * ad.take_rows(d_content, pc), pa, n_a)
        d_author = _l1(ad.tanh(beta_col * d_prev + (1.0 - beta_col) * mix_a))

    view_losses = {}
    loss = ad.Var(0.0)
    for view, (table, src) in sd.tables.items():
        source = d_content if view.source_kind is Kind.CONTENT else d_author
        if len(src) == 0:
            view_losses[view] = ad.Var(0.0)
            continue
        lik = ad.total(ad.take_rows(source, src) * table.probs, axis=1)
        lv = -1.0 * ad.total(ad.log(ad.clamp_min(lik, LOG_FLOOR)))
        view_losses[view] = lv
        loss = loss + lv
    return Forward(d_content, d_author, alpha_ac, alpha_ca, beta, loss, view_losses)


def _as_column(v: ad.Var) -> ad.Var:
    return ad.Var(v.value[:, None], (v,), lambda g: (g[:, 0],))


def _l1(x: ad.Var) -> ad.Var:
    return x / ad.total(x, axis=1, keepdims=True)


def check_forward(data: SnapshotData, fw: Forward, tol: float = 1e-9):
    """Raise :class:`InvalidDistribution` if any emitted quantity is invalid."""
    for name, d in (("content", fw.d_content.value), ("author", fw.d_author.value)):
        if d.size and (np.any(d < 0) or np.max(np.abs(d.sum(axis=1) - 1.0)) > tol):
            raise InvalidDistribution(f"invalid {name} distribution at t={data.t}")
    for name, alpha, seg, n in (("alpha_a|c", fw.alpha_author.value, data.pair_content, len(data.contents)),
                                ("alpha_c|a", fw.alpha_content.value, data.pair_author, len(data.authors))):
        sums = np.bincount(seg, weights=alpha, minlength=n)
        if n and np.max(np.abs(sums - 1.0)) > tol:
            raise InvalidDistribution(f"{name} does not sum to one at t={data.t}")
    b = fw.beta.value
    if b.size and (np.any(b <= 0) or np.any(b >= 1)):
        raise InvalidDistribution(f"gate outside (0, 1) at t={data.t}")


# -- loss and gradients -----------------------------------------------------------

def snapshot_loss(data: SnapshotData, params: Params, cfg: TrainConfig) -> float:
    return float(sum(forward(data, s, _vars(params[s]), cfg.unroll_steps, cfg.leaky_slope).loss.value
                     for s in data.spaces))


def _vars(p: dict) -> dict:
    return {k: ad.Var(v) for k, v in p.items()}


def loss_and_grad(data: SnapshotData, params: Params, cfg: TrainConfig, check: bool = True,
                  observer: Callable | None = None):
    """Total loss over the four views and its gradient for every parameter."""
    total_loss = 0.0
    grads, forwards = {}, {}
    for space in data.spaces:
        pv = _vars(params[space])
        fw = forward(data, space, pv, cfg.unroll_steps, cfg.leaky_slope)
        if check:
            check_forward(data, fw)
        if observer is not None:
            observer(data, space, fw)
        ad.backward(fw.loss)
        grads[space] = {k: (v.grad if v.grad is not None else np.zeros_like(v.value)) for k, v in pv.items()}
        total_loss += float(fw.loss.value)
        forwards[space] = fw
    return total_loss, grads, forwards


def backward_snapshot(data: SnapshotData, params: Params, cfg: TrainConfig) -> Params:
    return loss_and_grad(data, params, cfg)[1]


def finite_difference_grad(data: SnapshotData, params: Params, cfg: TrainConfig, h: float = 1e-5) -> Params:
    """Central differences of :func:`snapshot_loss`; the gradient oracle."""
    out = {}
    for space, p in params.items():
        out[space] = {}
        for name, arr in p.items():
            g = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + h
                up = snapshot_loss(data, params, cfg)
                arr[idx] = old - h
                down = snapshot_loss(data, params, cfg)
                arr[idx] = old
                g[idx] = (up - down) / (2 * h)
            out[space][name] = g
    return out


# -- optimisers ---------------------------------------------------------------------

class Adam:
    def __init__(self, lr=1e-2, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m, self.v, self.k = {}, {}, 0

    def step(self, params: Params, grads: Params):
        self.k += 1
        for s, p in params.items():
            for name, value in p.items():
                key = (s, name)
                g = grads[s][name]
                m = self.m.get(key, np.zeros_like(g)) * self.b1 + (1 - self.b1) * g
                v = self.v.get(key, np.zeros_like(g)) * self.b2 + (1 - self.b2) * g * g
                self.m[key], self.v[key] = m, v
                mhat = m / (1 - self.b1 ** self.k)
                vhat = v / (1 - self.b2 ** self.k)
                value -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class SGD:
    def __init__(self, lr=1e-2):
        self.lr = lr

    def step(self, params: Params, grads: Params):
        for s, p in params.items():
            for name, value in p.items():
                value -= self.lr * grads[s][name]


def make_optimizer(cfg: TrainConfig):
    return Adam(cfg.learning_rate) if cfg.optimizer == "adam" else SGD(cfg.learning_rate)


# -- model state -----------------------------------------------------------------

@dataclass
class ModelState:
    config: TrainConfig
    params: dict = field(default_factory=dict)         # t -> Params
    d_author: dict = field(default_factory=dict)       # space -> {(a, t): vec}
    d_content: dict = field(default_factory=dict)      # space -> {c: vec}
    r: dict = field(default_factory=dict)              # space -> {(a, c): share}
    loss_history: dict = field(default_factory=dict)   # t -> [loss per epoch]
    view_losses: dict = field(default_factory=dict)    # t -> {view value: final loss}

    def author_dist(self, space, a: int, t: int) -> np.ndarray:
        return self.d_author[Space(space).value][(a, t)]

    def priors_before(self, t: int) -> dict:
        """Latest fitted distribution of every author strictly before ``t``."""
        out = {}
        for space, table in self.d_author.items():
            latest = {}
            for (a, tt), vec in table.items():
                if tt < t and (a not in latest or latest[a][0] < tt):
                    latest[a] = (tt, vec)
            out[space] = {a: v for a, (_, v) in latest.items()}
        return out

    def truncated(self, t: int) -> "ModelState":
        """State holding only snapshots before ``t`` (warm start for refits)."""
        return ModelState(
            config=self.config,
            params={k: copy_params(v) for k, v in self.params.items() if k < t},
            d_author={s: {k: v for k, v in d.items() if k[1] < t} for s, d in self.d_author.items()},
            d_content=dict(self.d_content), r=dict(self.r),
            loss_history={k: v for k, v in self.loss_history.items() if k < t},
            view_losses={k: v for k, v in self.view_losses.items() if k < t},
        )


def fit_snapshot(data: SnapshotData, params: Params, cfg: TrainConfig,
                 observer: Callable | None = None):
    """Optimise ``params`` in place on one snapshot; return (history, forwards)."""
    opt = make_optimizer(cfg)
    history = []
    forwards = None
    for epoch in range(cfg.max_epochs + 1):
        loss, grads, forwards = loss_and_grad(data, params, cfg, observer=observer)
        if not math.isfinite(loss):
            raise NonFiniteLoss(
                f"non-finite loss at t={data.t}, epoch {epoch}",
                {"t": data.t, "epoch": epoch, "history": history,
                 "param_norms": {s: {k: float(np.linalg.norm(v)) for k, v in p.items()}
                                 for s, p in params.items()}},
            )
        history.append(loss)
        if epoch == cfg.max_epochs:
            break
        if len(history) > 1 and abs(history[-2] - loss) < cfg.tolerance * max(abs(history[-2]), 1e-12):
            break
        opt.step(params, grads)
    return history, forwards


def record_snapshot(state: ModelState, data: SnapshotData, params: Params, history, forwards):
    t = data.t
    state.params[t] = copy_params(params)
    state.loss_history[t] = list(history)
    state.view_losses[t] = {v.value: float(fw.view_losses[v].value)
                            for fw in forwards.values() for v in fw.view_losses}
    for space, fw in forwards.items():
        da = state.d_author.setdefault(space, {})
        for i, a in enumerate(data.authors):
            da[(int(a), t)] = fw.d_author.value[i].copy()
        dc = state.d_content.setdefault(space, {})
        for i, c in enumerate(data.contents):
            dc[int(c)] = fw.d_content.value[i].copy()
        rr = state.r.setdefault(space, {})
        for p, (ia, ic) in enumerate(zip(data.pair_author, data.pair_content)):
            rr[(int(data.authors[ia]), int(data.contents[ic]))] = float(fw.alpha_author.value[p])


def train(g: TemporalGraph, emb: EmbeddingStore, fields: FieldStore, cfg: TrainConfig | None = None,
          sparams: StrategyParams | None = None, observer: Callable | None = None,
          snapshots=None, state: ModelState | None = None, log: Callable | None = None) -> ModelState:
    """Fit snapshot after snapshot, carrying parameters and author priors forward."""
    cfg = cfg or TrainConfig()
    state = state or ModelState(cfg)
    params = None
    if state.params:
        params = copy_params(state.params[max(state.params)])
    for t in (range(g.n_snapshots) if snapshots is None else snapshots):
        data = prepare_snapshot(g, emb, fields, t, state.priors_before(t), cfg, sparams)
        if params is None:
            params = init_params(emb.dim, cfg)
        history, forwards = fit_snapshot(data, params, cfg, observer)
        record_snapshot(state, data, params, history, forwards)
        if log is not None:
            log(f"snapshot {t}: loss {history[0]:.4f} -> {history[-1]:.4f} in {len(history) - 1} steps")
    return state


# -- serialization ------------------------------------------------------------------

def save_state(state: ModelState, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    doc = {
        "format": "stratnet-model",
        "version": STATE_VERSION,
        "config": asdict(state.config),
        "loss_history": {str(t): h for t, h in sorted(state.loss_history.items())},
        "view_losses": {str(t): v for t, v in sorted(state.view_losses.items())},
        "d_author": {s: [[a, t, [float(x) for x in v]] for (a, t), v in sorted(d.items())]
                     for s, d in sorted(state.d_author.items())},
        "d_content": {s: [[c, [float(x) for x in v]] for c, v in sorted(d.items())]
                      for s, d in sorted(state.d_content.items())},
        "r": {s: [[a, c, v] for (a, c), v in sorted(d.items())] for s, d in sorted(state.r.items())},
    }
    with open(directory / "state.json", "w") as fh:
        json.dump(doc, fh, sort_keys=True)
    arrays = {f"{t}/{s}/{k}": v for t, p in state.params.items() for s, ps in p.items() for k, v in ps.items()}
    np.savez(directory / "params.npz", **arrays)


def load_state(directory) -> ModelState:
    directory = Path(directory)
    if not (directory / "state.json").exists():
        raise MissingArtifact(f"no trained model in {directory}")
    with open(directory / "state.json") as fh:
        doc = json.load(fh)
    if doc.get("format") != "stratnet-model" or doc.get("version") != STATE_VERSION:
        raise SchemaError("unsupported model state file")
    state = ModelState(TrainConfig(**doc["config"]))
    state.loss_history = {int(t): h for t, h in doc["loss_history"].items()}
    state.view_losses = {int(t): v for t, v in doc["view_losses"].items()}
    state.d_author = {s: {(a, t): np.array(v) for a, t, v in rows} for s, rows in doc["d_author"].items()}
    state.d_content = {s: {c: np.array(v) for c, v in rows} for s, rows in doc["d_content"].items()}
    state.r = {s: {(a, c): v for a, c, v in rows} for s, rows in doc["r"].items()}
    with np.load(directory / "params.npz") as npz:
        for key in npz.files:
            t, s, name = key.split("/")
            state.params.setdefault(int(t), {}).setdefault(s, {})[name] = npz[key].copy()
    return state


def export_distributions_csv(state: ModelState, g: TemporalGraph, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["author", "t", "space", "strategy", "probability"])
        for space in sorted(state.d_author):
            for (a, t), vec in sorted(state.d_author[space].items()):
                for code, p in enumerate(vec):
                    w.writerow([g.author_keys[a], t + g.epoch, space, code, repr(float(p))])


def export_loss_csv(state: ModelState, g: TemporalGraph, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "epoch", "loss"])
        for t, hist in sorted(state.loss_history.items()):
            for epoch, loss in enumerate(hist):
                w.writerow([t + g.epoch, epoch, repr(float(loss))])
