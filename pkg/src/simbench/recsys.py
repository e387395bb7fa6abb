"""Sequential recommenders: factorized personalized Markov chains trained
with a pairwise ranking objective, a first-order Markov baseline, a
popularity baseline, and an adapter for external recommenders.

The factorized model keeps four embedding tables of shared dimension d:
user->item affinity (``v_ui``/``v_iu``) and last-item->item transition
affinity (``v_li``/``v_il``). A candidate i after last item j scores

    s(u, j, i) = <v_ui[u], v_iu[i]> + <v_li[j], v_il[i]>

and training does plain SGD over sampled (user, prev, positive, negative)
quadruples with uniformly sampled negatives the user never interacted with.
All arithmetic is float64 and every random draw is generator-seeded, so
fitting twice with one seed reproduces identical embeddings.
"""

import json
import subprocess
from dataclasses import dataclass, field

import numpy as np

import requests as _requests

from .errors import SimbenchError

CHECKPOINT_MAGIC = "fpmc-checkpoint"


@dataclass(frozen=True)
class FPMCHyperparams:
    dim: int = 64
    learning_rate: float = 0.01
    reg: float = 0.01
    batch_size: int = 128
    epochs: int = 10
    init_scale: float = 0.01


@dataclass(frozen=True)
class RecommenderState:
    """Per-user rolling history; the effective state is the last item."""

    history: tuple = ()

    @property
    def last(self):
        return self.history[-1] if self.history else None


def advance(state: RecommenderState, item_id) -> RecommenderState:
    """Append one observed interaction; never touches model weights."""
    return RecommenderState(history=state.history + (item_id,))


def _as_sequences(dataset):
    if hasattr(dataset, "users"):
        return {u: [it.item_id for it in seq]
                for u, seq in dataset.users.items()}
    return {u: list(seq) for u, seq in dataset.items()}


def _sigmoid_neg(diff):
    """sigma(-diff), computed stably."""
    out = np.empty_like(diff)
    pos = diff >= 0
    out[pos] = np.exp(-diff[pos]) / (1.0 + np.exp(-diff[pos]))
    out[~pos] = 1.0 / (1.0 + np.exp(diff[~pos]))
    return out


def bpr_loss(v_ui_u, v_iu_p, v_iu_n, v_li_j, v_il_p, v_il_n, reg):
    """Pairwise loss for one (u, j, i+, i-) sample, with L2 on the six rows."""
    diff = v_ui_u @ v_iu_p - v_ui_u @ v_iu_n + v_li_j @ v_il_p - v_li_j @ v_il_n
    penalty = 0.5 * reg * sum(
        float(v @ v) for v in (v_ui_u, v_iu_p, v_iu_n, v_li_j, v_il_p, v_il_n))
    return float(np.logaddexp(0.0, -diff)) + penalty


def bpr_grads(v_ui_u, v_iu_p, v_iu_n, v_li_j, v_il_p, v_il_n, reg):
    """Analytic gradients of :func:`bpr_loss` w.r.t. the six rows."""
    diff = v_ui_u @ v_iu_p - v_ui_u @ v_iu_n + v_li_j @ v_il_p - v_li_j @ v_il_n
    delta = float(_sigmoid_neg(np.asarray([diff]))[0])
    return {
        "v_ui_u": -delta * (v_iu_p - v_iu_n) + reg * v_ui_u,
        "v_iu_p": -delta * v_ui_u + reg * v_iu_p,
        "v_iu_n": delta * v_ui_u + reg * v_iu_n,
        "v_li_j": -delta * (v_il_p - v_il_n) + reg * v_li_j,
        "v_il_p": -delta * v_li_j + reg * v_il_p,
        "v_il_n": delta * v_li_j + reg * v_il_n,
    }


@dataclass
class FPMCModel:
    users: tuple
    items: tuple
    v_ui: np.ndarray
    v_iu: np.ndarray
    v_li: np.ndarray
    v_il: np.ndarray
    hyperparams: FPMCHyperparams
    seed: int
    epoch_losses: tuple = ()
    user_index: dict = field(default_factory=dict, repr=False)
    item_index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.user_index:
            self.user_index = {u: k for k, u in enumerate(self.users)}
        if not self.item_index:
            self.item_index = {i: k for k, i in enumerate(self.items)}

    def _uid(self, user):
        try:
            return self.user_index[user]
        except KeyError:
            raise SimbenchError(f"unknown user id: {user!r}")

    def _iid(self, item):
        try:
            return self.item_index[item]
        except KeyError:
            raise SimbenchError(f"unknown item id: {item!r}")

    def score(self, user, last_item, candidate) -> float:
        u = self._uid(user)
        i = self._iid(candidate)
        total = float(self.v_ui[u] @ self.v_iu[i])
        if last_item is not None:
            total += float(self.v_li[self._iid(last_item)] @ self.v_il[i])
        return total

    def score_candidates(self, user, state: RecommenderState, candidates):
        return [self.score(user, state.last, c) for c in candidates]

    def online_step(self, user, prev_item, pos_item, rng, lr=None):
        """One SGD step on a fresh observation (off by default in the arena)."""
        lr = self.hyperparams.learning_rate if lr is None else lr
        u, j, ip = self._uid(user), self._iid(prev_item), self._iid(pos_item)
        neg = int(rng.integers(len(self.items)))
        while neg == ip:
            neg = int(rng.integers(len(self.items)))
        grads = bpr_grads(self.v_ui[u], self.v_iu[ip], self.v_iu[neg],
                          self.v_li[j], self.v_il[ip], self.v_il[neg],
                          self.hyperparams.reg)
        self.v_ui[u] -= lr * grads["v_ui_u"]
        self.v_iu[ip] -= lr * grads["v_iu_p"]
        self.v_iu[neg] -= lr * grads["v_iu_n"]
        self.v_li[j] -= lr * grads["v_li_j"]
        self.v_il[ip] -= lr * grads["v_il_p"]
        self.v_il[neg] -= lr * grads["v_il_n"]


def fit(dataset, hyperparams: FPMCHyperparams = FPMCHyperparams(),
        seed: int = 0, sequences=None) -> FPMCModel:
    """Train on consecutive (prev -> next) pairs from the given sequences.

    ``dataset`` is either an InteractionDataset or a mapping from user id to
    an ordered item-id sequence; it defines the item vocabulary. When
    ``sequences`` is given, transitions come from it instead (so held-out
    items stay in the vocabulary at their initialization). Negatives are
    drawn uniformly from the items a user never interacted with.
    """
    vocab = sorted(dataset.items) if hasattr(dataset, "users") \
        else sorted({i for seq in _as_sequences(dataset).values() for i in seq})
    sequences = _as_sequences(dataset if sequences is None else sequences)
    sequences = {u: seq for u, seq in sequences.items() if seq}
    if not sequences:
        raise SimbenchError("cannot fit on an empty dataset")
    if hyperparams.dim < 1:
        raise SimbenchError("embedding dimension must be at least 1")
    users = tuple(sorted(sequences))
    items = tuple(vocab)
    uidx = {u: k for k, u in enumerate(users)}
    iidx = {i: k for k, i in enumerate(items)}

    trans_u, trans_j, trans_p = [], [], []
    user_sets = [set() for _ in users]
    for u, seq in sequences.items():
        k = uidx[u]
        idx_seq = [iidx[i] for i in seq]
        user_sets[k].update(idx_seq)
        for j, p in zip(idx_seq, idx_seq[1:]):
            trans_u.append(k)
            trans_j.append(j)
            trans_p.append(p)
    trans_u = np.asarray(trans_u)
    trans_j = np.asarray(trans_j)
    trans_p = np.asarray(trans_p)

    hp = hyperparams
    rng = np.random.default_rng(seed)
    shape_u, shape_i = (len(users), hp.dim), (len(items), hp.dim)
    v_ui = rng.normal(0.0, hp.init_scale, shape_u)
    v_iu = rng.normal(0.0, hp.init_scale, shape_i)
    v_li = rng.normal(0.0, hp.init_scale, shape_i)
    v_il = rng.normal(0.0, hp.init_scale, shape_i)

    losses = []
    n = len(trans_u)
    for epoch in range(hp.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, hp.batch_size):
            sel = order[start:start + hp.batch_size]
            u, j, ip = trans_u[sel], trans_j[sel], trans_p[sel]
            neg = rng.integers(len(items), size=len(sel))
            for k in range(len(sel)):
                while neg[k] in user_sets[u[k]]:
                    neg[k] = rng.integers(len(items))

            with np.errstate(over="ignore", invalid="ignore"):
                vu, wp, wn = v_ui[u], v_iu[ip], v_iu[neg]
                lj, xp, xn = v_li[j], v_il[ip], v_il[neg]
                diff = np.einsum("ij,ij->i", vu, wp - wn) + \
                    np.einsum("ij,ij->i", lj, xp - xn)
                delta = _sigmoid_neg(diff)
                epoch_loss += float(np.logaddexp(0.0, -diff).sum())

                lr, reg = hp.learning_rate, hp.reg
                d = delta[:, None]
                np.add.at(v_ui, u, -lr * (-d * (wp - wn) + reg * vu))
                np.add.at(v_iu, ip, -lr * (-d * vu + reg * wp))
                np.add.at(v_iu, neg, -lr * (d * vu + reg * wn))
                np.add.at(v_li, j, -lr * (-d * (xp - xn) + reg * lj))
                np.add.at(v_il, ip, -lr * (-d * lj + reg * xp))
                np.add.at(v_il, neg, -lr * (d * lj + reg * xn))

        mean_loss = epoch_loss / max(1, n)
        if not np.isfinite(mean_loss) or not all(
                np.isfinite(t).all() for t in (v_ui, v_iu, v_li, v_il)):
            raise SimbenchError(
                f"training diverged at epoch {epoch}: mean loss {mean_loss}")
        losses.append(mean_loss)

    return FPMCModel(users=users, items=items, v_ui=v_ui, v_iu=v_iu,
                     v_li=v_li, v_il=v_il, hyperparams=hp, seed=seed,
                     epoch_losses=tuple(losses))


def score(model, user, last_item, candidate) -> float:
    return model.score(user, last_item, candidate)


def rank_slate(model, user, state: RecommenderState, gt_item, negatives):
    """Rank the ground truth plus negatives; descending score, id tie-break."""
    candidates = (gt_item,) + tuple(negatives)
    if len(set(candidates)) != len(candidates):
        raise SimbenchError("slate candidates contain duplicates")
    scores = model.score_candidates(user, state, candidates)
    order = sorted(zip(candidates, scores), key=lambda cs: (-cs[1], cs[0]))
    return [c for c, _ in order]


class MarkovModel:
    """First-order transition frequencies with Laplace smoothing (alpha=1)."""

    def __init__(self, counts, row_totals, items):
        self._counts = counts  # dict[prev][nxt] -> int
        self._totals = row_totals
        self.items = tuple(sorted(items))
        self._known = frozenset(self.items)
        self._global = sum(row_totals.values())

    def score(self, user, last_item, candidate) -> float:
        if candidate not in self._known:
            raise SimbenchError(f"unknown item id: {candidate!r}")
        n = len(self.items)
        if last_item is None:
            seen = sum(self._counts.get(p, {}).get(candidate, 0)
                       for p in self._counts)
            return (seen + 1) / (self._global + n)
        row = self._counts.get(last_item, {})
        return (row.get(candidate, 0) + 1) / (self._totals.get(last_item, 0) + n)

    def score_candidates(self, user, state, candidates):
        return [self.score(user, state.last, c) for c in candidates]


def fit_markov(dataset, sequences=None) -> MarkovModel:
    items = set(dataset.items) if hasattr(dataset, "users") else set()
    sequences = _as_sequences(dataset if sequences is None else sequences)
    counts, totals = {}, {}
    for seq in sequences.values():
        items.update(seq)
        for prev, nxt in zip(seq, seq[1:]):
            counts.setdefault(prev, {})
            counts[prev][nxt] = counts[prev].get(nxt, 0) + 1
            totals[prev] = totals.get(prev, 0) + 1
    return MarkovModel(counts, totals, items)


class PopularityModel:
    """Global interaction frequency; ties resolved by the slate tie-break."""

    def __init__(self, counts):
        self._counts = dict(counts)
        self.items = tuple(sorted(counts))

    def score(self, user, last_item, candidate) -> float:
        if candidate not in self._counts:
            raise SimbenchError(f"unknown item id: {candidate!r}")
        return float(self._counts[candidate])

    def score_candidates(self, user, state, candidates):
        return [self.score(user, state.last, c) for c in candidates]


def fit_popularity(dataset, sequences=None) -> PopularityModel:
    counts = {i: 0 for i in dataset.items} if hasattr(dataset, "users") else {}
    sequences = _as_sequences(dataset if sequences is None else sequences)
    for seq in sequences.values():
        for item in seq:
            counts[item] = counts.get(item, 0) + 1
    return PopularityModel(counts)


class ExternalRecommender:
    """Adapter for out-of-process recommenders.

    Wire format, both transports: one JSON request object
    ``{"user": str, "history": [ids], "candidates": [ids]}`` answered by
    ``{"scores": [floats]}`` with scores aligned to the candidate order.
    Over standard streams each message is a single newline-terminated line;
    over HTTP the same bodies travel in a POST request/response pair.
    """

    def __init__(self, command=None, url=None, timeout: float = 30.0):
        if (command is None) == (url is None):
            raise SimbenchError(
                "external recommender needs exactly one of command or url")
        self.url = url
        self.timeout = timeout
        self._proc = None
        if command is not None:
            self._proc = subprocess.Popen(
                command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1)

    def close(self):
        if self._proc is not None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)
            self._proc = None

    def _ask(self, body: dict) -> dict:
        if self._proc is not None:
            self._proc.stdin.write(json.dumps(body) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
            if not line:
                raise SimbenchError("external recommender closed its stream")
            return json.loads(line)
        resp = _requests.post(self.url, json=body, timeout=self.timeout)
        if resp.status_code != 200:
            raise SimbenchError(
                f"external recommender returned status {resp.status_code}")
        return resp.json()

    def score_candidates(self, user, state: RecommenderState, candidates):
        body = {"user": user, "history": list(state.history),
                "candidates": list(candidates)}
        reply = self._ask(body)
        scores = reply.get("scores")
        if not isinstance(scores, list) or len(scores) != len(candidates):
            raise SimbenchError("external recommender reply malformed")
        return [float(s) for s in scores]

    def score(self, user, last_item, candidate) -> float:
        state = RecommenderState(() if last_item is None else (last_item,))
        return self.score_candidates(user, state, [candidate])[0]


def save_fpmc(model: FPMCModel, path):
    """Flat binary checkpoint: one JSON header line, then the four tables."""
    header = {
        "format": CHECKPOINT_MAGIC,
        "version": 1,
        "dim": model.hyperparams.dim,
        "seed": model.seed,
        "hyperparams": {
            "dim": model.hyperparams.dim,
            "learning_rate": model.hyperparams.learning_rate,
            "reg": model.hyperparams.reg,
            "batch_size": model.hyperparams.batch_size,
            "epochs": model.hyperparams.epochs,
            "init_scale": model.hyperparams.init_scale,
        },
        "users": list(model.users),
        "items": list(model.items),
        "tables": ["v_ui", "v_iu", "v_li", "v_il"],
        "dtype": "float64",
        "epoch_losses": list(model.epoch_losses),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for name in header["tables"]:
            fh.write(np.ascontiguousarray(
                getattr(model, name), dtype=np.float64).tobytes())


def load_fpmc(path) -> FPMCModel:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != CHECKPOINT_MAGIC:
            raise SimbenchError(f"not a recognizable checkpoint: {path}")
        dim = header["dim"]
        users, items = tuple(header["users"]), tuple(header["items"])
        tables = {}
        for name in header["tables"]:
            rows = len(users) if name == "v_ui" else len(items)
            raw = fh.read(rows * dim * 8)
            tables[name] = np.frombuffer(raw, dtype=np.float64).reshape(
                rows, dim).copy()
    hp = FPMCHyperparams(**header["hyperparams"])
    return FPMCModel(users=users, items=items, hyperparams=hp,
                     seed=header["seed"],
                     epoch_losses=tuple(header["epoch_losses"]), **tables)
