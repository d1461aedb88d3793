"""Evaluation harness: linear probes, trigger matching, ranking, and
embedding-distance distributions."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.stats
import torch

from .config import EvalConfig, ProbeConfig
from .datagen import EvalPair, MatchingRow, RankingRow
from .encoders import TwoTowerModel
from .errors import DataError
from .training import FeatureSet


@dataclass
class EmbeddingStore:
    ids: list[int]
    matrix: np.ndarray  # (N, D) float32, unit rows

    def __post_init__(self):
        self.id_to_row = {s: i for i, s in enumerate(self.ids)}

    def rows_for(self, ids) -> np.ndarray:
        try:
            return np.asarray([self.id_to_row[int(i)] for i in ids])
        except KeyError as exc:
            raise DataError(f"song_id {exc.args[0]} has no embedding")

    def vectors_for(self, ids) -> np.ndarray:
        return self.matrix[self.rows_for(ids)]


def embed_corpus(model: TwoTowerModel, features: FeatureSet,
                 batch_size: int = 256, which: str = "audio",
                 ids=None) -> EmbeddingStore:
    """Embed songs with the chosen tower in eval mode, batched in id
    order."""
    if which not in ("audio", "text"):
        raise DataError(f"unknown embedding tower {which!r}")
    rows = (np.arange(len(features.song_ids)) if ids is None
            else features.rows_for(ids))
    out = []
    model.eval()
    with torch.no_grad():
        for start in range(0, len(rows), batch_size):
            r = torch.from_numpy(rows[start: start + batch_size])
            if which == "audio":
                emb = model.embed_audio(features.mels[r],
                                        features.valid_frames[r])
            else:
                emb = model.embed_text(features.tokens[r],
                                       features.token_lengths[r])
            out.append(emb.numpy().astype(np.float32))
    id_list = ([features.song_ids[i] for i in rows])
    return EmbeddingStore(id_list, np.concatenate(out, axis=0))


def retrieval_top1(query_emb: np.ndarray, key_emb: np.ndarray) -> float:
    """Fraction of queries whose own partner is the single best match."""
    sims = query_emb @ key_emb.T
    return float(np.mean(np.argmax(sims, axis=1)
                         == np.arange(sims.shape[0])))


def linear_probe(embeddings: np.ndarray, labels: np.ndarray,
                 cfg: ProbeConfig, test_embeddings: np.ndarray | None = None,
                 test_labels: np.ndarray | None = None) -> float:
    """Accuracy of a single affine softmax classifier on frozen embeddings.

    With an explicit test set the whole first set is used for training;
    otherwise an internal split at cfg.train_frac is drawn from cfg.seed.
    """
    embeddings = np.asarray(embeddings, dtype=np.float32)
    labels = np.asarray(labels)
    if embeddings.ndim != 2 or len(labels) != len(embeddings):
        raise DataError("probe needs row-aligned embeddings and labels")
    classes = np.unique(labels if test_labels is None
                        else np.concatenate([labels, test_labels]))
    if len(classes) < 2:
        raise DataError("linear probe needs at least two classes")
    remap = {c: i for i, c in enumerate(classes)}
    y_all = np.asarray([remap[c] for c in labels])

    if test_embeddings is None:
        n = len(embeddings)
        n_train = int(round(cfg.train_frac * n))
        if n_train < 1 or n - n_train < 1:
            raise DataError("probe split leaves an empty train or test set")
        perm = np.random.default_rng([cfg.seed]).permutation(n)
        train_idx, test_idx = perm[:n_train], perm[n_train:]
        x_train, y_train = embeddings[train_idx], y_all[train_idx]
        x_test, y_test = embeddings[test_idx], y_all[test_idx]
    else:
        x_train, y_train = embeddings, y_all
        x_test = np.asarray(test_embeddings, dtype=np.float32)
        y_test = np.asarray([remap.get(c, -1) for c in test_labels])

    xt = torch.from_numpy(x_train)
    yt = torch.from_numpy(y_train)
    weight = torch.zeros(len(classes), xt.shape[1], requires_grad=True)
    bias = torch.zeros(len(classes), requires_grad=True)
    opt = torch.optim.Adam([weight, bias], lr=cfg.lr)
    for _ in range(cfg.steps):
        opt.zero_grad()
        loss = torch.nn.functional.cross_entropy(xt @ weight.T + bias, yt)
        loss.backward()
        opt.step()
    with torch.no_grad():
        logits = torch.from_numpy(x_test) @ weight.T + bias
        pred = logits.argmax(dim=1).numpy()
    return float(np.mean(pred == y_test))


def hr_at_k(matching: list[MatchingRow], store: EmbeddingStore,
            k_retrieve: int = 10, cutoff: int = 100) -> float:
    """Hit rate of each user's target inside the truncated recommendation
    list.

    Per trigger, the k_retrieve most similar songs are retrieved (a song is
    never retrieved by itself); the union is scored by the maximum similarity
    to any trigger, self-similarity excluded, and truncated to the cutoff
    with ties broken by ascending song id.
    """
    if not matching:
        raise DataError("matching task has no rows")
    hits = 0
    ids = np.asarray(store.ids)
    for row in matching:
        trig_rows = store.rows_for(row.trigger_ids)
        sims = store.matrix @ store.matrix[trig_rows].T  # (N, n_trig)
        sims[trig_rows, np.arange(len(trig_rows))] = -np.inf
        k = min(k_retrieve, sims.shape[0] - 1)
        cand = np.unique(np.argpartition(-sims, k - 1, axis=0)[:k].ravel())
        scores = sims[cand].max(axis=1)
        order = np.lexsort((ids[cand], -scores))[:cutoff]
        short_list = ids[cand][order]
        if row.target_id in set(int(i) for i in short_list):
            hits += 1
    return hits / len(matching)


def auc_score(scores, labels) -> float:
    """Exact Mann-Whitney AUC with average ranks on ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs both positive and negative labels")
    ranks = scipy.stats.rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0)
                 / (n_pos * n_neg))


@dataclass
class RankingReport:
    click_auc: float
    favor_auc: float
    n_train: int
    n_eval: int


def _ranking_features(rows: list[RankingRow],
                      store: EmbeddingStore) -> np.ndarray:
    feats = []
    for row in rows:
        if not row.history_ids:
            raise DataError(f"ranking row at time {row.time_idx} has an "
                            "empty history")
        hist = store.vectors_for(row.history_ids).mean(axis=0)
        cand = store.vectors_for([row.candidate_id])[0]
        feats.append(np.concatenate([hist, cand, [hist @ cand]]))
    return np.asarray(feats, dtype=np.float32)


def _fit_logistic_auc(x_train, y_train, x_eval, y_eval, lr: float,
                      steps: int) -> float:
    if len(np.unique(y_train)) < 2:
        raise DataError("ranking training rows have a single label")
    xt = torch.from_numpy(x_train)
    yt = torch.from_numpy(y_train.astype(np.float32))
    weight = torch.zeros(xt.shape[1], requires_grad=True)
    bias = torch.zeros(1, requires_grad=True)
    opt = torch.optim.Adam([weight, bias], lr=lr)
    for _ in range(steps):
        opt.zero_grad()
        logits = xt @ weight + bias
        loss = torch.nn.functional.binary_cross_entropy_with_logits(logits,
                                                                    yt)
        loss.backward()
        opt.step()
    with torch.no_grad():
        scores = (torch.from_numpy(x_eval) @ weight + bias).numpy()
    return auc_score(scores, y_eval)


def ranking_auc(rows: list[RankingRow], store: EmbeddingStore,
                cfg: EvalConfig) -> RankingReport:
    """Train a logistic ranker on early rows, report AUC on the final rows.

    Features per row: mean history embedding, candidate embedding, and their
    inner product. Click and favor labels get separate rankers.
    """
    if len(rows) < 4:
        raise DataError("ranking needs at least a few rows to split")
    order = sorted(range(len(rows)), key=lambda i: rows[i].time_idx)
    n_train = int(round(cfg.ranking_train_frac * len(rows)))
    if n_train < 1 or n_train >= len(rows):
        raise DataError("ranking split leaves an empty train or eval set")
    feats = _ranking_features(rows, store)
    clicks = np.asarray([r.click for r in rows])
    favors = np.asarray([r.favor for r in rows])
    tr = np.asarray(order[:n_train])
    ev = np.asarray(order[n_train:])
    click_auc = _fit_logistic_auc(feats[tr], clicks[tr], feats[ev],
                                  clicks[ev], cfg.ranking_lr,
                                  cfg.ranking_steps)
    favor_auc = _fit_logistic_auc(feats[tr], favors[tr], feats[ev],
                                  favors[ev], cfg.ranking_lr,
                                  cfg.ranking_steps)
    return RankingReport(click_auc, favor_auc, len(tr), len(ev))


@dataclass
class SeparationReport:
    bin_edges: np.ndarray
    pos_hist: np.ndarray
    neg_hist: np.ndarray
    mean_pos: float
    mean_neg: float
    mean_gap: float
    separation_auc: float
    n_pos: int
    n_neg: int

    def to_dict(self) -> dict:
        return {"bin_edges": [float(x) for x in self.bin_edges],
                "pos_hist": [int(x) for x in self.pos_hist],
                "neg_hist": [int(x) for x in self.neg_hist],
                "mean_pos": self.mean_pos, "mean_neg": self.mean_neg,
                "mean_gap": self.mean_gap,
                "separation_auc": self.separation_auc,
                "n_pos": self.n_pos, "n_neg": self.n_neg}


def distance_distribution(pairs: list[EvalPair], store: EmbeddingStore,
                          bins: int = 40) -> SeparationReport:
    """Cosine-similarity histograms of labeled pairs over [-1, 1], plus the
    mean gap and the rank AUC separating positives from negatives."""
    if not pairs:
        raise DataError("no evaluation pairs")
    sims, labels = [], []
    for pair in pairs:
        a = store.vectors_for([pair.anchor_id])[0]
        b = store.vectors_for([pair.other_id])[0]
        sims.append(float(a @ b))
        labels.append(pair.label)
    sims = np.asarray(sims)
    labels = np.asarray(labels)
    pos = sims[labels == 1]
    neg = sims[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise DataError("evaluation pairs must include both labels")
    edges = np.linspace(-1.0, 1.0, bins + 1)
    pos_hist, _ = np.histogram(pos, bins=edges)
    neg_hist, _ = np.histogram(neg, bins=edges)
    return SeparationReport(
        bin_edges=edges, pos_hist=pos_hist, neg_hist=neg_hist,
        mean_pos=float(pos.mean()), mean_neg=float(neg.mean()),
        mean_gap=float(pos.mean() - neg.mean()),
        separation_auc=auc_score(sims, labels),
        n_pos=len(pos), n_neg=len(neg))


def write_histogram_tsv(path, edges: np.ndarray, counts: np.ndarray) -> None:
    """Two columns: bin center and count."""
    centers = (np.asarray(edges)[:-1] + np.asarray(edges)[1:]) / 2.0
    with open(path, "w", encoding="utf-8") as fh:
        for center, count in zip(centers, counts):
            fh.write(f"{center:.6f}\t{int(count)}\n")


def write_metric_report(path, metrics: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
