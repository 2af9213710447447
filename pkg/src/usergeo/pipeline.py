"""End-to-end training and cross-validation of the four geolocation models.

Per fold, with labels visible only for training users:

* trans_txt: the text encoder fitted on the training users.
* H0: a logistic meta-classifier over [encoder probs || LIW probs]; training
  rows use out-of-fold predictions from inner folds.
* rgcn_ext: relational GCN over the multiplex graph with H0 as input features.
* graphsage_ext: GraphSAGE over one graph layer with H0 as input features.
* n2v_ext: logistic regression on node2vec+ embeddings of the flattened graph,
  stacked with H0 by a second meta-classifier.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .eval import EvalReport, cross_validate
from .graph import MultiplexGraph, build_multiplex
from .ingest import (GroundTruth, UserRecord, attach_profiles, ground_truths, load_gazetteer,
                     parse_profiles, parse_records)
from .labels import LabelSpace, build_label_space
from .models import (GraphSAGEClassifier, Node2VecPlus, RGCNClassifier, SoftmaxRegression,
                     TransformerTextClassifier, build_text_features, n2v_ext_predict,
                     out_of_fold_proba)
from .textfeat import LIWClassifier, user_tokens

logger = logging.getLogger(__name__)


@dataclass
class Dataset:
    ids: list[str]                     # node order (internal users)
    graph: MultiplexGraph
    docs: list[list[str]]              # tokens per node
    truths: dict[str, GroundTruth]
    _n2v: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return len(self.ids)


def read_users(cfg: PipelineConfig) -> list[UserRecord]:
    users, n_bad = parse_records(cfg.data_path("records"))
    if n_bad:
        logger.warning("%d malformed record lines skipped", n_bad)
    prof_path = cfg.data_path("profiles")
    if prof_path.exists():
        profiles, n_bad = parse_profiles(prof_path)
        if n_bad:
            logger.warning("%d malformed profile lines skipped", n_bad)
        users = attach_profiles(users, profiles)
    return users


def dataset_from_users(users: list[UserRecord], gazetteer, cfg: PipelineConfig) -> Dataset:
    truths = ground_truths(users, gazetteer, cfg.ingest.match_radius_km)
    index, graph = build_multiplex(users, celebrity_threshold=cfg.graph.celebrity_threshold,
                                   use_follower_layer=cfg.graph.use_follower_layer)
    by_id = {u.user_id: u for u in users}
    docs = [user_tokens(by_id[uid], cfg.text.max_len) for uid in index.internal_ids]
    return Dataset(list(index.internal_ids), graph, docs, truths)


def load_dataset(cfg: PipelineConfig) -> Dataset:
    users = read_users(cfg)
    return dataset_from_users(users, load_gazetteer(cfg.data_path("gazetteer")), cfg)


def node_labels(ds: Dataset, space: LabelSpace, users=None) -> np.ndarray:
    """Label per node from ``space``; -1 where unknown (or not in ``users``)."""
    y = np.full(ds.n, -1, dtype=np.int64)
    for k, uid in enumerate(ds.ids):
        if (users is None or uid in users) and uid in ds.truths:
            lab = space.assignment.get(uid)
            if lab is None:
                lab = space.label_for(ds.truths[uid])
            if lab is not None:
                y[k] = lab
    return y


def n2v_embedding(ds: Dataset, cfg: PipelineConfig, seed: int) -> np.ndarray:
    """Standardised node2vec+ embedding of the flattened graph (cached; no labels used)."""
    key = (seed, tuple(sorted(vars(cfg.models.n2v).items())))
    if key not in ds._n2v:
        logger.info("node2vec+: walks and skip-gram on %d nodes", ds.n)
        emb = Node2VecPlus(**vars(cfg.models.n2v), random_state=seed).fit_transform(
            ds.graph.flatten())
        sd = emb.std(axis=0)
        ds._n2v[key] = (emb - emb.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    return ds._n2v[key]


def _trans_factory(cfg: PipelineConfig, n_classes: int, seed: int):
    t = cfg.models.trans

    def make(k):
        return TransformerTextClassifier(
            d_model=t.d_model, n_heads=t.n_heads, max_len=cfg.text.max_len, ff_dim=t.ff_dim,
            min_freq=t.min_freq, embeddings_path=cfg.paths.embeddings, lr=t.lr, epochs=t.epochs,
            batch_size=t.batch_size, patience=t.patience, val_fraction=t.val_fraction,
            weight_decay=t.weight_decay, n_classes=n_classes, random_state=seed + 101 * k)
    return make


def run_fold(ds: Dataset, y: np.ndarray, train: np.ndarray, predict: np.ndarray,
             n_classes: int, cfg: PipelineConfig, seed: int = 0
             ) -> tuple[dict[str, np.ndarray], dict[str, object]]:
    """Fit the selected models with labels of ``train`` nodes only.

    Returns probabilities for the ``predict`` nodes per model, and the fitted
    estimators.
    """
    selected = cfg.models.selected
    meta = vars(cfg.models.meta)
    inner = cfg.models.inner_folds
    train = np.asarray(train)
    y_train = np.full(ds.n, -1, dtype=np.int64)
    y_train[train] = y[train]
    out, fitted = {}, {}

    make_trans = _trans_factory(cfg, n_classes, seed)
    logger.info("text encoder on %d training users", len(train))
    trans = make_trans(inner).fit([ds.docs[i] for i in train], y[train])
    fitted["trans_txt"] = trans
    trans_p = trans.predict_proba(ds.docs)
    if "trans_txt" in selected:
        out["trans_txt"] = trans_p[predict]
    if selected == ["trans_txt"]:
        return out, fitted

    def make_liw(k):
        return LIWClassifier(cfg.text.liw_top_k, cfg.text.liw_min_freq, n_classes=n_classes)

    trans_p = trans_p.copy()
    trans_p[train] = out_of_fold_proba(make_trans, ds.docs, y, train, n_classes, inner, seed)
    liw = make_liw(0).fit([ds.docs[i] for i in train], y[train])
    fitted["liw"] = liw
    liw_p = liw.predict_proba(ds.docs)
    liw_p[train] = out_of_fold_proba(make_liw, ds.docs, y, train, n_classes, inner, seed)
    H0, meta_txt = build_text_features(trans_p, liw_p, train, y, n_classes, **meta)
    fitted["text_meta"] = meta_txt

    if "rgcn_ext" in selected:
        r = cfg.models.rgcn
        logger.info("rgcn_ext")
        rgcn = RGCNClassifier(ds.graph, hidden=tuple(r.hidden), lr=r.lr, epochs=r.epochs,
                              patience=r.patience, val_fraction=r.val_fraction,
                              weight_decay=r.weight_decay, n_classes=n_classes,
                              random_state=seed).fit(H0, y_train)
        out["rgcn_ext"] = rgcn.predict_proba(H0)[predict]
        fitted["rgcn_ext"] = rgcn
    if "graphsage_ext" in selected:
        s = cfg.models.sage
        logger.info("graphsage_ext")
        g = ds.graph.flatten() if s.layer == "all" else ds.graph[s.layer]
        sage = GraphSAGEClassifier(g, hidden=tuple(s.hidden), sample_sizes=tuple(s.sample_sizes),
                                   lr=s.lr, epochs=s.epochs, patience=s.patience,
                                   val_fraction=s.val_fraction, weight_decay=s.weight_decay,
                                   n_classes=n_classes, random_state=seed).fit(H0, y_train)
        out["graphsage_ext"] = sage.predict_proba(H0)[predict]
        fitted["graphsage_ext"] = sage
    if "n2v_ext" in selected:
        logger.info("n2v_ext")
        emb = n2v_embedding(ds, cfg, cfg.seed)

        def make_lr(k):
            return SoftmaxRegression(n_classes=n_classes, random_state=seed + k, **meta)

        lr = make_lr(0).fit(emb[train], y[train])
        g_p = lr.predict_proba(emb)
        g_p[train] = out_of_fold_proba(make_lr, emb, y, train, n_classes, inner, seed)
        probs, meta_n2v = n2v_ext_predict(g_p, H0, train, y, n_classes, **meta)
        out["n2v_ext"] = probs[predict]
        fitted["n2v_lr"], fitted["n2v_meta"] = lr, meta_n2v
    return {m: out[m] for m in selected}, fitted


@dataclass
class CVResult:
    reports: dict[str, EvalReport]
    probabilities: dict[str, dict[str, np.ndarray]]   # model -> user id -> probs
    label_spaces: list[LabelSpace]


def fold_label_space(ds: Dataset, cfg: PipelineConfig, train_users, global_space: LabelSpace
                     ) -> LabelSpace:
    """City labels are global; k-d tree leaves are rebuilt from training users."""
    if cfg.labels.mode == "city":
        return global_space
    return build_label_space({u: ds.truths[u] for u in train_users}, "kdtree",
                             cfg.labels.min_users, cfg.labels.min_bucket)


def cross_validate_pipeline(ds: Dataset, space: LabelSpace, cfg: PipelineConfig) -> CVResult:
    seed = cfg.eval.seed
    y_global = node_labels(ds, space)
    nodes = np.flatnonzero(y_global >= 0)
    spaces: list[LabelSpace] = []
    probs: dict[str, dict[str, np.ndarray]] = {}

    def fold_fn(fold, train_pos, test_pos):
        train, test = nodes[train_pos], nodes[test_pos]
        fspace = fold_label_space(ds, cfg, {ds.ids[i] for i in train}, space)
        spaces.append(fspace)
        y = node_labels(ds, fspace) if fspace is not space else y_global
        logger.info("fold %d: %d train / %d test users, %d labels", fold, len(train), len(test),
                    fspace.n_classes)
        out, _ = run_fold(ds, y, train, test, fspace.n_classes, cfg, seed + fold)
        preds = {}
        for model, p in out.items():
            preds[model] = {ds.ids[i]: int(np.argmax(row)) for i, row in zip(test, p)}
            bucket = probs.setdefault(model, {})
            for i, row in zip(test, p):
                bucket[ds.ids[i]] = row
        return preds

    reports = cross_validate([ds.ids[i] for i in nodes], y_global[nodes], fold_fn,
                             lambda fold: spaces[fold], ds.truths, cfg.eval.k, seed)
    return CVResult(reports, probs, spaces)


def write_predictions(path, probs: dict[str, np.ndarray], header: str | None = None) -> None:
    """CSV ``user_id,label_id,prob_top1,prob_0..prob_{L-1}`` sorted by user id."""
    uids = sorted(probs)
    width = len(probs[uids[0]]) if uids else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(["user_id", "label_id", "prob_top1"] + [f"prob_{k}" for k in range(width)])
        for uid in uids:
            p = probs[uid]
            top = int(np.argmax(p))
            w.writerow([uid, top, repr(float(p[top]))] + [repr(float(v)) for v in p])
