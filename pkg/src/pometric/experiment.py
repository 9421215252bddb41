"""Experiment orchestration: configs, training loops and run reports.

A run trains one loss (optionally alongside a baseline loss on the
identical seeds and data draws), evaluates retrieval on the test split
and emits a RunReport whose JSON form is byte-identical across repeat
runs apart from the timestamp field.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import encoder, losses, metrics, mining, rings
from .dataset import DatasetBundle, Item, load_dataset
from .mining import RelevanceLabel, RelevanceTable
from .numerics import (
    distance_gradients,
    normalization_gradient,
    normalize_rows,
    pairwise_distances,
    seeded_rng,
)

LOSSES = ("contrastive", "triplet", "mm", "ot", "po")
MININGS = ("default", "hardest", "semi_hard", "distance_weighted")
RELEVANCE_SOURCES = ("none", "manual", "heuristic", "ring_rule")
TRISTATE = ("auto", "on", "off")


class ConfigError(ValueError):
    """Bad key, value or combination in an experiment config."""


class NonFiniteLossError(RuntimeError):
    """Training produced a non-finite loss; the seed is aborted."""


def _parse_bool(text: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ValueError("expected true or false")


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


_CONFIG_FIELDS = {
    # data
    "dataset": (str, ""),
    "synthetic": (_parse_bool, False),
    "train_points": (int, 100),
    "test_points_per_class": (int, 20),
    "ring_groups": (int, 4),
    "ring_inner_radius": (float, 1.0),
    # objective
    "loss": (str, "po"),
    "baseline_loss": (str, ""),
    "mining": (str, "default"),
    "relevance": (str, "none"),
    "relevance_table": (str, ""),
    # geometry / model
    "metric": (str, "euclidean"),
    "embed_dim": (int, 2),
    "hidden_sizes": (_parse_int_list, ()),
    "activation": (str, "none"),
    "normalize": (str, "auto"),
    # optimization
    "optimizer": (str, "sgd"),
    "lr": (float, 0.05),
    "lr_decay": (str, "none"),
    "batch_size": (int, 32),
    "epochs": (int, 300),
    "seeds": (_parse_int_list, (0, 1, 2, 3, 4)),
    "single_negative": (str, "auto"),
    # margins (synthetic defaults; see config comments in README)
    "margin_eps": (float, 0.2),
    "margin_m": (float, 0.2),
    "margin_p": (float, 0.05),
    "margin_m1": (float, 0.2),
    "margin_m2": (float, 0.5),
    "margin_n": (float, 0.8),
    "ot_gamma": (float, 10.0),
    "ot_lambda": (float, 10.0),
    "dw_clamp": (float, 1e8),
    # evaluation
    "eval_ks": (_parse_int_list, (1, 5, 10, 50)),
}


@dataclass
class ExperimentConfig:
    values: dict

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name)

    @property
    def margin_config(self) -> losses.MarginConfig:
        v = self.values
        return losses.MarginConfig(
            eps=v["margin_eps"], m=v["margin_m"], p=v["margin_p"],
            m1=v["margin_m1"], m2=v["margin_m2"], n=v["margin_n"],
            gamma=v["ot_gamma"], lam=v["ot_lambda"],
        )

    def echo(self) -> dict:
        out = {}
        for key in sorted(self.values):
            val = self.values[key]
            out[key] = list(val) if isinstance(val, tuple) else val
        return out

    def replaced(self, **updates) -> "ExperimentConfig":
        merged = dict(self.values)
        merged.update(updates)
        return ExperimentConfig(values=merged)

    def resolve_normalize(self) -> bool:
        mode = self.values["normalize"]
        return self.values["metric"] == "cosine" if mode == "auto" else mode == "on"

    def resolve_single_negative(self, loss_name: str) -> bool:
        mode = self.values["single_negative"]
        return loss_name in ("triplet", "ot") if mode == "auto" else mode == "on"

    def validate(self):
        v = self.values
        if v["loss"] not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}")
        if v["baseline_loss"] and v["baseline_loss"] not in LOSSES:
            raise ConfigError(f"baseline_loss must be one of {LOSSES}")
        if v["baseline_loss"] == v["loss"]:
            if v["baseline_loss"]:
                raise ConfigError("baseline_loss must differ from loss")
        if v["mining"] not in MININGS:
            raise ConfigError(f"mining must be one of {MININGS}")
        if v["mining"] != "default" and v["loss"] != "triplet":
            raise ConfigError("mining strategies apply to the triplet loss only")
        if v["relevance"] not in RELEVANCE_SOURCES:
            raise ConfigError(f"relevance must be one of {RELEVANCE_SOURCES}")
        if v["relevance"] == "manual" and not v["relevance_table"]:
            raise ConfigError("relevance=manual needs a relevance_table path")
        if v["metric"] not in ("euclidean", "cosine"):
            raise ConfigError("metric must be euclidean or cosine")
        if v["optimizer"] not in ("sgd", "adam"):
            raise ConfigError("optimizer must be sgd or adam")
        if v["lr_decay"] not in ("none", "linear"):
            raise ConfigError("lr_decay must be none or linear")
        if v["activation"] not in encoder.ACTIVATIONS:
            raise ConfigError(f"activation must be one of {encoder.ACTIVATIONS}")
        if v["normalize"] not in TRISTATE or v["single_negative"] not in TRISTATE:
            raise ConfigError("normalize/single_negative must be auto, on or off")
        if not v["seeds"]:
            raise ConfigError("seeds must be non-empty")
        if v["batch_size"] < 2:
            raise ConfigError("batch_size must be at least 2")
        if v["epochs"] < 0:
            raise ConfigError("epochs must be non-negative")
        if v["epochs"] > 0 and not v["lr"] > 0:
            raise ConfigError("lr must be positive")
        if not v["dataset"] and not v["synthetic"]:
            raise ConfigError("either dataset or synthetic=true is required")
        if v["dataset"] and v["synthetic"]:
            raise ConfigError("dataset and synthetic=true are mutually exclusive")
        if v["mining"] == "distance_weighted":
            if v["embed_dim"] < 3:
                raise ConfigError("distance-weighted mining needs embed_dim >= 3")
            if not self.resolve_normalize():
                raise ConfigError("distance-weighted mining needs normalize=on")
        if min(v["eval_ks"], default=0) < 1:
            raise ConfigError("eval_ks must be positive")
        self.margin_config  # raises on bad margin ordering


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat key = value config format.

    Unknown keys are errors; '#' starts a comment; every value is typed
    per the schema.
    """
    values = {key: default for key, (_, default) in _CONFIG_FIELDS.items()}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        caster, _ = _CONFIG_FIELDS[key]
        try:
            values[key] = caster(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}")
    cfg = ExperimentConfig(values=values)
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# training internals
# ---------------------------------------------------------------------------


@dataclass
class _Task:
    """Everything one seed's training loop needs, in array form."""

    anchor_feats: np.ndarray            # (n_anchors, dim_a)
    partner_pools: list[list[int]]      # partner item indices per anchor
    partner_feats: np.ndarray           # (n_partners, dim_b)
    anchor_caption_ids: list[str]       # caption id per anchor (table lookups)
    partner_caption_ids: list[str]
    anchor_classes: np.ndarray | None   # ring classes, when relevance=ring_rule
    partner_classes: np.ndarray | None
    label_codes: np.ndarray | None      # class x class -> 0 pos / 1 partial / 2 neg
    shared_encoder: bool
    table: RelevanceTable | None


_LABEL_BY_CODE = (
    RelevanceLabel.POSITIVE,
    RelevanceLabel.PARTIAL,
    RelevanceLabel.NEGATIVE,
)


def _ring_label_codes(n_classes: int) -> np.ndarray:
    codes = np.empty((n_classes, n_classes), dtype=np.int8)
    for a in range(1, n_classes + 1):
        for b in range(1, n_classes + 1):
            codes[a - 1, b - 1] = _LABEL_BY_CODE.index(
                rings.ring_relevance(a, b, n_classes=n_classes)
            )
    return codes


def _bundle_for_seed(cfg: ExperimentConfig, seed: int) -> DatasetBundle:
    if cfg.synthetic:
        spec = rings.RingSpec(
            inner_radius=cfg.ring_inner_radius,
            n_groups=cfg.ring_groups,
            points_per_class_train=rings.split_budget(
                cfg.train_points, 2 * cfg.ring_groups
            ),
            points_per_class_test=cfg.test_points_per_class,
            seed=seed,
        )
        train, test = rings.generate_rings(spec)
        bundle = DatasetBundle()
        for rec_split, points in (("train", train), ("test", test)):
            for k, pt in enumerate(points):
                getattr(bundle, rec_split).append(
                    Item(
                        id=f"{rec_split}-{k:05d}",
                        split=rec_split,
                        video_id=rings.class_video_id(pt.class_id),
                        language="synthetic",
                        features=np.asarray(pt.xy, dtype=np.float64),
                    )
                )
        bundle.validate()
        return bundle
    return load_dataset(cfg.dataset)


def _load_table(cfg: ExperimentConfig, bundle: DatasetBundle) -> RelevanceTable | None:
    source = cfg.relevance
    if source in ("none", "ring_rule"):
        return None
    if cfg.relevance_table:
        table = RelevanceTable.load_jsonl(cfg.relevance_table)
        if table.source_tag != source:
            raise ConfigError(
                f"relevance={source} but table is tagged {table.source_tag!r}"
            )
        return table
    # heuristic labels computed from the training captions
    records = [i.caption for i in bundle.train if i.has_caption]
    if not records:
        raise ConfigError("heuristic relevance needs annotated captions")
    return mining.heuristic_table(records)


def _build_task(cfg: ExperimentConfig, bundle: DatasetBundle) -> _Task:
    ring_rule = cfg.relevance == "ring_rule"
    if bundle.is_cross_modal:
        videos = [i for i in bundle.train if not i.has_caption]
        captions = [i for i in bundle.train if i.has_caption]
        by_video: dict[str, list[int]] = {}
        for idx, cap in enumerate(captions):
            by_video.setdefault(cap.video_id, []).append(idx)
        anchors = [v for v in videos if v.video_id in by_video]
        if not anchors:
            raise ConfigError("no trainable (video, caption) pairs in the data")
        if ring_rule:
            raise ConfigError("relevance=ring_rule needs single-modality data")
        return _Task(
            anchor_feats=np.stack([a.features for a in anchors]),
            partner_pools=[by_video[a.video_id] for a in anchors],
            partner_feats=np.stack([c.features for c in captions]),
            anchor_caption_ids=[
                captions[by_video[a.video_id][0]].id for a in anchors
            ],
            partner_caption_ids=[c.id for c in captions],
            anchor_classes=None,
            partner_classes=None,
            label_codes=None,
            shared_encoder=False,
            table=_load_table(cfg, bundle),
        )
    items = bundle.train
    if cfg.relevance in ("manual", "heuristic"):
        raise ConfigError(
            f"relevance={cfg.relevance} needs caption annotations"
        )
    pools: list[list[int]] = []
    by_video: dict[str, list[int]] = {}
    for idx, item in enumerate(items):
        by_video.setdefault(item.video_id, []).append(idx)
    for idx, item in enumerate(items):
        same = [j for j in by_video[item.video_id] if j != idx]
        pools.append(same if same else [idx])
    classes = (
        np.array([rings.class_from_video_id(i.video_id) for i in items])
        if ring_rule
        else None
    )
    feats = np.stack([i.features for i in items])
    return _Task(
        anchor_feats=feats,
        partner_pools=pools,
        partner_feats=feats,
        anchor_caption_ids=[i.id for i in items],
        partner_caption_ids=[i.id for i in items],
        anchor_classes=classes,
        partner_classes=classes,
        label_codes=_ring_label_codes(2 * cfg.ring_groups) if ring_rule else None,
        shared_encoder=True,
        table=None,
    )


def _batch_sets(
    cfg: ExperimentConfig,
    task: _Task,
    anchor_idx: np.ndarray,
    partner_idx: np.ndarray,
) -> losses.QuadrupletSets:
    n = len(anchor_idx)
    if cfg.relevance == "ring_rule":
        codes = task.label_codes[
            task.anchor_classes[anchor_idx][:, None] - 1,
            task.partner_classes[partner_idx][None, :] - 1,
        ].copy()
        np.fill_diagonal(codes, 0)          # matched pairs are always positives
        off = ~np.eye(n, dtype=bool)
        return losses.QuadrupletSets(
            s_plus=frozenset(map(tuple, np.argwhere(codes == 0).tolist())),
            s_partial=frozenset(
                map(tuple, np.argwhere((codes == 1) & off).tolist())
            ),
            s_minus=frozenset(
                map(tuple, np.argwhere((codes == 2) & off).tolist())
            ),
        )
    batch = [
        ("", task.partner_caption_ids[partner_idx[i]]) for i in range(n)
    ]
    return mining.build_quadruplet_sets(batch, task.table)


def _reduce_to_single_negative(
    sets: losses.QuadrupletSets, rng: np.random.Generator
) -> losses.QuadrupletSets:
    """Keep one uniformly drawn negative per anchor row."""
    kept = set()
    rows = sorted({i for i, _ in sets.s_minus})
    for i in rows:
        cands = sorted(j for r, j in sets.s_minus if r == i)
        kept.add((i, cands[rng.integers(len(cands))]))
    return losses.QuadrupletSets(
        s_plus=sets.s_plus, s_minus=frozenset(kept), s_partial=sets.s_partial
    )


def _pick_negative(
    cfg: ExperimentConfig,
    D: np.ndarray,
    row: int,
    s_minus,
    rng: np.random.Generator,
) -> int:
    margins = cfg.margin_config
    if cfg.mining == "hardest":
        return mining.hardest_negative(D, row, s_minus)
    if cfg.mining == "semi_hard":
        return mining.semi_hard_negative(
            D, row, d_pos=D[row, row], margin=margins.eps, s_minus=s_minus, rng=rng
        )
    if cfg.mining == "distance_weighted":
        return mining.distance_weighted_negative(
            D, row, s_minus, embed_dim=cfg.embed_dim, clamp=cfg.dw_clamp, rng=rng
        )
    cands = sorted(j for i, j in s_minus if i == row)
    return cands[rng.integers(len(cands))]


def batch_loss(
    cfg: ExperimentConfig,
    loss_name: str,
    D: np.ndarray,
    sets: losses.QuadrupletSets,
    rng: np.random.Generator,
) -> losses.LossOutput:
    """Dispatch one batch distance matrix to the configured loss."""
    margins = cfg.margin_config
    if loss_name == "mm":
        return losses.bidirectional_max_margin(D, margins.m)
    if loss_name == "po":
        return losses.partial_order_loss(D, sets, margins)
    if loss_name == "ot":
        use = (
            _reduce_to_single_negative(sets, rng)
            if cfg.resolve_single_negative("ot")
            else sets
        )
        return losses.ot_weighted_loss(D, use, margins)
    if loss_name == "triplet":
        value = 0.0
        d_grad = np.zeros_like(D)
        for i in range(D.shape[0]):
            if not any(r == i for r, _ in sets.s_minus):
                continue
            j = _pick_negative(cfg, D, i, sets.s_minus, rng)
            out = losses.triplet_loss(D[i, i], D[i, j], margins.eps)
            value += out.value
            d_grad[i, i] += out.d_grad[0]
            d_grad[i, j] += out.d_grad[1]
        return losses.LossOutput(value=value, d_grad=d_grad)
    if loss_name == "contrastive":
        value = 0.0
        d_grad = np.zeros_like(D)
        for i, j in sorted(sets.s_plus):
            out = losses.contrastive_pair_loss(D[i, j], 1, margins.eps)
            value += out.value
            d_grad[i, j] += float(out.d_grad)
        for i, j in sorted(sets.s_minus):
            out = losses.contrastive_pair_loss(D[i, j], 0, margins.eps)
            value += out.value
            d_grad[i, j] += float(out.d_grad)
        return losses.LossOutput(value=value, d_grad=d_grad)
    raise ConfigError(f"unknown loss {loss_name!r}")


@dataclass
class _SeedOutcome:
    seed: int
    records: list[dict] = field(default_factory=list)
    epoch_loss: list[float] = field(default_factory=list)
    sinkhorn_nonconverged: int = 0
    aborted: bool = False
    diagnostic: str | None = None


def _make_encoders(cfg: ExperimentConfig, task: _Task, seed: int):
    hidden = list(cfg.hidden_sizes)
    spec_a = encoder.EncoderSpec(
        layer_sizes=(task.anchor_feats.shape[1], *hidden, cfg.embed_dim),
        activation=cfg.activation,
    )
    enc_a = encoder.init_params(spec_a, seeded_rng(seed, 2))
    if task.shared_encoder:
        return enc_a, enc_a
    spec_b = encoder.EncoderSpec(
        layer_sizes=(task.partner_feats.shape[1], *hidden, cfg.embed_dim),
        activation=cfg.activation,
    )
    return enc_a, encoder.init_params(spec_b, seeded_rng(seed, 3))


def _embed(cfg: ExperimentConfig, params, feats: np.ndarray) -> np.ndarray:
    out, _ = encoder.forward_batch(params, feats)
    return normalize_rows(out) if cfg.resolve_normalize() else out


def _train_seed(cfg: ExperimentConfig, loss_name: str, seed: int) -> _SeedOutcome:
    outcome = _SeedOutcome(seed=seed)
    bundle = _bundle_for_seed(cfg, seed)
    task = _build_task(cfg, bundle)
    enc_a, enc_b = _make_encoders(cfg, task, seed)
    rng = seeded_rng(seed, 1)
    normalize = cfg.resolve_normalize()
    single_neg = cfg.resolve_single_negative(loss_name)
    adam_a = adam_b = None
    n_anchors = task.anchor_feats.shape[0]

    try:
        for _epoch in range(cfg.epochs):
            lr = cfg.lr
            if cfg.lr_decay == "linear":
                # anneal to lr/epochs so the map settles instead of jittering
                lr = cfg.lr * (1.0 - _epoch / cfg.epochs)
            order = rng.permutation(n_anchors)
            epoch_value = 0.0
            n_batches = 0
            for start in range(0, n_anchors, cfg.batch_size):
                a_idx = order[start : start + cfg.batch_size]
                if a_idx.size < 2:
                    continue
                p_idx = np.array(
                    [
                        task.partner_pools[i][rng.integers(len(task.partner_pools[i]))]
                        for i in a_idx
                    ]
                )
                a_raw, trace_a = encoder.forward_batch(
                    enc_a, task.anchor_feats[a_idx]
                )
                b_raw, trace_b = encoder.forward_batch(
                    enc_b, task.partner_feats[p_idx]
                )
                a_emb = normalize_rows(a_raw) if normalize else a_raw
                b_emb = normalize_rows(b_raw) if normalize else b_raw
                D = pairwise_distances(a_emb, b_emb, cfg.metric)
                sets = _batch_sets(cfg, task, a_idx, p_idx)
                if single_neg and loss_name == "triplet":
                    sets = _reduce_to_single_negative(sets, rng)
                out = batch_loss(cfg, loss_name, D, sets, rng)
                if not np.isfinite(out.value):
                    raise NonFiniteLossError(
                        f"non-finite loss at epoch {_epoch}"
                    )
                if out.plan is not None and not out.plan.converged:
                    outcome.sinkhorn_nonconverged += 1
                epoch_value += out.value
                n_batches += 1
                ga, gb = distance_gradients(
                    a_emb, b_emb, cfg.metric, out.d_grad, distances=D
                )
                if normalize:
                    ga = normalization_gradient(a_raw, ga)
                    gb = normalization_gradient(b_raw, gb)
                grads_a = encoder.backward_batch(enc_a, trace_a, ga)
                grads_b = encoder.backward_batch(enc_b, trace_b, gb)
                if task.shared_encoder:
                    grads_a.add_(grads_b)
                    if cfg.optimizer == "sgd":
                        enc_a = encoder.sgd_step(enc_a, grads_a, lr)
                    else:
                        enc_a, adam_a = encoder.adam_step(
                            enc_a, grads_a, adam_a, lr=lr
                        )
                    enc_b = enc_a
                else:
                    if cfg.optimizer == "sgd":
                        enc_a = encoder.sgd_step(enc_a, grads_a, lr)
                        enc_b = encoder.sgd_step(enc_b, grads_b, lr)
                    else:
                        enc_a, adam_a = encoder.adam_step(
                            enc_a, grads_a, adam_a, lr=lr
                        )
                        enc_b, adam_b = encoder.adam_step(
                            enc_b, grads_b, adam_b, lr=lr
                        )
            outcome.epoch_loss.append(
                epoch_value / n_batches if n_batches else 0.0
            )
    except (NonFiniteLossError, ValueError) as exc:
        outcome.aborted = True
        outcome.diagnostic = f"{type(exc).__name__}: {exc}"
        return outcome

    outcome.records = _evaluate(cfg, loss_name, seed, bundle, enc_a, enc_b)
    return outcome


def _evaluate(
    cfg: ExperimentConfig,
    loss_name: str,
    seed: int,
    bundle: DatasetBundle,
    enc_a,
    enc_b,
) -> list[dict]:
    records = []

    def record(direction: str, ranks: np.ndarray) -> dict:
        rec = {
            "loss": loss_name,
            "seed": seed,
            "split": "test",
            "direction": direction,
        }
        rec.update(metrics.metric_record(ranks, cfg.eval_ks))
        return rec

    if bundle.is_cross_modal:
        videos = [i for i in bundle.test if not i.has_caption]
        captions = [i for i in bundle.test if i.has_caption]
        v_emb = _embed(cfg, enc_a, np.stack([v.features for v in videos]))
        c_emb = _embed(cfg, enc_b, np.stack([c.features for c in captions]))
        vid_ids = [v.video_id for v in videos]
        cap_ids = [c.video_id for c in captions]
        t2v_rel = [
            [g for g, vid in enumerate(vid_ids) if vid == c] for c in cap_ids
        ]
        v2t_rel = [
            [g for g, vid in enumerate(cap_ids) if vid == v] for v in vid_ids
        ]
        D = pairwise_distances(c_emb, v_emb, cfg.metric)
        records.append(record("t2v", metrics.rank_queries(D, t2v_rel)))
        D = pairwise_distances(v_emb, c_emb, cfg.metric)
        records.append(record("v2t", metrics.rank_queries(D, v2t_rel)))
        return records

    # single modality: test points query the training gallery; the two
    # retrieval directions coincide and are reported once
    gallery = bundle.train
    queries = bundle.test
    g_emb = _embed(cfg, enc_a, np.stack([g.features for g in gallery]))
    q_emb = _embed(cfg, enc_a, np.stack([q.features for q in queries]))
    g_ids = [g.video_id for g in gallery]
    relevant = [
        [g for g, vid in enumerate(g_ids) if vid == q.video_id] for q in queries
    ]
    D = pairwise_distances(q_emb, g_emb, cfg.metric)
    records.append(record("symmetric", metrics.rank_queries(D, relevant)))
    return records


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class RunReport:
    config: dict
    runs: dict            # loss name -> {"per_seed": [...], "aggregates": {...}, ...}
    significance: dict | None
    created_at: str

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "runs": self.runs,
            "significance": self.significance,
            "created_at": self.created_at,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table_text(self) -> str:
        columns = ["Loss", "Direction"] + [
            f"R@{k}" for k in sorted(self.config["eval_ks"])
        ] + ["MdR", "MnR"]
        rows = []
        for loss_name, run in self.runs.items():
            for direction, agg in sorted(run["aggregates"].items()):
                row = {"Loss": loss_name.upper(), "Direction": direction}
                row.update(agg)
                rows.append(row)
        return metrics.format_table(rows, columns, title="Test retrieval (seed means)")


def _aggregate(per_seed: list[_SeedOutcome]) -> dict:
    by_direction: dict[str, list[dict]] = {}
    for outcome in per_seed:
        for rec in outcome.records:
            by_direction.setdefault(rec["direction"], []).append(rec)
    aggregates = {}
    skip = {"loss", "seed", "split", "direction"}
    for direction, recs in by_direction.items():
        keys = [k for k in recs[0] if k not in skip]
        aggregates[direction] = {
            k: float(np.mean([r[k] for r in recs])) for k in keys
        }
    return aggregates


def per_seed_mdr(report_run: dict, direction: str) -> dict[int, float]:
    out = {}
    for entry in report_run["per_seed"]:
        for rec in entry["records"]:
            if rec["direction"] == direction:
                out[entry["seed"]] = rec["MdR"]
    return out


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """Train every configured loss on every seed and assemble the report."""
    cfg.validate()
    loss_names = [cfg.loss] + ([cfg.baseline_loss] if cfg.baseline_loss else [])
    runs = {}
    for loss_name in loss_names:
        outcomes = [_train_seed(cfg, loss_name, seed) for seed in cfg.seeds]
        completed = [o for o in outcomes if not o.aborted]
        runs[loss_name] = {
            "per_seed": [
                {
                    "seed": o.seed,
                    "records": o.records,
                    "aborted": o.aborted,
                    "diagnostic": o.diagnostic,
                    "epoch_loss": o.epoch_loss,
                    "sinkhorn_nonconverged": o.sinkhorn_nonconverged,
                }
                for o in outcomes
            ],
            "aggregates": _aggregate(completed),
        }
    significance = None
    if len(loss_names) == 2:
        significance = _significance(runs, loss_names[0], loss_names[1])
    return RunReport(
        config=cfg.echo(),
        runs=runs,
        significance=significance,
        created_at=time.strftime("%Y-%m-%dT%H:%M:%S"),
    )


def _significance(runs: dict, loss_a: str, loss_b: str) -> dict:
    out = {}
    directions = sorted(runs[loss_a]["aggregates"].keys())
    for direction in directions:
        mdr_a = per_seed_mdr(runs[loss_a], direction)
        mdr_b = per_seed_mdr(runs[loss_b], direction)
        shared = sorted(set(mdr_a) & set(mdr_b))
        entry = {
            "pair": [loss_a, loss_b],
            "metric": "MdR",
            "seeds": shared,
            "values_a": [mdr_a[s] for s in shared],
            "values_b": [mdr_b[s] for s in shared],
        }
        try:
            w, p_two = metrics.wilcoxon_signed_rank(
                entry["values_a"], entry["values_b"]
            )
            diffs = np.asarray(entry["values_a"]) - np.asarray(entry["values_b"])
            gain = "a_better" if np.median(diffs) < 0 else "b_better"
            alt = "less" if gain == "a_better" else "greater"
            _, p_one = metrics.wilcoxon_signed_rank(
                entry["values_a"], entry["values_b"], alternative=alt
            )
            entry.update(
                {
                    "W": w,
                    "p_two_sided": p_two,
                    "p_one_sided": p_one,
                    "direction_of_gain": gain,
                    "degenerate": False,
                }
            )
        except metrics.DegenerateSampleError as exc:
            entry.update({"degenerate": True, "reason": str(exc)})
        out[direction] = entry
    return out


def compare_losses(reports: list[RunReport | dict]) -> dict:
    """Paired signed-rank comparison of per-seed median ranks.

    All reports must share the identical seed list and dataset source;
    every pair of runs is compared per retrieval direction.
    """
    dicts = [r.to_dict() if isinstance(r, RunReport) else r for r in reports]
    if len(dicts) < 2:
        raise ValueError("need at least two reports to compare")
    seed_sets = [tuple(d["config"]["seeds"]) for d in dicts]
    if len(set(seed_sets)) != 1:
        raise ValueError(f"mismatched seed sets: {seed_sets}")
    sources = [
        (d["config"]["dataset"], d["config"]["synthetic"]) for d in dicts
    ]
    if len(set(sources)) != 1:
        raise ValueError("reports come from different datasets")
    merged_runs: dict[str, dict] = {}
    for d in dicts:
        for loss_name, run in d["runs"].items():
            merged_runs.setdefault(loss_name, run)
    comparisons = []
    names = sorted(merged_runs)
    for ai in range(len(names)):
        for bi in range(ai + 1, len(names)):
            comparisons.append(_significance(merged_runs, names[ai], names[bi]))
    return {"comparisons": comparisons}
