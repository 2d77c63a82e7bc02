"""STS evaluation (mean pooling, cosine scoring, Spearman) and per-layer isotropy tables."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from isoprobe.errors import ContractError, IsoprobeWarning
from isoprobe.geometry import isotropy_score
from isoprobe.store import EmbeddingDump, StsDataset, select_indices
from isoprobe.transforms import apply_pipeline, parse_pipeline

LAYER_CSV_COLUMNS = ("layer", "scope", "isotropy", "neg_ln_isotropy", "neg_log10_isotropy")
EVAL_CSV_COLUMNS = (
    "layer",
    "spearman_rho",
    "n_pairs",
    "n_skipped",
    "isotropy_before",
    "isotropy_after",
    "pipeline",
)
SCOPES = ("all", "cls")
# pooled vectors shorter than this fraction of the largest row norm count as zero
ZERO_NORM_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class SentenceRepresentation:
    sentence_id: int
    vector: np.ndarray
    n_pooled: int


@dataclass(frozen=True)
class EvalResult:
    spearman_rho: float
    n_pairs: int
    n_skipped: int
    isotropy_before: float
    isotropy_after: float
    layer: int
    pipeline: list

    def to_dict(self) -> dict:
        return asdict(self)

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EVAL_CSV_COLUMNS)
        writer.writerow(
            [
                self.layer,
                repr(self.spearman_rho),
                self.n_pairs,
                self.n_skipped,
                repr(self.isotropy_before),
                repr(self.isotropy_after),
                json.dumps(self.pipeline, sort_keys=True),
            ]
        )


@dataclass(frozen=True)
class LayerRow:
    layer: int
    scope: str
    isotropy: float
    neg_ln_isotropy: float
    neg_log10_isotropy: float

    def to_dict(self) -> dict:
        return asdict(self)


def mean_pool(dump: EmbeddingDump, sentence_id: int, layer: int) -> SentenceRepresentation:
    mask = (dump.sentence_ids == sentence_id) & (dump.layers == layer) & dump.is_poolable
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ContractError(f"sentence {sentence_id} has no poolable rows at layer {layer}")
    return SentenceRepresentation(sentence_id, dump.vectors[idx].mean(axis=0), int(idx.size))


def _pool_all(vectors, sentence_ids, poolable, wanted, layer):
    """Mean of the poolable rows of every sentence in ``wanted``."""
    pooled = {}
    keep = poolable & np.isin(sentence_ids, list(wanted))
    for sid in wanted:
        idx = np.flatnonzero(keep & (sentence_ids == sid))
        if idx.size == 0:
            raise ContractError(f"sentence {sid} has no poolable rows at layer {layer}")
        pooled[sid] = vectors[idx].mean(axis=0)
    return pooled


def _transform_layer(dump, layer, pipeline):
    try:
        idx = select_indices(dump, layer=layer)
    except ContractError:
        raise ContractError(f"layer {layer} not present in dump") from None
    before = dump.vectors[idx]
    after = apply_pipeline(before, pipeline)
    return idx, before, after


def _score(dump, dataset, layer, pipeline):
    idx, before, after = _transform_layer(dump, layer, pipeline)
    sids = dump.sentence_ids[idx]
    wanted = sorted(dataset.sentence_ids())
    dangling = sorted(set(wanted) - set(sids.tolist()))
    if dangling:
        raise ContractError(f"dangling sentence ids at layer {layer}: {dangling[:10]}")
    pooled = _pool_all(after, sids, dump.is_poolable[idx], wanted, layer)
    scale = float(np.linalg.norm(after, axis=1).max()) if after.size else 0.0
    norms = {sid: float(np.linalg.norm(v)) for sid, v in pooled.items()}
    results = []
    skipped = 0
    for a, b, gold in dataset.pairs:
        na, nb = norms[a], norms[b]
        floor = ZERO_NORM_RTOL * scale
        if na <= floor or nb <= floor:
            skipped += 1
            continue
        cos = float(pooled[a] @ pooled[b]) / (na * nb)
        results.append((min(1.0, max(-1.0, cos)), gold))
    if skipped:
        warnings.warn(
            f"skipped {skipped} pairs with a zero-norm sentence vector",
            IsoprobeWarning,
            stacklevel=3,
        )
    return results, skipped, before, after


def score_pairs(dump: EmbeddingDump, dataset: StsDataset, layer: int, pipeline=None):
    """Cosine similarity of mean-pooled sentence vectors for every dataset pair.

    The pipeline is fit and applied on all token rows of ``layer`` before pooling.
    Returns ``(predicted, gold)`` tuples; pairs with a zero-norm sentence vector are
    dropped with a warning.
    """
    return _score(dump, dataset, layer, pipeline)[0]


def _average_ranks(x: np.ndarray) -> np.ndarray:
    n = x.size
    order = np.argsort(x, kind="stable")
    sx = x[order]
    starts = np.ones(n, dtype=bool)
    starts[1:] = sx[1:] != sx[:-1]
    first = np.flatnonzero(starts)
    last = np.append(first[1:], n) - 1
    group = np.cumsum(starts) - 1
    ranks = np.empty(n)
    ranks[order] = ((first + last) / 2.0 + 1.0)[group]
    return ranks


def spearman(pred, gold) -> float:
    """Spearman rank correlation with average ranks for ties.

    Raises :class:`ContractError` when either side has constant ranks, where the
    coefficient is undefined.
    """
    x = np.asarray(pred, dtype=np.float64).ravel()
    y = np.asarray(gold, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ContractError(f"length mismatch: {x.size} predictions vs {y.size} gold scores")
    if x.size == 0:
        raise ContractError("spearman needs at least one pair")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ContractError("spearman inputs must be finite")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    sxx = float(rx @ rx)
    syy = float(ry @ ry)
    if sxx == 0.0 or syy == 0.0:
        raise ContractError("spearman correlation undefined: zero rank variance")
    rho = float(rx @ ry) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, rho))


def evaluate(dump: EmbeddingDump, dataset: StsDataset, layer: int, pipeline=None) -> EvalResult:
    steps = parse_pipeline(pipeline)
    results, skipped, before, after = _score(dump, dataset, layer, steps)
    if not results:
        raise ContractError("no scorable pairs")
    pred, gold = zip(*results)
    return EvalResult(
        spearman_rho=spearman(pred, gold),
        n_pairs=len(results),
        n_skipped=skipped,
        isotropy_before=isotropy_score(before).isotropy if len(before) >= 2 else float("nan"),
        isotropy_after=isotropy_score(after).isotropy if len(after) >= 2 else float("nan"),
        layer=layer,
        pipeline=[s.to_dict() for s in steps],
    )


def layer_report(dumps) -> list[LayerRow]:
    """Isotropy of every layer over all tokens and over [CLS] tokens only.

    ``dumps`` is one dump or an iterable of dumps; rows for the same layer across
    dumps are pooled. A (layer, scope) with fewer than two rows is skipped.
    """
    if isinstance(dumps, EmbeddingDump):
        dumps = [dumps]
    dumps = list(dumps)
    if not dumps:
        raise ContractError("layer report needs at least one dump")
    layers = sorted({layer for d in dumps for layer in d.layer_ids()})
    if not layers:
        raise ContractError("layer report needs at least one layer")
    rows = []
    for layer in layers:
        for scope in SCOPES:
            parts = []
            for d in dumps:
                mask = d.layers == layer
                if scope == "cls":
                    mask = mask & d.is_cls
                parts.append(d.vectors[mask])
            matrix = np.vstack(parts)
            if matrix.shape[0] < 2:
                warnings.warn(
                    f"layer {layer} scope {scope}: {matrix.shape[0]} rows, need 2; skipped",
                    IsoprobeWarning,
                    stacklevel=2,
                )
                continue
            report = isotropy_score(matrix)
            rows.append(
                LayerRow(
                    layer,
                    scope,
                    report.isotropy,
                    report.neg_ln_isotropy,
                    report.neg_log10_isotropy,
                )
            )
    return rows


def write_layer_csv(rows, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(LAYER_CSV_COLUMNS)
    for r in rows:
        writer.writerow(
            [r.layer, r.scope, repr(r.isotropy), repr(r.neg_ln_isotropy), repr(r.neg_log10_isotropy)]
        )
