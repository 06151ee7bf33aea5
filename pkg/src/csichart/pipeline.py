"""End-to-end stages: stream curation, chart training, evaluation.

`run_curation` drives one or more curation strategies over a single pass
of a record stream, batching the delay-domain transform and feature
extraction per chunk so the per-sample strategy work stays O(M).
`train_chart` turns a curated tap stack into a trained chart model via
geodesic dissimilarities; `evaluate_chart` scores the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .csi import DEFAULT_C_TAPS, delay_taps_batch, feature_rows
from .curation import (
    CoreMemory,
    CurationAction,
    RandosConfig,
    SimsConfig,
    offer_randos,
    offer_sims,
)
from .dissimilarity import (
    DissimilarityMatrix,
    adp_matrix,
    build_knn_graph,
    geodesic_all_pairs,
)
from .metrics import MetricReport, compute_all
from .network import (
    DEFAULT_WIDTHS,
    ChartModel,
    TrainConfig,
    TrainReport,
    forward,
    init_glorot,
    train,
)

_CHUNK = 256
DEFAULT_K_NEIGHBORS = 20


@dataclass
class StrategyResult:
    """One strategy's memory after a pass, with decision tallies."""

    memory: CoreMemory
    n_inserted: int = 0
    n_replaced: int = 0
    n_discarded: int = 0


@dataclass
class CurationRun:
    """Everything produced by one curation pass over a stream."""

    results: dict[str, StrategyResult] = field(default_factory=dict)
    n_offered: int = 0
    n_zero_feature: int = 0
    all_taps: np.ndarray | None = None
    all_features: np.ndarray | None = None
    all_positions: np.ndarray | None = None
    all_position_mask: np.ndarray | None = None
    all_arrivals: np.ndarray | None = None
    ap_spans: tuple | None = None


def _make_offer(cfg):
    if isinstance(cfg, RandosConfig):
        return offer_randos
    if isinstance(cfg, SimsConfig):
        return offer_sims
    raise TypeError(f"unknown strategy config {type(cfg).__name__}")


def run_curation(stream, strategies: dict, *, capacity: int,
                 c_taps: int = DEFAULT_C_TAPS, store_full_csi: bool = False,
                 collect_all: bool = False) -> CurationRun:
    """Run each strategy over one pass of ``stream``.

    ``strategies`` maps a name to a :class:`RandosConfig` or
    :class:`SimsConfig`; every strategy sees the identical sample
    sequence and keeps its own memory and random generator.  Samples
    with an undefined feature direction are counted and skipped.  With
    ``collect_all`` the full valid tap/feature/position history is also
    returned, as the no-curation baseline.
    """
    memories = {
        name: CoreMemory(capacity, c_taps=c_taps, store_full_csi=store_full_csi)
        for name in strategies
    }
    offers = {name: _make_offer(cfg) for name, cfg in strategies.items()}
    rngs = {
        name: np.random.default_rng(cfg.rng_seed)
        for name, cfg in strategies.items()
    }
    run = CurationRun(results={
        name: StrategyResult(memory=memories[name]) for name in strategies
    })
    kept_taps, kept_feats, kept_pos, kept_mask, kept_arrival = [], [], [], [], []

    def process(batch):
        entries = np.stack([item.csi.entries for item in batch])
        taps = delay_taps_batch(entries, c_taps)
        feats, valid = feature_rows(taps)
        for r, item in enumerate(batch):
            if not valid[r]:
                run.n_zero_feature += 1
                continue
            run.n_offered += 1
            if collect_all:
                kept_taps.append(taps[r])
                kept_feats.append(feats[r])
                has = item.position is not None
                kept_mask.append(has)
                kept_pos.append(np.asarray(item.position, dtype=np.float64)
                                if has else None)
                kept_arrival.append(item.csi.sample_index)
            for name, cfg in strategies.items():
                decision = offers[name](
                    memories[name], item.csi, cfg, rngs[name],
                    position=item.position, feature=feats[r], taps=taps[r])
                res = run.results[name]
                if decision.action is CurationAction.INSERTED_WHILE_FILLING:
                    res.n_inserted += 1
                elif decision.action is CurationAction.REPLACED:
                    res.n_replaced += 1
                else:
                    res.n_discarded += 1

    batch = []
    spans = None
    for item in stream:
        if spans is None:
            spans = item.csi.ap_spans
        batch.append(item)
        if len(batch) >= _CHUNK:
            process(batch)
            batch = []
    if batch:
        process(batch)
    run.ap_spans = spans
    if collect_all and kept_taps:
        run.all_taps = np.stack(kept_taps)
        run.all_features = np.stack(kept_feats)
        run.all_arrivals = np.asarray(kept_arrival, dtype=np.int64)
        run.all_position_mask = np.asarray(kept_mask, dtype=bool)
        dims = {p.size for p in kept_pos if p is not None}
        dim = dims.pop() if len(dims) == 1 else (max(dims) if dims else 0)
        coords = np.full((len(kept_pos), dim), np.nan)
        for i, p in enumerate(kept_pos):
            if p is not None:
                coords[i, :p.size] = p
        run.all_positions = coords
    return run


@dataclass
class TrainOutcome:
    """Trained model plus the dissimilarities it was fitted to."""

    model: ChartModel
    report: TrainReport
    adp: DissimilarityMatrix
    geodesic: DissimilarityMatrix
    features: np.ndarray


def train_chart(taps: np.ndarray, features: np.ndarray, ap_spans=None, *,
                k_neighbors: int = DEFAULT_K_NEIGHBORS, widths=None,
                cfg: TrainConfig | None = None, init_seed: int = 0) -> TrainOutcome:
    """Fit a chart to a tap stack: pairwise dissimilarity, geodesic
    completion over the k-NN graph, then Siamese training."""
    taps = np.asarray(taps, dtype=np.complex128)
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != taps.shape[0]:
        raise ValueError(
            f"{features.shape[0]} features for {taps.shape[0]} tap rows")
    adp = adp_matrix(taps, ap_spans)
    graph = build_knn_graph(adp, k_neighbors)
    geo = geodesic_all_pairs(graph)
    layer_widths = (features.shape[1], *(widths or DEFAULT_WIDTHS))
    model0 = init_glorot(layer_widths, seed=init_seed)
    model, report = train(model0, features, geo.values, cfg)
    return TrainOutcome(model=model, report=report, adp=adp, geodesic=geo,
                        features=features)


def train_from_memory(mem: CoreMemory, **kwargs) -> TrainOutcome:
    """:func:`train_chart` over a curated memory's stored samples."""
    if mem.count < 2:
        raise ValueError("memory holds fewer than 2 samples")
    return train_chart(mem.taps, mem.features, mem.ap_spans, **kwargs)


def evaluate_chart(model: ChartModel, features, gt_positions, *,
                   k: int | None = None, **metric_kwargs
                   ) -> tuple[np.ndarray, MetricReport]:
    """Embed ``features`` and score the chart against ground truth."""
    chart = forward(model, features)
    report = compute_all(gt_positions, chart, k=k, **metric_kwargs)
    return chart, report