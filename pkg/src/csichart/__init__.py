"""Channel charting from streaming CSI.

Curates a bounded core memory of channel-state samples under two
streaming strategies, learns a 2-D chart of the radio environment with a
Siamese network trained on delay-profile dissimilarities, and scores
chart quality against reference positions.
"""

from .csi import (
    DEFAULT_C_TAPS,
    CsiFeature,
    CsiMatrix,
    DelayDomainCsi,
    GroundTruthPosition,
    ZeroFeatureError,
    cosine_similarity,
    extract_feature,
    to_delay_domain,
)
from .curation import (
    CoreMemory,
    CurationAction,
    CurationDecision,
    RandosConfig,
    SimsConfig,
    memory_snapshot,
    offer_randos,
    offer_sims,
    rebuild_cache_bruteforce,
)
from .dissimilarity import (
    DissimilarityMatrix,
    KnnGraph,
    adp_dissimilarity,
    adp_matrix,
    build_knn_graph,
    geodesic_all_pairs,
)
from .network import (
    ChartModel,
    NanLossError,
    TrainConfig,
    TrainReport,
    forward,
    init_glorot,
    loss_and_gradients,
    siamese_loss,
    train,
)
from .metrics import (
    MetricReport,
    compute_all,
    continuity,
    kruskal_stress,
    rajski_distance,
    trustworthiness,
)
from .recordio import (
    RecordFormatError,
    RecordStream,
    StreamItem,
    import_external,
    read_records,
    write_records,
)
from .synthetic import (
    Scatterer,
    SyntheticScenario,
    SyntheticStream,
    default_scenario,
)
from .checkpoint import (
    load_dissimilarity,
    load_memory,
    load_model,
    save_dissimilarity,
    save_memory,
    save_model,
)
from .pipeline import (
    CurationRun,
    StrategyResult,
    TrainOutcome,
    evaluate_chart,
    run_curation,
    train_chart,
    train_from_memory,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_C_TAPS",
    "CsiMatrix",
    "DelayDomainCsi",
    "CsiFeature",
    "GroundTruthPosition",
    "ZeroFeatureError",
    "to_delay_domain",
    "extract_feature",
    "cosine_similarity",
    "CoreMemory",
    "CurationAction",
    "CurationDecision",
    "RandosConfig",
    "SimsConfig",
    "offer_randos",
    "offer_sims",
    "memory_snapshot",
    "rebuild_cache_bruteforce",
    "DissimilarityMatrix",
    "KnnGraph",
    "adp_dissimilarity",
    "adp_matrix",
    "build_knn_graph",
    "geodesic_all_pairs",
    "ChartModel",
    "TrainConfig",
    "TrainReport",
    "NanLossError",
    "init_glorot",
    "forward",
    "siamese_loss",
    "loss_and_gradients",
    "train",
    "MetricReport",
    "trustworthiness",
    "continuity",
    "kruskal_stress",
    "rajski_distance",
    "compute_all",
    "RecordFormatError",
    "RecordStream",
    "StreamItem",
    "read_records",
    "write_records",
    "import_external",
    "Scatterer",
    "SyntheticScenario",
    "SyntheticStream",
    "default_scenario",
    "save_memory",
    "load_memory",
    "save_model",
    "load_model",
    "save_dissimilarity",
    "load_dissimilarity",
    "CurationRun",
    "StrategyResult",
    "TrainOutcome",
    "run_curation",
    "train_chart",
    "train_from_memory",
    "evaluate_chart",
    "__version__",
]
