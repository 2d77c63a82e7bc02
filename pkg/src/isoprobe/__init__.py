"""Isotropy measurement and isotropy-enhancement transforms for embedding spaces."""

from isoprobe.errors import (
    ContractError,
    DumpFormatError,
    IsoprobeError,
    IsoprobeWarning,
    NumericalError,
)
from isoprobe.store import (
    EmbeddingDump,
    StsDataset,
    TokenRecord,
    frequency_buckets,
    load_binary_dump,
    load_dump,
    load_sts_dataset,
    load_text_dump,
    select,
    write_binary_dump,
    write_text_dump,
)
from isoprobe.geometry import (
    IsotropyReport,
    SpectralDecomposition,
    average_random_cosine,
    center,
    isotropy_score,
    log_partition,
    project_2d,
    spectral_decomposition,
)
from isoprobe.transforms import (
    ClusterAssignment,
    DirectionRemovalSpec,
    apply_pipeline,
    cluster_based,
    clustering_zm,
    global_abtt,
    kmeans,
    parse_pipeline,
    remove_directions,
    zero_mean,
)
from isoprobe.evaluation import (
    EvalResult,
    LayerRow,
    SentenceRepresentation,
    evaluate,
    layer_report,
    mean_pool,
    score_pairs,
    spearman,
)

__version__ = "0.1.0"
