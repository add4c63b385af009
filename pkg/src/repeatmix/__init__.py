"""Repeat-aware neighbor sampling and mixer models for dynamic graphs."""

from .encoding import TimeEncoderConfig, assemble, concat_pair, time_encode
from .harness import (
    MetricsReport,
    TrainConfig,
    average_precision,
    auc_roc,
    evaluate,
    negative_sample,
    pcc_preexperiment,
    train,
)
from .mixer import MixerConfig, ParamStore, adam_step, gelu, init_params, mixer_backward, mixer_forward
from .model import (
    EdgeModel,
    EdgeRepresentation,
    ModelConfig,
    edge_representation,
    first_order_repr,
    fusion_softmax,
    fusion_weights,
    pcc,
    predict_link,
    second_order_repr,
)
from .sampling import (
    NeighborSample,
    SamplerConfig,
    interval_sequence,
    sample_recent,
    sample_repeat_first,
    sample_repeat_second,
    sample_time_aware,
    sample_uniform,
)
from .tgraph import (
    IngestConfig,
    Interaction,
    SplitView,
    TemporalGraph,
    chronological_split,
    ingest_csv,
    load_cache,
    save_cache,
)

__version__ = "0.1.0"
