"""Stance detection with test-time adaptation via generated training data."""

from .adapt import (
    AdaptConfig,
    AdaptationEpisodeLog,
    PredictionRecord,
    PredictionSet,
    run_baseline,
    run_dymoadapt,
)
from .classifier import (
    ClassifierBackend,
    ClassifierSnapshot,
    LlmClassifierBackend,
    NativeLinearBackend,
    TrainHyper,
    featurize,
    llm_classify,
)
from .core import (
    LABEL_ORDER,
    Dataset,
    LabelScheme,
    StanceExample,
    StanceLabel,
    UnknownLabel,
    derive_seed,
    get_scheme,
    group_by_topic,
    normalize_topic,
    parse_label,
)
from .datagen import (
    AdaptationSet,
    GenSettings,
    GenerationReport,
    SourcePost,
    TopicProposal,
    build_mgt_dataset,
    generate_adaptation_set,
    generate_topics_for_post,
)
from .dataio import read_dataset, read_source_posts, write_dataset
from .gateway import (
    DirectoryMockBackend,
    HttpChatBackend,
    LlmGateway,
    LlmRequest,
    LlmResponse,
    RetryPolicy,
    ScriptedMockBackend,
    cache_key,
)
from .metrics import (
    DatasetStats,
    EvalReport,
    dataset_stats,
    evaluate,
    f1_macro,
    f1_per_class,
    per_topic_report,
    top_topics,
)
from .prompts import render
from .remote import RemoteHttpBackend

__version__ = "0.1.0"
