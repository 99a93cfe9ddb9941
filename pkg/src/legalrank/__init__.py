"""Two-stage legal-document retrieval: lexical and dense first-stage
search, pluggable re-ranking, negative mining, evaluation metrics and a
ranking-loss laboratory."""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    Corpus,
    Document,
    QaPair,
    QaRecord,
    load_corpus,
    load_qa,
    normalize_qa,
    split_train_eval,
)
from .dense import (  # noqa: F401
    EmbeddingIndex,
    Embedder,
    FileEmbeddings,
    HashedBow,
    RemoteEmbedder,
    build_dense_index,
    cosine,
    dense_topk,
    embed_queries,
)
from .lexical import (  # noqa: F401
    Bm25Params,
    InvertedIndex,
    bm25_score,
    build_lexical_index,
    lexical_topk,
)
from .losslab import (  # noqa: F401
    LossReport,
    ToyEmbedder,
    TrainConfig,
    bce_with_logits,
    cosine_mse_loss,
    finite_diff,
    mnrl_loss,
    toy_train,
)
from .metrics import exist_at_m, mrr_at_k  # noqa: F401
from .mining import (  # noqa: F401
    BandReport,
    LabeledPair,
    MiningConfig,
    band_stats,
    export_pairs,
    mine_negatives,
)
from .pipeline import (  # noqa: F401
    BlendScorer,
    Bm25Scorer,
    CosineScorer,
    EvalSet,
    IndexBundle,
    OracleScorer,
    PipelineConfig,
    RemoteScorer,
    Scorer,
    evaluate_pipeline,
    remote_score,
    retrieve_rerank,
)
from .segment import (  # noqa: F401
    CommandSegmenter,
    DefaultSegmenter,
    Segmenter,
    get_segmenter,
    length_histogram,
    tokenize,
)
