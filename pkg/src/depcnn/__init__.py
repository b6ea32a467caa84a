"""Two-channel dependency-aware CNN for sentence-level relation extraction.

The package ingests pre-parsed, entity-annotated corpora, encodes each
candidate protein pair into two feature channels (token rows and
dependency-head rows), trains a small convolutional classifier with
hand-rolled backpropagation and Adam, and evaluates it under document-level
cross-validation.
"""

from .corpus import (
    LABEL_OTHER,
    LABEL_PPI,
    AnnotatedSentence,
    AnnotatedToken,
    ConfigError,
    CorpusError,
    CorpusParseError,
    CorpusStructureError,
    FoldPlan,
    PpiInstance,
    load_corpus,
    load_instances,
    make_instances,
    mention_spans,
    pair_key,
    split_folds,
    write_corpus,
    write_instances,
)
from .features import (
    EmbeddingFormatError,
    EmbeddingTable,
    EncodedDataset,
    EncodedInstance,
    FeatureSchema,
    encode_dataset,
    encode_instance,
    head_of,
    load_embeddings,
    read_schema,
    token_vector,
    write_schema,
)
from .layers import AdamState, NumericError, adam_step, xavier_init
from .network import (
    ModelConfig,
    ModelParams,
    forward,
    gradient_check,
    init_model,
    loss_and_grads,
    predict,
    predict_proba,
    reference_gradient_check,
)
from .checkpoint import (
    SchemaMismatchError,
    load_checkpoint,
    load_dataset,
    save_checkpoint,
    save_dataset,
)
from .harness import (
    CvResult,
    EvalReport,
    TrainConfig,
    compute_metrics,
    read_fold_plan,
    read_predictions,
    run_ablation,
    run_cross_corpus,
    run_cv,
    run_difficult_subset,
    train,
    write_fold_plan,
    write_predictions,
)
from .estimator import DepCnnClassifier, PairEncoder

__version__ = "0.1.0"
