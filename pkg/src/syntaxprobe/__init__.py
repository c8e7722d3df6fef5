"""Layer-wise linear probing of speech-encoder representations.

The pipeline: ingest a timecoded dependency treebank, encode trees as
relative-head-position labels, pool encoder frames into token vectors
using the timecodes, train one linear softmax probe per encoder layer,
and report accuracy/UAS plus per-label F1 across layers.
"""

from .deplabel import (
    LabelVocab,
    build_label_vocab,
    decode_relative_heads,
    encode_relative_heads,
    map_labels,
)
from .errors import (
    DataError,
    FeatureFormatError,
    ManifestError,
    SyntaxProbeError,
    TrainingDivergedError,
    TreebankParseError,
)
from .featurestore import (
    Manifest,
    ManifestEntry,
    expected_frame_count,
    read_layer,
    write_features,
)
from .metrics import EvalReport, accuracy, evaluate, per_label_prf, uas
from .pooling import PoolCache, ProbeDataset, build_probe_dataset, frames_in_span, pool_token
from .probe import (
    ProbeModel,
    SoftmaxProbe,
    TrainConfig,
    TrainState,
    forward,
    gradients,
    load_model,
    nll_loss,
    predict,
    save_model,
    sgd_nesterov_step,
    train,
)
from .runner import LayerReport, SweepConfig, emit_report, run_layer_sweep
from .treebank import (
    FilterRecord,
    SplitSpec,
    Token,
    Treebank,
    Utterance,
    Violation,
    filter_treebank,
    parse_treebank,
    serialize_treebank,
    split_dataset,
    validate_utterance,
)

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "EvalReport",
    "FeatureFormatError",
    "FilterRecord",
    "LabelVocab",
    "LayerReport",
    "Manifest",
    "ManifestEntry",
    "ManifestError",
    "PoolCache",
    "ProbeDataset",
    "ProbeModel",
    "SoftmaxProbe",
    "SplitSpec",
    "SweepConfig",
    "SyntaxProbeError",
    "Token",
    "TrainConfig",
    "TrainState",
    "TrainingDivergedError",
    "Treebank",
    "TreebankParseError",
    "Utterance",
    "Violation",
    "accuracy",
    "build_label_vocab",
    "build_probe_dataset",
    "decode_relative_heads",
    "emit_report",
    "encode_relative_heads",
    "evaluate",
    "expected_frame_count",
    "filter_treebank",
    "forward",
    "frames_in_span",
    "gradients",
    "load_model",
    "map_labels",
    "nll_loss",
    "parse_treebank",
    "per_label_prf",
    "pool_token",
    "predict",
    "read_layer",
    "run_layer_sweep",
    "save_model",
    "serialize_treebank",
    "sgd_nesterov_step",
    "split_dataset",
    "train",
    "uas",
    "validate_utterance",
    "write_features",
]
