"""Streaming activity recognition over embedding streams.

The engine keeps video context in a fixed-size hidden state updated by an
input-dependent (selective) recurrence, reads frames from the `.avcs` binary
embedding-stream format, and ships training, evaluation metrics (including
the early detection rate), reference baselines, and a throughput benchmark.
"""

from .errors import (
    AvcsError,
    BadMagicError,
    FormatError,
    InvalidConfigError,
    InvalidInputError,
    LabelRangeError,
    NumericError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from .funnel import ActivityToken, FunnelParams, funnel_backward, funnel_forward
from .harness import BenchRecord, InputStrategy, eval_dataset, parse_strategy, run_bench
from .metrics import (
    EvalTrace,
    MetricReport,
    edr,
    edr_corpus,
    evaluate,
    jaccard,
    mean_average_precision,
    video_accuracy,
)
from .pipeline import (
    Model,
    ModelConfig,
    PredictionRecord,
    StreamSession,
    decode,
    forward_frame,
    forward_sequence,
    init_model,
    load_model,
    save_model,
    start_session,
)
from .scan import (
    HiddenState,
    SelectiveParams,
    StepOutput,
    discretize,
    restore,
    scan_chunked,
    scan_sequential,
    snapshot,
    step,
    zero_state,
)
from .stream import (
    ActivitySpan,
    EmbeddingStream,
    FrameEmbedding,
    PatchGrid,
    SynthConfig,
    concat_streams,
    pool_patches,
    read_stream,
    synth_dataset,
    write_stream,
)
from .training import (
    GradientBundle,
    TrainConfig,
    WeightVector,
    backward,
    cosine_lr,
    frame_loss,
    frame_weights,
    optimizer_step,
    sequence_loss,
    train,
)

__version__ = "0.1.0"
