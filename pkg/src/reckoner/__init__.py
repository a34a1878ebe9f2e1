"""Reckoner: confidence-split dual-model fair classification for tabular
data, with group-fairness auditing and confidence-stratified bias analysis.
"""

__version__ = "0.1.0"

from .data import (  # noqa: F401
    ColumnSpec,
    Dataset,
    Schema,
    SplitSpec,
    SynthConfig,
    hash_features,
    load_csv,
    split_dataset,
    standardize,
    synth_biased,
)
from .errors import (  # noqa: F401
    ConfigError,
    DataError,
    NumericError,
    ReckonerError,
    UndefinedRateError,
)
from .metrics import (  # noqa: F401
    FairnessReport,
    GroupConfusion,
    RateTable,
    accuracy,
    bias_gap,
    confusion,
    demographic_parity,
    equalized_odds,
    fairness_report,
    rates,
)
from .models import (  # noqa: F401
    AdamState,
    FeedForwardClassifier,
    LinearClassifier,
    ModelParams,
    NoiseWrapper,
    adam_step,
    bce,
    blend,
    lr_fit,
    noise_apply,
    score,
)
from .confidence import (  # noqa: F401
    BucketReport,
    BucketSpec,
    ConfidenceSplit,
    bucket_analysis,
    confidence_of,
    feature_histograms,
    split_by_confidence,
)
from .pipeline import (  # noqa: F401
    PseudoLearnState,
    ReckonerModel,
    TrainConfig,
    erm_baseline,
    initialize,
    knowledge_share,
    predict,
    pseudo_learning_cycle,
    refinement_step,
    train,
)
