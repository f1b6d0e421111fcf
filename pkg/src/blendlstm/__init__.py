"""Three-class facial emotion classification from blendshape score vectors."""

__version__ = "0.1.0"

from .dataio import (  # noqa: F401
    BlendshapeDataset,
    BlendshapeFrame,
    ClassLabel,
    LabeledSample,
    load_dataset,
    load_split,
    one_hot,
    remap_label,
    save_dataset,
    subsample_per_class,
)
from .featsel import (  # noqa: F401
    ActivationCounts,
    FeatureMask,
    apply_mask,
    count_activations,
    identity_mask,
    select_features,
)
from .lossmetrics import (  # noqa: F401
    ConfusionMatrix,
    FocalConfig,
    Metrics,
    categorical_accuracy,
    cce,
    confusion,
    focal,
    macro_f1,
    mse,
)
from .nn import Model, forward, init_model, load_model, save_model  # noqa: F401
from .optim import TrainConfig, evaluate, random_search, train  # noqa: F401
from .infer import StreamSession, predict  # noqa: F401
