"""fishnet: a from-scratch CNN training framework on a tiled GEMM core."""

from .data import (
    DEFAULT_BALANCE_TARGET,
    DEFAULT_HOLDOUT_COUNTS,
    FISH_CLASSES,
    ClassTable,
    LabeledImage,
    SplitPlan,
    balance_by_replication,
    build_split_plan,
    decode_image,
    holdout_split,
    kfold_split,
    load_dataset,
    resize_image,
    solid_color_dataset,
)
from .gemm import (
    BenchReport,
    BenchRow,
    MatrixDims,
    TileConfig,
    bench_gemm,
    detect_threads,
    matmul,
    matmul_naive,
    matmul_parallel,
    matmul_tiled,
)
from .layers import (
    Conv2d,
    ConvSpec,
    Dense,
    Dropout,
    Flatten,
    MaxPool,
    Network,
    PoolSpec,
    ReLU,
    Softmax,
    col2im,
    conv2d_forward,
    conv_output_hw,
    dropout,
    fc_forward,
    im2col,
    maxpool,
    maxpool_backward,
    relu,
    relu_backward,
    softmax,
    softmax_backward,
)
from .metrics import (
    ConfusionMatrix,
    MetricsReport,
    Prediction,
    accuracy,
    confusion_matrix,
    logloss_gradient,
    multiclass_logloss,
)
from .model_io import load_model, save_model
from .models import (
    LayerSpec,
    ModelConfig,
    TrainedModel,
    TrainReport,
    build_model,
    build_network,
    count_parameters,
    evaluate,
    model_config,
    predict,
    train,
)
from .optim import ParamState, SgdConfig, sgd_step
from .tensor import Shape4, reshape, row_major_strides, tensor_new

__version__ = "0.1.0"
