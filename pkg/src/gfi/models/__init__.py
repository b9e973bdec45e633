from .checkpoint import (
    ARCHS,
    ModelCheckpoint,
    default_hyper,
    init_checkpoint,
    load_checkpoint,
    param_count,
    save_checkpoint,
    tensor_specs,
)
from .forward import (
    ActivationRecord,
    Interceptor,
    InterceptorRegistry,
    activation_census,
    evaluate_accuracy,
    model_forward,
)
from .layers import cheb_layer, elu, gat_layer, gcn_layer, log_softmax, relu, sgc_forward
from .train import TrainConfig, TrainingError, train_model, tuned_config

__all__ = [
    "ARCHS",
    "ActivationRecord",
    "Interceptor",
    "InterceptorRegistry",
    "ModelCheckpoint",
    "TrainConfig",
    "TrainingError",
    "activation_census",
    "cheb_layer",
    "default_hyper",
    "elu",
    "evaluate_accuracy",
    "gat_layer",
    "gcn_layer",
    "init_checkpoint",
    "load_checkpoint",
    "log_softmax",
    "model_forward",
    "param_count",
    "relu",
    "save_checkpoint",
    "sgc_forward",
    "train_model",
    "tuned_config",
]
