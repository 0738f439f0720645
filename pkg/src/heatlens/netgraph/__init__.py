from .build import build_network, toy_cnn_architecture
from .data import BlobDataset, generate_blob_dataset, to_model_input
from .io import load_model, save_model
from .layers import (
    LAYER_KINDS,
    BatchNorm,
    Conv2D,
    Dense,
    Flatten,
    GlobalAvgPool,
    Layer,
    MaxPool2D,
    ReLU,
    Sigmoid,
)
from .network import (
    ActivationCache,
    Gradients,
    Network,
    backward,
    backward_gradient,
    forward,
    forward_batch,
    predict_logits,
    predict_proba,
)
from .train import TrainConfig, bce_with_logits, train

__all__ = [
    "ActivationCache",
    "BatchNorm",
    "BlobDataset",
    "Conv2D",
    "Dense",
    "Flatten",
    "GlobalAvgPool",
    "Gradients",
    "LAYER_KINDS",
    "Layer",
    "MaxPool2D",
    "Network",
    "ReLU",
    "Sigmoid",
    "TrainConfig",
    "backward",
    "backward_gradient",
    "bce_with_logits",
    "build_network",
    "forward",
    "forward_batch",
    "generate_blob_dataset",
    "load_model",
    "predict_logits",
    "predict_proba",
    "save_model",
    "to_model_input",
    "toy_cnn_architecture",
    "train",
]
