"""The three classifiers: kernel SVM (SMO), gradient-boosted trees, and an MLP."""

from .svm import KernelSpec, SvmModel, kernel_eval, scale_sigma, svm_predict, svm_train
from .gbdt import GbdtModel, gbdt_predict, gbdt_train
from .mlp import MlpModel, loss_and_grads, mlp_predict, mlp_predict_proba, mlp_train
from .store import load_model, save_model

__all__ = [
    "KernelSpec",
    "SvmModel",
    "kernel_eval",
    "scale_sigma",
    "svm_predict",
    "svm_train",
    "GbdtModel",
    "gbdt_predict",
    "gbdt_train",
    "MlpModel",
    "loss_and_grads",
    "mlp_predict",
    "mlp_predict_proba",
    "mlp_train",
    "load_model",
    "save_model",
]
