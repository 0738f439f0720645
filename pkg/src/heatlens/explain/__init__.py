from .export import METHODS, export_heatmap
from .gradcam import GradCamMap, eligible_layers, grad_cam, select_last_conv
from .lasso import LassoFit, lasso_auto, weighted_lasso
from .lime import LimeConfig, LimeExplanation, LimeSamples, explain_lime, fit_surrogate, sample_neighborhood
from .lrp import RelevanceMap, lrp
from .shap import ShapConfig, ShapExplanation, exact_shapley, kernel_shap, kernel_shap_values, shapley_kernel_weight
from .superpixels import SuperpixelMap, segment_superpixels

__all__ = [
    "METHODS",
    "GradCamMap",
    "LassoFit",
    "LimeConfig",
    "LimeExplanation",
    "LimeSamples",
    "RelevanceMap",
    "ShapConfig",
    "ShapExplanation",
    "SuperpixelMap",
    "eligible_layers",
    "exact_shapley",
    "explain_lime",
    "export_heatmap",
    "fit_surrogate",
    "grad_cam",
    "kernel_shap",
    "kernel_shap_values",
    "lasso_auto",
    "lrp",
    "sample_neighborhood",
    "segment_superpixels",
    "select_last_conv",
    "shapley_kernel_weight",
    "weighted_lasso",
]
