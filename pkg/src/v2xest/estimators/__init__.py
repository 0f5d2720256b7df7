"""Neural channel estimators: configs, networks and pipelines."""
from .config import NAMES, REGIMES, TUNED, EstimatorConfig, default_config, scale_epochs
from .networks import build_network, zero_output
from .pipelines import (CNNTransformerEstimator, LSTMEstimator, MLPEstimator, NeuralEstimator,
                        TCNEstimator, cnn_transformer_estimate, deinterleave, interleave,
                        lstm_dpa_ta_estimate, make_estimator, mlp_refine, tcn_dpa_estimate)

__all__ = [
    "NAMES", "REGIMES", "TUNED", "EstimatorConfig", "default_config", "scale_epochs",
    "build_network", "zero_output",
    "CNNTransformerEstimator", "LSTMEstimator", "MLPEstimator", "NeuralEstimator", "TCNEstimator",
    "cnn_transformer_estimate", "deinterleave", "interleave", "lstm_dpa_ta_estimate",
    "make_estimator", "mlp_refine", "tcn_dpa_estimate",
]
