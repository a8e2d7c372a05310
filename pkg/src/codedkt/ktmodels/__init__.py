"""DKT, Code-DKT and the code-feature DKT baselines."""
from .config import ABLATION_VARIANTS, ModelConfig
from .features import ExpertFeaturizer, TfidfFeaturizer, expert_features, tfidf_features
from .networks import codedkt_attempt_vector, dkt_forward
from .training import KTModel, PredictionTrace, TraceRecord, predict, pretrain_static_embedding, train

__all__ = [
    "ABLATION_VARIANTS", "ModelConfig", "ExpertFeaturizer", "TfidfFeaturizer", "expert_features",
    "tfidf_features", "codedkt_attempt_vector", "dkt_forward", "KTModel", "PredictionTrace",
    "TraceRecord", "predict", "pretrain_static_embedding", "train",
]
