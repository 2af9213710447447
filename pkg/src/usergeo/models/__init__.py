from .base import LossCurve, TrainingDivergence, fit_adam
from .logistic import SoftmaxRegression
from .node2vec import N2VConfig, Node2VecPlus, node2vec_walks, skipgram_embed
from .rgcn import RGCNClassifier
from .sage import GraphSAGEClassifier, sample_neighbors
from .stacking import build_text_features, n2v_ext_predict, out_of_fold_proba, stack_probabilities
from .transformer import TransformerTextClassifier, sinusoidal_encoding

__all__ = [
    "GraphSAGEClassifier", "LossCurve", "N2VConfig", "Node2VecPlus", "RGCNClassifier",
    "SoftmaxRegression", "TrainingDivergence", "TransformerTextClassifier", "build_text_features",
    "fit_adam", "n2v_ext_predict", "node2vec_walks", "out_of_fold_proba", "sample_neighbors",
    "sinusoidal_encoding", "skipgram_embed", "stack_probabilities",
]
