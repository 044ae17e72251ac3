"""Answer product questions from review sentences with a mixture of experts."""

from .artifact import FORMAT_VERSION, ModelArtifact
from .corpus import Corpus, build_corpus, ingest
from .errors import DataError, NumericalError, ReviewQAError
from .estimators import MixtureOfExpertsQA
from .moe import VARIANTS, ModelParams, predict_binary, rank_reviews
from .train import TrainConfig, train

__version__ = "0.1.0"

__all__ = ["FORMAT_VERSION", "ModelArtifact", "Corpus", "build_corpus", "ingest", "DataError",
           "NumericalError", "ReviewQAError", "MixtureOfExpertsQA", "VARIANTS", "ModelParams",
           "predict_binary", "rank_reviews", "TrainConfig", "train"]
