"""Single-file model persistence.

The file is canonical JSON: sorted keys, fixed separators, and shortest
round-trip float formatting, so load followed by save rewrites the same
bytes.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Vocabulary
from .errors import DataError
from .moe import ModelParams
from .similarity import CorpusStats
from .train.trainer import TrainConfig

FORMAT_VERSION = 1


@dataclass
class ModelArtifact:
    vocabulary: Vocabulary
    corpus_stats: dict  # category -> CorpusStats
    model_params: ModelParams
    train_config: TrainConfig
    metrics: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def to_dict(self):
        return {
            "format_version": self.format_version,
            "vocabulary": self.vocabulary.to_dict(),
            "corpus_stats": {cat: s.to_dict() for cat, s in self.corpus_stats.items()},
            "model_params": self.model_params.to_dict(),
            "train_config": self.train_config.to_dict(),
            "metrics": self.metrics,
        }

    def dumps(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"),
                          allow_nan=False) + "\n"

    def save(self, path):
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def from_dict(cls, d):
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise DataError(f"artifact format_version {version!r} is not supported "
                            f"(expected {FORMAT_VERSION})")
        try:
            return cls(
                vocabulary=Vocabulary.from_dict(d["vocabulary"]),
                corpus_stats={cat: CorpusStats.from_dict(s)
                              for cat, s in d["corpus_stats"].items()},
                model_params=ModelParams.from_dict(d["model_params"]),
                train_config=TrainConfig.from_dict(d["train_config"]),
                metrics=d.get("metrics", {}),
                format_version=version)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed model artifact: {exc}") from None

    @classmethod
    def loads(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"model artifact is not valid JSON ({exc.msg})") from None
        if not isinstance(d, dict):
            raise DataError("model artifact must be a JSON object")
        return cls.from_dict(d)

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.exists():
            raise DataError(f"no such file: {path}")
        return cls.loads(path.read_text(encoding="utf-8"))

    def estimator(self):
        from .estimators import MixtureOfExpertsQA

        return MixtureOfExpertsQA.from_params(self.model_params, self.vocabulary,
                                              self.corpus_stats)
