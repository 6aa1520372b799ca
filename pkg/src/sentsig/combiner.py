"""Combining the two supervision signals: sequential pipelines and merged providers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import DefinitionExample, NliExample
from .encoder import EmbeddingProvider, ToyEncoder
from .errors import InvalidInputError
from .objectives import MultiSchedule, TrainConfig, TrainResult, train_defsent, train_multi, train_sbert

STAGES = ("sbert", "defsent", "multi")
COMBINE_MODES = ("average", "concat")


def combine_average(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Componentwise mean of two equal-dimension vectors."""
    if a.shape != b.shape:
        raise InvalidInputError(f"average needs equal dims, got {a.shape} and {b.shape}")
    return (a + b) / 2.0


def combine_concat(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a followed by b; the result dim is the sum of both dims."""
    return np.concatenate([a, b])


class CombinedProvider:
    """Embeds with two providers and merges per sentence (average or concat)."""

    def __init__(self, mode: str, provider_a: EmbeddingProvider, provider_b: EmbeddingProvider):
        if mode not in COMBINE_MODES:
            raise InvalidInputError(f"unknown combination mode {mode!r}")
        if mode == "average" and provider_a.dim != provider_b.dim:
            raise InvalidInputError(
                f"average needs equal dims, got {provider_a.dim} and {provider_b.dim}")
        self.mode = mode
        self.provider_a = provider_a
        self.provider_b = provider_b
        self.dim = provider_a.dim if mode == "average" else provider_a.dim + provider_b.dim
        self.name = f"{mode}({provider_a.name},{provider_b.name})"

    def embed(self, sentence: str) -> np.ndarray:
        a = self.provider_a.embed(sentence)
        b = self.provider_b.embed(sentence)
        if self.mode == "average":
            return combine_average(a, b)
        return combine_concat(a, b)


@dataclass
class PipelineSpec:
    """Ordered training stages applied to one shared encoder."""

    stages: list[str]
    configs: list[TrainConfig] = field(default_factory=list)
    schedule: MultiSchedule = field(default_factory=MultiSchedule)

    def __post_init__(self):
        if not self.stages:
            raise InvalidInputError("pipeline needs at least one stage")
        for stage in self.stages:
            if stage not in STAGES:
                raise InvalidInputError(f"unknown pipeline stage {stage!r}")
        if "multi" in self.stages and len(self.stages) > 1:
            raise InvalidInputError("the multi stage must be the only stage")
        if not self.configs:
            self.configs = [TrainConfig() for _ in self.stages]
        if len(self.configs) != len(self.stages):
            raise InvalidInputError("one TrainConfig per stage is required")

    @classmethod
    def from_method(cls, method: str, config: TrainConfig,
                    schedule: MultiSchedule | None = None) -> "PipelineSpec":
        """Map a method keyword (sbert, defsent, s+d, d+s, multi) to stages."""
        stages = {
            "sbert": ["sbert"],
            "defsent": ["defsent"],
            "s+d": ["sbert", "defsent"],
            "d+s": ["defsent", "sbert"],
            "multi": ["multi"],
        }.get(method)
        if stages is None:
            raise InvalidInputError(f"unknown training method {method!r}")
        return cls(stages=stages, configs=[config for _ in stages],
                   schedule=schedule or MultiSchedule())


@dataclass
class PipelineResult:
    encoder: ToyEncoder
    stage_results: list[TrainResult]


def run_pipeline(spec: PipelineSpec, encoder: ToyEncoder,
                 nli_data: list[NliExample] | None = None,
                 def_data: list[DefinitionExample] | None = None) -> PipelineResult:
    """Apply the stages sequentially to the same encoder parameters.

    Stage N+1 starts from exactly the parameters stage N finished with.
    """
    stage_results = []
    for stage, config in zip(spec.stages, spec.configs):
        if stage == "sbert":
            if not nli_data:
                raise InvalidInputError("sbert stage requires an NLI dataset")
            stage_results.append(train_sbert(encoder, nli_data, config))
        elif stage == "defsent":
            if not def_data:
                raise InvalidInputError("defsent stage requires a definition dataset")
            stage_results.append(train_defsent(encoder, def_data, config))
        else:
            if not nli_data or not def_data:
                raise InvalidInputError("multi stage requires both datasets")
            stage_results.append(train_multi(encoder, nli_data, def_data, config, spec.schedule))
    return PipelineResult(encoder=encoder, stage_results=stage_results)
