"""Versioned text checkpoints: vocabulary, embedding table, heads, config.

Checkpoints are JSON with floats in shortest round-trip decimals, so a
save/load cycle is value-exact and re-saving an unchanged model is
byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import CLS_TOKEN, UNK_TOKEN, ToyEncoder, Vocabulary
from .errors import InvalidInputError
from .objectives import NliHead, TrainConfig, WordPredictionHead

FORMAT = "sentsig-checkpoint"
VERSION = 1


@dataclass
class Checkpoint:
    encoder: ToyEncoder
    nli_head: NliHead | None = None
    def_head: WordPredictionHead | None = None
    train_config: TrainConfig | None = None


def _matrix(a: np.ndarray) -> list[list[float]]:
    return [[float(x) for x in row] for row in a]


def save_checkpoint(path, encoder: ToyEncoder, nli_head: NliHead | None = None,
                    def_head: WordPredictionHead | None = None,
                    train_config: TrainConfig | None = None) -> None:
    payload = {
        "format": FORMAT,
        "version": VERSION,
        "pooling": encoder.pooling,
        "dim": encoder.dim,
        "max_tokens": encoder.max_tokens,
        "vocab": encoder.vocab.words,
        "table": _matrix(encoder.table),
        "nli_head": None,
        "def_head": None,
        "train_config": dataclasses.asdict(train_config) if train_config else None,
    }
    if nli_head is not None:
        payload["nli_head"] = {
            "W": _matrix(nli_head.W),
            "b": [float(x) for x in nli_head.b] if nli_head.b is not None else None,
        }
    if def_head is not None:
        payload["def_head"] = {
            "tied": def_head.tied,
            "weights": None if def_head.tied else _matrix(def_head.weights),
            "bias": [float(x) for x in def_head.bias],
        }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != FORMAT:
        raise InvalidInputError(f"{path}: not a {FORMAT} file")
    if payload.get("version") != VERSION:
        raise InvalidInputError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    words = payload["vocab"]
    if words[:2] != [CLS_TOKEN, UNK_TOKEN]:
        raise InvalidInputError(f"{path}: vocabulary is missing the reserved entries")
    vocab = Vocabulary(words[2:])
    encoder = ToyEncoder(vocab, np.array(payload["table"], dtype=np.float64),
                         pooling=payload["pooling"], max_tokens=payload["max_tokens"],
                         name=path.stem)
    nli_head = None
    if payload["nli_head"] is not None:
        raw = payload["nli_head"]
        b = None if raw["b"] is None else np.array(raw["b"], dtype=np.float64)
        nli_head = NliHead(np.array(raw["W"], dtype=np.float64), b)
    def_head = None
    if payload["def_head"] is not None:
        raw = payload["def_head"]
        bias = np.array(raw["bias"], dtype=np.float64)
        if raw["tied"]:
            def_head = WordPredictionHead(encoder.table, bias, tied=True)
        else:
            def_head = WordPredictionHead(np.array(raw["weights"], dtype=np.float64),
                                          bias, tied=False)
    train_config = None
    if payload["train_config"] is not None:
        train_config = TrainConfig(**payload["train_config"])
    return Checkpoint(encoder=encoder, nli_head=nli_head, def_head=def_head,
                      train_config=train_config)
