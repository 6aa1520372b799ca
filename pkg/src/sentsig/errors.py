"""Exception types shared across the toolkit."""


class SentsigError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(SentsigError, ValueError):
    """An argument violates an operation's contract (shape, range, emptiness)."""


class ParseError(SentsigError, ValueError):
    """A data file is malformed. Carries the path and 1-based line number."""

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class MissingEmbeddingError(SentsigError, KeyError):
    """A sentence was requested from a provider that cannot embed it."""

    def __init__(self, sentence):
        self.sentence = sentence
        super().__init__(f"no embedding stored for sentence: {sentence!r}")

    def __str__(self):
        return self.args[0]


class DegenerateScoresError(SentsigError, ValueError):
    """A correlation was requested over scores with zero variance."""
