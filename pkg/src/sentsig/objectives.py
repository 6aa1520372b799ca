"""The two supervision objectives as trainable losses with analytic gradients.

The NLI objective classifies a sentence pair from the composed feature
``[u; v; |u - v|]`` with a 3-way softmax head.  The definition objective
predicts a headword from the pooled embedding of its definition sentence
through a vocabulary-sized prediction layer, whose weights are tied to the
embedding table by default.

Both objectives backpropagate into the encoder's embedding table through the
configured pooling.  Training is a pure function of (data order, seed,
config): repeated runs are bit-identical.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import DefinitionExample, NliExample, tokenize
from .encoder import CLS_INDEX, ToyEncoder
from .errors import InvalidInputError
from .numstat import cross_entropy, make_rng, softmax

logger = logging.getLogger(__name__)

LR_GRID = tuple(x * 1e-6 for x in (1, 2, 5, 10, 20, 50))


@dataclass
class TrainConfig:
    batch_size: int = 16
    epochs: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    base_lr: float = 1e-3  # toy-table scale; real fine-tuning used the 1e-6 grid
    warmup_fraction: float = 0.10
    seed: int = 0
    smart_batching: bool = True
    bucket_width: int = 8
    lr_decay: str = "constant"  # or "linear": ramp down to 0 after warmup
    tied_head: bool = True
    head_bias: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")
        if self.epochs < 0:
            raise InvalidInputError("epochs must be >= 0")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise InvalidInputError("warmup_fraction must be in [0, 1)")
        if self.base_lr <= 0.0:
            raise InvalidInputError("base_lr must be positive")
        if self.lr_decay not in ("constant", "linear"):
            raise InvalidInputError(f"unknown lr_decay {self.lr_decay!r}")


@dataclass
class MultiSchedule:
    nli_steps_per_cycle: int = 19
    def_steps_per_cycle: int = 1

    def __post_init__(self):
        if self.nli_steps_per_cycle < 1 or self.def_steps_per_cycle < 1:
            raise InvalidInputError("schedule steps per cycle must be positive")

    @property
    def cycle_length(self) -> int:
        return self.nli_steps_per_cycle + self.def_steps_per_cycle


class NliHead:
    """3-way softmax classifier over the composed pair feature (3d inputs)."""

    def __init__(self, W: np.ndarray, b: np.ndarray | None):
        if W.shape[0] != 3 or W.shape[1] % 3 != 0:
            raise InvalidInputError(f"NLI head weights must be (3, 3d), got {W.shape}")
        if b is not None and b.shape != (3,):
            raise InvalidInputError(f"NLI head bias must be (3,), got {b.shape}")
        self.W = W
        self.b = b

    @classmethod
    def create(cls, dim: int, bias: bool = True) -> "NliHead":
        return cls(np.zeros((3, 3 * dim)), np.zeros(3) if bias else None)


class WordPredictionHead:
    """Vocabulary-sized prediction layer; ``tied`` aliases the embedding table."""

    def __init__(self, weights: np.ndarray, bias: np.ndarray, tied: bool):
        if weights.shape[0] != bias.shape[0]:
            raise InvalidInputError("prediction weights and bias disagree on vocabulary size")
        self.weights = weights
        self.bias = bias
        self.tied = tied

    @classmethod
    def create(cls, encoder: ToyEncoder, tied: bool = True) -> "WordPredictionHead":
        vocab_size = len(encoder.vocab)
        if tied:
            # alias, not a copy: in-place optimizer updates keep them identical
            return cls(encoder.table, np.zeros(vocab_size), tied=True)
        return cls(np.zeros((vocab_size, encoder.dim)), np.zeros(vocab_size), tied=False)


@dataclass
class StepRecord:
    stream: str  # "nli" or "def"
    loss: float
    lr: float


@dataclass
class TrainResult:
    encoder: ToyEncoder
    nli_head: NliHead | None = None
    def_head: WordPredictionHead | None = None
    steps: list[StepRecord] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [s.loss for s in self.steps]

    def stream_pattern(self) -> list[tuple[str, int]]:
        """Run-length encoding of the step streams, e.g. [("nli", 19), ("def", 1)]."""
        pattern: list[tuple[str, int]] = []
        for rec in self.steps:
            if pattern and pattern[-1][0] == rec.stream:
                pattern[-1] = (rec.stream, pattern[-1][1] + 1)
            else:
                pattern.append((rec.stream, 1))
        return pattern


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------

def _embed_forward(encoder: ToyEncoder, tokens: list[str]):
    """Pooled embedding plus the cache needed to route gradients back."""
    idxs = encoder.token_indices(tokens)
    rows = encoder.table[idxs]
    if encoder.pooling == "cls":
        return rows[0].copy(), (idxs, None)
    content = rows[1:]
    if encoder.pooling == "mean":
        return content.mean(axis=0), (idxs, None)
    argmax = content.argmax(axis=0)  # ties -> first position, deterministic
    return content.max(axis=0), (idxs, argmax)


def _embed_backward(encoder: ToyEncoder, cache, grad_out: np.ndarray, table_grad: np.ndarray):
    idxs, argmax = cache
    if encoder.pooling == "cls":
        table_grad[CLS_INDEX] += grad_out
        return
    content = np.asarray(idxs[1:])
    if encoder.pooling == "mean":
        np.add.at(table_grad, content, grad_out / content.shape[0])
        return
    # max: each coordinate's gradient goes to the row that produced the max
    np.add.at(table_grad, (content[argmax], np.arange(grad_out.shape[0])), grad_out)


def nli_features(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    if u.shape != v.shape:
        raise InvalidInputError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return np.concatenate([u, v, np.abs(u - v)])


def nli_forward(u: np.ndarray, v: np.ndarray, head: NliHead) -> np.ndarray:
    """Logits W [u; v; |u-v|] + b."""
    f = nli_features(u, v)
    if head.W.shape[1] != f.shape[0]:
        raise InvalidInputError(
            f"head expects feature dim {head.W.shape[1]}, got {f.shape[0]}")
    logits = head.W @ f
    if head.b is not None:
        logits = logits + head.b
    return logits


def nli_loss_and_grads(batch: list[NliExample], encoder: ToyEncoder, head: NliHead):
    """Mean cross-entropy over the batch and gradients for table, W and b.

    The absolute-value feature uses subgradient 0 at exact zeros.
    """
    if not batch:
        raise InvalidInputError("empty NLI batch")
    d = encoder.dim
    table_grad = np.zeros_like(encoder.table)
    w_grad = np.zeros_like(head.W)
    b_grad = np.zeros(3) if head.b is not None else None
    total = 0.0
    for ex in batch:
        u, cache_u = _embed_forward(encoder, tokenize(ex.premise))
        v, cache_v = _embed_forward(encoder, tokenize(ex.hypothesis))
        diff = u - v
        f = np.concatenate([u, v, np.abs(diff)])
        logits = head.W @ f
        if head.b is not None:
            logits = logits + head.b
        probs = softmax(logits)
        gold = ex.label_index
        total += cross_entropy(probs, gold)
        g = probs.copy()
        g[gold] -= 1.0
        w_grad += np.outer(g, f)
        if b_grad is not None:
            b_grad += g
        df = head.W.T @ g
        sign = np.sign(diff)
        du = df[:d] + sign * df[2 * d :]
        dv = df[d : 2 * d] - sign * df[2 * d :]
        _embed_backward(encoder, cache_u, du, table_grad)
        _embed_backward(encoder, cache_v, dv, table_grad)
    m = len(batch)
    grads = {"table": table_grad / m, "nli_W": w_grad / m}
    if b_grad is not None:
        grads["nli_b"] = b_grad / m
    return total / m, grads


def def_forward(s: np.ndarray, head: WordPredictionHead) -> np.ndarray:
    """Logits over the vocabulary: weights s + bias."""
    if head.weights.shape[1] != s.shape[0]:
        raise InvalidInputError(
            f"head expects embedding dim {head.weights.shape[1]}, got {s.shape[0]}")
    return head.weights @ s + head.bias


def def_loss_and_grads(batch: list[DefinitionExample], encoder: ToyEncoder,
                       head: WordPredictionHead):
    """Mean cross-entropy of headword prediction and gradients.

    Every headword must be a vocabulary entry.  With a tied head the table
    gradient accumulates both the encoder path and the output-layer path.
    """
    if not batch:
        raise InvalidInputError("empty definition batch")
    table_grad = np.zeros_like(encoder.table)
    out_grad = np.zeros_like(head.weights)
    bias_grad = np.zeros_like(head.bias)
    total = 0.0
    for ex in batch:
        if ex.word not in encoder.vocab:
            raise InvalidInputError(f"headword {ex.word!r} is not in the vocabulary")
        gold = encoder.vocab.index(ex.word)
        s, cache = _embed_forward(encoder, tokenize(ex.definition))
        probs = softmax(head.weights @ s + head.bias)
        total += cross_entropy(probs, gold)
        g = probs.copy()
        g[gold] -= 1.0
        out_grad += np.outer(g, s)
        bias_grad += g
        ds = head.weights.T @ g
        _embed_backward(encoder, cache, ds, table_grad)
    m = len(batch)
    if head.tied:
        grads = {"table": (table_grad + out_grad) / m, "def_bias": bias_grad / m}
    else:
        grads = {"table": table_grad / m, "def_W": out_grad / m, "def_bias": bias_grad / m}
    return total / m, grads


# ---------------------------------------------------------------------------
# optimizer and schedule
# ---------------------------------------------------------------------------

class Adam:
    """Adam with bias correction; updates are applied in place.

    A call to :meth:`step` touches only the parameters named in ``grads``
    (multi-task streams update disjoint heads); each parameter keeps its own
    step counter for bias correction.
    """

    def __init__(self, params: dict[str, np.ndarray], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {k: np.zeros_like(p) for k, p in params.items()}
        self.v = {k: np.zeros_like(p) for k, p in params.items()}
        self.t = {k: 0 for k in params}

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        for name, g in grads.items():
            p = self.params[name]
            if g.shape != p.shape:
                raise InvalidInputError(
                    f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
            self.t[name] += 1
            t = self.t[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            p -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def lr_at(step: int, total_steps: int, base_lr: float, warmup_fraction: float = 0.10,
          decay: str = "constant") -> float:
    """Linear warmup to base_lr over the first ceil(fraction * total) steps.

    After warmup the rate is constant by default; ``decay="linear"`` ramps it
    down to 0 at the final step instead.
    """
    if not 1 <= step <= total_steps:
        raise InvalidInputError(f"step {step} outside [1, {total_steps}]")
    warmup_steps = math.ceil(warmup_fraction * total_steps)
    if step <= warmup_steps:
        return base_lr * step / warmup_steps
    if decay == "constant":
        return base_lr
    remaining = total_steps - warmup_steps
    return base_lr * (total_steps - step) / remaining


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------

def example_token_length(example) -> int:
    if isinstance(example, NliExample):
        return max(len(tokenize(example.premise)), len(tokenize(example.hypothesis)))
    if isinstance(example, DefinitionExample):
        return len(tokenize(example.definition))
    raise InvalidInputError(f"cannot measure token length of {type(example).__name__}")


def smart_batches(examples: list, batch_size: int, rng: np.random.Generator,
                  bucket_width: int = 8) -> list[list]:
    """Length-bucketed batches in seeded-random order; every example appears once.

    Examples are grouped into token-length buckets of the given width and each
    batch is drawn from a single bucket, so in-batch length spread never
    exceeds the bucket width.
    """
    if not examples:
        raise InvalidInputError("no examples to batch")
    if batch_size < 1:
        raise InvalidInputError("batch_size must be >= 1")
    buckets: dict[int, list[int]] = {}
    for i, ex in enumerate(examples):
        buckets.setdefault(example_token_length(ex) // bucket_width, []).append(i)
    batches: list[list] = []
    for key in sorted(buckets):
        idxs = buckets[key]
        order = rng.permutation(len(idxs))
        shuffled = [idxs[j] for j in order]
        for start in range(0, len(shuffled), batch_size):
            batches.append([examples[i] for i in shuffled[start : start + batch_size]])
    batch_order = rng.permutation(len(batches))
    return [batches[j] for j in batch_order]


def _plain_batches(examples: list, batch_size: int, rng: np.random.Generator) -> list[list]:
    order = rng.permutation(len(examples))
    return [[examples[i] for i in order[s : s + batch_size]]
            for s in range(0, len(examples), batch_size)]


def _epoch_batches(examples: list, config: TrainConfig, rng: np.random.Generator) -> list[list]:
    if config.smart_batching:
        return smart_batches(examples, config.batch_size, rng, config.bucket_width)
    return _plain_batches(examples, config.batch_size, rng)


def batches_per_epoch(examples: list, config: TrainConfig) -> int:
    """Batch count per epoch; fixed by bucket sizes, independent of shuffling."""
    if config.smart_batching:
        buckets: dict[int, int] = {}
        for ex in examples:
            key = example_token_length(ex) // config.bucket_width
            buckets[key] = buckets.get(key, 0) + 1
        return sum(math.ceil(n / config.batch_size) for n in buckets.values())
    return math.ceil(len(examples) / config.batch_size)


class BatchStream:
    """Endless stream of batches; rewinds with a fresh shuffle when exhausted."""

    def __init__(self, examples: list, config: TrainConfig, rng: np.random.Generator):
        if not examples:
            raise InvalidInputError("empty example stream")
        self.examples = examples
        self.config = config
        self.rng = rng
        self.batches_per_pass = batches_per_epoch(examples, config)
        self._queue: list = []

    def next_batch(self) -> list:
        if not self._queue:
            self._queue = list(reversed(_epoch_batches(self.examples, self.config, self.rng)))
        return self._queue.pop()


# ---------------------------------------------------------------------------
# training loops
# ---------------------------------------------------------------------------

def _drop_oov_definitions(data: list[DefinitionExample], encoder: ToyEncoder):
    kept = [ex for ex in data if ex.word in encoder.vocab]
    dropped = len(data) - len(kept)
    if dropped:
        logger.info("dropped %d definition examples with out-of-vocabulary headwords", dropped)
    if not kept:
        raise InvalidInputError("no definition examples with in-vocabulary headwords")
    return kept


def train_sbert(encoder: ToyEncoder, nli_data: list[NliExample],
                config: TrainConfig) -> TrainResult:
    """Fine-tune the encoder on the NLI classification objective."""
    if not nli_data:
        raise InvalidInputError("empty NLI dataset")
    rng = make_rng(config.seed)
    head = NliHead.create(encoder.dim, bias=config.head_bias)
    params = {"table": encoder.table, "nli_W": head.W}
    if head.b is not None:
        params["nli_b"] = head.b
    optimizer = Adam(params, config.beta1, config.beta2, config.eps)
    total_steps = config.epochs * batches_per_epoch(nli_data, config)
    result = TrainResult(encoder=encoder, nli_head=head)
    step = 0
    for _ in range(config.epochs):
        for batch in _epoch_batches(nli_data, config, rng):
            step += 1
            lr = lr_at(step, total_steps, config.base_lr, config.warmup_fraction,
                       config.lr_decay)
            loss, grads = nli_loss_and_grads(batch, encoder, head)
            optimizer.step(grads, lr)
            result.steps.append(StepRecord("nli", loss, lr))
    return result


def train_defsent(encoder: ToyEncoder, def_data: list[DefinitionExample],
                  config: TrainConfig) -> TrainResult:
    """Fine-tune the encoder on the definition-to-headword objective."""
    if not def_data:
        raise InvalidInputError("empty definition dataset")
    data = _drop_oov_definitions(def_data, encoder)
    rng = make_rng(config.seed)
    head = WordPredictionHead.create(encoder, tied=config.tied_head)
    params = {"table": encoder.table, "def_bias": head.bias}
    if not head.tied:
        params["def_W"] = head.weights
    optimizer = Adam(params, config.beta1, config.beta2, config.eps)
    total_steps = config.epochs * batches_per_epoch(data, config)
    result = TrainResult(encoder=encoder, def_head=head)
    step = 0
    for _ in range(config.epochs):
        for batch in _epoch_batches(data, config, rng):
            step += 1
            lr = lr_at(step, total_steps, config.base_lr, config.warmup_fraction,
                       config.lr_decay)
            loss, grads = def_loss_and_grads(batch, encoder, head)
            optimizer.step(grads, lr)
            result.steps.append(StepRecord("def", loss, lr))
    return result


def train_multi(encoder: ToyEncoder, nli_data: list[NliExample],
                def_data: list[DefinitionExample], config: TrainConfig,
                schedule: MultiSchedule | None = None) -> TrainResult:
    """Interleaved multi-task training on a shared encoder.

    Each cycle runs ``schedule.nli_steps_per_cycle`` NLI steps followed by
    ``schedule.def_steps_per_cycle`` definition steps.  The nominal step count
    (epochs x NLI batches per epoch) is rounded up to whole cycles; each
    stream cycles through its own reshuffled batches when exhausted.
    """
    if not nli_data or not def_data:
        raise InvalidInputError("multi-task training needs both datasets")
    schedule = schedule or MultiSchedule()
    def_kept = _drop_oov_definitions(def_data, encoder)
    rng = make_rng(config.seed)
    nli_head = NliHead.create(encoder.dim, bias=config.head_bias)
    def_head = WordPredictionHead.create(encoder, tied=config.tied_head)
    params = {"table": encoder.table, "nli_W": nli_head.W}
    if nli_head.b is not None:
        params["nli_b"] = nli_head.b
    params["def_bias"] = def_head.bias
    if not def_head.tied:
        params["def_W"] = def_head.weights
    optimizer = Adam(params, config.beta1, config.beta2, config.eps)

    nominal = config.epochs * batches_per_epoch(nli_data, config)
    cycle = schedule.cycle_length
    total_steps = math.ceil(nominal / cycle) * cycle if nominal else 0
    result = TrainResult(encoder=encoder, nli_head=nli_head, def_head=def_head)
    if total_steps == 0:
        return result

    nli_stream = BatchStream(nli_data, config, rng)
    def_stream = BatchStream(def_kept, config, rng)
    for step in range(1, total_steps + 1):
        lr = lr_at(step, total_steps, config.base_lr, config.warmup_fraction,
                   config.lr_decay)
        in_cycle = (step - 1) % cycle
        if in_cycle < schedule.nli_steps_per_cycle:
            loss, grads = nli_loss_and_grads(nli_stream.next_batch(), encoder, nli_head)
            result.steps.append(StepRecord("nli", loss, lr))
        else:
            loss, grads = def_loss_and_grads(def_stream.next_batch(), encoder, def_head)
            result.steps.append(StepRecord("def", loss, lr))
        optimizer.step(grads, lr)
    return result


# ---------------------------------------------------------------------------
# learning rate selection
# ---------------------------------------------------------------------------

@dataclass
class GridSearchResult:
    best_lr: float
    mean_scores: dict[float, float]
    seed_scores: dict[float, list[float]]


def lr_grid_search(train_fn, scorer, seeds=(0, 1, 2), grid=LR_GRID) -> GridSearchResult:
    """Pick the grid learning rate with the best mean validation score.

    ``train_fn(lr, seed)`` returns a trained provider; ``scorer(provider)``
    returns a real score (higher is better).  Ties go to the smaller rate.
    """
    if not seeds or not grid:
        raise InvalidInputError("grid search needs at least one seed and one rate")
    mean_scores: dict[float, float] = {}
    seed_scores: dict[float, list[float]] = {}
    for lr in grid:
        scores = [float(scorer(train_fn(lr, seed))) for seed in seeds]
        seed_scores[lr] = scores
        mean_scores[lr] = sum(scores) / len(scores)
    best_lr = None
    best = -math.inf
    for lr in sorted(mean_scores):
        if mean_scores[lr] > best:
            best = mean_scores[lr]
            best_lr = lr
    return GridSearchResult(best_lr=best_lr, mean_scores=mean_scores, seed_scores=seed_scores)
