"""Masked-LM encoder backends.

The pipeline talks to encoders through one narrow contract: tokenize a
prompt with exactly one mask slot, predict the top-k vocabulary tokens at
the mask, expose the final-layer hidden state at the mask position, and run
masked-LM training steps.  Two numpy backends live here:

* :class:`MockEncoder` - inference-only, fully deterministic.  Hidden states
  are label-keyed orthogonal base vectors plus seeded Gaussian noise (or
  pure noise when no labels are configured), which lets the whole pipeline
  be exercised and evaluated without any trained checkpoint.
* :class:`TinyMlmEncoder` - a small trainable encoder (token+position
  embeddings, context-mixing tanh layers, tied output projection) with a
  hand-rolled Adam/backprop loop, used to run real biasing smoke tests on
  synthetic corpora.

A checkpoint-backed backend for real Spanish models lives in
:mod:`relcloze.hf_encoder` and requires the optional ``hf`` extra.
"""

from __future__ import annotations

import abc
import base64
import hashlib
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .errors import BackendError, PromptShapeError

PAD_TOKEN = "[PAD]"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
MASK_TOKEN = "[MASK]"
UNK_TOKEN = "[UNK]"
SPECIAL_TOKENS = (PAD_TOKEN, CLS_TOKEN, SEP_TOKEN, MASK_TOKEN, UNK_TOKEN)


# ---------------------------------------------------------------------------
# Shared prompt/prediction types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TokenizedPrompt:
    token_ids: tuple[int, ...]
    mask_index: int
    truncated: bool
    instance_id: str
    template_id: str
    model_id: str


@dataclass(frozen=True)
class TopKPrediction:
    items: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        probs = [p for _, p in self.items]
        for p in probs:
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"probability {p} outside [0, 1]")
        if any(a < b for a, b in zip(probs, probs[1:])):
            raise ValueError("probabilities must be non-increasing")

    def tokens(self) -> list[str]:
        return [t for t, _ in self.items]


@dataclass
class MaskEmbedding:
    instance_id: str
    model_id: str
    template_id: str
    vector: np.ndarray

    def __post_init__(self) -> None:
        self.vector = np.asarray(self.vector, dtype=np.float64)
        if not np.all(np.isfinite(self.vector)):
            raise ValueError(f"non-finite embedding for instance {self.instance_id}")


@dataclass(frozen=True)
class MaskedExample:
    """One MLM training sequence: corrupted ids plus original ids at the
    corrupted positions (label -1 everywhere else)."""

    chunk_id: str
    input_ids: tuple[int, ...]
    labels: tuple[int, ...]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int = 16
    seed: int = 0


# ---------------------------------------------------------------------------
# Whitespace vocabulary shared by the numpy backends
# ---------------------------------------------------------------------------

class WhitespaceVocab:
    """Token <-> id table over whitespace-delimited tokens.

    Mutable by default (new tokens get the next id, deterministic for a
    fixed processing order); a frozen vocab maps unknown tokens to [UNK].
    """

    def __init__(self, tokens: Iterable[str] = (), *, frozen: bool = False):
        self.id_to_token: list[str] = list(SPECIAL_TOKENS)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}
        self.frozen = False
        for tok in tokens:
            self._add(tok)
        self.frozen = frozen

    @classmethod
    def from_texts(cls, texts: Iterable[str], *, frozen: bool = True) -> "WhitespaceVocab":
        seen = sorted({tok for text in texts for tok in text.split()})
        return cls(seen, frozen=frozen)

    def _add(self, token: str) -> int:
        existing = self.token_to_id.get(token)
        if existing is not None:
            return existing
        if self.frozen:
            return self.token_to_id[UNK_TOKEN]
        self.token_to_id[token] = len(self.id_to_token)
        self.id_to_token.append(token)
        return self.token_to_id[token]

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self._add(t) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset(self.token_to_id[t] for t in SPECIAL_TOKENS)


# ---------------------------------------------------------------------------
# Encoder contract
# ---------------------------------------------------------------------------

class Encoder(abc.ABC):
    """Handle to a bidirectional masked-LM encoder."""

    model_id: str
    hidden_size: int
    max_sequence_length: int

    @property
    def mask_token(self) -> str:
        return MASK_TOKEN

    @property
    def separator_token(self) -> str:
        return SEP_TOKEN

    @property
    @abc.abstractmethod
    def vocabulary_size(self) -> int: ...

    @abc.abstractmethod
    def encode_text(self, text: str) -> list[int]:
        """Plain tokenization (leading [CLS], no mask-shape requirement)."""

    @abc.abstractmethod
    def detokenize(self, token_ids: Sequence[int]) -> str: ...

    @abc.abstractmethod
    def predict_masked_topk(self, prompt: TokenizedPrompt, k: int) -> TopKPrediction: ...

    @abc.abstractmethod
    def mask_hidden_state(self, prompt: TokenizedPrompt) -> MaskEmbedding: ...

    @abc.abstractmethod
    def train_mlm(self, examples: Sequence[MaskedExample], config: TrainConfig) -> list[float]:
        """Run MLM training over the example stream; returns per-epoch losses."""

    @property
    @abc.abstractmethod
    def special_token_ids(self) -> frozenset[int]: ...

    def count_tokens(self, text: str) -> int:
        return len(self.encode_text(text))

    def tokenize(
        self,
        text: str,
        *,
        instance_id: str = "",
        template_id: str = "",
        truncated: bool = False,
    ) -> TokenizedPrompt:
        occurrences = text.count(self.mask_token)
        if occurrences != 1:
            raise PromptShapeError(
                f"prompt must contain exactly one {self.mask_token}, found {occurrences}: "
                f"{text[:120]!r}"
            )
        ids = self.encode_text(text)
        mask_id = self._token_id(self.mask_token)
        positions = [i for i, t in enumerate(ids) if t == mask_id]
        if len(positions) != 1:
            raise PromptShapeError(
                f"mask token must appear as exactly one whitespace-delimited token: "
                f"{text[:120]!r}"
            )
        if len(ids) > self.max_sequence_length:
            raise BackendError(
                f"prompt tokenizes to {len(ids)} tokens, over the model limit of "
                f"{self.max_sequence_length}; apply truncate_for_budget first"
            )
        return TokenizedPrompt(
            token_ids=tuple(ids),
            mask_index=positions[0],
            truncated=truncated,
            instance_id=instance_id,
            template_id=template_id,
            model_id=self.model_id,
        )

    @abc.abstractmethod
    def _token_id(self, token: str) -> int: ...

    def _check_prompt(self, prompt: TokenizedPrompt) -> None:
        if prompt.model_id != self.model_id:
            raise BackendError(
                f"prompt was tokenized for model {prompt.model_id!r}, "
                f"not {self.model_id!r}"
            )


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def _rank_topk(tokens: Sequence[str], probs: np.ndarray, k: int) -> TopKPrediction:
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    if k > len(tokens):
        raise ValueError(f"k={k} exceeds vocabulary size {len(tokens)}")
    order = np.argsort(-probs, kind="stable")[:k]
    return TopKPrediction(tuple((tokens[i], float(probs[i])) for i in order))


def _stable_rng(*parts: Any) -> np.random.Generator:
    payload = "\x1f".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "big"))


# ---------------------------------------------------------------------------
# Deterministic inference mock
# ---------------------------------------------------------------------------

class MockEncoder(Encoder):
    """Inference-only encoder whose outputs are pure functions of its seed.

    When ``instance_labels`` is given, the hidden state for an instance is
    the unit axis assigned to its label plus N(0, noise_sigma) noise; without
    labels the hidden state is label-independent seeded noise.  ``logits_fn``
    lets tests pin exact mask-prediction logits.
    """

    kind = "mock"

    def __init__(
        self,
        model_id: str = "mock",
        *,
        hidden_size: int = 32,
        max_sequence_length: int = 512,
        seed: int = 0,
        instance_labels: dict[str, str] | None = None,
        noise_sigma: float = 0.1,
        logits_fn: Callable[[TokenizedPrompt], np.ndarray] | None = None,
        vocab: WhitespaceVocab | None = None,
    ):
        self.model_id = model_id
        self.hidden_size = hidden_size
        self.max_sequence_length = max_sequence_length
        self.seed = seed
        self.instance_labels = dict(instance_labels) if instance_labels else None
        self.noise_sigma = noise_sigma
        self.logits_fn = logits_fn
        self._vocab = vocab if vocab is not None else WhitespaceVocab()
        if self.instance_labels:
            labels = sorted(set(self.instance_labels.values()))
            if len(labels) > hidden_size:
                raise BackendError(
                    f"{len(labels)} labels do not fit {hidden_size} orthogonal axes"
                )
            self._label_axis = {lab: i for i, lab in enumerate(labels)}
        else:
            self._label_axis = {}

    @property
    def vocabulary_size(self) -> int:
        return len(self._vocab)

    @property
    def special_token_ids(self) -> frozenset[int]:
        return self._vocab.special_ids

    def _token_id(self, token: str) -> int:
        return self._vocab._add(token)

    def encode_text(self, text: str) -> list[int]:
        return self._vocab.encode([CLS_TOKEN] + text.split())

    def detokenize(self, token_ids: Sequence[int]) -> str:
        tokens = self._vocab.decode(token_ids)
        return " ".join(t for t in tokens if t not in (PAD_TOKEN, CLS_TOKEN))

    def predict_masked_topk(self, prompt: TokenizedPrompt, k: int) -> TopKPrediction:
        self._check_prompt(prompt)
        tokens = list(self._vocab.id_to_token)
        if self.logits_fn is not None:
            logits = np.asarray(self.logits_fn(prompt), dtype=np.float64)
            if logits.shape != (len(tokens),):
                raise BackendError(
                    f"logits_fn returned shape {logits.shape}, expected ({len(tokens)},)"
                )
        else:
            rng = _stable_rng(self.seed, "logits", self.detokenize(prompt.token_ids))
            logits = rng.standard_normal(len(tokens))
        return _rank_topk(tokens, _softmax(logits), k)

    def mask_hidden_state(self, prompt: TokenizedPrompt) -> MaskEmbedding:
        self._check_prompt(prompt)
        rng = _stable_rng(self.seed, "hidden", prompt.instance_id, prompt.template_id)
        label = (self.instance_labels or {}).get(prompt.instance_id)
        if label is not None:
            vector = np.zeros(self.hidden_size, dtype=np.float64)
            vector[self._label_axis[label]] = 1.0
            vector += self.noise_sigma * rng.standard_normal(self.hidden_size)
        else:
            vector = rng.standard_normal(self.hidden_size)
        return MaskEmbedding(
            instance_id=prompt.instance_id,
            model_id=self.model_id,
            template_id=prompt.template_id,
            vector=vector,
        )

    def train_mlm(self, examples: Sequence[MaskedExample], config: TrainConfig) -> list[float]:
        raise BackendError(
            "the mock backend is inference-only; bias a trainable backend "
            "(e.g. the tiny encoder) instead"
        )

    def to_config(self) -> dict[str, Any]:
        return {
            "hidden_size": self.hidden_size,
            "max_sequence_length": self.max_sequence_length,
            "seed": self.seed,
            "noise_sigma": self.noise_sigma,
            "instance_labels": self.instance_labels,
        }


# ---------------------------------------------------------------------------
# Tiny trainable encoder
# ---------------------------------------------------------------------------

class TinyMlmEncoder(Encoder):
    """Small numpy masked-LM encoder trained with hand-rolled Adam.

    Architecture: token + position embeddings, ``num_layers`` blocks of
    ``h <- tanh(h W + mean(h) U + b)`` (the mean term mixes sentence context
    into every position), and a tied-embedding output projection.  Float64
    throughout, so training and inference are bit-reproducible for a fixed
    seed and example order.
    """

    kind = "tiny"

    def __init__(
        self,
        model_id: str,
        vocab: WhitespaceVocab,
        *,
        hidden_size: int = 32,
        num_layers: int = 2,
        max_sequence_length: int = 128,
        seed: int = 0,
        params: dict[str, np.ndarray] | None = None,
    ):
        self.model_id = model_id
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.max_sequence_length = max_sequence_length
        self.seed = seed
        self._vocab = vocab
        self.params = params if params is not None else self._init_params()

    def _init_params(self) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(self.seed)
        h, v, L = self.hidden_size, len(self._vocab), self.max_sequence_length
        params: dict[str, np.ndarray] = {
            "emb": 0.02 * rng.standard_normal((v, h)),
            "pos": 0.02 * rng.standard_normal((L, h)),
            "out_b": np.zeros(v),
        }
        for layer in range(self.num_layers):
            params[f"w{layer}"] = 0.02 * rng.standard_normal((h, h))
            params[f"u{layer}"] = 0.02 * rng.standard_normal((h, h))
            params[f"b{layer}"] = np.zeros(h)
        return params

    @property
    def vocabulary_size(self) -> int:
        return len(self._vocab)

    @property
    def special_token_ids(self) -> frozenset[int]:
        return self._vocab.special_ids

    def _token_id(self, token: str) -> int:
        return self._vocab._add(token)

    def encode_text(self, text: str) -> list[int]:
        return self._vocab.encode([CLS_TOKEN] + text.split())

    def detokenize(self, token_ids: Sequence[int]) -> str:
        tokens = self._vocab.decode(token_ids)
        return " ".join(t for t in tokens if t not in (PAD_TOKEN, CLS_TOKEN))

    def _forward(self, ids: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        p = self.params
        h = p["emb"][ids] + p["pos"][: len(ids)]
        hiddens = [h]
        for layer in range(self.num_layers):
            c = hiddens[-1].mean(axis=0)
            a = hiddens[-1] @ p[f"w{layer}"] + c @ p[f"u{layer}"] + p[f"b{layer}"]
            hiddens.append(np.tanh(a))
        logits = hiddens[-1] @ p["emb"].T + p["out_b"]
        return hiddens, logits

    def predict_masked_topk(self, prompt: TokenizedPrompt, k: int) -> TopKPrediction:
        self._check_prompt(prompt)
        _, logits = self._forward(np.asarray(prompt.token_ids))
        probs = _softmax(logits[prompt.mask_index])
        return _rank_topk(list(self._vocab.id_to_token), probs, k)

    def mask_hidden_state(self, prompt: TokenizedPrompt) -> MaskEmbedding:
        self._check_prompt(prompt)
        hiddens, _ = self._forward(np.asarray(prompt.token_ids))
        return MaskEmbedding(
            instance_id=prompt.instance_id,
            model_id=self.model_id,
            template_id=prompt.template_id,
            vector=hiddens[-1][prompt.mask_index].copy(),
        )

    def _loss_and_grads(
        self, ids: np.ndarray, labels: np.ndarray, grads: dict[str, np.ndarray]
    ) -> tuple[float, int]:
        """Accumulate unscaled gradients for one sequence; returns
        (sum of CE at labeled positions, number of labeled positions)."""
        p = self.params
        hiddens, logits = self._forward(ids)
        labeled = np.nonzero(labels >= 0)[0]
        if labeled.size == 0:
            return 0.0, 0
        t = len(ids)

        z = logits - logits.max(axis=1, keepdims=True)
        log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        loss_sum = -float(log_probs[labeled, labels[labeled]].sum())

        dlogits = np.zeros_like(logits)
        dlogits[labeled] = np.exp(log_probs[labeled])
        dlogits[labeled, labels[labeled]] -= 1.0

        grads["emb"] += dlogits.T @ hiddens[-1]
        grads["out_b"] += dlogits.sum(axis=0)
        dh = dlogits @ p["emb"]
        for layer in range(self.num_layers - 1, -1, -1):
            h_out, h_in = hiddens[layer + 1], hiddens[layer]
            da = dh * (1.0 - h_out**2)
            da_sum = da.sum(axis=0)
            grads[f"w{layer}"] += h_in.T @ da
            grads[f"u{layer}"] += np.outer(h_in.mean(axis=0), da_sum)
            grads[f"b{layer}"] += da_sum
            dc = p[f"u{layer}"] @ da_sum
            dh = da @ p[f"w{layer}"].T + dc / t
        np.add.at(grads["emb"], ids, dh)
        grads["pos"][:t] += dh
        return loss_sum, int(labeled.size)

    def train_mlm(self, examples: Sequence[MaskedExample], config: TrainConfig) -> list[float]:
        if config.epochs == 0:
            return []
        for ex in examples:
            if len(ex.input_ids) > self.max_sequence_length:
                raise BackendError(
                    f"masked example {ex.chunk_id} has {len(ex.input_ids)} tokens, "
                    f"over the model limit of {self.max_sequence_length}"
                )
        adam_m = {k: np.zeros_like(v) for k, v in self.params.items()}
        adam_v = {k: np.zeros_like(v) for k, v in self.params.items()}
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        step = 0
        rng = np.random.default_rng(config.seed)
        losses: list[float] = []
        for _ in range(config.epochs):
            order = rng.permutation(len(examples))
            epoch_loss = 0.0
            epoch_count = 0
            for b in range(0, len(order), config.batch_size):
                batch = order[b : b + config.batch_size]
                grads = {k: np.zeros_like(v) for k, v in self.params.items()}
                batch_loss = 0.0
                batch_count = 0
                for idx in batch:
                    ex = examples[idx]
                    loss_sum, count = self._loss_and_grads(
                        np.asarray(ex.input_ids), np.asarray(ex.labels), grads
                    )
                    batch_loss += loss_sum
                    batch_count += count
                if batch_count == 0:
                    continue
                if not np.isfinite(batch_loss):
                    raise BackendError(
                        f"non-finite loss in batch starting at example index {b} "
                        f"(chunk {examples[batch[0]].chunk_id})"
                    )
                step += 1
                for key, g in grads.items():
                    g = g / batch_count
                    adam_m[key] = beta1 * adam_m[key] + (1 - beta1) * g
                    adam_v[key] = beta2 * adam_v[key] + (1 - beta2) * g**2
                    m_hat = adam_m[key] / (1 - beta1**step)
                    v_hat = adam_v[key] / (1 - beta2**step)
                    self.params[key] -= config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
                epoch_loss += batch_loss
                epoch_count += batch_count
            losses.append(epoch_loss / max(epoch_count, 1))
        return losses

    # Checkpoint layout: weights.npz + meta inside the registry model dir.
    def save(self, directory) -> None:
        from pathlib import Path

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        np.savez(directory / "weights.npz", **self.params)
        from . import jsonl

        jsonl.write_json(
            directory / "encoder.json",
            {
                "hidden_size": self.hidden_size,
                "num_layers": self.num_layers,
                "max_sequence_length": self.max_sequence_length,
                "seed": self.seed,
                "vocab": self._vocab.id_to_token[len(SPECIAL_TOKENS) :],
            },
        )

    @classmethod
    def load(cls, directory, model_id: str) -> "TinyMlmEncoder":
        from pathlib import Path

        from . import jsonl

        directory = Path(directory)
        meta = jsonl.read_json(directory / "encoder.json")
        vocab = WhitespaceVocab(meta["vocab"], frozen=True)
        with np.load(directory / "weights.npz") as data:
            params = {k: data[k].copy() for k in data.files}
        return cls(
            model_id,
            vocab,
            hidden_size=meta["hidden_size"],
            num_layers=meta["num_layers"],
            max_sequence_length=meta["max_sequence_length"],
            seed=meta["seed"],
            params=params,
        )


# ---------------------------------------------------------------------------
# Embedding records
# ---------------------------------------------------------------------------

def embedding_to_record(e: MaskEmbedding, *, encoding: str = "decimal") -> dict[str, Any]:
    rec: dict[str, Any] = {
        "instance_id": e.instance_id,
        "model_id": e.model_id,
        "template_id": e.template_id,
    }
    if encoding == "decimal":
        rec["vector"] = [float(x) for x in e.vector]
    elif encoding == "binary":
        rec["vector_b64"] = base64.b64encode(
            np.ascontiguousarray(e.vector, dtype="<f8").tobytes()
        ).decode("ascii")
    else:
        raise ValueError(f"unknown vector encoding {encoding!r}")
    return rec


def embedding_from_record(rec: dict[str, Any]) -> MaskEmbedding:
    if "vector" in rec and rec["vector"] is not None:
        vector = np.asarray(rec["vector"], dtype=np.float64)
    else:
        vector = np.frombuffer(base64.b64decode(rec["vector_b64"]), dtype="<f8").astype(
            np.float64
        )
    return MaskEmbedding(
        instance_id=rec["instance_id"],
        model_id=rec["model_id"],
        template_id=rec["template_id"],
        vector=vector,
    )
