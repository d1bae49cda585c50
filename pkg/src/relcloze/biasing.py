"""Domain biasing: masked-example construction, training runs, model registry.

"Biasing" is additional masked-LM training of a pretrained encoder on a
corpus from the target semantic field, run before any prompting.  The
masking recipe follows the standard one the base checkpoints were pretrained
with: select ~15% of non-special tokens, then replace 80% of the selected
tokens with the mask token, 10% with a random vocabulary token, and keep 10%
unchanged.
"""

from __future__ import annotations

import datetime as _dt
import shutil
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import jsonl
from .corpus import BiasingChunk
from .encoders import Encoder, MaskedExample, MockEncoder, TinyMlmEncoder, TrainConfig
from .errors import ConfigurationError, RegistryError


@dataclass(frozen=True)
class BiasingConfig:
    base_model_id: str
    learning_rate: float = 5e-5
    epochs: int = 5
    masking_probability: float = 0.15
    corrupt_split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    corpus_ref: str = ""
    seed: int = 0
    batch_size: int = 16
    output_model_id: str | None = None

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be a positive integer, got {self.epochs}")
        if not 0 < self.masking_probability < 1:
            raise ConfigurationError(
                f"masking_probability must be in (0, 1), got {self.masking_probability}"
            )
        if len(self.corrupt_split) != 3 or any(f < 0 for f in self.corrupt_split):
            raise ConfigurationError("corrupt_split must be three non-negative fractions")
        if abs(sum(self.corrupt_split) - 1.0) > 1e-9:
            raise ConfigurationError(
                f"corrupt_split must sum to 1, got {sum(self.corrupt_split)}"
            )

    def to_record(self) -> dict[str, Any]:
        rec = asdict(self)
        rec["corrupt_split"] = list(self.corrupt_split)
        return rec

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "BiasingConfig":
        rec = dict(rec)
        if "corrupt_split" in rec:
            rec["corrupt_split"] = tuple(rec["corrupt_split"])
        return cls(**rec)


@dataclass
class BiasingReport:
    config: BiasingConfig
    losses: list[float]
    final_loss: float
    output_model_id: str

    def __post_init__(self) -> None:
        if len(self.losses) != self.config.epochs:
            raise ConfigurationError(
                f"expected {self.config.epochs} per-epoch losses, got {len(self.losses)}"
            )
        if self.losses and self.final_loss != self.losses[-1]:
            raise ConfigurationError("final_loss must equal the last per-epoch loss")

    def to_record(self) -> dict[str, Any]:
        return {
            "config": self.config.to_record(),
            "losses": self.losses,
            "final_loss": self.final_loss,
            "output_model_id": self.output_model_id,
        }

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "BiasingReport":
        return cls(
            config=BiasingConfig.from_record(rec["config"]),
            losses=list(rec["losses"]),
            final_loss=rec["final_loss"],
            output_model_id=rec["output_model_id"],
        )


# ---------------------------------------------------------------------------
# Masked example construction
# ---------------------------------------------------------------------------

def make_masked_examples(
    encoder: Encoder,
    chunks: Sequence[BiasingChunk],
    config: BiasingConfig,
) -> tuple[list[MaskedExample], list[str]]:
    """Corrupt tokenized chunks for MLM training.

    Every non-special token is independently selected with probability
    ``masking_probability``; selected tokens are mask-replaced, randomized,
    or kept per ``corrupt_split``.  Labels carry the original token id at
    selected positions and -1 elsewhere.  Deterministic for a fixed
    (encoder vocab, chunks, config) triple.
    """
    rng = np.random.default_rng(config.seed)
    special = encoder.special_token_ids
    mask_id = encoder._token_id(encoder.mask_token)
    tokenized = [(chunk, encoder.encode_text(chunk.text)) for chunk in chunks]
    vocab_ids = np.asarray(
        [i for i in range(encoder.vocabulary_size) if i not in special], dtype=np.int64
    )
    if vocab_ids.size == 0:
        raise ConfigurationError("encoder vocabulary has no maskable tokens")
    p_mask, p_random, _ = config.corrupt_split

    examples: list[MaskedExample] = []
    warnings: list[str] = []
    for chunk, ids in tokenized:
        maskable = [i for i, t in enumerate(ids) if t not in special]
        if not maskable:
            warnings.append(f"chunk {chunk.chunk_id} has no maskable tokens; skipped")
            continue
        selected = rng.random(len(maskable)) < config.masking_probability
        input_ids = list(ids)
        labels = [-1] * len(ids)
        for pos, hit in zip(maskable, selected):
            if not hit:
                continue
            labels[pos] = ids[pos]
            action = rng.random()
            if action < p_mask:
                input_ids[pos] = mask_id
            elif action < p_mask + p_random:
                input_ids[pos] = int(vocab_ids[rng.integers(vocab_ids.size)])
            # else: keep the original token
        examples.append(
            MaskedExample(
                chunk_id=chunk.chunk_id,
                input_ids=tuple(input_ids),
                labels=tuple(labels),
            )
        )
    return examples, warnings


# ---------------------------------------------------------------------------
# Model registry
# ---------------------------------------------------------------------------

class ModelRegistry:
    """Directory of model checkpoints with parent lineage.

    Layout: one subdirectory per model_id holding checkpoint artifacts plus
    ``metadata.json`` with {model_id, kind, parent_model, biasing_config,
    final_loss, created_at}.  Writes are atomic (temp dir + rename).
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _dir(self, model_id: str) -> Path:
        if "/" in model_id or model_id in ("", ".", ".."):
            raise RegistryError(f"invalid model_id {model_id!r}")
        return self.root / model_id

    def __contains__(self, model_id: str) -> bool:
        return (self._dir(model_id) / "metadata.json").exists()

    def list_models(self) -> list[str]:
        return sorted(
            p.name for p in self.root.iterdir() if (p / "metadata.json").exists()
        )

    def register(
        self,
        encoder: Encoder,
        *,
        parent_model: str | None = None,
        biasing_config: dict[str, Any] | None = None,
        final_loss: float | None = None,
    ) -> str:
        model_id = encoder.model_id
        target = self._dir(model_id)
        if model_id in self:
            raise RegistryError(f"model {model_id!r} is already registered")
        if parent_model is not None and parent_model not in self:
            raise RegistryError(
                f"parent model {parent_model!r} of {model_id!r} is not registered"
            )
        tmp = self.root / f".{model_id}.tmp"
        if tmp.exists():
            shutil.rmtree(tmp)
        tmp.mkdir(parents=True)
        try:
            if isinstance(encoder, TinyMlmEncoder):
                encoder.save(tmp)
                kind = "tiny"
            elif isinstance(encoder, MockEncoder):
                jsonl.write_json(tmp / "encoder.json", encoder.to_config())
                kind = "mock"
            else:
                kind = getattr(encoder, "kind", "external")
                save = getattr(encoder, "save", None)
                if save is not None:
                    save(tmp)
            jsonl.write_json(
                tmp / "metadata.json",
                {
                    "model_id": model_id,
                    "kind": kind,
                    "parent_model": parent_model,
                    "biasing_config": biasing_config,
                    "final_loss": final_loss,
                    "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
                },
            )
            tmp.rename(target)
        except BaseException:
            if tmp.exists():
                shutil.rmtree(tmp)
            raise
        return model_id

    def lookup(self, model_id: str) -> dict[str, Any]:
        path = self._dir(model_id) / "metadata.json"
        if not path.exists():
            raise RegistryError(f"model {model_id!r} not found in registry at {self.root}")
        return jsonl.read_json(path)

    def lineage(self, model_id: str) -> list[str]:
        """Chain from ``model_id`` back to its base checkpoint."""
        chain = []
        current: str | None = model_id
        while current is not None:
            if current in chain:
                raise RegistryError(f"lineage cycle detected at {current!r}")
            chain.append(current)
            current = self.lookup(current).get("parent_model")
        return chain

    def load_encoder(self, model_id: str) -> Encoder:
        meta = self.lookup(model_id)
        kind = meta.get("kind")
        directory = self._dir(model_id)
        if kind == "tiny":
            return TinyMlmEncoder.load(directory, model_id)
        if kind == "mock":
            cfg = jsonl.read_json(directory / "encoder.json")
            return MockEncoder(
                model_id,
                hidden_size=cfg["hidden_size"],
                max_sequence_length=cfg["max_sequence_length"],
                seed=cfg["seed"],
                noise_sigma=cfg["noise_sigma"],
                instance_labels=cfg.get("instance_labels"),
            )
        if kind == "hf":
            from .hf_encoder import HFEncoder

            return HFEncoder(model_id, checkpoint=str(directory / "checkpoint"))
        raise RegistryError(f"model {model_id!r} has unknown backend kind {kind!r}")

    def report_path(self, model_id: str) -> Path:
        return self._dir(model_id) / "biasing_report.json"


# ---------------------------------------------------------------------------
# Biasing runs
# ---------------------------------------------------------------------------

def run_biasing(
    registry: ModelRegistry,
    config: BiasingConfig,
    chunks: Sequence[BiasingChunk] | None = None,
) -> BiasingReport:
    """Bias a registered base model on expert-book chunks.

    Loads the base encoder, builds the masked example stream, trains for
    ``config.epochs`` epochs, registers the result under a new model id with
    parent lineage, and persists the report next to the checkpoint.
    """
    if chunks is None:
        if not config.corpus_ref:
            raise ConfigurationError("no chunks given and config.corpus_ref is empty")
        chunks = [
            _chunk_from(rec) for rec in jsonl.read_records(config.corpus_ref)
        ]
    encoder = registry.load_encoder(config.base_model_id)
    examples, _ = make_masked_examples(encoder, chunks, config)
    if not examples:
        raise ConfigurationError("no trainable masked examples were produced")
    losses = encoder.train_mlm(
        examples,
        TrainConfig(
            learning_rate=config.learning_rate,
            epochs=config.epochs,
            batch_size=config.batch_size,
            seed=config.seed,
        ),
    )
    output_model_id = config.output_model_id or f"{config.base_model_id}-biased"
    encoder.model_id = output_model_id
    registry.register(
        encoder,
        parent_model=config.base_model_id,
        biasing_config=config.to_record(),
        final_loss=losses[-1],
    )
    report = BiasingReport(
        config=config,
        losses=losses,
        final_loss=losses[-1],
        output_model_id=output_model_id,
    )
    jsonl.write_json(registry.report_path(output_model_id), report.to_record())
    return report


def _chunk_from(rec: dict[str, Any]) -> BiasingChunk:
    from .corpus import chunk_from_record

    return chunk_from_record(rec)
