"""Checkpoint-backed encoder for real pretrained Spanish masked LMs.

Wraps a ``transformers`` masked-LM checkpoint (e.g. BETO or the MarIA
RoBERTa models) behind the same contract as the numpy backends.  Requires
the ``hf`` extra (torch + transformers); imports are deferred so the rest of
the package works without them.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .encoders import (
    Encoder,
    MaskedExample,
    MaskEmbedding,
    TokenizedPrompt,
    TopKPrediction,
    TrainConfig,
    _rank_topk,
)
from .errors import BackendError, PromptShapeError


class HFEncoder(Encoder):
    kind = "hf"

    def __init__(
        self,
        model_id: str,
        checkpoint: str,
        *,
        max_sequence_length: int = 512,
        device: str = "cpu",
    ):
        try:
            import torch
            from transformers import AutoModelForMaskedLM, AutoTokenizer
        except ImportError as exc:  # pragma: no cover - environment dependent
            raise BackendError(
                "the checkpoint backend needs the 'hf' extra: pip install relcloze[hf]"
            ) from exc
        self._torch = torch
        self.model_id = model_id
        self.checkpoint = checkpoint
        self.device = device
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(checkpoint)
            self.model = AutoModelForMaskedLM.from_pretrained(checkpoint)
        except Exception as exc:
            raise BackendError(
                f"cannot load checkpoint {checkpoint!r} for model {model_id!r}: {exc}"
            ) from exc
        self.model.to(device)
        self.model.eval()
        self.hidden_size = int(self.model.config.hidden_size)
        self.max_sequence_length = int(
            min(max_sequence_length, self.model.config.max_position_embeddings)
        )

    @property
    def mask_token(self) -> str:
        return self.tokenizer.mask_token

    @property
    def separator_token(self) -> str:
        return self.tokenizer.sep_token

    @property
    def vocabulary_size(self) -> int:
        return len(self.tokenizer)

    @property
    def special_token_ids(self) -> frozenset[int]:
        return frozenset(self.tokenizer.all_special_ids)

    def _token_id(self, token: str) -> int:
        return self.tokenizer.convert_tokens_to_ids(token)

    def encode_text(self, text: str) -> list[int]:
        # The checkpoint's own sequence-start convention ([CLS]/<s>) applies;
        # prompts already end with the separator literal, so no extra one is
        # appended here.
        ids = self.tokenizer(text, add_special_tokens=False)["input_ids"]
        start = self.tokenizer.cls_token_id
        if start is None:
            start = self.tokenizer.bos_token_id
        return ([start] if start is not None else []) + list(ids)

    def detokenize(self, token_ids: Sequence[int]) -> str:
        return self.tokenizer.decode(token_ids, skip_special_tokens=False)

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
                f"prompt must contain exactly one {self.mask_token}, found {occurrences}"
            )
        ids = self.encode_text(text)
        mask_id = self.tokenizer.mask_token_id
        positions = [i for i, t in enumerate(ids) if t == mask_id]
        if len(positions) != 1:
            raise PromptShapeError("prompt must tokenize to exactly one mask token")
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

    def _forward(self, prompt: TokenizedPrompt):
        torch = self._torch
        ids = torch.tensor([list(prompt.token_ids)], device=self.device)
        with torch.no_grad():
            out = self.model(input_ids=ids, output_hidden_states=True)
        return out

    def predict_masked_topk(self, prompt: TokenizedPrompt, k: int) -> TopKPrediction:
        self._check_prompt(prompt)
        out = self._forward(prompt)
        logits = out.logits[0, prompt.mask_index].double().cpu().numpy()
        z = logits - logits.max()
        probs = np.exp(z) / np.exp(z).sum()
        tokens = self.tokenizer.convert_ids_to_tokens(list(range(len(probs))))
        return _rank_topk(tokens, probs, k)

    def mask_hidden_state(self, prompt: TokenizedPrompt) -> MaskEmbedding:
        self._check_prompt(prompt)
        out = self._forward(prompt)
        vector = out.hidden_states[-1][0, prompt.mask_index].double().cpu().numpy()
        return MaskEmbedding(
            instance_id=prompt.instance_id,
            model_id=self.model_id,
            template_id=prompt.template_id,
            vector=vector,
        )

    def train_mlm(self, examples: Sequence[MaskedExample], config: TrainConfig) -> list[float]:
        torch = self._torch
        if config.epochs == 0:
            return []
        self.model.train()
        optimizer = torch.optim.AdamW(self.model.parameters(), lr=config.learning_rate)
        pad_id = self.tokenizer.pad_token_id or 0
        rng = np.random.default_rng(config.seed)
        losses: list[float] = []
        try:
            for _ in range(config.epochs):
                order = rng.permutation(len(examples))
                epoch_loss, epoch_batches = 0.0, 0
                for b in range(0, len(order), config.batch_size):
                    batch = [examples[i] for i in order[b : b + config.batch_size]]
                    width = max(len(ex.input_ids) for ex in batch)
                    input_ids = torch.full((len(batch), width), pad_id, dtype=torch.long)
                    attention = torch.zeros((len(batch), width), dtype=torch.long)
                    labels = torch.full((len(batch), width), -100, dtype=torch.long)
                    for row, ex in enumerate(batch):
                        n = len(ex.input_ids)
                        input_ids[row, :n] = torch.tensor(ex.input_ids)
                        attention[row, :n] = 1
                        labels[row, :n] = torch.tensor(
                            [t if t >= 0 else -100 for t in ex.labels]
                        )
                    out = self.model(
                        input_ids=input_ids.to(self.device),
                        attention_mask=attention.to(self.device),
                        labels=labels.to(self.device),
                    )
                    loss = out.loss
                    if not torch.isfinite(loss):
                        raise BackendError(
                            f"non-finite loss in batch starting at example index {b} "
                            f"(chunk {batch[0].chunk_id})"
                        )
                    optimizer.zero_grad()
                    loss.backward()
                    optimizer.step()
                    epoch_loss += float(loss.item())
                    epoch_batches += 1
                losses.append(epoch_loss / max(epoch_batches, 1))
        finally:
            self.model.eval()
        return losses

    def save(self, directory) -> None:
        target = str(directory / "checkpoint") if hasattr(directory, "joinpath") else directory
        self.model.save_pretrained(target)
        self.tokenizer.save_pretrained(target)
