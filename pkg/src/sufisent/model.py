"""Embeddings + sentence encoder + entailment head, wired for batched training."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Node
from .data import PAD_ID, EmbeddingTable, NliBatch, Vocab, pad_ids, tokenize
from .encoder import EncoderConfig, EncoderParams, encode
from .head import HeadConfig, HeadParams, build_features, head_logits


@dataclass
class Model:
    encoder_config: EncoderConfig
    head_config: HeadConfig
    vocab: Vocab
    embeddings: EmbeddingTable
    encoder: EncoderParams
    head: HeadParams

    @classmethod
    def init(cls, encoder_config: EncoderConfig, head_config: HeadConfig, vocab: Vocab,
             embeddings: EmbeddingTable, seed: int) -> "Model":
        if embeddings.matrix.shape != (len(vocab), encoder_config.e):
            raise ValueError(
                f"embedding table {embeddings.matrix.shape} does not match vocab {len(vocab)} x e={encoder_config.e}"
            )
        rng = np.random.default_rng(seed)
        enc = EncoderParams.init(encoder_config, rng)
        head = HeadParams.init(encoder_config.encoding_dim, head_config, rng)
        return cls(encoder_config, head_config, vocab, embeddings, enc, head)

    def named_arrays(self) -> dict[str, np.ndarray]:
        """Every array that defines the model, keyed by a stable name."""
        out = {"embedding": self.embeddings.matrix}
        out.update(self.encoder.named_arrays())
        out.update(self.head.named_arrays())
        return out

    def trainable_arrays(self) -> dict[str, np.ndarray]:
        out = self.named_arrays()
        if not self.embeddings.trainable:
            del out["embedding"]
        return out

    # -- forward ------------------------------------------------------------
    def embed(self, g: Graph, ids: np.ndarray) -> Node:
        """(B, T) ids -> time-major (T*B, e) embedded rows."""
        table = self.embeddings.matrix
        src = g.param(table) if self.embeddings.trainable else g.const(table)
        return ad.take_rows(src, ids.T.reshape(-1))

    def encode_ids(self, g: Graph, ids: np.ndarray, mask: np.ndarray) -> Node:
        x = self.embed(g, ids)
        return encode(self.encoder_config, self.encoder, x, mask.T)

    def logits(self, g: Graph, batch: NliBatch) -> Node:
        # premises and hypotheses share one padded pass through the encoder
        B = len(batch)
        width = max(batch.premise.shape[1], batch.hypothesis.shape[1])
        ids = np.full((2 * B, width), PAD_ID, dtype=np.int64)
        mask = np.zeros((2 * B, width), dtype=bool)
        for k, (a, m) in enumerate(((batch.premise, batch.premise_mask),
                                    (batch.hypothesis, batch.hypothesis_mask))):
            ids[k * B:(k + 1) * B, : a.shape[1]] = a
            mask[k * B:(k + 1) * B, : m.shape[1]] = m
        z = self.encode_ids(g, ids, mask)
        u = ad.take_rows(z, np.arange(B))
        v = ad.take_rows(z, np.arange(B, 2 * B))
        return head_logits(self.head, build_features(u, v))

    def loss(self, g: Graph, batch: NliBatch) -> tuple[Node, Node]:
        z = self.logits(g, batch)
        return ad.softmax_cross_entropy(z, batch.labels), z

    def encode_sentences(self, sentences: list[str], batch_size: int = 64) -> np.ndarray:
        """Encodings of raw sentences, one row each. Parameters are only read."""
        rows = []
        for k in range(0, len(sentences), batch_size):
            chunk = [self.vocab.ids(tokenize(s) or ["<unk>"]) for s in sentences[k:k + batch_size]]
            ids, mask = pad_ids(chunk)
            g = Graph()
            rows.append(self.encode_ids(g, ids, mask).value)
        if not rows:
            return np.zeros((0, self.encoder_config.encoding_dim))
        return np.concatenate(rows, axis=0)


def zero_padding_grad(name: str, grad: np.ndarray) -> None:
    if name == "embedding":
        grad[PAD_ID] = 0.0
