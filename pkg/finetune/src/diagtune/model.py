"""A small causal language model that trains in seconds on a CPU.

A GRU backbone keeps the default profile tiny; the module also scores
candidate continuations, which the server uses to constrain diagnostic
answers to well-formed label utterances.
"""

import torch
from torch import nn

from .tokenizer import PAD, VOCAB_SIZE


class TinyCausalLM(nn.Module):
    def __init__(self, embed_dim: int = 64, hidden_dim: int = 128,
                 layers: int = 1):
        super().__init__()
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.layers = layers
        self.embedding = nn.Embedding(VOCAB_SIZE, embed_dim, padding_idx=PAD)
        self.rnn = nn.GRU(embed_dim, hidden_dim, num_layers=layers,
                          batch_first=True)
        self.head = nn.Linear(hidden_dim, VOCAB_SIZE)

    def forward(self, token_ids):
        hidden, _ = self.rnn(self.embedding(token_ids))
        return self.head(hidden)

    def config(self) -> dict:
        return {"embed_dim": self.embed_dim, "hidden_dim": self.hidden_dim,
                "layers": self.layers}

    @torch.no_grad()
    def continuation_logprob(self, prefix_ids, continuation_ids) -> float:
        """Total log-probability of ``continuation_ids`` given the prefix."""
        ids = torch.tensor([list(prefix_ids) + list(continuation_ids)])
        logits = self(ids)[0]
        logprobs = torch.log_softmax(logits, dim=-1)
        total = 0.0
        offset = len(prefix_ids)
        for k, token in enumerate(continuation_ids):
            total += float(logprobs[offset + k - 1, token])
        return total


def masked_next_token_loss(model, token_ids, loss_mask):
    """Mean next-token cross-entropy over the masked-in positions.

    ``token_ids``/``loss_mask`` are padded (batch, length) tensors; the
    mask marks target positions whose prediction contributes to the loss.
    """
    logits = model(token_ids[:, :-1])
    targets = token_ids[:, 1:]
    mask = loss_mask[:, 1:]
    flat = nn.functional.cross_entropy(
        logits.reshape(-1, logits.size(-1)), targets.reshape(-1),
        reduction="none")
    weights = mask.reshape(-1).float()
    denom = weights.sum().clamp(min=1.0)
    return (flat * weights).sum() / denom
