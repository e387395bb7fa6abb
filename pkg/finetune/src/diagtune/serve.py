"""OpenAI-compatible serving of the trained diagnostic model.

POST ``/v1/chat/completions`` with standard chat bodies. The prompt is
re-rendered the way the fine-tuning corpus rendered it (fields joined by
blank lines) and the answer is chosen by scoring the three defect-label
utterances under the language model, so the response is always a
well-formed label line regardless of how little the toy model trained.
"""

import time

from fastapi import FastAPI
from pydantic import BaseModel

from . import tokenizer as tok
from .training import load_checkpoint

LABELS = ("Inaccurate", "Incomplete", "Inaccurate & Incomplete")


class ChatMessage(BaseModel):
    role: str
    content: str


class ChatBody(BaseModel):
    model: str = "diagtune"
    messages: list[ChatMessage]
    temperature: float = 0.0
    max_tokens: int = 64


def pick_label(model, prompt: str) -> str:
    prefix = [tok.BOS] + tok.encode(prompt + "\n\n")
    # byte-level context beyond the trained window adds nothing; keep the tail
    prefix = prefix[-4096:]
    scores = {
        label: model.continuation_logprob(prefix, tok.encode(label))
        / max(1, tok.token_length(label))
        for label in LABELS
    }
    return max(LABELS, key=lambda label: scores[label])


def build_app(checkpoint_path) -> FastAPI:
    model = load_checkpoint(checkpoint_path)
    app = FastAPI(title="diagtune")

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/v1/chat/completions")
    def chat(body: ChatBody):
        prompt = "\n\n".join(m.content for m in body.messages)
        label = pick_label(model, prompt)
        text = f"Label: {label}"
        prompt_tokens = tok.token_length(prompt)
        completion_tokens = tok.token_length(text)
        return {
            "id": f"diagtune-{int(time.time() * 1000)}",
            "object": "chat.completion",
            "created": int(time.time()),
            "model": body.model,
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": text},
                "finish_reason": "stop",
            }],
            "usage": {
                "prompt_tokens": prompt_tokens,
                "completion_tokens": completion_tokens,
                "total_tokens": prompt_tokens + completion_tokens,
            },
        }

    return app


def serve(checkpoint_path, host: str = "127.0.0.1", port: int = 8711):
    import uvicorn

    uvicorn.run(build_app(checkpoint_path), host=host, port=port,
                log_level="warning")
