"""Byte-level tokenizer.

Vocabulary: the 256 byte values plus PAD/BOS/EOS specials. Byte-level
tokens make the character-to-token mask conversion exact for any text and
need no downloaded assets, which keeps the whole pipeline CPU-only and
offline.
"""

PAD, BOS, EOS = 256, 257, 258
VOCAB_SIZE = 259


def encode(text: str):
    return list(text.encode("utf-8"))


def decode(token_ids) -> str:
    return bytes(t for t in token_ids if t < 256).decode("utf-8",
                                                         errors="replace")


def token_length(text: str) -> int:
    return len(text.encode("utf-8"))


def char_span_to_token_span(text: str, start: int, end: int):
    """Character offsets into ``text`` -> token offsets into encode(text)."""
    prefix = len(text[:start].encode("utf-8"))
    width = len(text[start:end].encode("utf-8"))
    return prefix, prefix + width
