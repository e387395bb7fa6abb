"""Corpus loading and token-level mask preparation.

Input contracts (JSON-lines, produced upstream):

* pre-training corpus — ``{"text": ...}`` per line; trained with the full
  next-token objective, no masking.
* instruction corpus — ``{"system", "instruction", "input", "output"}``
  per line. The training rendering joins the four fields with blank lines
  and the output utterance is exactly the final segment, so its character
  span is recovered from the fields alone and then converted to a token
  mask: loss is computed only on the output's tokens.

Sequences longer than the limit are truncated from the left (the answer
must survive); a record whose output cannot fit is reported, not silently
clipped.
"""

import json
from dataclasses import dataclass, field

from . import tokenizer as tok


@dataclass(frozen=True)
class PreparedExample:
    token_ids: tuple        # BOS + bytes + EOS
    loss_mask: tuple        # aligned with token_ids; True = in the loss
    output_text: str = ""   # empty for pre-training examples


@dataclass
class PrepareReport:
    prepared: int = 0
    errors: list = field(default_factory=list)  # (line_number, message)


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if line.strip():
                yield n, json.loads(line)


def render_instruct(record: dict) -> str:
    return "\n\n".join([record["system"], record["instruction"],
                        record["input"], record["output"]])


def prepare_pretrain_example(text: str, max_len: int) -> PreparedExample:
    ids = [tok.BOS] + tok.encode(text) + [tok.EOS]
    ids = ids[-max_len:] if len(ids) > max_len else ids
    mask = [False] + [True] * (len(ids) - 1)  # predict everything after BOS
    return PreparedExample(tuple(ids), tuple(mask))


def prepare_instruct_example(record: dict, max_len: int) -> PreparedExample:
    for key in ("system", "instruction", "input", "output"):
        if key not in record or not isinstance(record[key], str):
            raise ValueError(f"record missing string field {key!r}")
    rendering = render_instruct(record)
    output = record["output"]
    start_char = len(rendering) - len(output)
    if rendering[start_char:] != output:
        raise ValueError("output is not the final segment of the rendering")
    t_start, t_end = tok.char_span_to_token_span(rendering, start_char,
                                                 len(rendering))
    ids = [tok.BOS] + tok.encode(rendering) + [tok.EOS]
    # token positions of the output inside ids (after the BOS offset)
    o_start, o_end = t_start + 1, t_end + 1
    if len(ids) > max_len:
        drop = len(ids) - max_len
        if o_start - 1 < drop:  # the answer itself would be cut
            raise ValueError(
                f"output span does not fit in max_len={max_len}")
        ids = [tok.BOS] + ids[1 + drop:]
        o_start -= drop
        o_end -= drop
    mask = [o_start <= k < o_end for k in range(len(ids))]
    example = PreparedExample(tuple(ids), tuple(mask), output)
    if sum(example.loss_mask) != tok.token_length(output):
        raise ValueError("mask width disagrees with the tokenized output")
    return example


def prepare_pretrain_file(path, max_len: int):
    examples, report = [], PrepareReport()
    for n, record in read_jsonl(path):
        try:
            examples.append(prepare_pretrain_example(record["text"], max_len))
            report.prepared += 1
        except (KeyError, TypeError, ValueError) as exc:
            report.errors.append((n, str(exc)))
    return examples, report


def prepare_instruct_file(path, max_len: int):
    examples, report = [], PrepareReport()
    for n, record in read_jsonl(path):
        try:
            examples.append(prepare_instruct_example(record, max_len))
            report.prepared += 1
        except (KeyError, TypeError, ValueError) as exc:
            report.errors.append((n, str(exc)))
    return examples, report
