# src/data/tokenizer.py
"""Byte-level tokenizer: UTF-8 bytes plus BOS/EOS/PAD."""
from typing import List, Sequence

import numpy as np

from src.domain.errors import TokenizerError
from src.domain.models import BOS_ID, CONTEXT_LEN, EOS_ID, PAD_ID, TokenSequence


def tokenize(text: str, context_len: int = CONTEXT_LEN) -> TokenSequence:
    payload = list(text.encode("utf-8"))[:context_len - 2]
    ids = [BOS_ID] + payload + [EOS_ID]
    eos_position = len(ids) - 1
    ids += [PAD_ID] * (context_len - len(ids))
    return TokenSequence(ids=ids, eos_position=eos_position)


def detokenize(sequence: TokenSequence) -> bytes:
    ids = sequence.ids
    if not ids or ids[0] != BOS_ID:
        raise TokenizerError("sequence does not start with BOS")
    if sequence.eos_position >= len(ids) or ids[sequence.eos_position] != EOS_ID:
        raise TokenizerError(f"no end token at position {sequence.eos_position}")
    return bytes(ids[1:sequence.eos_position])


def tokenize_batch(texts: Sequence[str], context_len: int = CONTEXT_LEN) -> np.ndarray:
    """(len(texts), context_len) int64 id matrix."""
    rows: List[List[int]] = [tokenize(text, context_len).ids for text in texts]
    return np.asarray(rows, dtype=np.int64)
