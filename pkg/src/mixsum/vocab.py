"""Shared subword vocabulary with a reserved special-token block.

Id space layout (low to high):

    [control specials] pad, unk, bos, eos, sep, <M>, task symbols,
                       language symbols, 100 sentinels <extra_0>..<extra_99>
    [byte fallback]    256 ids, one per byte value, always present
    [learned pieces]   corpus alphabet bytes first, then pair merges

Control specials and the byte-fallback block together form the reserved
block; learned piece ids start above it, so "is this a learned piece" is a
range check. Byte-fallback ids decode to their raw byte (that is what makes
encode/decode a byte-exact roundtrip for text the training corpus never
saw); every other special renders as its bracketed canonical name.

Training is byte-level pair merging: lines are split into whitespace and
non-whitespace chunks, merges never cross a chunk boundary, and the most
frequent adjacent pair wins each round (ties to the lexicographically
smallest pair). Encoding replays merges lowest-rank-first, which reproduces
the training-time segmentation.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels

TASK_NAMES = ("mlm", "dae", "ms", "cmlm", "mt", "cls")
DEFAULT_LANGS = ("en", "zh", "syna", "synb")
NUM_SENTINELS = 100
VOCAB_FORMAT_VERSION = 1

_CHUNK_RE = re.compile(rb"\S+|\s+")


@dataclass(frozen=True)
class SpecialTokens:
    """Registry of every reserved id. Immutable once built."""

    pad_id: int
    unk_id: int
    bos_id: int
    eos_id: int
    separator_id: int
    shared_mask_id: int
    task_ids: dict[str, int]
    lang_ids: dict[str, int]
    sentinel_ids: tuple[int, ...]
    byte_block_start: int
    reserved_size: int
    langs: tuple[str, ...] = field(default=DEFAULT_LANGS)

    @classmethod
    def build(cls, langs: Sequence[str] = DEFAULT_LANGS) -> "SpecialTokens":
        if len(set(langs)) != len(langs) or not langs:
            raise ValueError("language codes must be non-empty and unique")
        nxt = 0

        def take():
            nonlocal nxt
            nxt += 1
            return nxt - 1

        pad, unk, bos, eos, sep, mask = (take() for _ in range(6))
        task_ids = {name: take() for name in TASK_NAMES}
        lang_ids = {code: take() for code in langs}
        sentinels = tuple(take() for _ in range(NUM_SENTINELS))
        byte_start = nxt
        reserved = byte_start + 256
        return cls(pad, unk, bos, eos, sep, mask, task_ids, lang_ids,
                   sentinels, byte_start, reserved, tuple(langs))

    def is_control(self, token_id: int) -> bool:
        return 0 <= token_id < self.byte_block_start

    def is_byte(self, token_id: int) -> bool:
        return self.byte_block_start <= token_id < self.reserved_size

    def control_name(self, token_id: int) -> str:
        if token_id == self.pad_id:
            return "<pad>"
        if token_id == self.unk_id:
            return "<unk>"
        if token_id == self.bos_id:
            return "<bos>"
        if token_id == self.eos_id:
            return "<eos>"
        if token_id == self.separator_id:
            return "<sep>"
        if token_id == self.shared_mask_id:
            return "<M>"
        for name, tid in self.task_ids.items():
            if tid == token_id:
                return f"<{name}>"
        for code, lid in self.lang_ids.items():
            if lid == token_id:
                return f"<{code}>"
        if token_id in self.sentinel_ids:
            return f"<extra_{self.sentinel_ids.index(token_id)}>"
        if self.is_byte(token_id):
            return f"<0x{token_id - self.byte_block_start:02X}>"
        raise ValueError(f"id {token_id} is not a special token")


class Vocabulary:
    """Trained subword inventory plus its special-token registry."""

    def __init__(self, specials: SpecialTokens, pieces: list[bytes],
                 parents: list[tuple[int, int]], exhausted: bool = False):
        if len(pieces) != len(parents):
            raise ValueError("pieces and parents must align")
        self.specials = specials
        self.pieces = pieces
        self.parents = parents
        self.exhausted = exhausted
        self.size = specials.reserved_size + len(pieces)
        base = specials.reserved_size
        self._piece_to_id = {}
        for i, p in enumerate(pieces):
            if p in self._piece_to_id:
                raise ValueError(f"duplicate piece {p!r}")
            self._piece_to_id[p] = base + i
        # single-byte learned pieces double as the chunk alphabet
        self._alphabet = {p[0]: base + i for i, p in enumerate(pieces) if len(p) == 1}
        # merge rank table: (left_id, right_id) -> (rank, merged_id)
        self._ranks = {}
        for i, (l, r) in enumerate(parents):
            if l >= 0:
                self._ranks[(l, r)] = (i, base + i)
        self._chunk_cache: dict[bytes, tuple[int, ...]] = {}

    # -- encoding ----------------------------------------------------------

    def encode(self, text: str, byte_fallback: bool = True) -> list[int]:
        if not text:
            return []
        out: list[int] = []
        for chunk in _CHUNK_RE.findall(text.encode("utf-8")):
            cached = self._chunk_cache.get(chunk)
            if cached is None:
                cached = self._encode_chunk(chunk, byte_fallback)
                self._chunk_cache[chunk] = cached
            out.extend(cached)
        return out

    def _encode_chunk(self, chunk: bytes, byte_fallback: bool) -> tuple[int, ...]:
        sp = self.specials
        syms = []
        for b in chunk:
            lid = self._alphabet.get(b)
            if lid is not None:
                syms.append(lid)
            elif byte_fallback:
                syms.append(sp.byte_block_start + b)
            else:
                syms.append(sp.unk_id)
        while len(syms) > 1:
            best_rank, best_i = None, -1
            for i in range(len(syms) - 1):
                entry = self._ranks.get((syms[i], syms[i + 1]))
                if entry is not None and (best_rank is None or entry[0] < best_rank):
                    best_rank, best_i = entry[0], i
            if best_rank is None:
                break
            pair = (syms[best_i], syms[best_i + 1])
            merged = self._ranks[pair][1]
            # replace every occurrence of the chosen pair, left to right
            out, i = [], 0
            while i < len(syms):
                if i + 1 < len(syms) and (syms[i], syms[i + 1]) == pair:
                    out.append(merged)
                    i += 2
                else:
                    out.append(syms[i])
                    i += 1
            syms = out
        return tuple(syms)

    # -- decoding ----------------------------------------------------------

    def decode(self, ids: Iterable[int]) -> str:
        sp = self.specials
        parts: list[bytes] = []
        for pos, tid in enumerate(ids):
            tid = int(tid)
            if tid < 0 or tid >= self.size:
                raise ValueError(f"id {tid} at position {pos} out of range (size {self.size})")
            if tid < sp.byte_block_start:
                parts.append(sp.control_name(tid).encode("utf-8"))
            elif tid < sp.reserved_size:
                parts.append(bytes([tid - sp.byte_block_start]))
            else:
                parts.append(self.pieces[tid - sp.reserved_size])
        return b"".join(parts).decode("utf-8", errors="replace")

    def piece_id(self, piece: str) -> int:
        return self._piece_to_id[piece.encode("utf-8")]

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        header = {
            "format_version": VOCAB_FORMAT_VERSION,
            "langs": list(self.specials.langs),
            "reserved_size": self.specials.reserved_size,
            "num_pieces": len(self.pieces),
            "size": self.size,
            "exhausted": self.exhausted,
        }
        with open(path, "w", encoding="utf-8") as f:
            f.write(json.dumps(header, sort_keys=True) + "\n")
            for i, (piece, (l, r)) in enumerate(zip(self.pieces, self.parents)):
                text = json.dumps(piece.decode("latin-1"), ensure_ascii=True)
                f.write(f"{i}\t{l}\t{r}\t{text}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as f:
            header = json.loads(f.readline())
            if header.get("format_version") != VOCAB_FORMAT_VERSION:
                raise ValueError(
                    f"unsupported vocabulary format version {header.get('format_version')!r}")
            specials = SpecialTokens.build(tuple(header["langs"]))
            if specials.reserved_size != header["reserved_size"]:
                raise ValueError("special layout mismatch in vocabulary file")
            pieces, parents = [], []
            for line in f:
                rank, l, r, text = line.rstrip("\n").split("\t", 3)
                if int(rank) != len(pieces):
                    raise ValueError(f"piece rank {rank} out of order")
                pieces.append(json.loads(text).encode("latin-1"))
                parents.append((int(l), int(r)))
        vocab = cls(specials, pieces, parents, bool(header.get("exhausted", False)))
        if vocab.size != header["size"]:
            raise ValueError("vocabulary size mismatch in file header")
        return vocab


def _balanced_lines(corpus, seed: int) -> list[str]:
    if isinstance(corpus, Mapping):
        rng = np.random.default_rng(seed)
        per_lang = min(len(lines) for lines in corpus.values())
        out: list[str] = []
        for code in corpus:
            lines = list(corpus[code])
            if len(lines) > per_lang:
                idx = np.sort(rng.choice(len(lines), size=per_lang, replace=False))
                lines = [lines[i] for i in idx]
            out.extend(lines)
        return out
    return list(corpus)


def train_vocab(corpus, target_size: int,
                specials: SpecialTokens | None = None,
                seed: int = 0) -> Vocabulary:
    """Train a vocabulary of `target_size` total entries.

    `corpus` is either a sequence of text lines or a mapping from language
    code to lines; in the mapping form, every language contributes the same
    number of (seeded, order-preserving) sampled lines. Returns fewer than
    `target_size` entries only when no adjacent pair is left to merge, and
    says so via a warning and the `exhausted` flag.
    """
    specials = specials or SpecialTokens.build()
    lines = _balanced_lines(corpus, seed)
    if not lines:
        raise ValueError("training corpus is empty")
    if target_size <= specials.reserved_size:
        raise ValueError(
            f"target_size {target_size} must exceed the reserved block "
            f"({specials.reserved_size})")

    word_counts: dict[bytes, int] = {}
    for line in lines:
        for chunk in _CHUNK_RE.findall(line.encode("utf-8")):
            word_counts[chunk] = word_counts.get(chunk, 0) + 1

    budget = target_size - specials.reserved_size
    byte_counts: dict[int, int] = {}
    for chunk, c in word_counts.items():
        for b in chunk:
            byte_counts[b] = byte_counts.get(b, 0) + c
    # most frequent corpus bytes become the learned alphabet; anything beyond
    # the budget stays on byte fallback
    alphabet_bytes = sorted(byte_counts, key=lambda b: (-byte_counts[b], b))[:budget]
    alphabet_bytes.sort()

    pieces = [bytes([b]) for b in alphabet_bytes]
    parents: list[tuple[int, int]] = [(-1, -1)] * len(pieces)
    base = specials.reserved_size
    sym_of_byte = {b: base + i for i, b in enumerate(alphabet_bytes)}

    flat_list, bounds_list, freq_list = [], [0], []
    for chunk, c in word_counts.items():
        # chunks with out-of-alphabet bytes sit on byte fallback; merging
        # around the gap would fabricate never-adjacent pairs
        if len(chunk) < 2 or any(b not in sym_of_byte for b in chunk):
            continue
        flat_list.extend(sym_of_byte[b] for b in chunk)
        bounds_list.append(len(flat_list))
        freq_list.append(c)

    flat = np.asarray(flat_list, dtype=np.int64)
    bounds = np.asarray(bounds_list, dtype=np.int64)
    freqs = np.asarray(freq_list, dtype=np.int64)

    exhausted = False
    while len(pieces) < budget:
        left, right, count = kernels.best_pair(flat, bounds, freqs)
        if count == 0:
            exhausted = True
            warnings.warn(
                f"pair merging exhausted after {len(pieces)} pieces "
                f"(target budget {budget})", stacklevel=2)
            break
        new_id = base + len(pieces)
        pieces.append(pieces[left - base] + pieces[right - base])
        parents.append((left, right))
        flat, bounds = kernels.apply_merge(flat, bounds, left, right, new_id)

    return Vocabulary(specials, pieces, parents, exhausted)
