"""Binary checkpoint format.

Layout (all integers little-endian):

    magic  b"PPCK"   u16 version
    u32 V  u32 d  u8 variant code  u8 flags (bit0 shared, bit1 separate disc)
    u8 n_widths, then n_widths x u8 kernel widths
    u32 n_tokens, then per token u32 byte length + UTF-8 bytes
    u32 config length + UTF-8 JSON (sorted keys)
    u32 n_tensors, then per tensor:
        u16 name length + name, u8 ndim, ndim x u32 dims, f64 little-endian data
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .corpus import Vocabulary
from .errors import FormatError
from .model import Seq2Seq
from .numerics import Tensor
from .training import TrainConfig
from .variants import variant, variant_from_code

MAGIC = b"PPCK"
VERSION = 1


def to_bytes(model, vocab, config):
    spec = variant(config.variant)
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HIIBB", VERSION, model.V, model.d, spec.code,
                       int(model.shared) | (int(model.has_disc) << 1))
    out += struct.pack("<B", len(model.widths)) + bytes(model.widths)
    out += struct.pack("<I", len(vocab))
    for tok in vocab.id_to_token:
        raw = tok.encode("utf-8")
        out += struct.pack("<I", len(raw)) + raw
    cfg = json.dumps(config.as_dict(), sort_keys=True).encode("utf-8")
    out += struct.pack("<I", len(cfg)) + cfg
    out += struct.pack("<I", len(model.params))
    for name in sorted(model.params):
        t = model.params[name]
        raw = name.encode("utf-8")
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack("<B", t.data.ndim) + struct.pack(f"<{t.data.ndim}I", *t.shape)
        out += np.ascontiguousarray(t.data, dtype="<f8").tobytes()
    return bytes(out)


def save_checkpoint(model, vocab, config, path):
    if len(vocab) != model.V:
        raise FormatError(f"vocabulary size {len(vocab)} does not match model V={model.V}")
    with open(path, "wb") as fh:
        fh.write(to_bytes(model, vocab, config))


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated checkpoint while reading {what}", self.pos)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def from_bytes(buf):
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("not a checkpoint (bad magic bytes)", 0)
    at = r.pos
    version, V, d, code, flags = r.unpack("<HIIBB", "header")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version} (expected {VERSION})", at)
    at = r.pos
    try:
        spec = variant_from_code(code)
    except ValueError:
        raise FormatError(f"unknown variant code {code}", at) from None
    (nw,) = r.unpack("<B", "widths")
    widths = tuple(r.take(nw, "widths"))
    (n_tok,) = r.unpack("<I", "vocabulary size")
    tokens = []
    for _ in range(n_tok):
        (n,) = r.unpack("<I", "token length")
        at = r.pos
        try:
            tokens.append(r.take(n, "token").decode("utf-8"))
        except UnicodeDecodeError:
            raise FormatError("token is not valid UTF-8", at) from None
    if n_tok != V:
        raise FormatError(f"vocabulary has {n_tok} tokens but header says V={V}", r.pos)
    try:
        vocab = Vocabulary(tokens[4:])
    except ValueError as exc:
        raise FormatError(f"bad vocabulary: {exc}", r.pos) from None
    if vocab.id_to_token != tokens:
        raise FormatError("vocabulary does not start with the special tokens", r.pos)
    (n_cfg,) = r.unpack("<I", "config length")
    at = r.pos
    try:
        config = TrainConfig.from_mapping(json.loads(r.take(n_cfg, "config").decode("utf-8")))
    except (ValueError, TypeError) as exc:
        raise FormatError(f"bad config block: {exc}", at) from None
    (n_t,) = r.unpack("<I", "tensor count")
    params = {}
    for _ in range(n_t):
        (n,) = r.unpack("<H", "tensor name length")
        name = r.take(n, "tensor name").decode("utf-8", errors="replace")
        (ndim,) = r.unpack("<B", f"{name} rank")
        shape = r.unpack(f"<{ndim}I", f"{name} shape")
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(r.take(8 * count, f"{name} data"), dtype="<f8").reshape(shape)
        params[name] = Tensor(data.astype(np.float64), requires_grad=True, name=name)
    if r.pos != len(buf):
        raise FormatError(f"{len(buf) - r.pos} trailing bytes after the last tensor", r.pos)
    try:
        model = Seq2Seq(V, d, widths, shared=bool(flags & 1), discriminator=bool(flags & 2),
                        params=params)
    except ValueError as exc:
        raise FormatError(f"tensors do not match the header: {exc}") from None
    if config.variant != spec.name:
        raise FormatError(f"config variant {config.variant} disagrees with header {spec.name}")
    return model, vocab, config


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
