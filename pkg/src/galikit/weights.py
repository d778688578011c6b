"""Model weight container and file format.

The on-disk format is self-describing: a textual key-value header that
declares the model shape and an ordered tensor manifest, a blank line,
then the raw payload (little-endian float32 in manifest order) followed
by an 8-byte checksum of the payload (BLAKE2b, digest_size=8).

Weights live in memory as float64 arrays whose values are exactly
float32-representable, so a save/load round trip is bit-identical.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

MAGIC = "galikit-weights v1"
_CHECKSUM_BYTES = 8


class WeightFormatError(ValueError):
    """Raised when a weight file is malformed, inconsistent or corrupt."""


@dataclass(frozen=True)
class ModelSpec:
    """Shape of the toy decoder-only transformer."""

    vocab: int = 257  # byte-level tokens plus one pad id
    layers: int = 4
    heads: int = 4
    head_dim: int = 16
    mlp_hidden: int = 128
    rope_base: float = 10000.0
    norm_eps: float = 1e-6

    @property
    def hidden(self) -> int:
        return self.heads * self.head_dim

    def __post_init__(self):
        for name in ("vocab", "layers", "heads", "head_dim", "mlp_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.head_dim % 2 != 0:
            raise ValueError(f"head_dim must be even, got {self.head_dim}")


def tensor_manifest(spec: ModelSpec):
    """Ordered (name, shape) list of every tensor the model needs."""
    h, m, v = spec.hidden, spec.mlp_hidden, spec.vocab
    manifest = [("embed", (v, h))]
    for i in range(spec.layers):
        manifest += [
            (f"layer{i}.attn_norm", (h,)),
            (f"layer{i}.wq", (h, h)),
            (f"layer{i}.wk", (h, h)),
            (f"layer{i}.wv", (h, h)),
            (f"layer{i}.wo", (h, h)),
            (f"layer{i}.mlp_norm", (h,)),
            (f"layer{i}.w_gate", (h, m)),
            (f"layer{i}.w_up", (h, m)),
            (f"layer{i}.w_down", (m, h)),
        ]
    manifest += [("final_norm", (h,)), ("head", (h, v))]
    return manifest


def init_weights(spec: ModelSpec, seed: int = 0) -> dict:
    """Seeded Gaussian weights scaled by 1/sqrt(hidden), snapped to
    float32-representable values; norm gains start at 1."""
    gen = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(spec.hidden)
    weights = {}
    for name, shape in tensor_manifest(spec):
        if name.endswith("norm"):
            w = np.ones(shape)
        else:
            w = gen.standard_normal(shape) * scale
        weights[name] = w.astype(np.float32).astype(np.float64)
    return weights


_HEADER_FIELDS = ("vocab", "layers", "heads", "head_dim", "hidden",
                  "mlp_hidden", "rope_base", "norm_eps")


def save_weights(path, spec: ModelSpec, weights: dict) -> None:
    lines = [MAGIC]
    for name in _HEADER_FIELDS:
        lines.append(f"{name} {getattr(spec, name)!r}")
    manifest = tensor_manifest(spec)
    payload_parts = []
    for name, shape in manifest:
        if name not in weights:
            raise WeightFormatError(f"missing tensor {name!r}")
        w = np.asarray(weights[name])
        if w.shape != shape:
            raise WeightFormatError(
                f"tensor {name!r} has shape {w.shape}, expected {shape}"
            )
        lines.append("tensor " + name + " " + " ".join(str(s) for s in shape))
        payload_parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
    payload = b"".join(payload_parts)
    lines.append(f"payload {len(payload)}")
    header = ("\n".join(lines) + "\n\n").encode("ascii")
    digest = hashlib.blake2b(payload, digest_size=_CHECKSUM_BYTES).digest()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)
        f.write(digest)


def load_weights(path):
    """Read a weight file, returning (ModelSpec, weights dict).

    Rejects missing/misshapen tensors (naming the tensor), inconsistent
    header fields and payload corruption (checksum failure).
    """
    with open(path, "rb") as f:
        blob = f.read()
    sep = blob.find(b"\n\n")
    if sep < 0:
        raise WeightFormatError("no header/payload separator found")
    try:
        header_lines = blob[:sep].decode("ascii").splitlines()
    except UnicodeDecodeError as exc:
        raise WeightFormatError(f"header is not ASCII text: {exc}") from exc
    if not header_lines or header_lines[0] != MAGIC:
        raise WeightFormatError(f"bad magic line, expected {MAGIC!r}")

    fields = {}
    declared = []
    payload_len = None
    for line in header_lines[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "tensor":
            if len(parts) < 3:
                raise WeightFormatError(f"malformed tensor line {line!r}")
            declared.append((parts[1], tuple(int(s) for s in parts[2:])))
        elif parts[0] == "payload":
            payload_len = int(parts[1])
        elif parts[0] in _HEADER_FIELDS:
            fields[parts[0]] = parts[1]
        else:
            raise WeightFormatError(f"unknown header line {line!r}")
    missing = [f for f in _HEADER_FIELDS if f not in fields]
    if missing:
        raise WeightFormatError(f"header missing fields: {missing}")
    if payload_len is None:
        raise WeightFormatError("header missing payload length")

    try:
        spec = ModelSpec(
            vocab=int(fields["vocab"]),
            layers=int(fields["layers"]),
            heads=int(fields["heads"]),
            head_dim=int(fields["head_dim"]),
            mlp_hidden=int(fields["mlp_hidden"]),
            rope_base=float(fields["rope_base"]),
            norm_eps=float(fields["norm_eps"]),
        )
    except ValueError as exc:
        raise WeightFormatError(f"inconsistent header: {exc}") from exc
    if int(fields["hidden"]) != spec.hidden:
        raise WeightFormatError(
            f"header declares hidden={fields['hidden']} but heads*head_dim="
            f"{spec.hidden}"
        )

    manifest = tensor_manifest(spec)
    declared_map = dict(declared)
    for name, shape in manifest:
        if name not in declared_map:
            raise WeightFormatError(f"missing tensor {name!r} in manifest")
        if declared_map[name] != shape:
            raise WeightFormatError(
                f"tensor {name!r} declared with shape {declared_map[name]}, "
                f"expected {shape}"
            )
    extra = [n for n, _ in declared if n not in dict(manifest)]
    if extra:
        raise WeightFormatError(f"unexpected tensors in manifest: {extra}")

    body = blob[sep + 2 :]
    if len(body) != payload_len + _CHECKSUM_BYTES:
        raise WeightFormatError(
            f"payload truncated or padded: checksum cannot be verified "
            f"(expected {payload_len + _CHECKSUM_BYTES} bytes after header, "
            f"found {len(body)})"
        )
    payload, digest = body[:payload_len], body[payload_len:]
    if hashlib.blake2b(payload, digest_size=_CHECKSUM_BYTES).digest() != digest:
        raise WeightFormatError("payload checksum failure")

    expected_floats = sum(int(np.prod(shape)) for _, shape in manifest)
    if payload_len != expected_floats * 4:
        raise WeightFormatError(
            f"payload holds {payload_len // 4} float32 values, "
            f"manifest requires {expected_floats}"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    weights = {}
    offset = 0
    for name, shape in manifest:
        size = int(np.prod(shape))
        weights[name] = flat[offset : offset + size].reshape(shape).astype(np.float64)
        offset += size
    return spec, weights
