"""Versioned binary container for fitted models.

Layout (all integers little-endian)::

    8 bytes   magic  b"AAEMODEL"
    4 bytes   uint32 format version
    8 bytes   uint64 header length H
    H bytes   UTF-8 JSON header (sorted keys, compact separators)
    ...       float64 little-endian arrays, row-major, in header["arrays"] order

The header always carries ``kind`` and ``arrays`` (a list of
``{"name", "shape"}`` records); every other key is model specific.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ParseError
from .nn import DenseLayer, Network

MAGIC = b"AAEMODEL"
FORMAT_VERSION = 1


def write_container(path, kind, header, arrays):
    header = dict(header)
    header["kind"] = kind
    header["arrays"] = [
        {"name": name, "shape": list(np.shape(a))} for name, a in arrays.items()
    ]
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for a in arrays.values():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_container(path, expect_kind=None):
    raw = Path(path).read_bytes()
    if len(raw) < 20 or raw[:8] != MAGIC:
        raise ParseError(f"{path}: not a model container (bad magic)")
    version, hlen = struct.unpack("<IQ", raw[8:20])
    if version != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported container version {version}")
    try:
        header = json.loads(raw[20 : 20 + hlen].decode("utf-8"))
    except ValueError as exc:
        raise ParseError(f"{path}: corrupt header: {exc}")
    if expect_kind is not None and header.get("kind") != expect_kind:
        raise ParseError(f"{path}: expected a {expect_kind!r} model, found {header.get('kind')!r}")
    arrays = {}
    offset = 20 + hlen
    for rec in header["arrays"]:
        shape = tuple(rec["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise ParseError(f"{path}: truncated array {rec['name']!r}")
        arrays[rec["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(raw):
        raise ParseError(f"{path}: {len(raw) - offset} trailing bytes")
    return header, arrays


def network_to_parts(net, prefix):
    """Layer descriptors for the header plus the named weight arrays."""
    layers, arrays = [], {}
    for i, layer in enumerate(net.layers):
        layers.append(
            {
                "fan_in": layer.fan_in,
                "fan_out": layer.fan_out,
                "activation": layer.activation,
                "dropout": layer.dropout,
            }
        )
        arrays[f"{prefix}.{i}.weights"] = layer.weights
        arrays[f"{prefix}.{i}.bias"] = layer.bias
    return layers, arrays


def network_from_parts(layers, arrays, prefix):
    return Network(
        [
            DenseLayer(
                arrays[f"{prefix}.{i}.weights"],
                arrays[f"{prefix}.{i}.bias"],
                spec["activation"],
                spec["dropout"],
            )
            for i, spec in enumerate(layers)
        ]
    )
