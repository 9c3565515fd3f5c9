"""Versioned binary checkpoint container.

Layout: an 8-byte magic, a little-endian uint32 format version, a
little-endian uint64 JSON header length, the UTF-8 JSON header, then the
raw tensor bytes (little-endian, C order) exactly in the order the header
lists them. The tensor list covers the network parameters, the
normalization running statistics, and (when an optimizer is saved) the Adam
moment buffers, so a reloaded run continues bit-exactly where it stopped.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from .network import NetworkSpec, UNet
from .optim import Adam

__all__ = ["save_checkpoint", "load_checkpoint"]

MAGIC = b"FSEGCKPT"
VERSION = 1


def _le_dtype(arr):
    return arr.dtype.newbyteorder("<").str


def save_checkpoint(path, net, adam=None, meta=None):
    tensors = []
    blobs = []

    def add(name, arr):
        tensors.append({"name": name, "shape": list(arr.shape), "dtype": _le_dtype(arr)})
        blobs.append(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())

    for name, arr in net.params():
        add(f"param.{name}", arr)
    for name, arr in net.state():
        add(f"state.{name}", arr)
    if adam is not None:
        for i, m in enumerate(adam.m):
            add(f"adam.m.{i}", m)
        for i, v in enumerate(adam.v):
            add(f"adam.v.{i}", v)

    header = {
        "spec": dataclasses.asdict(net.spec),
        "dtype": np.dtype(net.dtype).name,
        "seed": net.seed,
        "adam": None
        if adam is None
        else {"beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps, "t": adam.t},
        "tensors": tensors,
        "meta": meta or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Returns (net, adam_or_None, meta). The network is rebuilt from the
    stored spec and every tensor is restored bit-exactly."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack("<I", data[8:12])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (header_len,) = struct.unpack("<Q", data[12:20])
    header = json.loads(data[20 : 20 + header_len].decode())

    offset = 20 + header_len
    arrays = {}
    for entry in header["tensors"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * dtype.itemsize
        arr = np.frombuffer(data[offset : offset + nbytes], dtype=dtype).reshape(entry["shape"])
        arrays[entry["name"]] = arr.astype(dtype.newbyteorder("="))
        offset += nbytes
    if offset != len(data):
        raise ValueError(f"{path}: trailing or missing tensor bytes")

    spec = NetworkSpec(**header["spec"])
    net = UNet(spec, seed=header.get("seed", 0), dtype=np.dtype(header["dtype"]).type)
    for name, arr in net.params():
        np.copyto(arr, arrays[f"param.{name}"])
    for name, arr in net.state():
        np.copyto(arr, arrays[f"state.{name}"])

    adam = None
    if header["adam"] is not None:
        cfg = header["adam"]
        adam = Adam(net.params(), beta1=cfg["beta1"], beta2=cfg["beta2"], eps=cfg["eps"])
        adam.t = cfg["t"]
        for i, m in enumerate(adam.m):
            np.copyto(m, arrays[f"adam.m.{i}"])
        for i, v in enumerate(adam.v):
            np.copyto(v, arrays[f"adam.v.{i}"])
    return net, adam, header["meta"]
