"""Binary model files.

Layout (all integers little-endian)::

    8 bytes   magic b"SLARISK\\0"
    u16 u16   format major, minor
    u32       header length H
    u64       array payload length P
    H bytes   UTF-8 JSON header: layer widths, awet flag, BN momentum,
              method tag, feature spec, training metadata, array manifest
    P bytes   float64 arrays in manifest order, row-major
    u32       CRC-32 of every preceding byte

Readers accept any minor version of their own major and reject newer majors.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .mlp import Mlp
from .slo import FeatureSpec
from .train import MethodKind, RiskModel

MAGIC = b"SLARISK\0"
FORMAT_MAJOR = 1
FORMAT_MINOR = 0
_PREFIX = struct.Struct("<8sHHIQ")


class ModelFormatError(ValueError):
    pass


class VersionError(ModelFormatError):
    pass


class TruncatedError(ModelFormatError):
    pass


class ChecksumError(ModelFormatError):
    pass


def _arrays(m: RiskModel):
    mlp = m.mlp
    out = []
    for l, (W, b) in enumerate(zip(mlp.weights, mlp.biases)):
        out.append((f"W{l}", W))
        out.append((f"b{l}", b))
    out.append(("bn_mean", mlp.bn_mean))
    out.append(("bn_var", mlp.bn_var))
    return out


def serialize_model(m: RiskModel, major: int = FORMAT_MAJOR, minor: int = FORMAT_MINOR) -> bytes:
    arrays = _arrays(m)
    header = {
        "widths": list(m.mlp.widths),
        "awet": m.mlp.awet,
        "bn_momentum": m.mlp.momentum,
        "method": m.method.value,
        "spec": {
            "delay_interval": list(m.spec.delay_interval),
            "throughput_interval": list(m.spec.throughput_interval),
            "orientation": list(m.spec.orientation),
        },
        "meta": {
            "epochs_run": m.epochs_run,
            "best_epoch": m.best_epoch,
            "final_val_loss": m.final_val_loss,
            "wall_time_s": m.wall_time_s,
            "n_train_samples": m.n_train_samples,
        },
        "arrays": [{"name": name, "shape": list(a.shape)} for name, a in arrays],
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays)
    body = _PREFIX.pack(MAGIC, major, minor, len(hbytes), len(payload)) + hbytes + payload
    return body + struct.pack("<I", zlib.crc32(body))


def deserialize_model(data: bytes) -> RiskModel:
    if len(data) < _PREFIX.size:
        raise TruncatedError(f"file has {len(data)} bytes, shorter than the fixed prefix")
    magic, major, minor, hlen, plen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ModelFormatError("not a risk-model file (bad magic)")
    if major != FORMAT_MAJOR:
        raise VersionError(f"format {major}.{minor} not readable by {FORMAT_MAJOR}.x")
    expected = _PREFIX.size + hlen + plen + 4
    if len(data) < expected:
        raise TruncatedError(f"expected {expected} bytes, got {len(data)}")
    body = data[:expected - 4]
    (crc,) = struct.unpack_from("<I", data, expected - 4)
    if zlib.crc32(body) != crc:
        raise ChecksumError("CRC-32 mismatch")

    header = json.loads(data[_PREFIX.size:_PREFIX.size + hlen].decode("utf-8"))
    spec_h = header["spec"]
    if tuple(spec_h["orientation"]) != FeatureSpec.ORIENTATION:
        raise ModelFormatError(f"unsupported orientation {spec_h['orientation']}")
    spec = FeatureSpec(tuple(spec_h["delay_interval"]), tuple(spec_h["throughput_interval"]))
    mlp = Mlp(header["widths"], awet=header["awet"], momentum=header["bn_momentum"])

    pos = _PREFIX.size + hlen
    arrays = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arrays[entry["name"]] = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(entry["shape"])
        pos += 8 * count
    for l in range(mlp.n_layers):
        mlp.weights[l][...] = arrays[f"W{l}"]
        mlp.biases[l][...] = arrays[f"b{l}"]
    mlp.bn_mean[...] = arrays["bn_mean"]
    mlp.bn_var[...] = arrays["bn_var"]

    meta = header["meta"]
    return RiskModel(
        mlp=mlp,
        spec=spec,
        method=MethodKind(header["method"]),
        epochs_run=meta["epochs_run"],
        best_epoch=meta["best_epoch"],
        final_val_loss=meta["final_val_loss"],
        wall_time_s=meta["wall_time_s"],
        n_train_samples=meta["n_train_samples"],
    )


def save_model(m: RiskModel, path) -> None:
    Path(path).write_bytes(serialize_model(m))


def load_model(path) -> RiskModel:
    return deserialize_model(Path(path).read_bytes())
