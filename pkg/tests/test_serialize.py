import math
import struct

import pytest

from sladecomp.config import default_domains
from sladecomp.mlp import Mlp
from sladecomp.rng import make_rng
from sladecomp.serialize import (
    FORMAT_MAJOR,
    ChecksumError,
    ModelFormatError,
    TruncatedError,
    VersionError,
    deserialize_model,
    load_model,
    save_model,
    serialize_model,
)
from sladecomp.slo import FeatureSpec
from sladecomp.synth import generate_dataset
from sladecomp.train import MethodKind, RiskModel, train


@pytest.fixture(scope="module")
def model():
    dom = default_domains()[1]
    data = generate_dataset(dom.truth, dom.spec, 60, make_rng("ser"))
    return train(data, MethodKind.AWET, rng=make_rng("ser-train"))


def test_round_trip(model, tmp_path):
    assert deserialize_model(serialize_model(model)) == model
    path = tmp_path / "m.bin"
    save_model(model, path)
    back = load_model(path)
    assert back == model
    assert back.predict([10.0, 50.0], [0.2, 0.7]).tolist() == model.predict([10.0, 50.0], [0.2, 0.7]).tolist()


def test_round_trip_nan_loss_and_custom_spec():
    m = RiskModel(Mlp(), FeatureSpec((5.0, 50.0), (0.1, 2.0)), MethodKind.PO)
    back = deserialize_model(serialize_model(m))
    assert back == m and math.isnan(back.final_val_loss)
    assert back.spec.delay_interval == (5.0, 50.0)


def test_serialization_is_deterministic(model):
    assert serialize_model(model) == serialize_model(model)


@pytest.mark.parametrize("where", [30, 200, -10])
def test_corrupted_byte(model, where):
    data = bytearray(serialize_model(model))
    data[where] ^= 0xFF
    with pytest.raises(ChecksumError):
        deserialize_model(bytes(data))


def test_newer_major_version(model):
    with pytest.raises(VersionError):
        deserialize_model(serialize_model(model, major=FORMAT_MAJOR + 1))


def test_newer_minor_version_is_readable(model):
    assert deserialize_model(serialize_model(model, minor=7)) == model


@pytest.mark.parametrize("cut", [0, 10, 100, 1])
def test_truncated(model, cut):
    data = serialize_model(model)
    with pytest.raises(TruncatedError):
        deserialize_model(data[:cut] if cut < 20 else data[:-cut])


def test_bad_magic(model):
    data = b"NOTAMODL" + serialize_model(model)[8:]
    with pytest.raises(ModelFormatError):
        deserialize_model(data)


def test_errors_are_distinct():
    kinds = {ChecksumError, VersionError, TruncatedError}
    assert all(issubclass(k, ModelFormatError) for k in kinds)
    assert len(kinds) == 3


def test_layout_prefix(model):
    data = serialize_model(model)
    magic, major, minor, hlen, plen = struct.unpack_from("<8sHHIQ", data)
    assert magic == b"SLARISK\0" and major == FORMAT_MAJOR
    assert len(data) == 24 + hlen + plen + 4
    assert plen == 8 * (model.mlp.n_params + 2 * len(model.mlp.bn_mean))
