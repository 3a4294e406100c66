import struct
import zlib

import numpy as np
import pytest

from histoclass import container, svm
from histoclass.acnn import io, network


@pytest.fixture
def net():
    return network.init_network(network.Topology(), np.random.default_rng(0))


@pytest.fixture
def svm_model():
    rng = np.random.default_rng(0)
    X = np.concatenate([rng.normal(c * 3, 1, (10, 3)) for c in range(4)])
    y = np.repeat(np.arange(4), 10)
    return svm.train_multiclass(X, y, 4.0, svm.KernelSpec("rbf", gamma=0.5)), X


def test_acnn_round_trip_bit_exact(net, tmp_path):
    path = tmp_path / "m.acnn"
    io.save_model(net, path)
    back = io.load_model(path)
    assert back.topology == net.topology
    for (na, a), (nb, b) in zip(net.parameters(), back.parameters()):
        assert na == nb
        assert a.tobytes() == b.tobytes()
    rng = np.random.default_rng(1)
    for _ in range(100):
        x = rng.uniform(-1, 1, (3, 64, 64))
        np.testing.assert_array_equal(network.forward(net, x), network.forward(back, x))


def test_acnn_round_trip_other_topology(tmp_path):
    t = network.Topology((3, 4, 5, 3), 2, 3, 2, 17, "sigmoid", "max")
    n = network.init_network(t, np.random.default_rng(2))
    io.save_model(n, tmp_path / "m")
    back = io.load_model(tmp_path / "m")
    assert back.topology == t
    assert io.encode(back) == io.encode(n)


def test_acnn_file_layout(net):
    data = io.encode(net)
    magic, version, length = struct.unpack_from("<4sIQ", data)
    assert (magic, version) == (b"ACNN", 1)
    assert len(data) == 16 + length + 4
    # header fields then the first kernel value in (dest, src, row, col) order
    fields = struct.unpack_from("<9I", data, 16)
    assert fields[:8] == (3, 6, 3, 16, 16, 32, 64, 4)
    first = struct.unpack_from("<d", data, 16 + 4 * 14)[0]
    assert first == net.weights[0][0, 0, 0, 0]


def test_corrupted_magic(net):
    data = bytearray(io.encode(net))
    data[0:4] = b"XXXX"
    with pytest.raises(container.BadMagicError) as exc:
        io.decode(bytes(data))
    assert exc.value.code == "bad-magic"


def test_empty_and_truncated(net, tmp_path):
    (tmp_path / "empty").write_bytes(b"")
    with pytest.raises(container.TruncatedFileError) as exc:
        io.load_model(tmp_path / "empty")
    assert exc.value.code == "truncated"
    with pytest.raises(container.TruncatedFileError):
        io.decode(io.encode(net)[:-100])


def test_version_mismatch(net):
    data = bytearray(io.encode(net))
    data[4:8] = struct.pack("<I", 7)
    with pytest.raises(container.UnsupportedVersionError) as exc:
        io.decode(bytes(data))
    assert exc.value.code == "version-mismatch"


def test_checksum(net):
    data = bytearray(io.encode(net))
    data[200] ^= 0x01
    with pytest.raises(container.ChecksumError) as exc:
        io.decode(bytes(data))
    assert exc.value.code == "checksum"


def test_inconsistent_payload_with_valid_crc(net):
    payload = container.unpack(io.encode(net), b"ACNN", 1) + b"\x00" * 8
    with pytest.raises(container.ModelFormatError):
        io.decode(container.pack(b"ACNN", 1, payload))


def test_acnn_rejects_svm_file(svm_model):
    with pytest.raises(container.BadMagicError):
        io.decode(svm.encode(svm_model[0]))


def test_svm_round_trip(svm_model, tmp_path):
    model, X = svm_model
    svm.save_model(model, tmp_path / "m.asvm")
    back = svm.load_model(tmp_path / "m.asvm")
    assert svm.encode(back) == svm.encode(model)
    c1, v1 = svm.predict_batch(model, X)
    c2, v2 = svm.predict_batch(back, X)
    np.testing.assert_array_equal(c1, c2)
    np.testing.assert_array_equal(v1, v2)
    assert len(back.machines) == 6


def test_svm_corruption(svm_model):
    data = bytearray(svm.encode(svm_model[0]))
    data[-1] ^= 0xFF
    with pytest.raises(container.ChecksumError):
        svm.decode(bytes(data))
    with pytest.raises(container.TruncatedFileError):
        svm.decode(bytes(data[:10]))


def test_crc_covers_header():
    blob = container.pack(b"ABCD", 1, b"hello")
    assert struct.unpack("<I", blob[-4:])[0] == zlib.crc32(blob[:-4])
    assert container.unpack(blob, b"ABCD", 1) == b"hello"
