import numpy as np
import pytest

from foodnet.checkpoint import MAGIC, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from foodnet.errors import BadMagicError, FoodnetError, HeaderError, TruncatedFileError
from foodnet.network import build_paper_network, predict


@pytest.fixture(scope="module")
def net():
    return build_paper_network(7, input_shape=(64, 64, 3),
                               class_names=["apple", "Bread", "café", "d", "e", "f", "g", "h", "i", "j"])


def test_round_trip_bit_exact(net, tmp_path):
    path = tmp_path / "m.cnck"
    save_checkpoint(net, path)
    back = load_checkpoint(path)
    assert back.layers == net.layers
    assert back.class_names == net.class_names
    assert back.input_shape == net.input_shape
    assert all(a.tobytes() == b.tobytes() for a, b in zip(net.params, back.params))
    assert encode_checkpoint(back) == path.read_bytes()


def test_predictions_survive(net, np_rng):
    x = np_rng.random((3, 64, 64, 3)).astype(np.float32)
    back = decode_checkpoint(encode_checkpoint(net))
    assert np.array_equal(predict(net, x), predict(back, x))


def test_dropout_rates_preserved(net):
    back = decode_checkpoint(encode_checkpoint(net))
    assert [l.rate for l in back.layers if l.kind == "dropout"] == [0.25, 0.5]


def test_header_layout(net):
    data = encode_checkpoint(net)
    assert data.startswith(MAGIC)
    assert int.from_bytes(data[6:10], "little") == len(net.layers)


def test_bad_magic(net):
    data = bytearray(encode_checkpoint(net))
    data[0] = ord("X")
    with pytest.raises(BadMagicError) as info:
        decode_checkpoint(bytes(data))
    assert isinstance(info.value, FoodnetError)


@pytest.mark.parametrize("cut", [3, 8, 20, 1000, -1])
def test_truncated(net, cut):
    data = encode_checkpoint(net)
    with pytest.raises((TruncatedFileError, BadMagicError)):
        decode_checkpoint(data[:cut])


def test_trailing_bytes(net):
    with pytest.raises(HeaderError):
        decode_checkpoint(encode_checkpoint(net) + b"\0")


def test_unknown_tag(net):
    data = bytearray(encode_checkpoint(net))
    data[10] = 200
    with pytest.raises(HeaderError):
        decode_checkpoint(bytes(data))
