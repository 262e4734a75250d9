import math
import struct

import numpy as np
import pytest

from dyadnet.errors import CorruptModelFile, InvalidSpec, UnknownModelName
from dyadnet.models import (
    MAGIC,
    REGISTRY,
    NetworkSpec,
    build,
    load_model,
    load_spec_file,
    model_from_bytes,
    model_to_bytes,
    parameter_count,
    registry_lookup,
    save_model,
)
from dyadnet.numerics import one_hot, softmax, softmax_cross_entropy

SMALL = [name for name, s in REGISTRY.items() if max(s.hidden_sizes) <= 25]


def shape_formula(spec):
    """Independent count: LSTM blocks, then dense weight+bias per layer."""
    sizes = [16, *spec.hidden_sizes, spec.output_size]
    total = 0
    if spec.first_hidden_is_lstm:
        h = sizes[1]
        total += 4 * h * 16 + 4 * h * h + 4 * h
        sizes = sizes[1:]
    for a, b in zip(sizes, sizes[1:]):
        total += (a + 1) * b
    return total


class TestRegistry:
    def test_entries(self):
        s = registry_lookup("RN2-3")
        assert s.hidden_sizes == (1500, 600) and s.epochs == 2500
        assert s.learning_rate == 0.00011 and s.l2_enabled and s.dropout_rate == 0
        s = registry_lookup("RNR2-4")
        assert s.first_hidden_is_lstm and s.hidden_sizes == (25, 12)
        assert s.epochs == 500 and s.output_size == 2
        assert registry_lookup("RN2-5").dropout_rate == 0.15

    def test_unknown(self):
        with pytest.raises(UnknownModelName):
            registry_lookup("RN2-9")

    def test_eleven_models(self):
        assert len(REGISTRY) == 11

    @pytest.mark.parametrize("name", list(REGISTRY))
    def test_parameter_counts(self, name):
        assert parameter_count(REGISTRY[name]) == shape_formula(REGISTRY[name])

    def test_known_counts(self):
        # 400 + 25 + 300 + 12 + 48 + 4
        assert parameter_count(registry_lookup("RN2-1")) == 16 * 25 + 25 + 25 * 12 + 12 + 12 * 4 + 4 == 789
        spec = registry_lookup("RNR2-1")
        assert 4 * (25 * 16 + 25 * 25 + 25) == 4200
        net = build(spec, 0)
        assert net.lstm.W.size + net.lstm.U.size + net.lstm.b.size == 4200


class TestSpec:
    @pytest.mark.parametrize("kwargs", [
        dict(hidden_sizes=()), dict(hidden_sizes=(4,), output_size=3),
        dict(hidden_sizes=(4,), input_size=13), dict(hidden_sizes=(4,), dropout_rate=1.0),
        dict(hidden_sizes=(4,), epochs=0), dict(hidden_sizes=(4,), learning_rate=0.0),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidSpec):
            NetworkSpec("x", **kwargs)

    def test_spec_file(self, tmp_path):
        f = tmp_path / "mine.ini"
        f.write_text("[network]\nhidden = 8-4\nlstm = yes\nl2 = yes\nlearning_rate = 0.01\nepochs = 3\n")
        s = load_spec_file(f)
        assert s.name == "mine" and s.hidden_sizes == (8, 4) and s.first_hidden_is_lstm
        assert s.output_size == 4 and s.epochs == 3


class TestBuild:
    @pytest.mark.parametrize("name", SMALL)
    def test_enumerated_count_and_probabilities(self, name, rng):
        spec = REGISTRY[name]
        net = build(spec, 3)
        assert net.n_parameters == parameter_count(spec)
        X = rng.normal(size=(2, 9, 16)) if spec.first_hidden_is_lstm else rng.normal(size=(2, 16))
        p = net.predict_proba(X)
        assert p.shape == (2, spec.output_size)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)

    @pytest.mark.parametrize("name", list(REGISTRY))
    def test_every_registry_model_forward(self, name, rng):
        # full-width registry models are built once; a single forward keeps this cheap
        spec = REGISTRY[name]
        net = build(spec, 0)
        X = rng.normal(size=(1, 3, 16)) if spec.first_hidden_is_lstm else rng.normal(size=(1, 16))
        p = net.predict_proba(X)
        assert p.shape == (1, spec.output_size)
        assert abs(p.sum() - 1) < 1e-9
        assert net.n_parameters == parameter_count(spec)

    def test_deterministic(self):
        a, b = build(registry_lookup("RNR2-1"), 9), build(registry_lookup("RNR2-1"), 9)
        for p, q in zip(a.params, b.params):
            assert p.tobytes() == q.tobytes()
        c = build(registry_lookup("RNR2-1"), 10)
        assert a.params[0].tobytes() != c.params[0].tobytes()

    def test_init_scheme(self):
        net = build(registry_lookup("RNR2-1"), 0)
        H = 25
        np.testing.assert_array_equal(net.lstm.b[H:2 * H], 1.0)
        assert np.all(net.lstm.b[:H] == 0) and np.all(net.lstm.b[2 * H:] == 0)
        assert all(np.all(d.b == 0) for d in net.dense)
        assert np.max(np.abs(net.dense[0].W)) <= math.sqrt(6 / 25)

    @pytest.mark.parametrize("classes", [2, 4])
    def test_zero_output_loss_is_ln_c(self, classes, rng):
        net = build(NetworkSpec("z", (10, 5), output_size=classes), 1, zero_output=True)
        loss, _ = softmax_cross_entropy(net.forward(rng.normal(size=(7, 16)))[0],
                                        one_hot(rng.integers(classes, size=7), classes))
        assert abs(loss - math.log(classes)) < 1e-9

    def test_variable_length_prediction(self, rng):
        net = build(registry_lookup("RNR2-1"), 0)
        seqs = [rng.normal(size=(n, 16)) for n in (5, 9, 5, 60)]
        batch = net.predict_proba(seqs)
        for k, s in enumerate(seqs):
            np.testing.assert_allclose(batch[k], softmax(net.forward(s[None])[0])[0], rtol=1e-12)


class TestPersistence:
    @pytest.mark.parametrize("name", SMALL)
    def test_round_trip(self, name, tmp_path, rng):
        net = build(REGISTRY[name], 5)
        path = tmp_path / "m.dyadnn"
        save_model(net, path)
        back = load_model(path)
        assert back.spec == net.spec
        for p, q in zip(net.params, back.params):
            assert p.tobytes() == q.tobytes()
        X = rng.normal(size=(3, 4, 16)) if net.spec.first_hidden_is_lstm else rng.normal(size=(3, 16))
        assert net.predict_proba(X).tobytes() == back.predict_proba(X).tobytes()

    def test_layout(self):
        buf = model_to_bytes(build(registry_lookup("RN2-1"), 0))
        assert buf.startswith(MAGIC)
        assert struct.unpack_from("<I", buf, len(MAGIC))[0] == 1
        assert len(buf) - 8 * 789 > 0
        assert buf.endswith(np.ascontiguousarray(build(registry_lookup("RN2-1"), 0).params[-1], "<f8").tobytes())

    def test_truncated(self):
        buf = model_to_bytes(build(registry_lookup("RN2-1"), 0))
        for cut in (3, 20, len(buf) - 1):
            with pytest.raises(CorruptModelFile):
                model_from_bytes(buf[:cut])

    def test_version_99(self):
        buf = bytearray(model_to_bytes(build(registry_lookup("RN2-1"), 0)))
        struct.pack_into("<I", buf, len(MAGIC), 99)
        with pytest.raises(CorruptModelFile, match="version 99"):
            model_from_bytes(bytes(buf))

    def test_bad_magic_and_trailing(self):
        buf = model_to_bytes(build(registry_lookup("RN2-1"), 0))
        with pytest.raises(CorruptModelFile):
            model_from_bytes(b"X" + buf[1:])
        with pytest.raises(CorruptModelFile):
            model_from_bytes(buf + b"\0")
