import numpy as np
import pytest

from saliency_lab import model
from saliency_lab.autodiff import Graph
from saliency_lab.checkpoint import Checkpoint, CheckpointError, FORMAT_VERSION, checkpoint_name

from oracles import DISC_ROWS, GEN_ROWS, shape_oracle


@pytest.fixture(scope="module")
def full_generator():
    return model.build_generator(model.generator_config(256, 192, 1), seed=0)


def test_generator_inventory_at_full_scale(full_generator):
    shape, counts = shape_oracle(GEN_ROWS, 3, 192, 256)
    assert shape == (1, 192, 256)
    assert full_generator.layer_shapes()[-1] == ("output", (1, 192, 256))
    assert full_generator.param_count() == sum(counts.values())
    for name, n in counts.items():
        p = full_generator.params
        assert p[name + ".weight"].value.size + p[name + ".bias"].value.size == n
    depths = [s[1] for s in GEN_ROWS if s not in ("pool", "up")]
    assert depths[:13] == [64, 64, 128, 128, 256, 256, 256] + [512] * 6
    assert [shp[0] for name, shp in full_generator.layer_shapes() if name.startswith("conv")] == depths[:-1]


def test_discriminator_inventory_at_full_scale():
    disc = model.build_discriminator(model.discriminator_config(256, 192, 1), seed=0)
    shape, counts = shape_oracle(DISC_ROWS, 4, 192, 256)
    assert shape == (1,)
    assert disc.param_count() == sum(counts.values())
    assert disc.params["fc4.weight"].shape == (100, 64 * 32 * 24) == (100, 49152)
    assert dict(disc.layer_shapes())["pool3"] == (64, 24, 32)


def test_discriminator_small_input_fc_dim():
    disc = model.build_discriminator(model.discriminator_config(64, 48, 1), seed=0)
    assert dict(disc.layer_shapes())["pool3"] == (64, 6, 8)
    assert disc.params["fc4.weight"].shape[1] == 3072
    out = disc.predict(np.random.default_rng(0).uniform(size=(2, 4, 48, 64)))
    assert out.shape == (2, 1) and np.all((out > 0) & (out < 1))


def test_scaled_generator():
    gen = model.build_generator(model.generator_config(64, 48, 8), seed=3)
    shapes = dict(gen.layer_shapes())
    assert len(gen.layer_shapes()) == len(model.GENERATOR_LAYERS)
    assert shapes["conv1_1"][0] == 8 and shapes["conv5_3"][0] == 64
    out = gen.predict(np.random.default_rng(0).uniform(size=(2, 3, 48, 64)))
    assert out.shape == (2, 1, 48, 64)
    assert np.all((out > 0) & (out < 1))


def test_generator_rejects_bad_size():
    with pytest.raises(ValueError, match="divisible"):
        model.generator_config(60, 48, 8)
    with pytest.raises(ValueError, match="divisible by 8"):
        model.discriminator_config(60, 44, 1)
    with pytest.raises(ValueError, match="scale divisor"):
        model.generator_config(64, 48, 3)


def test_frozen_prefix_marks_conv1_to_conv3():
    gen = model.build_generator(model.generator_config(64, 48, 8), seed=0)
    frozen = {n.split(".")[0] for n, p in gen.params.items() if not p.trainable}
    assert frozen == {"conv1_1", "conv1_2", "conv2_1", "conv2_2", "conv3_1", "conv3_2", "conv3_3"}
    g = Graph()
    gen.forward(np.zeros((1, 3, 48, 64)), g)
    trainable_ops = {g.node(i).op for i in g.trainable}
    assert "param:conv4_1.weight" in trainable_ops and "param:conv3_3.weight" not in trainable_ops


def test_forward_deterministic_and_batch_split():
    gen = model.build_generator(model.generator_config(32, 32, 16), seed=5)
    x = np.random.default_rng(1).uniform(size=(2, 3, 32, 32))
    a = gen.predict(x)
    assert a.tobytes() == gen.predict(x).tobytes()
    gen2 = model.build_generator(model.generator_config(32, 32, 16), seed=5)
    z = np.zeros((1, 3, 32, 32))
    assert gen.predict(z).tobytes() == gen2.predict(z).tobytes()
    np.testing.assert_allclose(a, np.concatenate([gen.predict(x[:1]), gen.predict(x[1:])]), rtol=1e-12, atol=1e-14)


def test_seed_changes_weights_not_shapes():
    a = model.build_generator(model.generator_config(32, 32, 16), seed=1)
    b = model.build_generator(model.generator_config(32, 32, 16), seed=2)
    assert [p.shape for p in a.parameters()] == [p.shape for p in b.parameters()]
    assert not np.array_equal(a.params["conv1_1.weight"].value, b.params["conv1_1.weight"].value)


def test_init_ranges():
    cfg = model.generator_config(32, 32, 16, init="glorot")
    gen = model.build_generator(cfg, seed=0)
    w = gen.params["conv2_1.weight"].value
    o, c, kh, kw = w.shape
    assert np.abs(w).max() <= np.sqrt(6 / (c * kh * kw + o * kh * kw))
    assert np.all(gen.params["conv2_1.bias"].value == 0)
    he = model.build_generator(model.generator_config(32, 32, 16), seed=0).params["conv2_1.weight"].value
    assert np.abs(he).max() <= np.sqrt(6 / (c * kh * kw))


def test_forward_shape_mismatch():
    gen = model.build_generator(model.generator_config(32, 32, 16), seed=0)
    with pytest.raises(ValueError):
        gen.predict(np.zeros((1, 4, 32, 32)))
    disc = model.build_discriminator(model.discriminator_config(32, 32, 16), seed=0)
    with pytest.raises(ValueError):
        disc.predict(np.zeros((1, 4, 16, 32)))


def test_netconfig_roundtrip():
    cfg = model.discriminator_config(64, 48, 8)
    assert model.NetConfig.from_dict(cfg.to_dict()) == cfg


def test_checkpoint_roundtrip(tmp_path):
    gen = model.build_generator(model.generator_config(32, 32, 16), seed=0)
    ck = Checkpoint({"generator": gen.config.to_dict()}, {f"generator.{k}": v for k, v in gen.state().items()})
    path = ck.save(tmp_path / checkpoint_name("bootstrap", 3))
    assert path.name == "ckpt_bootstrap_0003.sglb"
    raw = path.read_bytes()
    assert raw[:4] == b"SGLB" and int.from_bytes(raw[4:8], "little") == FORMAT_VERSION
    back = Checkpoint.load(path)
    assert back.config == ck.config
    assert list(back.params) == list(ck.params)
    for k in ck.params:
        assert back.params[k].tobytes() == ck.params[k].tobytes()
    assert back.to_bytes() == raw


def test_checkpoint_rejects_bad_input():
    good = Checkpoint({"a": 1}, {"w": np.ones((2, 3))}).to_bytes()
    with pytest.raises(CheckpointError, match="version"):
        Checkpoint.from_bytes(good[:4] + (99).to_bytes(4, "little") + good[8:])
    with pytest.raises(CheckpointError, match="magic"):
        Checkpoint.from_bytes(b"XXXX" + good[4:])
    with pytest.raises(CheckpointError, match="truncated"):
        Checkpoint.from_bytes(good[:-3])


def test_full_scale_forward_on_small_input(full_generator):
    out = full_generator.predict(np.random.default_rng(0).uniform(size=(1, 3, 32, 32)))
    assert out.shape == (1, 1, 32, 32)
    assert np.all(np.isfinite(out)) and np.all((out > 0) & (out < 1))
