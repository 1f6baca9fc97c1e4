import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vdt import autodiff as ad
from vdt import losses as L
from vdt.autodiff import Node, ShapeError
from vdt.model import (
    Architecture,
    CheckpointError,
    DomainPath,
    LatentStats,
    classifier_logits,
    classify,
    decode,
    encode,
    gate_features,
    init_params,
    load_checkpoint,
    params_digest,
    predict,
    reparameterize,
    save_checkpoint,
)

ARCH = Architecture(6, (8, 8), 4, 10)


def zeroed(arch=ARCH):
    p = init_params(arch, 0)
    for _, node in p:
        node.value = np.zeros_like(node.value)
    return p


def test_default_shapes():
    p = init_params(Architecture.default_for(32), 0)
    stats = encode(p, np.zeros((5, 32)), DomainPath.SOURCE)
    assert stats.mu.shape == (5, 128) and stats.logvar.shape == (5, 128)
    assert p["classifier.0.W"].shape == (128, 500)
    assert Architecture.default_for(768).encoder_hidden == (512, 256)


def test_zero_weights_give_zero_stats_and_bias_reconstruction():
    p = zeroed()
    st_ = encode(p, np.ones((3, 6)), DomainPath.TARGET)
    assert not st_.mu.value.any() and not st_.logvar.value.any()
    last = f"decoder.{len(ARCH.encoder_hidden)}.b"
    p[last].value = np.arange(6.0)
    assert np.array_equal(decode(p, np.ones((2, 4))).value, np.tile(np.arange(6.0), (2, 1)))


def test_paths_differ_only_through_heads():
    p = init_params(ARCH, 1)
    X = np.random.default_rng(0).standard_normal((4, 6))
    a, b = encode(p, X, DomainPath.SOURCE), encode(p, X, DomainPath.TARGET)
    # target heads start as copies of the source heads
    assert np.array_equal(a.mu.value, b.mu.value)
    p["head.target.mu.W"].value = p["head.target.mu.W"].value + 1.0
    b = encode(p, X, DomainPath.TARGET)
    assert not np.array_equal(a.mu.value, b.mu.value)
    assert np.array_equal(a.logvar.value, b.logvar.value)


def test_shared_trunk_is_one_instance():
    p = init_params(ARCH, 2)
    X = np.random.default_rng(1).standard_normal((3, 6))
    s = encode(p, X, DomainPath.SOURCE)
    t = encode(p, X, DomainPath.TARGET)
    p.zero_grad()
    ad.backward(ad.add(ad.sum(s.mu), ad.sum(t.mu)))
    # trunk receives gradient from both paths, each head only from its own
    assert np.any(p["encoder.0.W"].grad != 0)
    assert np.any(p["head.source.mu.W"].grad != 0) and np.any(p["head.target.mu.W"].grad != 0)
    assert not np.any(p["head.source.logvar.W"].grad)


def test_encode_rejects_wrong_dim():
    with pytest.raises(ShapeError):
        encode(init_params(ARCH, 0), np.zeros((2, 5)), DomainPath.SOURCE)
    with pytest.raises(ShapeError):
        decode(init_params(ARCH, 0), np.zeros((2, 3)))


def test_gate_examples():
    one = Node([[1.0]])
    assert gate_features(LatentStats(one, Node([[0.0]]))).value[0, 0] == 0.5
    assert gate_features(LatentStats(one, Node([[-50.0]]))).value[0, 0] == pytest.approx(1.0)
    assert gate_features(LatentStats(one, Node([[50.0]]))).value[0, 0] == pytest.approx(0.0, abs=1e-20)
    assert gate_features(LatentStats(one, Node([[3.0]])), use_gate=False).value[0, 0] == 1.0


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, (3, 4), elements=st.floats(-10, 10)),
    arrays(np.float64, (3, 4), elements=st.floats(-30, 30)),
)
def test_gate_never_amplifies(mu, logvar):
    F = gate_features(LatentStats(Node(mu), Node(logvar))).value
    assert np.all(np.abs(F) <= np.abs(mu))
    assert np.all(F * mu >= 0)


def test_reparameterize_monte_carlo():
    rng = np.random.default_rng(0)
    n = 100_000
    mu_row = np.array([0.5, -2.0, 3.0])
    lv_row = np.array([0.0, -1.0, 1.2])
    stats = LatentStats(Node(np.tile(mu_row, (n, 1))), Node(np.tile(lv_row, (n, 1))))
    z = reparameterize(stats, rng).value
    var = np.exp(lv_row)
    se_mean = np.sqrt(var / n)
    # variance of the sample variance of a Gaussian is 2 sigma^4 / (n - 1)
    se_var = np.sqrt(2 * var**2 / (n - 1))
    assert np.all(np.abs(z.mean(axis=0) - mu_row) < 4 * se_mean)
    assert np.all(np.abs(z.var(axis=0, ddof=1) - var) < 4 * se_var)


def test_reparameterize_zero_variance_limit_and_gradient_reach():
    mu = Node(np.array([[1.0, 2.0]]))
    lv = Node(np.full((1, 2), -80.0))
    z = reparameterize(LatentStats(mu, lv), np.random.default_rng(0))
    assert np.allclose(z.value, mu.value)
    lv = Node(np.zeros((1, 2)))
    z = reparameterize(LatentStats(mu, lv), np.random.default_rng(0))
    ad.backward(ad.sum(z))
    assert np.all(mu.grad == 1.0) and np.any(lv.grad != 0)


def test_recon_gradient_reaches_encoder():
    p = init_params(ARCH, 3)
    X = np.random.default_rng(2).standard_normal((5, 6))
    stats = encode(p, X, DomainPath.SOURCE)
    loss = L.mse(X, decode(p, reparameterize(stats, np.random.default_rng(0))))
    p.zero_grad()
    loss.backward()
    assert np.any(p["encoder.0.W"].grad != 0)


def test_classify_properties():
    p = init_params(ARCH, 4)
    F = np.random.default_rng(3).standard_normal((7, 4))
    probs = classify(p, F).value
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    z = zeroed()
    assert np.allclose(classify(z, F).value, 0.5)
    # argmax is unchanged when both logits move together
    logits = classifier_logits(p, F).value
    shifted = ad.softmax_rowwise(Node(logits + 7.0)).value
    assert np.array_equal(np.argmax(shifted, 1), np.argmax(probs, 1))


def test_predict_tie_goes_to_class_zero():
    assert predict(zeroed(), np.ones((3, 6)), DomainPath.SOURCE).tolist() == [0, 0, 0]


def test_checkpoint_round_trip(tmp_path):
    p = init_params(ARCH, 5)
    save_checkpoint(p, tmp_path / "m.vdtc", "abc", meta={"best_epoch": 3})
    q, header = load_checkpoint(tmp_path / "m.vdtc")
    assert params_digest(p) == params_digest(q)
    assert q.arch == ARCH and header["config_hash"] == "abc" and header["meta"]["best_epoch"] == 3


def test_checkpoint_errors(tmp_path):
    p = init_params(ARCH, 5)
    save_checkpoint(p, tmp_path / "m.vdtc")
    raw = (tmp_path / "m.vdtc").read_bytes()
    for name, blob in (("magic", b"NOPE" + raw[4:]), ("short", raw[:-8]), ("long", raw + b"\0"), ("tiny", raw[:6])):
        (tmp_path / name).write_bytes(blob)
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / name)


def test_copy_and_state_are_independent():
    p = init_params(ARCH, 6)
    q = p.copy()
    q["encoder.0.W"].value[0, 0] += 1.0
    assert params_digest(p) != params_digest(q)
    s = p.state()
    p["encoder.0.W"].value = p["encoder.0.W"].value * 0
    p.load_state(s)
    assert params_digest(p) == params_digest(init_params(ARCH, 6))
