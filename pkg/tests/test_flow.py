import numpy as np
import pytest

from shapeflow.errors import NumericRangeError, ValidationError
from shapeflow.flow import (STRATEGIES, CouplingFlow, MaskSpec, binarize_learned_mask, build_mask,
                            checkerboard_logits, coupling_forward, coupling_inverse,
                            flow_forward, flow_inverse, generate_params, log_prob,
                            standard_normal_logpdf)
from support import random_flow


def test_checkerboard_layer0_d4():
    assert build_mask(MaskSpec("checkerboard", 0, 4)).tolist() == [1, 0, 1, 0]
    assert build_mask(MaskSpec("checkerboard", 1, 4)).tolist() == [0, 1, 0, 1]


def test_dimwise_halves_alternate():
    assert build_mask(MaskSpec("dimwise", 0, 5)).tolist() == [1, 1, 1, 0, 0]
    assert build_mask(MaskSpec("dimwise", 1, 5)).tolist() == [0, 0, 0, 1, 1]


def test_learned_init_matches_checkerboard():
    for layer in range(3):
        spec = MaskSpec("learned", layer, 6, checkerboard_logits(6, layer))
        assert np.array_equal(build_mask(spec), build_mask(MaskSpec("checkerboard", layer, 6)))


def test_learned_mask_degenerate_repair():
    mask, _ = binarize_learned_mask([3.0, 3.0])
    assert mask.tolist() == [1.0, 0.0]
    mask, _ = binarize_learned_mask([-1.0, -4.0, -1.0])
    assert mask.tolist() == [0.0, 0.0, 1.0]
    mask, _ = binarize_learned_mask([2.0, 0.5, 1.0])
    assert mask.tolist() == [1.0, 0.0, 1.0]


def test_straight_through_derivative_is_sigmoid_slope():
    logits = np.array([0.0, 2.0, -1.0])
    _, d = binarize_learned_mask(logits)
    sig = 1 / (1 + np.exp(-logits))
    assert np.allclose(d, sig * (1 - sig), atol=1e-15)


def test_mask_spec_validation():
    with pytest.raises(ValidationError):
        MaskSpec("random", 0, 4)
    with pytest.raises(ValidationError):
        MaskSpec("learned", 0, 4)
    with pytest.raises(ValidationError):
        MaskSpec("learned", 0, 4, np.zeros(3))
    with pytest.raises(ValidationError):
        MaskSpec("checkerboard", 0, 1)


def test_zero_output_init_is_identity():
    flow = CouplingFlow.create(3, 2, n_layers=3, hidden=8, compressed=4, seed=1)
    x = np.random.default_rng(0).standard_normal((4, 5))
    z, logdet = flow.forward(x)
    assert np.array_equal(z, x)
    assert np.all(logdet == 0.0)


def test_coupling_matches_closed_form():
    flow = random_flow(2, 2, "checkerboard", seed=3, n_layers=1)
    layer = flow.layers[0]
    x = np.array([0.3, -1.2, 0.7, 2.0])
    y, logdet = coupling_forward(layer, x)
    b = build_mask(layer.mask)
    s, _ = layer.s_net.forward((b * x)[None])
    t, _ = layer.t_net.forward((b * x)[None])
    expect = b * x + (1 - b) * (x * np.exp(s[0]) + t[0])
    assert np.allclose(y, expect, rtol=0, atol=1e-14)
    assert logdet == pytest.approx(float(((1 - b) * s[0]).sum()), abs=1e-14)
    assert np.allclose(coupling_inverse(layer, y), x, atol=1e-13)
    # masked coordinates pass through untouched
    assert np.array_equal(y[b == 1], x[b == 1])


def test_scale_head_is_clamped():
    flow = random_flow(2, 2, "checkerboard", seed=0, n_layers=1)
    s, _ = flow.layers[0].s_net.forward(np.full((1, 4), 1e6))
    assert np.all(np.abs(s) <= 8.0)


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_roundtrip_batch(strategy):
    flow = random_flow(4, 3, strategy, seed=7)
    x = np.random.default_rng(1).standard_normal((5, 7))
    z, _ = flow_forward(flow, x)
    assert np.max(np.abs(flow_inverse(flow, z) - x)) < 1e-12


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_reports_layer():
    flow = random_flow(2, 2, "dimwise", seed=0, n_layers=2)
    x = np.array([[np.inf, 0.0, 0.0, 0.0]])
    with pytest.raises(NumericRangeError, match="layer"):
        flow.forward(x)


def test_dimension_checks():
    flow = random_flow(3, 2, "checkerboard", seed=0)
    with pytest.raises(ValidationError):
        flow.forward(np.zeros(4))
    with pytest.raises(ValidationError, match="embedding has dimension 2"):
        generate_params(flow, np.zeros(2))
    with pytest.raises(ValidationError):
        log_prob(flow, np.zeros(3), np.zeros(3))


def test_generate_reads_trailing_outputs():
    flow = random_flow(3, 2, "learned", seed=2)
    c = np.array([0.2, -0.1, 0.5])
    x = flow.inverse(np.concatenate([c, np.zeros(2)])[None])[0]
    assert np.array_equal(generate_params(flow, c), x[3:])
    batch = generate_params(flow, np.stack([c, c]))
    assert batch.shape == (2, 2)


def test_log_prob_change_of_variables():
    flow = random_flow(2, 2, "checkerboard", seed=4)
    c, p = np.array([0.1, 0.2]), np.array([-0.3, 0.4])
    z, logdet = flow_forward(flow, np.concatenate([c, p]))
    assert log_prob(flow, c, p) == pytest.approx(standard_normal_logpdf(z)[0] + logdet, abs=1e-12)


def test_compression_toggle_changes_depth():
    a = CouplingFlow.create(2, 2, n_layers=1, hidden=8, compressed=4, compression=True)
    b = CouplingFlow.create(2, 2, n_layers=1, hidden=8, compressed=4, compression=False)
    assert [w.shape for w in a.layers[0].s_net.weights] == [(4, 8), (8, 4), (4, 4)]
    assert [w.shape for w in b.layers[0].s_net.weights] == [(4, 8), (8, 4)]
    assert a.compression and not b.compression


def test_create_is_seed_deterministic():
    a = random_flow(3, 3, "learned", seed=11)
    b = random_flow(3, 3, "learned", seed=11)
    for (ka, va), (kb, vb) in zip(a.parameters().items(), b.parameters().items()):
        assert ka == kb and np.array_equal(va, vb)
