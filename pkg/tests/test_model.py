import math

import pytest
import torch
from safetensors.torch import save_file

from toporec.alignment import align_words, build_toy_vocab
from toporec.model import (
    CNN1DHead, CheckpointError, EncoderConfig, HeadConfig, build_classifier, collate,
    confidences_from_logits, count_encoder_parameters, encode, head_forward, load_checkpoint,
    load_encoder_weights, make_head, predict, save_checkpoint, softmax,
)
from toporec.trainer import cross_entropy


def central_difference(loss_fn, param, eps=1e-6):
    grad = torch.zeros_like(param)
    flat, gflat = param.data.view(-1), grad.view(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        up = loss_fn().item()
        flat[i] = orig - eps
        down = loss_fn().item()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * eps)
    return grad


def relative_error(a, b):
    return (a - b).norm().item() / max(a.norm().item(), b.norm().item(), 1e-12)


@pytest.mark.parametrize("kind", ["linear", "mlp", "cnn1d"])
def test_head_gradients_match_finite_differences(kind):
    torch.manual_seed(0)
    head = make_head(HeadConfig(kind), 16).double()
    x = torch.randn(2, 3, 16, dtype=torch.float64)
    gold = torch.tensor([[0, 1, 2], [2, -100, 1]])

    def loss_fn():
        return cross_entropy(head_forward(head, x), gold)

    head.zero_grad()
    loss_fn().backward()
    with torch.no_grad():
        for name, p in head.named_parameters():
            numeric = central_difference(loss_fn, p)
            assert relative_error(p.grad, numeric) < 1e-4, name


@pytest.mark.parametrize("hidden", [16, 64, 768, 1024])
def test_cnn1d_flatten_size(hidden):
    head = CNN1DHead(hidden, HeadConfig("cnn1d"))
    assert head.flat_size == 16 * (hidden // 2)
    assert head.fc1.in_features == head.flat_size
    assert head(torch.randn(2, 5, hidden)).shape == (2, 5, 3)


def test_cnn1d_odd_width_floors():
    assert CNN1DHead(17, HeadConfig("cnn1d")).flat_size == 16 * 8


def test_mlp_shape():
    head = make_head(HeadConfig("mlp"), 64)
    assert (head.fc1.in_features, head.fc1.out_features, head.fc2.out_features) == (64, 256, 3)


def test_linear_zero_weights_give_bias():
    head = make_head(HeadConfig("linear"), 8)
    with torch.no_grad():
        head.out.weight.zero_()
        head.out.bias.copy_(torch.tensor([0.5, -1.0, 2.0]))
    out = head_forward(head, torch.randn(2, 4, 8))
    assert torch.equal(out, torch.tensor([0.5, -1.0, 2.0]).expand(2, 4, 3))


def test_head_width_mismatch():
    with pytest.raises(ValueError):
        head_forward(make_head(HeadConfig("mlp"), 16), torch.randn(1, 2, 32))


def test_bad_head_kind():
    with pytest.raises(ValueError):
        HeadConfig("crf")


def test_variant_constants():
    assert EncoderConfig.for_variant("base").hidden_size == 768
    large = EncoderConfig.for_variant("large")
    assert (large.layers, large.hidden_size, large.attention_heads) == (24, 1024, 16)
    with pytest.raises(ValueError):
        EncoderConfig("pretrained-base-cased", layers=2, hidden_size=64, attention_heads=4)


@pytest.mark.parametrize("variant, millions", [("base", 110), ("large", 340)])
def test_published_parameter_counts(variant, millions):
    n = count_encoder_parameters(EncoderConfig.for_variant(variant))
    assert abs(n / 1e6 - millions) / millions < 0.03


def test_seeded_build_is_reproducible_and_nonzero(small_vocab):
    enc = EncoderConfig(vocab_size=len(small_vocab))
    a = build_classifier(enc, HeadConfig("cnn1d"), seed=7)
    b = build_classifier(enc, HeadConfig("cnn1d"), seed=7)
    c = build_classifier(enc, HeadConfig("cnn1d"), seed=8)
    for (name, pa), pb in zip(a.state_dict().items(), b.state_dict().values()):
        assert torch.equal(pa, pb), name
    assert not torch.equal(a.head.fc1.weight, c.head.fc1.weight)
    for name, p in a.head.named_parameters():
        if p.dim() > 1:
            assert torch.count_nonzero(p) == p.numel(), name


def test_pretrained_needs_checkpoint():
    with pytest.raises(CheckpointError):
        build_classifier(EncoderConfig.for_variant("base"), HeadConfig(), seed=0)


def _batch(vocab, n=2, max_len=128):
    return collate([align_words(["Houston", "flooding"], vocab, max_len)] * n)


def test_encode_shape_and_determinism(small_vocab):
    model = build_classifier(EncoderConfig(vocab_size=len(small_vocab)), HeadConfig(), seed=0)
    model.eval()
    out = encode(model, _batch(small_vocab))
    assert out.shape == (2, 128, 64)
    assert torch.equal(out, encode(model, _batch(small_vocab)))


def test_encode_rejects_long_sequences(small_vocab):
    model = build_classifier(EncoderConfig(vocab_size=len(small_vocab)), HeadConfig(), seed=0)
    with pytest.raises(ValueError, match="max_positions"):
        encode(model, _batch(small_vocab, max_len=129))


def test_predict_tie_and_confidence():
    labels, conf = confidences_from_logits(torch.tensor([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]], dtype=torch.float64))
    assert labels.tolist() == [0, 0]
    assert conf[0].item() == pytest.approx(1 / 3, abs=1e-9)
    # closed form 1 / (1 + 2 e^-10)
    assert conf[1].item() == pytest.approx(0.9999092083843409, abs=1e-7)


def test_softmax_normalized_and_shift_invariant():
    torch.manual_seed(1)
    logits = torch.randn(4, 7, 3, dtype=torch.float64) * 20
    probs = softmax(logits)
    assert torch.allclose(probs.sum(-1), torch.ones(4, 7, dtype=torch.float64), atol=1e-6)
    shifted = softmax(logits + 123.0)
    assert torch.allclose(probs, shifted, atol=1e-9)
    assert torch.equal(confidences_from_logits(logits)[0], confidences_from_logits(logits + 123.0)[0])
    assert torch.isfinite(softmax(torch.tensor([1e4, 0.0, -1e4]))).all()


def test_predict_is_pure(small_vocab):
    model = build_classifier(EncoderConfig(vocab_size=len(small_vocab)), HeadConfig("mlp"), seed=0)
    model.train()
    a = predict(model, _batch(small_vocab))
    b = predict(model, _batch(small_vocab))
    assert torch.equal(a[0], b[0]) and torch.equal(a[1], b[1])
    assert model.training


def test_checkpoint_round_trip(tmp_path, small_vocab):
    model = build_classifier(EncoderConfig(vocab_size=len(small_vocab)), HeadConfig("cnn1d"), seed=3)
    save_checkpoint(model, tmp_path / "ck", small_vocab, {"note": "test"})
    loaded, vocab, manifest = load_checkpoint(tmp_path / "ck")
    assert vocab == small_vocab
    assert manifest["labels"] == ["O", "B-LOC", "I-LOC"]
    assert manifest["provenance"] == {"note": "test"}
    batch = _batch(small_vocab)
    assert torch.equal(predict(model, batch)[1], predict(loaded, batch)[1])


def test_checkpoint_shape_mismatch_names_array(tmp_path, small_vocab):
    model = build_classifier(EncoderConfig(vocab_size=len(small_vocab)), HeadConfig("linear"), seed=3)
    save_checkpoint(model, tmp_path / "ck", small_vocab)
    state = {k: v.contiguous() for k, v in model.state_dict().items()}
    state["head.out.bias"] = torch.zeros(5)
    save_file(state, str(tmp_path / "ck" / "model.safetensors"))
    with pytest.raises(CheckpointError, match="head.out.bias"):
        load_checkpoint(tmp_path / "ck")


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nothing")


def test_load_published_style_encoder_weights(tmp_path, small_vocab):
    enc = EncoderConfig(vocab_size=len(small_vocab))
    donor = build_classifier(enc, HeadConfig(), seed=1)
    # published checkpoints prefix arrays with "bert." and may use gamma/beta names
    state = {}
    for k, v in donor.encoder.state_dict().items():
        k = "bert." + k
        if "LayerNorm.weight" in k:
            k = k.replace(".weight", ".gamma")
        elif "LayerNorm.bias" in k:
            k = k.replace(".bias", ".beta")
        state[k] = v.contiguous()
    state["cls.predictions.bias"] = torch.zeros(3)
    save_file(state, str(tmp_path / "model.safetensors"))

    target = build_classifier(enc, HeadConfig(), seed=2)
    load_encoder_weights(target.encoder, tmp_path)
    for k, v in donor.encoder.state_dict().items():
        assert torch.equal(v, target.encoder.state_dict()[k]), k

    del state["bert.embeddings.word_embeddings.weight"]
    save_file(state, str(tmp_path / "model.safetensors"))
    with pytest.raises(CheckpointError, match="word_embeddings"):
        load_encoder_weights(target.encoder, tmp_path)
