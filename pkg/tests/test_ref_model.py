import math
import random

import numpy as np
import pytest

from finprog.dsl_core import OPERATORS, Operator
from finprog.errors import SpanOutOfRange
from finprog.pretrain_gen import MaskedExample, OperatorExample, RankPair
from finprog.ref_model import (
    MASK,
    UNK,
    LossHeads,
    TinyEncoder,
    Vocab,
    build_vocab,
    init_model,
    loss_vir,
    loss_vkm,
    loss_vop,
    numerical_gradient,
    predict_operator,
    relative_error,
    vir_tokens,
)

WORDS = ["revenue", "grew", "279", "320", "units", "total", "fell", "margin", "cost", "sales", "14.1%"]
QUESTION = "what was the total revenue ?"


def _vocab():
    return Vocab(WORDS + ["what", "was", "the", "?"])


def _sentence(rng, lo=1, hi=5):
    return " ".join(rng.choice(WORDS) for _ in range(rng.randint(lo, hi)))


def _pair(rng):
    # the two sets must differ as token bags, otherwise both scores coincide
    while True:
        higher = [_sentence(rng) for _ in range(rng.randint(1, 3))]
        lower = [_sentence(rng) for _ in range(rng.randint(1, 3))]
        if sorted(" ".join(higher).split()) != sorted(" ".join(lower).split()):
            break
    return RankPair.from_record({"question": QUESTION, "higher": higher, "lower": lower, "levels": [0, 1]})


def _operator_example(rng, n_operands=2):
    evidence = [_sentence(rng, 2, 6) for _ in range(rng.randint(1, 3))]
    spans = []
    for _ in range(n_operands):
        ei = rng.randrange(len(evidence))
        ti = rng.randrange(len(evidence[ei].split()))
        spans.append([ei, ti, ti + 1])
    return OperatorExample.from_record(
        {"question": QUESTION, "evidence": evidence, "spans": spans, "label": rng.choice(OPERATORS).value}
    )


def _masked_example(rng):
    tokens = [rng.choice(WORDS) for _ in range(rng.randint(2, 10))]
    positions = sorted(rng.sample(range(len(tokens)), rng.randint(1, min(3, len(tokens)))))
    targets = [tokens[p] for p in positions]
    for p in positions:
        tokens[p] = MASK
    return MaskedExample.from_record(
        {"question": QUESTION, "tokens": tokens, "mask_positions": positions, "targets": targets}
    )


def test_vocab_lowercases_and_reserves_unknown():
    vocab = Vocab(["Units", "units", "Revenue"])
    assert vocab.id("UNITS") == vocab.id("units") != 0
    assert vocab.id("never seen") == 0
    assert vocab.tokens[0] == UNK
    assert len(vocab) == 4 + 2


def test_build_vocab_ignores_corpus_order():
    a = build_vocab([["b", "A"], ["c"]])
    b = build_vocab([["c"], ["a", "B"]])
    assert a.tokens == b.tokens


def test_vir_tokens():
    assert vir_tokens("why?", ["a b", "c"]) == ["[CLS]", "why", "?", "[SEP]", "a", "b", "c"]


# ---------------------------------------------------------------- fixed values

def test_identical_sets_give_log_two():
    enc, heads = init_model(_vocab(), dim=8, seed=0)
    pair = RankPair.from_record(
        {"question": QUESTION, "higher": ["revenue grew"], "lower": ["revenue grew"], "levels": [0, 1]}
    )
    assert loss_vir(pair, enc, heads).loss == pytest.approx(math.log(2))


def test_zero_rank_head_gives_log_two():
    enc, heads = init_model(_vocab(), dim=8, seed=0)
    heads.params[:] = 0.0
    assert loss_vir(_pair(random.Random(0)), enc, heads).loss == pytest.approx(math.log(2))


def test_zero_operator_head_gives_log_ten():
    enc, heads = init_model(_vocab(), dim=8, seed=0)
    heads.view("op_w")[...] = 0.0
    heads.view("op_b")[...] = 0.0
    assert loss_vop(_operator_example(random.Random(0)), enc, heads).loss == pytest.approx(math.log(10))


def test_zero_mlm_head_gives_log_vocab_size():
    vocab = Vocab([f"w{i}" for i in range(96)])
    assert len(vocab) == 100
    enc, heads = init_model(vocab, dim=8, seed=0)
    heads.view("mlm_w")[...] = 0.0
    heads.view("mlm_b")[...] = 0.0
    exm = MaskedExample("q", ("w1", MASK, "w3", MASK), ((1, "w2"), (3, "w4")))
    assert loss_vkm(exm, enc, heads).loss == pytest.approx(math.log(100))


# ---------------------------------------------------------------- gradients

def _max_gradient_error(loss_fn, instance, enc, heads):
    result = loss_fn(instance, enc, heads)

    def f(_):
        return loss_fn(instance, enc, heads).loss

    numeric_enc = numerical_gradient(f, enc.params)
    numeric_heads = numerical_gradient(f, heads.params)
    return max(
        relative_error(result.enc_grad, numeric_enc),
        relative_error(result.heads_grad, numeric_heads),
    )


@pytest.mark.parametrize(
    "loss_fn, make",
    [(loss_vir, _pair), (loss_vop, _operator_example), (loss_vkm, _masked_example)],
    ids=["vir", "vop", "vkm"],
)
def test_analytic_gradients_match_finite_differences(loss_fn, make):
    rng = random.Random(2024)
    vocab = _vocab()
    worst = 0.0
    for draw in range(100):
        enc, heads = init_model(vocab, dim=4, seed=draw)
        worst = max(worst, _max_gradient_error(loss_fn, make(rng), enc, heads))
    assert worst < 1e-4


def test_three_operand_example_gradients():
    rng = random.Random(3)
    enc, heads = init_model(_vocab(), dim=4, seed=3)
    assert _max_gradient_error(loss_vop, _operator_example(rng, n_operands=3), enc, heads) < 1e-4


def test_numerical_gradient_restores_the_point():
    x = np.array([1.0, -2.0, 3.0])
    grad = numerical_gradient(lambda v: float((v ** 2).sum()), x)
    assert np.allclose(grad, [2.0, -4.0, 6.0])
    assert x.tolist() == [1.0, -2.0, 3.0]


# ---------------------------------------------------------------- losses

def test_swapping_the_pair_flips_the_margin():
    enc, heads = init_model(_vocab(), dim=8, seed=1)
    pair = _pair(random.Random(1))
    swapped = RankPair(pair.lower, pair.higher, pair.question)
    s_u = heads.rank_score(enc.pool(enc.encode(vir_tokens(pair.question, pair.higher.sentences())))[0])
    s_v = heads.rank_score(enc.pool(enc.encode(vir_tokens(pair.question, pair.lower.sentences())))[0])
    forward, backward = loss_vir(pair, enc, heads), loss_vir(swapped, enc, heads)
    assert backward.loss - forward.loss == pytest.approx(s_u - s_v)
    if s_u != s_v:
        assert forward.accuracy + backward.accuracy == 1.0


def test_operand_count_does_not_change_the_head():
    rng = random.Random(5)
    enc, heads = init_model(_vocab(), dim=8, seed=5)
    two, three = _operator_example(rng, 2), _operator_example(rng, 3)
    assert loss_vop(two, enc, heads).heads_grad.shape == loss_vop(three, enc, heads).heads_grad.shape
    assert isinstance(predict_operator(three, enc, heads), Operator)


@pytest.mark.parametrize(
    "spans",
    [
        [[0, 0, 1]],
        [[0, 0, 1], [1, 0, 1]],
        [[0, 0, 1], [0, 9, 10]],
        [[0, 1, 1], [0, 0, 1]],
    ],
    ids=["one-operand", "bad-evidence", "past-the-end", "empty-span"],
)
def test_bad_operand_spans(spans):
    enc, heads = init_model(_vocab(), dim=4, seed=0)
    exm = OperatorExample.from_record(
        {"question": QUESTION, "evidence": ["revenue grew 279"], "spans": spans, "label": "add"}
    )
    with pytest.raises(SpanOutOfRange):
        loss_vop(exm, enc, heads)


def test_bad_mask_positions():
    enc, heads = init_model(_vocab(), dim=4, seed=0)
    with pytest.raises(SpanOutOfRange):
        loss_vkm(MaskedExample("q", ("a", MASK), ()), enc, heads)
    with pytest.raises(SpanOutOfRange):
        loss_vkm(MaskedExample("q", ("a", MASK), ((5, "units"),)), enc, heads)


def test_unmasked_tokens_do_not_change_the_masked_loss():
    enc, heads = init_model(_vocab(), dim=8, seed=2)
    a = MaskedExample("q", ("revenue", MASK, "grew"), ((1, "units"),))
    b = MaskedExample("q", ("cost", MASK, "margin"), ((1, "units"),))
    assert loss_vkm(a, enc, heads).loss == loss_vkm(b, enc, heads).loss


def test_parameter_vectors_have_the_declared_size():
    vocab = _vocab()
    enc = TinyEncoder(vocab, dim=4)
    heads = LossHeads(len(vocab), dim=4)
    assert enc.size == len(vocab) * 4 + 4 * 4 + 4
    assert heads.size == 4 + 1 + 10 * 4 + 10 + len(vocab) * 4 + len(vocab)
    with pytest.raises(ValueError):
        TinyEncoder(vocab, dim=4, params=np.zeros(3))
