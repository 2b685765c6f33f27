import pytest

from finprog.text import tokenize, tokenize_spans


@pytest.mark.parametrize(
    "text, tokens",
    [
        ("held $1,760 units", ["held", "$1,760", "units"]),
        ("margin of 14.1% .", ["margin", "of", "14.1%", "."]),
        ("a loss of (170.1) million", ["a", "loss", "of", "(170.1)", "million"]),
        ("fell by -3.5 points", ["fell", "by", "-3.5", "points"]),
        ("revenue for 2016-2017 rose", ["revenue", "for", "2016", "-", "2017", "rose"]),
        ("fiscal-2017 results", ["fiscal", "-", "2017", "results"]),
    ],
)
def test_tokenize(text, tokens):
    assert tokenize(text) == tokens


def test_spans_point_back_into_the_text():
    text = "revenue for 2016-2017 rose"
    for token, start, end in tokenize_spans(text):
        assert text[start:end] == token
