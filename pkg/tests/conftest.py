import copy
import random

import pytest

from finprog.corpus import ingest_finqa
from finprog.dsl_core import Operator

# Two-community excerpt: the program divides total units by the units of the
# two communities listed in the table.
FIG1_RECORD = {
    "id": "fig1",
    "pre_text": [
        "the company operates apartment communities in nashville .",
        "the portfolio held 1,760 units at the end of the year .",
    ],
    "post_text": ["the acklen west end was acquired in 2015 ."],
    "table": [
        ["", "Units", "Occupancy"],
        ["The Charlotte at Midtown", "279", "95%"],
        ["The Acklen West End", "320", "93%"],
    ],
    "qa": {
        "question": "what is the ratio of portfolio units to the units of the two communities?",
        "program": "divide(1760, add(279,320))",
        "exe_ans": 2.93823,
        "gold_inds": {
            "text_1": "the portfolio held 1,760 units at the end of the year .",
            "table_1": "the charlotte at midtown of units is 279 ; the charlotte at midtown of occupancy is 95% ;",
            "table_2": "the acklen west end of units is 320 ; the acklen west end of occupancy is 93% ;",
        },
    },
}

# Only the "Units" column is gold, so the header occurs exactly twice.
UNITS_RECORD = {
    "id": "units",
    "pre_text": ["the communities are located in nashville ."],
    "post_text": [],
    "table": [
        ["", "Units"],
        ["The Charlotte at Midtown", "279"],
        ["The Acklen West End", "320"],
    ],
    "qa": {
        "question": "how many apartments do both communities have together?",
        "program": "add(279, 320)",
        "exe_ans": 599.0,
        "gold_inds": {"table_1": "", "table_2": ""},
    },
}


@pytest.fixture
def fig1_record():
    return copy.deepcopy(FIG1_RECORD)


@pytest.fixture
def fig1_example():
    return ingest_finqa([copy.deepcopy(FIG1_RECORD)]).examples[0]


@pytest.fixture
def units_example():
    return ingest_finqa([copy.deepcopy(UNITS_RECORD)]).examples[0]


def synthetic_record(example_id, n_gold, n_distractors, program="add(1, 2)", exe_ans=3.0):
    """Text-only record: the first n_gold sentences are gold."""
    sentences = [f"sentence number {i} about segment {example_id} ." for i in range(n_gold + n_distractors)]
    return {
        "id": example_id,
        "pre_text": sentences,
        "post_text": [],
        "table": [["", "2017"]],
        "qa": {
            "question": f"what is the answer for {example_id}?",
            "program": program,
            "exe_ans": exe_ans,
            "gold_inds": {f"text_{i}": sentences[i] for i in range(n_gold)},
        },
    }


@pytest.fixture
def make_example():
    def make(example_id="syn", n_gold=2, n_distractors=2, **kw):
        return ingest_finqa([synthetic_record(example_id, n_gold, n_distractors, **kw)]).examples[0]

    return make


# ---------------------------------------------------------------- random programs

ROW_NAMES = ["net sales", "revenue", "operating income", "total assets"]
TABLE = [
    ["", "2019", "2018", "2017"],
    ["net sales", "$1,200", "1,050", "990.5"],
    ["revenue", "300", "(20)", "410"],
    ["operating income", "12.5%", "10%", "11%"],
    ["total assets", "5", "7", "9"],
]
ARITHMETIC = [op for op in Operator if not op.is_table and op is not Operator.GREATER]
TABLE_OPS = [op for op in Operator if op.is_table]


def _number(rng):
    choice = rng.random()
    if choice < 0.2:
        return rng.choice(["const_1", "const_2", "const_10", "const_100", "const_1000", "const_m1"])
    if choice < 0.3:
        return f"{rng.randint(1, 99)}.{rng.randint(0, 9)}%"
    if choice < 0.5:
        return f"{rng.randint(1, 999)}.{rng.randint(1, 99)}"
    return str(rng.randint(1, 5000))


def random_nested(rng, depth, allow_greater=True):
    """Nested program text of at most ``depth`` levels using every operator."""
    if depth <= 1 or rng.random() < 0.3:
        if rng.random() < 0.25:
            return f"{rng.choice(TABLE_OPS).value}({rng.choice(ROW_NAMES)})"
        return _number(rng)
    if allow_greater and rng.random() < 0.1:
        a = random_nested(rng, depth - 1, False)
        b = random_nested(rng, depth - 1, False)
        return f"greater({a}, {b})"
    op = rng.choice(ARITHMETIC)
    a = random_nested(rng, depth - 1, False)
    b = random_nested(rng, depth - 1, False)
    return f"{op.value}({a}, {b})"


def random_program_text(rng, depth=4):
    text = random_nested(rng, depth)
    # a bare number or table call at the top still needs an operator
    if "(" not in text:
        text = f"add({text}, {_number(rng)})"
    return text


@pytest.fixture
def program_rng():
    return random.Random(1234)
