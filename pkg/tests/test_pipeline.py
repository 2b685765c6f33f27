import io
import json

import pytest

from finprog.config import RunConfig
from finprog.pipeline import (
    GEN_TASKS,
    build_task_corpora,
    generate_corpus,
    load_task_corpora,
    read_corpus,
    write_corpus,
)


@pytest.fixture
def examples(make_example):
    return [make_example(f"ex{i}", n_gold=3, n_distractors=3) for i in (3, 0, 2, 1)]


@pytest.mark.parametrize("task", GEN_TASKS)
def test_output_does_not_depend_on_jobs(examples, task):
    one = generate_corpus(examples, task, RunConfig(jobs=1, k=2))
    four = generate_corpus(examples, task, RunConfig(jobs=4, k=2))
    assert one.records() == four.records()
    assert one.instances


def test_instances_are_ordered_by_example_id(examples):
    corpus = generate_corpus(examples, "vir", RunConfig(k=2))
    ids = [r["example_id"] for r in corpus.records()]
    assert ids == sorted(ids)
    # three sets per example give three pairs
    assert len(ids) == 4 * 3
    assert corpus.report.examples == 4
    assert corpus.report.instances == 12


def test_seed_changes_the_sets(examples):
    a = generate_corpus(examples, "vir", RunConfig(seed=1, k=3)).records()
    b = generate_corpus(examples, "vir", RunConfig(seed=2, k=3)).records()
    assert a != b


def test_examples_without_distractors_are_skipped(make_example):
    corpus = generate_corpus([make_example("only-gold", n_gold=2, n_distractors=0)], "vir")
    assert corpus.instances == []
    assert corpus.report.skipped_examples == 1


def test_unknown_task(examples):
    with pytest.raises(ValueError):
        generate_corpus(examples, "mlm")


def test_written_corpus_reads_back(tmp_path, examples):
    config = RunConfig(k=2)
    corpus = generate_corpus(examples, "vop", config)
    path = tmp_path / "vop.jsonl"
    with path.open("w", encoding="utf-8") as f:
        n = write_corpus(corpus, f, config.provenance())
    assert n == len(corpus.instances)
    header = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
    assert header["_provenance"]["k"] == 2
    assert [e.to_record() for e in read_corpus(path, "vop")] == corpus.records()


def test_write_is_byte_identical(examples):
    outputs = []
    for _ in range(2):
        out = io.StringIO()
        write_corpus(generate_corpus(examples, "noisy-vir", RunConfig(k=2, seed=7)), out, {"seed": 7})
        outputs.append(out.getvalue())
    assert outputs[0] == outputs[1]


def test_noisy_pairs_train_as_ranking_pairs(tmp_path, examples):
    corpus = generate_corpus(examples, "noisy-vir", RunConfig(k=1))
    path = tmp_path / "noisy.jsonl"
    with path.open("w", encoding="utf-8") as f:
        write_corpus(corpus, f)
    corpora = load_task_corpora({"noisy-vir": path})
    assert len(corpora.vir) == len(corpus.instances)
    assert corpora.vop == [] and corpora.vkm == []


def test_build_task_corpora(examples):
    corpora = build_task_corpora(examples, RunConfig(k=1, tasks=["vir", "vop"]))
    assert len(corpora.vir) == 4
    assert len(corpora.vop) == 4
    assert corpora.vkm == []
    noisy = build_task_corpora(examples, RunConfig(k=1, tasks=["vir"], noisy_vir=True))
    assert all(len(p.higher.evidence) == 4 for p in noisy.vir)
