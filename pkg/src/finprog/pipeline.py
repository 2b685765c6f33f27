"""Run one pretraining-data generator over a whole dataset."""
from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, FrozenSet, IO, List, Mapping, Optional, Sequence, Tuple

from tqdm import tqdm

from .config import RunConfig
from .corpus import HybridExample
from .errors import NoIrrelevantEvidence
from .jsonl import read_jsonl, write_jsonl
from .keyphrase import load_stopwords
from .log import get_logger
from .pretrain_gen import (
    GenerationReport,
    MaskedExample,
    OperatorExample,
    RankPair,
    example_seed,
    gen_noisy_vir_sets,
    gen_vir_pairs,
    gen_vir_sets,
    gen_vkm,
    gen_vop,
)
from .training import TaskCorpora

logger = get_logger(__name__)

GEN_TASKS = ("vir", "noisy-vir", "vop", "vkm")

# generator task -> trainer task / record type
_TRAIN_TASK = {"vir": "vir", "noisy-vir": "vir", "vop": "vop", "vkm": "vkm"}
_RECORD_TYPE = {"vir": RankPair, "vop": OperatorExample, "vkm": MaskedExample}


@dataclass
class GeneratedCorpus:
    task: str
    instances: List[Any] = field(default_factory=list)
    report: GenerationReport = field(default_factory=GenerationReport)

    def records(self) -> List[Dict[str, Any]]:
        return [i.to_record() for i in self.instances]


def _generate_one(
    ex: HybridExample, task: str, config: RunConfig, stopwords: FrozenSet[str]
) -> Tuple[List[Any], GenerationReport]:
    report = GenerationReport(examples=1)
    seed = example_seed(config.seed, ex.id)

    if task in ("vir", "noisy-vir"):
        gen_sets = gen_noisy_vir_sets if task == "noisy-vir" else gen_vir_sets
        try:
            sets = gen_sets(ex, config.k, seed)
        except NoIrrelevantEvidence as e:
            report.skipped_examples += 1
            logger.info("skipped example", extra={"example": ex.id, "reason": str(e)})
            return [], report
        out: List[Any] = gen_vir_pairs(sets, ex.question, ex.id)
        report.instances += len(out)
        return out, report

    if task == "vop":
        out = gen_vop(ex, report)
    else:
        out = gen_vkm(ex, seed, config.window, stopwords, config.damping, config.tol, config.max_iter)
        report.instances += len(out)
    if not out:
        report.skipped_examples += 1
    return out, report


def generate_corpus(
    examples: Sequence[HybridExample],
    task: str,
    config: Optional[RunConfig] = None,
    progress: bool = False,
) -> GeneratedCorpus:
    """
    1. order examples by id
    2. run the task's generator per example (``config.jobs`` threads)
    3. concatenate instances in example-id order, whatever the thread timing

    Every example draws from its own seed, so the output does not depend on
    ``jobs``.
    """
    if task not in GEN_TASKS:
        raise ValueError(f"unknown generation task {task!r}; expected one of {GEN_TASKS}")
    config = config or RunConfig()
    stopwords = load_stopwords(config.stoplist_path)
    ordered = sorted(examples, key=lambda e: e.id)

    corpus = GeneratedCorpus(task)
    bar = tqdm(total=len(ordered), desc=f"gen {task}", disable=not progress, leave=False)
    with concurrent.futures.ThreadPoolExecutor(max_workers=config.jobs) as executor:
        for instances, report in executor.map(lambda e: _generate_one(e, task, config, stopwords), ordered):
            corpus.instances.extend(instances)
            corpus.report.merge(report)
            bar.update(1)
    bar.close()

    r = corpus.report
    logger.info(
        "generated %d %s instances from %d examples (%d skipped examples, %d skipped steps, %d ambiguous operands)",
        r.instances, task, r.examples, r.skipped_examples, r.skipped_steps, r.ambiguous_operands,
    )
    return corpus


def write_corpus(corpus: GeneratedCorpus, out: IO[str], provenance: Optional[Dict[str, Any]] = None) -> int:
    return write_jsonl(out, corpus.records(), provenance)


def read_corpus(path: Path, task: str) -> List[Any]:
    """Instances of a generated JSONL file, for the trainer."""
    record_type = _RECORD_TYPE[_TRAIN_TASK[task]]
    return [record_type.from_record(r) for r in read_jsonl(path)]


def load_task_corpora(paths: Mapping[str, Path]) -> TaskCorpora:
    """``paths`` maps vir / vop / vkm to generated JSONL files."""
    corpora = TaskCorpora()
    for task, path in paths.items():
        corpora.get(_TRAIN_TASK[task]).extend(read_corpus(path, task))
    return corpora


def build_task_corpora(examples: Sequence[HybridExample], config: RunConfig) -> TaskCorpora:
    """Generate every requested task in memory (used by train-demo)."""
    vir_task = "noisy-vir" if config.noisy_vir else "vir"
    corpora = TaskCorpora()
    for task in config.tasks:
        gen_task = vir_task if task == "vir" else task
        corpora.get(task).extend(generate_corpus(examples, gen_task, config).instances)
    return corpora
