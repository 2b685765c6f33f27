"""Multi-task training of the reference model, evaluation, checkpoints and plots."""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, IO, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import TASKS
from .errors import AllCorporaEmpty, FileUnreadable, SchemaMismatch
from .log import get_logger
from .pretrain_gen import MaskedExample, OperatorExample, RankPair
from .ref_model import LOSSES, LossHeads, TinyEncoder, Vocab, build_vocab, init_model, vir_tokens

logger = get_logger(__name__)

LOG_COLUMNS = ["step", "task", "loss", "accuracy"]


@dataclass
class TaskCorpora:
    vir: List[RankPair] = field(default_factory=list)
    vop: List[OperatorExample] = field(default_factory=list)
    vkm: List[MaskedExample] = field(default_factory=list)

    def get(self, task: str) -> list:
        return getattr(self, task)

    def token_sequences(self) -> Iterator[Sequence[str]]:
        for pair in self.vir:
            yield vir_tokens(pair.question, pair.higher.sentences())
            yield vir_tokens(pair.question, pair.lower.sentences())
        for exm in self.vop:
            yield exm.token_sequence()[0]
        for exm in self.vkm:
            yield exm.masked_sequence
            yield [t for _, t in exm.targets]


@dataclass
class TrainResult:
    encoder: TinyEncoder
    heads: LossHeads
    log: pd.DataFrame

    def final_accuracy(self) -> Dict[str, float]:
        """Mean accuracy of the last logged step of each task."""
        last = self.log.groupby("task").tail(1)
        return dict(zip(last["task"], last["accuracy"]))


def make_batches(
    corpora: TaskCorpora, batch_size: int, tasks: Sequence[str] = TASKS
) -> List[Tuple[str, list]]:
    """Fixed single-task mini-batches, in corpus order."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    batches = []
    for task in tasks:
        items = corpora.get(task)
        for i in range(0, len(items), batch_size):
            batches.append((task, items[i:i + batch_size]))
    return batches


def batch_loss(
    task: str, batch: Sequence[Any], enc: TinyEncoder, heads: LossHeads
) -> Tuple[float, float, np.ndarray, np.ndarray]:
    """Mean loss, accuracy and gradients over a batch, accumulated in batch order."""
    loss_fn = LOSSES[task]
    enc_grad, heads_grad = enc.zeros(), heads.zeros()
    loss = accuracy = 0.0
    for item in batch:
        r = loss_fn(item, enc, heads)
        loss += r.loss
        accuracy += r.accuracy
        enc_grad += r.enc_grad
        heads_grad += r.heads_grad
    n = len(batch)
    return loss / n, accuracy / n, enc_grad / n, heads_grad / n


def train_multitask(
    corpora: TaskCorpora,
    batch_size: int = 4,
    steps: Optional[int] = None,
    lr: float = 0.1,
    seed: int = 42,
    dim: int = 32,
    epochs: int = 1,
    tasks: Sequence[str] = TASKS,
    encoder: Optional[TinyEncoder] = None,
    heads: Optional[LossHeads] = None,
) -> TrainResult:
    """
    Plain gradient descent over homogeneous batches. The union of batches is
    shuffled once per epoch; each update uses the loss of the batch's task.

    Training stops after ``steps`` updates when given (epochs repeat as
    needed), otherwise after ``epochs`` passes.
    """
    batches = make_batches(corpora, batch_size, tasks)
    if not batches:
        raise AllCorporaEmpty(f"no training instances for tasks {list(tasks)}")

    if encoder is None or heads is None:
        vocab = build_vocab(corpora.token_sequences())
        encoder, heads = init_model(vocab, dim, seed)
        logger.info("initialized model", extra={"vocab": len(vocab), "dim": dim})

    rng = random.Random(seed)
    rows: List[Dict[str, Any]] = []
    step = 0
    epoch = 0
    while True:
        order = list(range(len(batches)))
        rng.shuffle(order)
        for bi in order:
            task, batch = batches[bi]
            loss, accuracy, enc_grad, heads_grad = batch_loss(task, batch, encoder, heads)
            encoder.params -= lr * enc_grad
            heads.params -= lr * heads_grad
            step += 1
            rows.append({"step": step, "task": task, "loss": loss, "accuracy": accuracy})
            if steps is not None and step >= steps:
                break
        epoch += 1
        logger.debug("finished epoch", extra={"epoch": epoch, "step": step})
        if steps is not None:
            if step >= steps:
                break
        elif epoch >= epochs:
            break

    log = pd.DataFrame(rows, columns=LOG_COLUMNS)
    logger.info("trained %d steps over %d batches", step, len(batches))
    return TrainResult(encoder, heads, log)


def evaluate_tasks(
    enc: TinyEncoder, heads: LossHeads, corpora: TaskCorpora, tasks: Sequence[str] = TASKS
) -> Dict[str, Dict[str, float]]:
    """Per-task mean loss and accuracy; tasks with no instances are left out."""
    out: Dict[str, Dict[str, float]] = {}
    for task in tasks:
        items = corpora.get(task)
        if not items:
            continue
        loss, accuracy, _, _ = batch_loss(task, items, enc, heads)
        out[task] = {"loss": loss, "accuracy": accuracy, "n": len(items)}
    return out


# ---------------------------------------------------------------- artifacts

def write_metrics_csv(log: pd.DataFrame, out: IO[str], provenance: Optional[Dict[str, Any]] = None) -> None:
    if provenance is not None:
        out.write("# provenance: " + json.dumps(provenance, sort_keys=True) + "\n")
    log.to_csv(out, index=False, columns=LOG_COLUMNS, lineterminator="\n")


def save_checkpoint(
    path: Path, enc: TinyEncoder, heads: LossHeads, provenance: Optional[Dict[str, Any]] = None
) -> None:
    payload = {
        "provenance": provenance or {},
        "dim": enc.dim,
        "vocab": enc.vocab.tokens,
        "encoder": enc.params.tolist(),
        "heads": heads.params.tolist(),
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_checkpoint(path: Path) -> Tuple[TinyEncoder, LossHeads]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise FileUnreadable(f"{path}: {e}") from None
    except json.JSONDecodeError as e:
        raise SchemaMismatch("$", f"invalid checkpoint: {e}") from None
    try:
        vocab = Vocab(payload["vocab"])
        dim = int(payload["dim"])
        enc = TinyEncoder(vocab, dim, np.asarray(payload["encoder"], dtype=np.float64))
        heads = LossHeads(len(vocab), dim, np.asarray(payload["heads"], dtype=np.float64))
    except KeyError as e:
        raise SchemaMismatch(str(e.args[0]), "missing from checkpoint") from None
    except ValueError as e:
        raise SchemaMismatch("$", str(e)) from None
    return enc, heads


def plot_loss_curves(log: pd.DataFrame, path: Path) -> None:
    """One loss curve per task, against the global step."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    for task, df in log.groupby("task", sort=True):
        ax.plot(df["step"], df["loss"], label=task)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
