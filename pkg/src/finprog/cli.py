"""
Command line entry point.

Exit codes: 0 on success, 1 on usage errors, 2 on data errors.
"""
import json
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, IO, Iterator, List, Optional

import click
import typer
from pydantic import ValidationError
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from .config import RunConfig, load_config
from .corpus import (
    HybridExample,
    cell_sentences,
    dataset_statistics,
    linearize_row,
    load_finqa_report,
)
from .dsl_core import Program, parse_program, render_program
from .equivalence import prog_equal
from .errors import FileUnreadable, FinProgError, SchemaMismatch
from .eval_metrics import report_table, retrieval_table, score_predictions, score_retrieval
from .executor import TableContext, eval_program, trace_program
from .jsonl import dump_line, read_jsonl, write_jsonl
from .keyphrase import extract_header_keyphrases, extract_textrank_keyphrases, load_stopwords
from .log import configure_logging, get_logger
from .pipeline import build_task_corpora, generate_corpus, load_task_corpora, write_corpus
from .training import evaluate_tasks, plot_loss_curves, save_checkpoint, train_multitask, write_metrics_csv

logger = get_logger(__name__)

app = typer.Typer(add_completion=False, no_args_is_help=True, help="FinQA programs and pretraining data.")
gen_app = typer.Typer(no_args_is_help=True, help="Generate pretraining corpora (JSONL).")
app.add_typer(gen_app, name="gen")


@app.callback()
def _setup(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log INFO messages."),
    log_json: bool = typer.Option(False, "--log-json", help="Log JSON lines to stderr."),
) -> None:
    configure_logging("INFO" if verbose else "WARNING", json_logs=True if log_json else None)


# ---------------------------------------------------------------- helpers

def _config(**overrides: Any) -> RunConfig:
    try:
        return load_config(**overrides)
    except ValidationError as e:
        err = e.errors()[0]
        name = ".".join(str(p) for p in err["loc"])
        raise typer.BadParameter(err["msg"], param_hint=f"--{name.replace('_', '-')}") from None


def _constants(pairs: Optional[List[str]]) -> Dict[str, float]:
    out: Dict[str, float] = {}
    for pair in pairs or []:
        name, sep, value = pair.partition("=")
        if not sep or not name.startswith("const_"):
            raise typer.BadParameter(f"expected const_<name>=<value>, got {pair!r}", param_hint="--constant")
        try:
            out[name] = float(value)
        except ValueError:
            raise typer.BadParameter(f"not a number: {value!r}", param_hint="--constant") from None
    return out


@contextmanager
def _output(path: Optional[Path]) -> Iterator[IO[str]]:
    if path is None:
        yield sys.stdout
    else:
        with Path(path).open("w", encoding="utf-8", newline="\n") as f:
            yield f


def _console() -> Console:
    return Console(file=sys.stdout)


def _read_json(path: Path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise FileUnreadable(f"{path}: {e}") from None
    except json.JSONDecodeError as e:
        raise SchemaMismatch("$", f"invalid JSON: {e}") from None


def _read_table(path: Path) -> List[List[str]]:
    """A JSON matrix, or any JSON object with a ``table`` matrix (a FinQA record)."""
    data = _read_json(path)
    if isinstance(data, dict):
        data = data.get("table")
    if not isinstance(data, list) or not all(isinstance(r, list) for r in data):
        raise SchemaMismatch("table", "expected a list of rows")
    return [[str(c) for c in r] for r in data]


def _load_examples(path: Path, config: RunConfig, rejects: Optional[Path] = None) -> List[HybridExample]:
    report = load_finqa_report(path, config.extra_constants, config.cell_separator, config.row_terminator)
    if report.rejects:
        logger.warning("%d of %d examples rejected in %s", len(report.rejects), report.total, path)
    if rejects is not None:
        with _output(rejects) as f:
            write_jsonl(f, report.rejects)
    return report.examples


# ---------------------------------------------------------------- programs

@app.command("parse")
def parse_cmd(
    program: str = typer.Argument(..., help="Nested or flattened program."),
    form: str = typer.Option("flattened", "--form", help="flattened, nested or both."),
    constant: Optional[List[str]] = typer.Option(None, "--constant", help="Extra constant, const_x=value."),
) -> None:
    """Parse a program and print it in normalized form."""
    if form not in ("flattened", "nested", "both"):
        raise typer.BadParameter("expected flattened, nested or both", param_hint="--form")
    p = parse_program(program, _constants(constant))
    if form in ("flattened", "both"):
        typer.echo(render_program(p, "flattened"))
    if form in ("nested", "both"):
        typer.echo(render_program(p, "nested"))


@app.command("exec")
def exec_cmd(
    program: str = typer.Argument(..., help="Nested or flattened program."),
    table: Optional[Path] = typer.Option(None, "--table", help="JSON table for table operators."),
    trace: bool = typer.Option(False, "--trace", help="Print every step's value."),
    constant: Optional[List[str]] = typer.Option(None, "--constant"),
) -> None:
    """Execute a program and print its value."""
    p = parse_program(program, _constants(constant))
    ctx = TableContext.from_matrix(_read_table(table)) if table else None
    if trace:
        for i, (step, value) in enumerate(zip(p.steps, trace_program(p, ctx))):
            typer.echo(f"#{i} {render_program(Program((step,)), 'flattened')} = {value.render()}")
        return
    typer.echo(eval_program(p, ctx).render())


@app.command("equiv")
def equiv_cmd(
    a: str = typer.Argument(...),
    b: str = typer.Argument(...),
    keep_dead_steps: bool = typer.Option(False, "--keep-dead-steps", help="Compare unreferenced steps too."),
    constant: Optional[List[str]] = typer.Option(None, "--constant"),
) -> None:
    """Print whether two programs are mathematically equivalent."""
    constants = _constants(constant)
    same = prog_equal(parse_program(a, constants), parse_program(b, constants), not keep_dead_steps)
    typer.echo("equivalent" if same else "not equivalent")


@app.command("linearize")
def linearize_cmd(
    table: Path = typer.Argument(..., help="JSON table or FinQA record."),
    row: Optional[int] = typer.Option(None, "--row", help="Data row index (1-based; row 0 holds headers)."),
    cells: bool = typer.Option(False, "--cells", help="One sentence per cell instead of one per row."),
) -> None:
    """Turn table rows into evidence sentences."""
    config = _config()
    matrix = _read_table(table)
    rows = [row] if row is not None else range(1, len(matrix))
    for r in rows:
        if cells:
            for sentence in cell_sentences(matrix, r):
                typer.echo(sentence)
        else:
            typer.echo(linearize_row(matrix, r, config.cell_separator, config.row_terminator))


# ---------------------------------------------------------------- generation

def _gen(
    task: str,
    data: Path,
    out: Optional[Path],
    rejects: Optional[Path],
    progress: bool,
    **overrides: Any,
) -> None:
    config = _config(**overrides)
    examples = _load_examples(data, config, rejects)
    corpus = generate_corpus(examples, task, config, progress=progress)
    with _output(out) as f:
        write_corpus(corpus, f, config.provenance())


_DATA = typer.Argument(..., help="FinQA JSON file.")
_OUT = typer.Option(None, "--out", "-o", help="Output JSONL (stdout by default).")
_REJECTS = typer.Option(None, "--rejects", help="Write rejected examples here (JSONL).")
_SEED = typer.Option(None, "--seed")
_JOBS = typer.Option(None, "--jobs", help="Worker threads.")
_PROGRESS = typer.Option(False, "--progress", help="Show a progress bar.")
_TOL = typer.Option(None, "--tol", help="PageRank convergence tolerance.")
_MAX_ITER = typer.Option(None, "--max-iter", help="PageRank iteration cap.")


@gen_app.command("vir")
def gen_vir_cmd(
    data: Path = _DATA,
    k: Optional[int] = typer.Option(None, "--k", help="Gold items replaced (integrity levels)."),
    seed: Optional[int] = _SEED,
    jobs: Optional[int] = _JOBS,
    out: Optional[Path] = _OUT,
    rejects: Optional[Path] = _REJECTS,
    progress: bool = _PROGRESS,
) -> None:
    """Integrity-ranking pairs."""
    _gen("vir", data, out, rejects, progress, k=k, seed=seed, jobs=jobs)


@gen_app.command("noisy-vir")
def gen_noisy_vir_cmd(
    data: Path = _DATA,
    k: Optional[int] = typer.Option(None, "--k"),
    seed: Optional[int] = _SEED,
    jobs: Optional[int] = _JOBS,
    out: Optional[Path] = _OUT,
    rejects: Optional[Path] = _REJECTS,
    progress: bool = _PROGRESS,
) -> None:
    """Integrity-ranking pairs with one extra distractor in every set."""
    _gen("noisy-vir", data, out, rejects, progress, k=k, seed=seed, jobs=jobs, noisy_vir=True)


@gen_app.command("vop")
def gen_vop_cmd(
    data: Path = _DATA,
    seed: Optional[int] = _SEED,
    jobs: Optional[int] = _JOBS,
    out: Optional[Path] = _OUT,
    rejects: Optional[Path] = _REJECTS,
    progress: bool = _PROGRESS,
) -> None:
    """Operator-prediction examples."""
    _gen("vop", data, out, rejects, progress, seed=seed, jobs=jobs)


@gen_app.command("vkm")
def gen_vkm_cmd(
    data: Path = _DATA,
    window: Optional[int] = typer.Option(None, "--window"),
    damping: Optional[float] = typer.Option(None, "--damping"),
    tol: Optional[float] = _TOL,
    max_iter: Optional[int] = _MAX_ITER,
    seed: Optional[int] = _SEED,
    jobs: Optional[int] = _JOBS,
    out: Optional[Path] = _OUT,
    rejects: Optional[Path] = _REJECTS,
    progress: bool = _PROGRESS,
) -> None:
    """Keyphrase-masking examples."""
    _gen(
        "vkm", data, out, rejects, progress,
        window=window, damping=damping, tol=tol, max_iter=max_iter, seed=seed, jobs=jobs,
    )


@app.command("keyphrases")
def keyphrases_cmd(
    data: Path = _DATA,
    window: Optional[int] = typer.Option(None, "--window"),
    damping: Optional[float] = typer.Option(None, "--damping"),
    tol: Optional[float] = _TOL,
    max_iter: Optional[int] = _MAX_ITER,
    out: Optional[Path] = _OUT,
) -> None:
    """TextRank and header keyphrases of every example's question and gold evidence."""
    config = _config(window=window, damping=damping, tol=tol, max_iter=max_iter)
    stopwords = load_stopwords(config.stoplist_path)
    examples = sorted(_load_examples(data, config), key=lambda e: e.id)

    def record(ex: HybridExample) -> Dict[str, Any]:
        textrank = extract_textrank_keyphrases(
            ex.question, [g.sentence for g in ex.gold], config.window, stopwords,
            config.damping, config.tol, config.max_iter,
        )
        rows = [g.row_index for g in ex.gold if g.row_index is not None]
        header = extract_header_keyphrases(ex.raw_table, rows) if rows else []
        return {
            "id": ex.id,
            "textrank": [{"phrase": kp.surface, "frequency": kp.frequency, "score": kp.score} for kp in textrank],
            "header": [{"phrase": kp.surface, "frequency": kp.frequency} for kp in header],
        }

    with _output(out) as f:
        write_jsonl(f, (record(ex) for ex in examples), config.provenance())


# ---------------------------------------------------------------- evaluation

@app.command("eval")
def eval_cmd(
    data: Path = _DATA,
    predictions: Optional[Path] = typer.Option(None, "--predictions", help="JSONL of {id, program}."),
    retrieval: Optional[Path] = typer.Option(None, "--retrieval", help="JSONL of {id, scores}."),
    tol: Optional[float] = typer.Option(None, "--tol", help="Relative answer tolerance."),
    percent_equiv: bool = typer.Option(False, "--percent-equiv", help="Accept x vs x/100 answers."),
    keep_dead_steps: bool = typer.Option(False, "--keep-dead-steps"),
    report: Optional[Path] = typer.Option(None, "--report", help="Write the JSON report here."),
    as_json: bool = typer.Option(False, "--json", help="Print JSON instead of a table."),
) -> None:
    """Execution/program accuracy of predictions, or R@3/R@5 of retriever scores."""
    if predictions is None and retrieval is None:
        raise typer.BadParameter("give --predictions and/or --retrieval", param_hint="--predictions")
    config = _config(exe_tol=tol, percent_equiv=percent_equiv, eliminate_dead_steps=not keep_dead_steps)
    examples = _load_examples(data, config)
    payload: Dict[str, Any] = {"provenance": config.provenance()}
    tables: List[Table] = []

    if predictions is not None:
        predicted = {str(r.get("id")): str(r.get("program", "")) for r in read_jsonl(predictions)}
        result = score_predictions(
            predicted, examples, config.exe_tol, config.percent_equiv,
            config.eliminate_dead_steps, config.extra_constants,
        )
        payload.update(result.model_dump(exclude={"provenance"}))
        tables.append(report_table(result))

    if retrieval is not None:
        scores = score_retrieval(read_jsonl(retrieval), examples)
        payload["retrieval"] = scores
        tables.append(retrieval_table(scores))

    if report is not None:
        with _output(report) as f:
            f.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if as_json:
        typer.echo(json.dumps(payload, sort_keys=True))
    else:
        console = _console()
        for t in tables:
            console.print(t)


# ---------------------------------------------------------------- training

@app.command("train-demo")
def train_demo_cmd(
    data: Optional[Path] = typer.Argument(None, help="FinQA JSON file to generate corpora from."),
    vir: Optional[Path] = typer.Option(None, "--vir", help="Generated VIR JSONL."),
    vop: Optional[Path] = typer.Option(None, "--vop", help="Generated VOP JSONL."),
    vkm: Optional[Path] = typer.Option(None, "--vkm", help="Generated VKM JSONL."),
    tasks: Optional[str] = typer.Option(None, "--tasks", help="Comma-separated subset of vir,vop,vkm."),
    batch_size: Optional[int] = typer.Option(None, "--batch-size"),
    steps: Optional[int] = typer.Option(None, "--steps"),
    epochs: Optional[int] = typer.Option(None, "--epochs"),
    lr: Optional[float] = typer.Option(None, "--lr"),
    dim: Optional[int] = typer.Option(None, "--dim"),
    k: Optional[int] = typer.Option(None, "--k"),
    noisy_vir: bool = typer.Option(False, "--noisy-vir"),
    seed: Optional[int] = _SEED,
    metrics: Optional[Path] = typer.Option(None, "--metrics", help="Metrics CSV (stdout by default)."),
    checkpoint: Optional[Path] = typer.Option(None, "--checkpoint", help="Write a JSON checkpoint here."),
    plot: Optional[Path] = typer.Option(None, "--plot", help="Write a loss-curve image here."),
) -> None:
    """Train the reference model on the pretraining tasks."""
    config = _config(
        tasks=tasks.split(",") if tasks else None, batch_size=batch_size, steps=steps, epochs=epochs,
        lr=lr, dim=dim, k=k, noisy_vir=noisy_vir or None, seed=seed,
    )
    files = {t: p for t, p in (("vir", vir), ("vop", vop), ("vkm", vkm)) if p is not None}
    if data is None and not files:
        raise typer.BadParameter("give a FinQA file or --vir/--vop/--vkm corpora", param_hint="DATA")
    if files:
        corpora = load_task_corpora(files)
    else:
        corpora = build_task_corpora(_load_examples(data, config), config)

    result = train_multitask(
        corpora, config.batch_size, config.steps, config.lr, config.seed, config.dim, config.epochs, config.tasks,
    )
    with _output(metrics) as f:
        write_metrics_csv(result.log, f, config.provenance())
    if checkpoint is not None:
        save_checkpoint(checkpoint, result.encoder, result.heads, config.provenance())
    if plot is not None:
        plot_loss_curves(result.log, plot)

    summary = Table(title="Training-set accuracy")
    summary.add_column("task")
    summary.add_column("n", justify="right")
    summary.add_column("loss", justify="right")
    summary.add_column("accuracy", justify="right")
    for task, m in evaluate_tasks(result.encoder, result.heads, corpora, config.tasks).items():
        summary.add_row(task, str(m["n"]), f"{m['loss']:.4f}", f"{m['accuracy']:.4f}")
    Console(stderr=True).print(summary)


# ---------------------------------------------------------------- datasets

@app.command("validate-dataset")
def validate_dataset_cmd(
    files: List[Path] = typer.Argument(..., help="FinQA split files."),
    as_json: bool = typer.Option(False, "--json", help="Print JSON lines instead of a table."),
) -> None:
    """Split sizes, rejected records, and program / gold-evidence statistics."""
    config = _config()
    rows = []
    for path in files:
        report = load_finqa_report(path, config.extra_constants, config.cell_separator, config.row_terminator)
        stats = dataset_statistics(report.examples)
        rows.append({
            "split": Path(path).name,
            "records": report.total,
            "rejected": len(report.rejects),
            "gold_text_mismatches": report.gold_text_mismatches,
            **stats,
        })

    if as_json:
        for r in rows:
            typer.echo(dump_line(r))
        return
    table = Table(title="Datasets")
    for col in ("split", "records", "n", "rejected", "mean_operators", "max_operators", "mean_gold", "max_gold"):
        table.add_column(col, justify="left" if col == "split" else "right")
    for r in rows:
        table.add_row(
            r["split"], str(r["records"]), str(r["n"]), str(r["rejected"]),
            f"{r['mean_operators']:.2f}", str(r["max_operators"]),
            f"{r['mean_gold']:.2f}", str(r["max_gold"]),
        )
    _console().print(table)


# ---------------------------------------------------------------- entry point

def _typer_click_class(name: str) -> type:
    """Exception class ``name`` of the click typer raises, which may be its own bundled copy."""
    for cls in typer.BadParameter.__mro__:
        if cls.__name__ == name:
            return cls
    return getattr(click.exceptions, name)


_USAGE_ERRORS = (click.UsageError, _typer_click_class("UsageError"))
_ABORTS = (click.exceptions.Abort, typer.Abort)
_CLICK_ERRORS = (click.ClickException, _typer_click_class("ClickException"))


def main(argv: Optional[List[str]] = None) -> int:
    command = typer.main.get_command(app)
    try:
        result = command.main(args=argv, prog_name="finprog", standalone_mode=False)
    except _USAGE_ERRORS as e:
        e.show()
        return 1
    except _ABORTS:
        return 1
    except _CLICK_ERRORS as e:
        e.show()
        return 2
    except FinProgError as e:
        Console(stderr=True).print(f"[red]error:[/red] {type(e).__name__}: {escape(str(e))}", highlight=False)
        return 2
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(main())
