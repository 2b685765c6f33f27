from typing import Any, Dict, List, Literal, Optional

from dotenv import load_dotenv
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from finprog.config import load_config
from finprog.corpus import cell_sentences, linearize_row
from finprog.dsl_core import Program, parse_program, render_program
from finprog.equivalence import canonicalize
from finprog.errors import FinProgError, NestedFormUnavailable
from finprog.executor import TableContext, YesNo, trace_program
from finprog.keyphrase import extract_header_keyphrases, extract_textrank_keyphrases, load_stopwords
from finprog.log import configure_logging

load_dotenv()
configure_logging()
config = load_config()

app = FastAPI(title="finprog")

# tooling (notebooks, annotation UIs) calls this from the browser
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(FinProgError)
async def finprog_error_handler(request: Request, exc: FinProgError) -> JSONResponse:
    body: Dict[str, Any] = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("token", "offset"):
        if hasattr(exc, attr):
            body[attr] = getattr(exc, attr)
    return JSONResponse(status_code=422, content=body)


class ParseRequest(BaseModel):
    program: str
    form: Literal["nested", "flattened", "both"] = "both"


class ExecuteRequest(BaseModel):
    program: str
    table: Optional[List[List[str]]] = None


class EquivalenceRequest(BaseModel):
    a: str
    b: str
    eliminate_dead_steps: bool = True


class LinearizeRequest(BaseModel):
    table: List[List[str]]
    row: Optional[int] = None


class KeyphraseRequest(BaseModel):
    question: str
    evidence: List[str] = []
    table: Optional[List[List[str]]] = None
    window: Optional[int] = None


@app.post("/parse")
def parse(req: ParseRequest) -> Dict[str, Any]:
    p = parse_program(req.program, config.extra_constants)
    nested: Optional[str] = None
    if req.form == "nested":
        nested = render_program(p, "nested")
    elif req.form == "both":
        try:
            nested = render_program(p, "nested")
        except NestedFormUnavailable:
            pass
    return {
        "steps": [{"op": s.op.value, "text": render_program(Program((s,)), "flattened")} for s in p.steps],
        "nested": nested,
        "flattened": render_program(p, "flattened"),
        "warnings": p.warnings(),
    }


@app.post("/execute")
def execute(req: ExecuteRequest) -> Dict[str, Any]:
    p = parse_program(req.program, config.extra_constants)
    ctx = TableContext.from_matrix(req.table) if req.table else None
    trace = trace_program(p, ctx)
    value = trace[-1]
    return {
        "value": value.value,
        "kind": "yesno" if isinstance(value, YesNo) else "number",
        "trace": [v.render() for v in trace],
    }


@app.post("/equivalence")
def equivalence(req: EquivalenceRequest) -> Dict[str, Any]:
    ca = canonicalize(parse_program(req.a, config.extra_constants), req.eliminate_dead_steps)
    cb = canonicalize(parse_program(req.b, config.extra_constants), req.eliminate_dead_steps)
    return {
        "equivalent": ca == cb,
        "canonical_a": render_program(ca.to_program(), "flattened"),
        "canonical_b": render_program(cb.to_program(), "flattened"),
    }


@app.post("/linearize")
def linearize(req: LinearizeRequest) -> Dict[str, Any]:
    if req.row is not None:
        return {"sentences": cell_sentences(req.table, req.row)}
    rows = range(1, len(req.table))
    return {"sentences": [linearize_row(req.table, r, config.cell_separator, config.row_terminator) for r in rows]}


@app.post("/keyphrases")
def keyphrases(req: KeyphraseRequest) -> Dict[str, Any]:
    window = req.window or config.window
    textrank = extract_textrank_keyphrases(
        req.question, req.evidence, window, load_stopwords(config.stoplist_path),
        config.damping, config.tol, config.max_iter,
    )
    header = extract_header_keyphrases(req.table) if req.table else []
    return {
        "textrank": [{"phrase": kp.surface, "frequency": kp.frequency, "score": kp.score} for kp in textrank],
        "header": [{"phrase": kp.surface, "frequency": kp.frequency} for kp in header],
    }
