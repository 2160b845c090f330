import pathlib
import sys
from dataclasses import dataclass

import numpy as np
import pytest

from smoothppl import syntax as S
from smoothppl.checker import TypeCheckError, check_program
from smoothppl.types import show_trace, show_type

CORPUS_DIR = pathlib.Path(__file__).parent / "corpus"
SYSTEMS = ("basic", "poly", "sgd", "unif")


@dataclass
class Entry:
    name: str
    text: str
    program: S.Program
    theta: np.ndarray


def _theta(text):
    first = text.splitlines()[0]
    assert first.startswith("; theta:")
    vals = first.split(":", 1)[1].strip()
    return np.array([float(v) for v in vals.split(",")] if vals else [], dtype=float)


def load_corpus():
    out = []
    for path in sorted(CORPUS_DIR.glob("*.ppl")):
        text = path.read_text()
        out.append(Entry(path.stem, text, S.parse_program(text), _theta(text)))
    return out


CORPUS = load_corpus()


def judgment(p, system):
    """One golden line: the trace type and type, or the rejecting rule."""
    try:
        tr, ty = check_program(p, system)
    except TypeCheckError as e:
        return f"{system}: rejected {e}"
    return f"{system}: {show_trace(tr)} {show_type(ty)}"


def random_traces(p, n, seed):
    from smoothppl.estimators import draw_traces
    return draw_traces(p, n, np.random.default_rng(seed))


@pytest.fixture(params=CORPUS, ids=lambda e: e.name)
def entry(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
