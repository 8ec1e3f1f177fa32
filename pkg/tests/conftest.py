import numpy as np
import pytest

from poronl.assembly import ElementData, assemble_forms
from poronl.fe_basis import build_dof_layout, make_quadrature
from poronl.mesh import build_unit_square_mesh
from poronl.mms import example41, example42


class Discretization:
    def __init__(self, n: int, exact):
        self.n = n
        self.mesh = build_unit_square_mesh(n)
        self.layout = build_dof_layout(self.mesh)
        self.exact = exact
        self.params = exact.params
        self.elem = ElementData(self.mesh, self.layout, make_quadrature(5))
        self.forms = assemble_forms(self.mesh, self.layout, self.params, self.elem.quad, self.elem)


@pytest.fixture(scope="session")
def disc4():
    return Discretization(4, example41())


@pytest.fixture(scope="session")
def disc8():
    return Discretization(8, example41())


@pytest.fixture(scope="session")
def disc8_ex42():
    return Discretization(8, example42())


@pytest.fixture
def rng():
    return np.random.default_rng(20251020)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, list[tuple[bool, str]]] = {}


def report_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.setdefault(number, []).append((bool(ok), detail))
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        parts = ACCEPTANCE_LINES[number]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}")
