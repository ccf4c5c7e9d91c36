import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from reistokes.fields import CoefficientSpec, CoefficientTerm  # noqa: E402

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running numerical checks")
    config.addinivalue_line("markers", "acceptance: numbered acceptance criterion")


@pytest.fixture(scope="session")
def criterion():
    """record(number, passed, detail) collects one verdict per criterion."""
    def record(num, passed, detail=""):
        _criteria[num] = (bool(passed), detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_criteria):
        ok, detail = _criteria[num]
        tr.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


def two_scale_spec(mu=0.4):
    """delta (1 + 0.3 sin 2pi y1 sin 2pi z2 + 0.3 cos 2pi y2 cos 2pi z1)."""
    spec = CoefficientSpec(2, mu, [CoefficientTerm(1.0, (0, 0), (0, 0))])
    spec.add_product(0.3, (1, 0), "sin", (0, 1), "sin")
    spec.add_product(0.3, (0, 1), "cos", (1, 0), "cos")
    return spec


def anisotropic_z_spec():
    """Depends on z only; anisotropic with a symmetric off-diagonal coupling."""
    A = np.zeros((2, 2, 2, 2))
    A[0, 1, 1, 0] = A[1, 0, 0, 1] = 0.05
    spec = CoefficientSpec(2, 0.4, [CoefficientTerm(1.0, (0, 0), (0, 0)),
                                    CoefficientTerm(A, (0, 0), (1, 0), 0.3)])
    spec.add_product(0.3, (0, 0), "cos", (0, 1), "sin")
    spec.add_product(0.25, (0, 0), "cos", (1, 1), "cos")
    return spec


def y_only_spec():
    spec = CoefficientSpec(2, 0.4, [CoefficientTerm(1.0, (0, 0), (0, 0))])
    spec.add_product(0.3, (0, 1), "sin", (0, 0), "cos")
    spec.add_product(0.25, (1, 1), "cos", (0, 0), "cos")
    return spec


def torus_forcing():
    from reistokes.finesolve import ModeTerm
    h = np.pi / 2
    return [ModeTerm(0, (0, 1), 1.0, -h), ModeTerm(0, (1, 1), 0.5),
            ModeTerm(1, (1, 0), 1.0, -h), ModeTerm(1, (1, -1), 0.3, 0.2)]
