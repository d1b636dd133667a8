import numpy as np
import pytest

from exitwell import build_curve, build_expansion, build_potential


def radial_setup(grid_size: int = 256):
    curve = build_curve({"kind": "circle", "radius": 1.0, "grid_size": grid_size})
    pot = build_potential({"kind": "radial_power", "k": 2, "scale": 0.5})
    return curve, pot


def anisotropic_setup(grid_size: int = 256):
    curve = build_curve({"kind": "circle", "radius": 1.0, "grid_size": grid_size})
    pot = build_potential({"kind": "quadratic_form", "matrix": [[1.0, 0.0], [0.0, 2.0]]})
    return curve, pot


@pytest.fixture(scope="session")
def radial():
    curve, pot = radial_setup()
    return build_expansion(curve, pot, order=4)


@pytest.fixture(scope="session")
def anisotropic():
    curve, pot = anisotropic_setup()
    return build_expansion(curve, pot, order=4)


@pytest.fixture(scope="session")
def ellipse_exp():
    curve = build_curve({"kind": "ellipse", "a": 1.3, "b": 1.0, "grid_size": 256})
    pot = build_potential({"kind": "quadratic_form", "matrix": [[1.0, 0.0], [0.0, 1.0]]})
    return build_expansion(curve, pot, order=3)


def circle_angle(curve):
    return np.arctan2(curve.samples[:, 1], curve.samples[:, 0])


ACCEPTANCE: list[tuple[str, str, bool, str]] = []


@pytest.fixture
def record():
    """Record one acceptance line: (criterion, check, passed, detail)."""
    def _record(criterion: str, check: str, passed: bool, detail: str = "") -> bool:
        ACCEPTANCE.append((criterion, check, bool(passed), detail))
        return bool(passed)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit, check, ok, detail in ACCEPTANCE:
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {crit}: {check}"
                      + (f" | {detail}" if detail else ""))
    by_crit: dict[str, bool] = {}
    for crit, _, ok, _ in ACCEPTANCE:
        by_crit[crit] = by_crit.get(crit, True) and ok
    tr.write_line("overall: " + ", ".join(f"{c}={'PASS' if ok else 'FAIL'}"
                                          for c, ok in by_crit.items()))
