import numpy as np
import pytest

from fedref.data import gen_synthetic
from fedref.learner import ModelKind, ModelSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def blobs():
    return gen_synthetic(classes=3, per_class=40, input_dim=4, separation=4.0, seed=3)


@pytest.fixture(params=[ModelKind.LOGISTIC, ModelKind.MLP], ids=["logistic", "mlp"])
def spec(request):
    return ModelSpec(request.param, input_dim=4, num_classes=3, hidden_dim=5, init_scale=0.5, init_seed=11)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record a PASS/FAIL line for an acceptance criterion when the test finishes."""
    info = {}

    def describe(label, detail=""):
        info["label"], info["detail"] = label, detail

    yield describe
    rep = getattr(request.node, "rep_call", None)
    status = "PASS" if rep is not None and rep.passed else "FAIL"
    _ACCEPTANCE_LINES.append(f"[{status}] {info.get('label', request.node.name)} {info.get('detail', '')}".rstrip())


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
