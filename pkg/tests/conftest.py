import importlib.resources as resources
import time

import numpy as np
import pytest

from vleminer import Dataset, aggregate_weekly, default_spec, generate, label_outcomes
from vleminer.ingest import AssessmentRecord, ClickRecord, PresentationConfig

DATA = resources.files("vleminer") / "data"
FIXTURE_CLICKS = DATA / "fixture40_clicks.csv"
FIXTURE_ASSESSMENTS = DATA / "fixture40_assessments.csv"


@pytest.fixture(scope="session")
def fixture40():
    return Dataset.load(FIXTURE_CLICKS, FIXTURE_ASSESSMENTS)


@pytest.fixture(scope="session")
def fixture40_features(fixture40):
    return aggregate_weekly(fixture40), label_outcomes(fixture40)


@pytest.fixture(scope="session")
def small_cohort():
    return generate(default_spec(n_students=1500, seed=11))


TIMINGS = {}


@pytest.fixture(scope="session")
def default_cohort():
    """The seed-7, 10,000-student default cohort, shared by slow checks."""
    start = time.perf_counter()
    cohort = generate(default_spec(n_students=10_000, seed=7))
    TIMINGS["default_cohort"] = time.perf_counter() - start
    return cohort


@pytest.fixture(scope="session")
def default_features(default_cohort):
    return aggregate_weekly(default_cohort.dataset), label_outcomes(default_cohort.dataset)


def random_dataset(seed, n_students=None, config=None):
    """Small random dataset with duplicates, pre-course days and late days."""
    rng = np.random.default_rng(seed)
    config = config or PresentationConfig()
    vocab = config.content_vocabulary
    n = int(n_students or rng.integers(1, 60))
    ids = [f"r{i:03d}" for i in range(n)]
    clicks = []
    for sid in ids:
        for _ in range(int(rng.integers(0, 15))):
            clicks.append(ClickRecord(sid, int(rng.integers(-20, 60)), vocab[int(rng.integers(len(vocab)))],
                                      int(rng.integers(0, 40))))
    assessments = []
    for sid in ids:
        u = rng.random()
        if u < 0.3:
            assessments.append(AssessmentRecord(sid, 1, False))
        elif u < 0.9:
            assessments.append(AssessmentRecord(sid, 1, True, int(rng.integers(0, 101))))
    return Dataset.from_records(clicks, assessments, config, roster=ids)


# acceptance criteria report: tests marked @pytest.mark.criterion(n, title)
_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    ok = _CRITERIA.get(number, (title, True, ""))[1]
    if report.failed:
        ok = False
    detail = getattr(item, "criterion_detail", "")
    if report.when == "call" or report.failed:
        _CRITERIA[number] = (title, ok, detail)


@pytest.fixture
def criterion_detail(request):
    """Call with a short measurement string to show it on the criterion line."""
    def note(text):
        request.node.criterion_detail = text
    return note


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[number]
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
