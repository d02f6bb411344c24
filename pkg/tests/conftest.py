from __future__ import annotations

import pytest

from modelforge import demo, template
from modelforge.clock import VirtualClock
from modelforge.platform import Platform, PlatformConfig

_ACCEPTANCE_RESULTS: list[tuple[str, bool]] = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE_RESULTS.append((name, report.passed))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for name, passed in _ACCEPTANCE_RESULTS:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"  [{status}] {name}")


@pytest.fixture
def corpus():
    return demo.generate_corpus(seed=17, n_rows=500, n_codes=40)


@pytest.fixture
def corpus_csv(tmp_path, corpus):
    return demo.write_corpus_csv(tmp_path / "work_orders.csv", corpus)


@pytest.fixture
def fcr_project(tmp_path):
    return demo.write_fcr_template(tmp_path / "tpl-fcr")


@pytest.fixture
def similarity_project(tmp_path):
    return demo.write_similarity_template(tmp_path / "tpl-similarity")


@pytest.fixture
def approval_project(tmp_path):
    return demo.write_approval_template(tmp_path / "tpl-approval")


@pytest.fixture
def vclock():
    return VirtualClock(demo.ANCHOR_EPOCH)


@pytest.fixture
def platform_factory(tmp_path):
    """Builds platforms on virtual clocks; closes them at teardown."""
    created = []

    def build(name: str = "data", clock=None, **overrides) -> Platform:
        cfg = PlatformConfig(data_dir=str(tmp_path / name), **overrides)
        p = Platform(cfg, clock=clock or VirtualClock(demo.ANCHOR_EPOCH))
        created.append(p)
        return p

    yield build
    for p in created:
        p.close()


@pytest.fixture
def platform(platform_factory):
    return platform_factory()


def publish_demo(platform: Platform, project_dir) -> None:
    platform.publish_template(template.package(project_dir))


@pytest.fixture
def served_fcr(platform, fcr_project, corpus_csv):
    """A trained, approved, serving FCR model; returns (platform, model_id)."""
    publish_demo(platform, fcr_project)
    inst = platform.instantiate_model("fcr", None, demo.demo_config("fcr", corpus_csv))
    platform.train_model(inst.model_id)
    assert platform.run_until_idle(timeout=120)
    platform.approve_model(inst.model_id)
    return platform, inst.model_id
