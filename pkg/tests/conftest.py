import numpy as np
import pytest

from onsetml.dataset import ExperimentRecord, ExperimentTable, Layout, Soil, synth_generate

TD_PRINTED = (11.3, -0.46, 0.025, 0.025)
TE_PRINTED = (-15.2, -90.7, -5.2, 2.9)
LR_PRINTED = (-2.38, -2.39, 0.53, 4.13)


def make_record(layout=Layout.H_TOP, soil=Soil.FINE, d50=0.2, wev=2.0, slope=20.0, ri=18.0, td=10.0, te=100.0, failure=0):
    top = Layout(layout) is Layout.H_TOP
    return ExperimentRecord(
        layout=Layout(layout),
        soil=Soil(soil),
        d50=d50,
        d10=d50 / 1.35,
        cc=1.0,
        cu=1.5,
        contact_angle=120.0,
        friction_angle=32.0,
        wev=wev,
        slope=slope,
        rain_intensity=ri,
        td=td if top else None,
        te=te if top else None,
        erosion_intervals=(te / 60,) * 6 if top else None,
        discharge_intervals=(td / 60,) * 6 if top else None,
        failure=None if top else failure,
    )


@pytest.fixture(scope="session")
def synth_table() -> ExperimentTable:
    return synth_generate(seed=42)


@pytest.fixture(scope="session")
def hsub_table(synth_table) -> ExperimentTable:
    return synth_table.select_layout(Layout.H_SUB)


@pytest.fixture(scope="session")
def htop_table(synth_table) -> ExperimentTable:
    return synth_table.select_layout(Layout.H_TOP)


def planted_correlation(n, rho, seed):
    """Two columns with sample correlation exactly ``rho``."""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=n)
    e = rng.normal(size=n)
    a = (a - a.mean()) / a.std()
    e = e - e.mean()
    e = e - (e @ a) / (a @ a) * a
    e = e / e.std()
    return a, rho * a + np.sqrt(1 - rho**2) * e


def pytest_terminal_summary(terminalreporter):
    lines = [
        value
        for outcome in ("passed", "failed")
        for report in terminalreporter.stats.get(outcome, [])
        if report.when == "call"
        for key, value in report.user_properties
        if key == "criterion"
    ]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
