import pytest

from hirefair.corpus import (
    DemographicGroup,
    JobPost,
    NamePool,
    Resume,
    load_name_pools,
)

FIXTURE_DIR_NAME = "data/fixtures"


@pytest.fixture(scope="session")
def pools():
    return load_name_pools()


@pytest.fixture(scope="session")
def fixtures_dir():
    from pathlib import Path

    import hirefair

    return Path(hirefair.__file__).parent / "data" / "fixtures"


@pytest.fixture
def unnamed_resume():
    return Resume(
        id="r1",
        profession="Data Analyst",
        body="Data Analyst\nSummary\nBuilds dashboards and forecasts.\nSkills\nSQL, Python\n",
        source="generated",
    )


@pytest.fixture
def job_post():
    return JobPost(id="j1", occupation="Data Analyst",
                   body="Data Analyst\nOwn the reporting stack.\n")


def make_pool(code: str, names_freqs: dict[str, int]) -> NamePool:
    return NamePool(
        group=DemographicGroup.from_code(code),
        names=tuple(names_freqs),
        frequencies=dict(names_freqs),
    )


@pytest.fixture
def tiny_pools():
    """Two-group pool set with hand-picked frequencies for binning tests."""
    return {
        "MW": make_pool("MW", {"Arlo": 1, "Bram": 2, "Cato": 100, "Dov": 200}),
        "FW": make_pool("FW", {"Wren": 1, "Xia": 2, "Yuna": 100, "Zola": 200}),
        "MB": make_pool("MB", {"Kofi": 1, "Lumo": 2, "Nuru": 100, "Okal": 200}),
        "FB": make_pool("FB", {"Pema": 1, "Qiana": 2, "Runa": 100, "Sela": 200}),
    }
