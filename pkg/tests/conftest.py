import os
from pathlib import Path

import pytest

from profilecf.ingest import (
    Movie,
    RatingEvent,
    UserDemographics,
    assemble_dataset,
    load_dataset,
)

REPO = Path(__file__).resolve().parents[1]
DATA_DIR = Path(os.environ.get("PROFILECF_DATA", REPO / "data" / "ml-100k"))

GENRES = (
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
    "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
    "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
)
G = {name: k for k, name in enumerate(GENRES)}


def flags(*names):
    return tuple(k in {G[n] for n in names} for k in range(len(GENRES)))


def movie(item_id, *genres):
    return Movie(item_id, f"Movie {item_id}", None, flags(*genres))


@pytest.fixture(scope="session")
def data_dir():
    if not (DATA_DIR / "u.data").is_file():
        pytest.fail(
            f"MovieLens 100k not found at {DATA_DIR}; run scripts/rebuild_ml100k.py "
            "or set PROFILECF_DATA"
        )
    return DATA_DIR


@pytest.fixture(scope="session")
def ml100k(data_dir):
    return load_dataset(data_dir)


@pytest.fixture
def toy_dataset():
    """Three users, four movies, a handful of ratings."""
    users = [
        UserDemographics(1, 30, "F", "student", "00001"),
        UserDemographics(2, 45, "M", "engineer", "00002"),
        UserDemographics(3, 22, "F", "student", "00003"),
    ]
    movies = [
        movie(1, "Action", "Comedy", "Drama", "Romance"),
        movie(2, "Action", "Thriller", "Romance"),
        movie(3, "Drama"),
        movie(4, "Animation"),
    ]
    ratings = [
        RatingEvent(1, 1, 4, 0),
        RatingEvent(1, 2, 2, 1),
        RatingEvent(1, 3, 5, 2),
        RatingEvent(2, 1, 3, 3),
        RatingEvent(2, 3, 4, 4),
        RatingEvent(2, 4, 1, 5),
        RatingEvent(3, 2, 5, 6),
        RatingEvent(3, 4, 2, 7),
    ]
    return assemble_dataset(users, movies, ratings, GENRES)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    details: list[str] = []
    yield details.append
    failed = request.node.rep_call.failed if hasattr(request.node, "rep_call") else True
    status = "FAIL" if failed else "PASS"
    ACCEPTANCE_LINES.append(f"{status}  {request.node.name}  {'; '.join(details)}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call":
        item.rep_call = report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
