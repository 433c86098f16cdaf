"""Parsers and integrity checks for the MovieLens 100k raw files.

All files are decoded as Latin-1; titles in ``u.item`` carry bytes that are not
valid UTF-8.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from profilecf import GENRE_COUNT

ENCODING = "latin-1"
MIN_RATING, MAX_RATING = 1, 5
SPLIT_NAMES = ("u1", "u2", "u3", "u4", "u5", "ua", "ub")


class IngestError(ValueError):
    pass


class ParseError(IngestError):
    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(prefix + message)


class ValidationError(ParseError):
    pass


class IntegrityError(IngestError):
    pass


@dataclass(frozen=True, slots=True)
class RatingEvent:
    user_id: int
    item_id: int
    rating: int
    timestamp: int


@dataclass(frozen=True, slots=True)
class Movie:
    item_id: int
    title: str
    release_date: dt.date | None
    genre_flags: tuple[bool, ...]
    video_release_date: str = ""
    url: str = ""

    @property
    def genre_indices(self) -> tuple[int, ...]:
        return tuple(g for g, flag in enumerate(self.genre_flags) if flag)


@dataclass(frozen=True, slots=True)
class UserDemographics:
    user_id: int
    age: int
    gender: str
    occupation: str
    zip_code: str


@dataclass(frozen=True)
class Dataset:
    """Integrity-checked, canonically ordered view of the three record kinds.

    Users and movies are sorted by id, ratings by (user_id, item_id), so two
    datasets built from permuted inputs compare equal.
    """

    users: tuple[UserDemographics, ...]
    movies: tuple[Movie, ...]
    ratings: tuple[RatingEvent, ...]
    genre_names: tuple[str, ...]

    @property
    def user_ids(self) -> list[int]:
        return [u.user_id for u in self.users]

    @property
    def item_ids(self) -> list[int]:
        return [m.item_id for m in self.movies]

    def movie_index(self) -> dict[int, Movie]:
        return {m.item_id: m for m in self.movies}

    def user_index(self) -> dict[int, UserDemographics]:
        return {u.user_id: u for u in self.users}

    def with_ratings(self, ratings: Iterable[RatingEvent]) -> "Dataset":
        return assemble_dataset(self.users, self.movies, ratings, self.genre_names)


def _lines(source: str | Iterable[str]) -> Iterable[tuple[int, str]]:
    if isinstance(source, str):
        source = source.splitlines()
    for line_no, line in enumerate(source, start=1):
        line = line.rstrip("\r\n")
        if line.strip():
            yield line_no, line


def _int(token: str, line_no: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"{what} {token!r} is not an integer", line_no) from None


def read_text(path: str | Path) -> str:
    return Path(path).read_bytes().decode(ENCODING)


def parse_ratings(source: str | Iterable[str]) -> list[RatingEvent]:
    """Parse ``u.data``-format text: ``user<TAB>item<TAB>rating<TAB>timestamp``."""
    events = []
    for line_no, line in _lines(source):
        fields = line.split("\t")
        if len(fields) != 4:
            raise ParseError(f"expected 4 tab-separated fields, got {len(fields)}", line_no)
        user_id, item_id, rating, timestamp = (
            _int(tok, line_no, name)
            for tok, name in zip(fields, ("user id", "item id", "rating", "timestamp"))
        )
        if user_id < 1 or item_id < 1:
            raise ValidationError("ids must be positive", line_no)
        if not MIN_RATING <= rating <= MAX_RATING:
            raise ValidationError(f"rating {rating} outside [{MIN_RATING}, {MAX_RATING}]", line_no)
        events.append(RatingEvent(user_id, item_id, rating, timestamp))
    return events


def _parse_date(token: str, line_no: int) -> dt.date | None:
    if not token:
        return None
    try:
        return dt.datetime.strptime(token, "%d-%b-%Y").date()
    except ValueError:
        raise ParseError(f"bad release date {token!r}", line_no) from None


def parse_movies(source: str | Iterable[str], genre_count: int = GENRE_COUNT) -> list[Movie]:
    """Parse ``u.item``: ``id|title|release|video release|url|flag*genre_count``."""
    movies = []
    expected = 5 + genre_count
    for line_no, line in _lines(source):
        fields = line.split("|")
        if len(fields) != expected:
            raise ParseError(f"expected {expected} pipe-separated fields, got {len(fields)}", line_no)
        item_id = _int(fields[0], line_no, "item id")
        if item_id < 1:
            raise ValidationError("item id must be positive", line_no)
        flag_tokens = fields[5:]
        bad = [t for t in flag_tokens if t not in ("0", "1")]
        if bad:
            raise ValidationError(f"genre flag {bad[0]!r} is not 0/1", line_no)
        movies.append(
            Movie(
                item_id=item_id,
                title=fields[1],
                release_date=_parse_date(fields[2], line_no),
                genre_flags=tuple(t == "1" for t in flag_tokens),
                video_release_date=fields[3],
                url=fields[4],
            )
        )
    return movies


def parse_users(source: str | Iterable[str]) -> list[UserDemographics]:
    """Parse ``u.user``: ``id|age|gender|occupation|zip``."""
    users = []
    for line_no, line in _lines(source):
        fields = line.split("|")
        if len(fields) != 5:
            raise ParseError(f"expected 5 pipe-separated fields, got {len(fields)}", line_no)
        user_id = _int(fields[0], line_no, "user id")
        age = _int(fields[1], line_no, "age")
        if user_id < 1:
            raise ValidationError("user id must be positive", line_no)
        if age <= 0:
            raise ValidationError(f"age {age} must be positive", line_no)
        gender = fields[2]
        if len(gender) != 1:
            raise ValidationError(f"gender {gender!r} must be a single character", line_no)
        users.append(UserDemographics(user_id, age, gender, fields[3], fields[4]))
    return users


def parse_genres(source: str | Iterable[str]) -> list[str]:
    """Parse ``u.genre`` (``name|index``) into names ordered by index."""
    by_index = {}
    for line_no, line in _lines(source):
        fields = line.split("|")
        if len(fields) != 2:
            raise ParseError(f"expected 2 pipe-separated fields, got {len(fields)}", line_no)
        index = _int(fields[1], line_no, "genre index")
        if index in by_index:
            raise ValidationError(f"duplicate genre index {index}", line_no)
        by_index[index] = fields[0]
    if sorted(by_index) != list(range(len(by_index))):
        raise ValidationError("genre indices are not contiguous from 0")
    return [by_index[i] for i in range(len(by_index))]


def assemble_dataset(
    users: Iterable[UserDemographics],
    movies: Iterable[Movie],
    ratings: Iterable[RatingEvent],
    genre_names: Sequence[str],
) -> Dataset:
    users = sorted(users, key=lambda u: u.user_id)
    movies = sorted(movies, key=lambda m: m.item_id)
    ratings = sorted(ratings, key=lambda r: (r.user_id, r.item_id))
    genre_names = tuple(genre_names)

    user_ids = {u.user_id for u in users}
    if len(user_ids) != len(users):
        raise IntegrityError("duplicate user ids")
    item_ids = {m.item_id for m in movies}
    if len(item_ids) != len(movies):
        raise IntegrityError("duplicate item ids")
    for movie in movies:
        if len(movie.genre_flags) != len(genre_names):
            raise IntegrityError(
                f"movie {movie.item_id} has {len(movie.genre_flags)} genre flags, "
                f"expected {len(genre_names)}"
            )

    previous = None
    for r in ratings:
        if r.user_id not in user_ids:
            raise IntegrityError(f"rating {r} references unknown user {r.user_id}")
        if r.item_id not in item_ids:
            raise IntegrityError(f"rating {r} references unknown item {r.item_id}")
        key = (r.user_id, r.item_id)
        if key == previous:
            raise IntegrityError(f"duplicate rating for user {r.user_id}, item {r.item_id}")
        previous = key

    return Dataset(tuple(users), tuple(movies), tuple(ratings), genre_names)


def _require(path: Path) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"missing dataset file: {path}")
    return path


def load_dataset(data_dir: str | Path) -> Dataset:
    data_dir = Path(data_dir)
    genre_names = parse_genres(read_text(_require(data_dir / "u.genre")))
    movies = parse_movies(read_text(_require(data_dir / "u.item")), len(genre_names))
    users = parse_users(read_text(_require(data_dir / "u.user")))
    ratings = parse_ratings(read_text(_require(data_dir / "u.data")))
    return assemble_dataset(users, movies, ratings, genre_names)


def load_split_files(data_dir: str | Path, fold: str) -> tuple[list[RatingEvent], list[RatingEvent]]:
    """Read ``<fold>.base`` / ``<fold>.test`` without any cross-checking."""
    if fold not in SPLIT_NAMES:
        raise ValueError(f"unknown official split {fold!r}; expected one of {SPLIT_NAMES}")
    data_dir = Path(data_dir)
    train = parse_ratings(read_text(_require(data_dir / f"{fold}.base")))
    test = parse_ratings(read_text(_require(data_dir / f"{fold}.test")))
    return train, test


def format_ratings(ratings: Iterable[RatingEvent]) -> str:
    return "".join(f"{r.user_id}\t{r.item_id}\t{r.rating}\t{r.timestamp}\n" for r in ratings)


def format_movies(movies: Iterable[Movie]) -> str:
    lines = []
    for m in movies:
        date = m.release_date.strftime("%d-%b-%Y") if m.release_date else ""
        flags = "|".join("1" if f else "0" for f in m.genre_flags)
        lines.append(f"{m.item_id}|{m.title}|{date}|{m.video_release_date}|{m.url}|{flags}\n")
    return "".join(lines)


def format_users(users: Iterable[UserDemographics]) -> str:
    return "".join(
        f"{u.user_id}|{u.age}|{u.gender}|{u.occupation}|{u.zip_code}\n" for u in users
    )


def format_genres(genre_names: Sequence[str]) -> str:
    return "".join(f"{name}|{i}\n" for i, name in enumerate(genre_names))


def write_dataset(dataset: Dataset, data_dir: str | Path) -> None:
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    files = {
        "u.data": format_ratings(dataset.ratings),
        "u.item": format_movies(dataset.movies),
        "u.user": format_users(dataset.users),
        "u.genre": format_genres(dataset.genre_names),
    }
    for name, text in files.items():
        (data_dir / name).write_bytes(text.encode(ENCODING))
