"""User-profile feature collaborative filtering on MovieLens 100k."""

__version__ = "0.1.0"

GENRE_COUNT = 19
