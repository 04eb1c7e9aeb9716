"""
Ratings ingestion (MovieLens formats), synthetic ratings and per-agent batching.
"""
import csv
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.errors import ValidationError

logger = logging.getLogger(__name__)

MIN_RATING = 0.5
MAX_RATING = 5.0


@dataclass(frozen=True)
class RatingsTable:
    """All ratings of a source, with movies re-indexed 0..d-1."""
    ratings: Dict[Tuple[int, int], float]
    users: Tuple[int, ...]
    movie_ids: Tuple[int, ...]

    @property
    def d(self) -> int:
        return len(self.movie_ids)


@dataclass(frozen=True)
class RatingsBatch:
    """Ratings of a group of users; movies are indices into the global vocabulary of size d."""
    ratings: Dict[Tuple[int, int], float]
    users: Tuple[int, ...]
    d: int

    def __post_init__(self):
        user_set = set(self.users)
        for (user, movie), value in self.ratings.items():
            if user not in user_set:
                raise ValidationError(f"Rating for user {user} outside the batch")
            if not 0 <= movie < self.d:
                raise ValidationError(f"Movie index {movie} outside [0, {self.d})")

    def matrix(self) -> np.ndarray:
        """Users x movies matrix with 0 for missing ratings."""
        row = {u: i for i, u in enumerate(self.users)}
        out = np.zeros((len(self.users), self.d))
        for (user, movie), value in self.ratings.items():
            out[row[user], movie] = value
        return out


def _parse_line(fields: Sequence[str], line_no: int, path: str) -> Tuple[int, int, float]:
    if len(fields) < 3:
        raise ValidationError(f"{path}:{line_no}: expected UserID, MovieID, Rating[, Timestamp]")
    try:
        user, movie, rating = int(fields[0]), int(fields[1]), float(fields[2])
    except ValueError:
        raise ValidationError(f"{path}:{line_no}: malformed rating line {fields!r}")
    if not MIN_RATING <= rating <= MAX_RATING:
        raise ValidationError(f"{path}:{line_no}: rating {rating} outside [{MIN_RATING}, {MAX_RATING}]")
    return user, movie, rating


def read_ratings_file(path: str) -> List[Tuple[int, int, float]]:
    """Parse 'UserID::MovieID::Rating::Timestamp' lines or a userId,movieId,rating,timestamp CSV."""
    source = Path(path)
    if not source.is_file():
        raise ValidationError(f"Ratings file not found: {path}")
    records = []
    with source.open(encoding="utf-8", newline="") as handle:
        first = handle.readline()
        if "::" in first:
            lines = [(1, first)] + list(enumerate(handle, start=2))
            for line_no, line in lines:
                line = line.strip()
                if line:
                    records.append(_parse_line(line.split("::"), line_no, path))
        else:
            header = [h.strip().lower() for h in next(csv.reader([first]))]
            if header[:3] != ["userid", "movieid", "rating"]:
                raise ValidationError(f"{path}:1: unrecognized header {header}")
            for line_no, fields in enumerate(csv.reader(handle), start=2):
                if fields:
                    records.append(_parse_line(fields, line_no, path))
    logger.info("Read %d ratings from %s", len(records), path)
    return records


def build_table(records: Sequence[Tuple[int, int, float]], d: Optional[int] = None) -> RatingsTable:
    """Index movies (top-d by rating count when d is given) and keep their ratings."""
    counts = Counter(movie for _, movie, _ in records)
    movies = sorted(counts)
    if d is not None and d < len(movies):
        movies = sorted(sorted(counts, key=lambda m: (-counts[m], m))[:d])
    index = {m: j for j, m in enumerate(movies)}
    ratings = {}
    for user, movie, rating in records:
        if movie in index:
            ratings[(user, index[movie])] = rating
    users = tuple(sorted({user for user, _, _ in records}))
    return RatingsTable(ratings=ratings, users=users, movie_ids=tuple(movies))


def synthetic_table(n_users: int, d: int, density: float = 0.3, seed: int = 0) -> RatingsTable:
    """Random integer ratings in [1, 5] with a per-movie popularity skew."""
    if not 0 < density <= 1:
        raise ValidationError(f"Density must lie in (0, 1], got {density}")
    rng = np.random.default_rng(seed)
    popularity = rng.uniform(0.5, 1.5, size=d)
    quality = rng.uniform(1.0, 5.0, size=d)
    ratings = {}
    for user in range(1, n_users + 1):
        rated = rng.random(d) < np.clip(density * popularity, 0.0, 1.0)
        if not rated.any():
            rated[rng.integers(d)] = True
        taste = rng.normal(0.0, 1.0, size=d)
        for movie in np.flatnonzero(rated):
            ratings[(user, int(movie))] = float(np.clip(np.rint(quality[movie] + taste[movie]), 1, 5))
    return RatingsTable(ratings=ratings, users=tuple(range(1, n_users + 1)), movie_ids=tuple(range(d)))


def partition_users(
    table: RatingsTable,
    batch_users: int,
    T: int,
    n_agents: int,
    seed: int,
) -> List[List[RatingsBatch]]:
    """Shuffle users, cut T batches of batch_users, deal each batch round-robin to the agents."""
    if batch_users < n_agents:
        raise ValidationError(f"batch_users={batch_users} leaves some of the {n_agents} agents without users")
    needed = batch_users * T
    if len(table.users) < needed:
        raise ValidationError(f"Need {needed} users for {T} batches of {batch_users}, have {len(table.users)}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(table.users))
    shuffled = [table.users[i] for i in order[:needed]]

    by_user: Dict[int, Dict[Tuple[int, int], float]] = {}
    for (user, movie), value in table.ratings.items():
        by_user.setdefault(user, {})[(user, movie)] = value

    batches = []
    for t in range(T):
        members = shuffled[t * batch_users:(t + 1) * batch_users]
        per_agent = []
        for i in range(n_agents):
            users = tuple(members[i::n_agents])
            ratings = {}
            for user in users:
                ratings.update(by_user.get(user, {}))
            per_agent.append(RatingsBatch(ratings=ratings, users=users, d=table.d))
        batches.append(per_agent)
    return batches


def load_ratings(
    path: str,
    batch_users: int,
    T: int,
    n_agents: int,
    seed: int,
    d: Optional[int] = None,
) -> List[List[RatingsBatch]]:
    """Per time step, per agent ratings batches from a MovieLens-style file."""
    table = build_table(read_ratings_file(path), d)
    return partition_users(table, batch_users, T, n_agents, seed)
