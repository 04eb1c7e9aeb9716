import pytest

from app.errors import ValidationError
from app.ratings import build_table, load_ratings, partition_users, read_ratings_file, synthetic_table


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_reads_double_colon_format(tmp_path):
    path = write(tmp_path, "ratings.dat", "1::10::5::978300760\n1::20::3::978302109\n\n2::10::4::978301968\n")
    assert read_ratings_file(path) == [(1, 10, 5.0), (1, 20, 3.0), (2, 10, 4.0)]


def test_reads_csv_format(tmp_path):
    path = write(tmp_path, "ratings.csv", "userId,movieId,rating,timestamp\n1,10,4.5,1\n2,20,0.5,2\n")
    assert read_ratings_file(path) == [(1, 10, 4.5), (2, 20, 0.5)]


def test_reports_line_numbers(tmp_path):
    path = write(tmp_path, "bad.dat", "1::10::5::0\n1::x::3::0\n")
    with pytest.raises(ValidationError, match=r"bad.dat:2:"):
        read_ratings_file(path)
    path = write(tmp_path, "range.csv", "userId,movieId,rating\n1,10,7\n")
    with pytest.raises(ValidationError, match=r"range.csv:2:"):
        read_ratings_file(path)
    path = write(tmp_path, "header.csv", "user,item,score\n1,2,3\n")
    with pytest.raises(ValidationError, match="header"):
        read_ratings_file(path)


def test_missing_file():
    with pytest.raises(ValidationError, match="not found"):
        read_ratings_file("/nonexistent/ratings.dat")


def test_build_table_keeps_most_rated_movies():
    records = [(1, 30, 5.0), (2, 30, 4.0), (1, 20, 3.0), (2, 20, 2.0), (3, 10, 1.0), (3, 40, 1.0)]
    table = build_table(records, d=3)
    assert table.movie_ids == (10, 20, 30)
    assert table.d == 3
    assert table.ratings[(1, 2)] == 5.0
    assert (3, 3) not in table.ratings
    assert table.users == (1, 2, 3)


def test_synthetic_table_is_reproducible():
    a = synthetic_table(20, 6, density=0.5, seed=3)
    b = synthetic_table(20, 6, density=0.5, seed=3)
    assert a == b
    assert all(1 <= v <= 5 and v == int(v) for v in a.ratings.values())
    assert {u for u, _ in a.ratings} == set(range(1, 21))
    with pytest.raises(ValidationError):
        synthetic_table(5, 3, density=0.0)


def test_partition_users():
    table = synthetic_table(30, 5, seed=1)
    batches = partition_users(table, batch_users=5, T=4, n_agents=2, seed=0)
    assert len(batches) == 4
    assert all(len(step) == 2 for step in batches)
    sizes = [[len(b.users) for b in step] for step in batches]
    assert sizes == [[3, 2]] * 4
    seen = [u for step in batches for b in step for u in b.users]
    assert len(seen) == len(set(seen)) == 20
    for step in batches:
        for b in step:
            assert b.matrix().shape == (len(b.users), 5)


def test_partition_rejects_short_supply():
    table = synthetic_table(10, 4, seed=0)
    with pytest.raises(ValidationError, match="Need 12 users"):
        partition_users(table, batch_users=3, T=4, n_agents=3, seed=0)
    with pytest.raises(ValidationError):
        partition_users(table, batch_users=2, T=2, n_agents=3, seed=0)


def test_load_ratings(tmp_path):
    lines = "".join(f"{u}::{m}::{(u + m) % 5 + 1}::0\n" for u in range(1, 9) for m in (1, 2, 3))
    batches = load_ratings(write(tmp_path, "r.dat", lines), batch_users=2, T=4, n_agents=2, seed=0, d=2)
    assert len(batches) == 4
    assert batches[0][0].d == 2
