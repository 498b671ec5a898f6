import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdmrec.errors import RowError, SchemaError, TooManyRowErrors, UnknownTowerError
from tdmrec.ingest import (CdrRecord, Tower, build_profiles, build_trajectories, filter_tourists,
                           merged_mapping, parse_cdr, parse_timestamp, parse_towers, read_trajectories,
                           write_cdr, write_towers, write_trajectories)

HEADER = "user_id,start_time,end_time,tower_id,nationality,device_model\n"


def rec(user, t, tower, nat="FR"):
    return CdrRecord(user, float(t), float(t), tower, nat)


def test_empty_file_with_header():
    assert list(parse_cdr(HEADER.encode())) == []


def test_one_row_round_trips_fields():
    res = parse_cdr((HEADER + "u1,100,160,T1,FR,phone\n").encode())
    assert res.records == [CdrRecord("u1", 100.0, 160.0, "T1", "FR", "phone")]


def test_end_before_start_is_row_error():
    body = HEADER + "".join(f"u{i},100,160,T1,FR,\n" for i in range(200)) + "bad,200,100,T1,FR,\n"
    res = parse_cdr(body.encode())
    assert len(res.records) == 200
    assert len(res.errors) == 1 and res.errors[0].line == 202


def test_missing_column_is_schema_error():
    with pytest.raises(SchemaError):
        parse_cdr(b"user_id,start_time,tower_id\nu,1,T\n")


def test_error_budget():
    body = HEADER + "u1,1,2,T1,FR,\nu2,x,2,T1,FR,\n"
    with pytest.raises(TooManyRowErrors):
        parse_cdr(body.encode())
    assert len(parse_cdr(body.encode(), max_error_fraction=0.5).errors) == 1


def test_iso_timestamps_detected():
    body = HEADER + "u1,2015-05-04T08:10:00Z,2015-05-04T08:11:00+00:00,T1,FR,\n"
    r = parse_cdr(io.StringIO(body)).records[0]
    assert r.start_time == parse_timestamp("2015-05-04T08:10:00Z", False)
    assert r.end_time - r.start_time == 60.0


def test_towers_validation():
    good = "tower_id,lat,lon,city,merged_group_id\nT1,42.5,1.5,x,G1\n"
    assert parse_towers(good.encode())["T1"] == Tower("T1", 42.5, 1.5, "x", "G1")
    with pytest.raises(RowError):
        parse_towers((good + "T2,95,1.5,x,G1\n").encode())
    with pytest.raises(RowError):
        parse_towers((good + "T1,42,1.5,x,G1\n").encode())
    towers = parse_towers(good.encode())
    assert parse_towers(write_towers(towers.values()).encode()) == towers
    assert merged_mapping(towers) == {"T1": "G1"}


def test_duplicate_collapse():
    (traj,) = build_trajectories([rec("u1", 1, "A"), rec("u1", 2, "A"), rec("u1", 3, "B")])
    assert traj.visits == (("A", 1.0), ("B", 3.0))


def test_single_record_and_interleaved_users():
    assert len(build_trajectories([rec("u1", 5, "A")])[0]) == 1
    trajs = build_trajectories([rec("u2", 4, "B"), rec("u1", 3, "A"), rec("u2", 1, "C"), rec("u1", 2, "B")])
    assert [t.user_id for t in trajs] == ["u1", "u2"]
    assert trajs[0].visits == (("B", 2.0), ("A", 3.0))
    assert trajs[1].visits == (("C", 1.0), ("B", 4.0))


def test_unknown_tower():
    towers = {"A": Tower("A", 0, 0, "", "G")}
    with pytest.raises(UnknownTowerError):
        build_trajectories([rec("u", 1, "Z")], towers)
    errors = []
    assert build_trajectories([rec("u", 1, "Z"), rec("u", 2, "A")], towers, errors)[0].visits == (("A", 2.0),)
    assert len(errors) == 1


def test_profiles():
    (p,) = build_profiles(build_trajectories([rec("u", 1, "A"), rec("u", 3, "B"), rec("u", 5, "A")]))
    assert p.visit_counts == {"A": 2, "B": 1}
    assert p.group == "FR"
    a, b = build_profiles(build_trajectories([rec("x", 1, "A"), rec("y", 1, "A")]))
    assert a.visit_counts == b.visit_counts and a.user_id != b.user_id
    (q,) = build_profiles(build_trajectories([rec("z", 1, "A", "DE")]))
    assert q.visit_counts == {"A": 1} and q.group == "other"


def test_filter_tourists():
    recs = [rec("f", 1, "A", "FR"), rec("f", 2, "B", "FR"), rec("e", 1, "A", "ES"), rec("a", 1, "A", "AD")]
    profiles = build_profiles(build_trajectories(recs))
    assert {p.user_id for p in filter_tourists(profiles, "AD")} == {"e", "f"}
    assert {p.user_id for p in filter_tourists(profiles, "AD", min_towers=True)} == {"f"}
    assert filter_tourists([p for p in profiles if p.nationality == "AD"], "AD") == []


def test_trajectory_csv_round_trip():
    trajs = build_trajectories([rec("u1", 1.5, "A"), rec("u1", 3, "B"), rec("u2", 0.1, "C", "ES")])
    assert read_trajectories(write_trajectories(trajs).encode()) == trajs


records_st = st.lists(
    st.builds(
        lambda u, s, d, t, n: CdrRecord(f"u{u}", float(s), float(s + d), f"T{t}", n),
        st.integers(0, 4), st.integers(0, 10**9), st.integers(0, 3600), st.integers(0, 5),
        st.sampled_from(["FR", "ES", "AD"]),
    ),
    max_size=40,
)


@given(records_st)
@settings(max_examples=60, deadline=None)
def test_write_parse_round_trip(records):
    text = write_cdr(records)
    assert parse_cdr(text.encode()).records == records
    assert write_cdr(parse_cdr(text.encode()).records) == text


@given(records_st, st.randoms(use_true_random=False))
@settings(max_examples=60, deadline=None)
def test_profiles_permutation_invariant(records, rnd):
    shuffled = list(records)
    rnd.shuffle(shuffled)
    assert build_profiles(build_trajectories(records)) == build_profiles(build_trajectories(shuffled))


@given(records_st)
@settings(max_examples=60, deadline=None)
def test_visit_conservation(records):
    trajs = build_trajectories(records)
    collapsed = 0
    for user in {r.user_id for r in records}:
        mine = sorted((r for r in records if r.user_id == user), key=lambda r: (r.start_time, r.end_time, r.tower_id))
        collapsed += sum(a.tower_id == b.tower_id for a, b in zip(mine, mine[1:]))
    assert sum(len(t) for t in trajs) == len(records) - collapsed
    for t in trajs:
        ts = [x for _, x in t.visits]
        assert ts == sorted(ts) and len(t) >= 1
