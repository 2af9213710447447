import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_tiny_gazetteer
from usergeo.geo import GeoPoint, haversine
from usergeo.ingest import (DistanceCDF, Gazetteer, GazetteerEntry, TweetRecord, UserRecord,
                            assign_ground_truth, attach_profiles, extract_mentions, ground_truths, load_gazetteer,
                            match_profile_location, parse_profiles, parse_records,
                            profile_distance_report, resolve_geotag, write_gazetteer,
                            write_profiles, write_records)


def tw(uid, k, coords=None, bbox=None, place=None, text="hola", ts=0.0):
    return TweetRecord(f"{uid}-{k}", uid, text, coords, bbox, place, extract_mentions(text), ts)


def box(lat0, lat1, lon0, lon1):
    return (GeoPoint(lat0, lon0), GeoPoint(lat0, lon1), GeoPoint(lat1, lon1), GeoPoint(lat1, lon0))


# record parsing ----------------------------------------------------------

def test_parse_empty_file(tmp_path):
    p = tmp_path / "r.jsonl"
    p.write_text("")
    assert parse_records(p) == ([], 0)


def test_parse_one_valid_one_malformed(tmp_path):
    p = tmp_path / "r.jsonl"
    p.write_text(json.dumps({"tweet_id": "1", "user_id": "a", "text": "x"}) + "\n{not json\n")
    users, bad = parse_records(p)
    assert len(users) == 1 and bad == 1


def test_parse_user_with_three_tweets(tmp_path):
    lines = [json.dumps({"tweet_id": str(k), "user_id": "a", "text": f"t{k} @b", "ts": k})
             for k in range(3)]
    lines.append(json.dumps({"tweet_id": "9", "user_id": "c", "text": "other"}))
    p = tmp_path / "r.jsonl"
    p.write_text("\n".join(lines) + "\n")
    users, bad = parse_records(p)
    by_id = {u.user_id: u for u in users}
    # independent count of lines naming user a
    n_a = sum(1 for line in p.read_text().splitlines() if json.loads(line)["user_id"] == "a")
    assert len(by_id["a"].tweets) == n_a == 3
    assert by_id["a"].tweets[0].mentions == ("b",)
    assert bad == 0


@pytest.mark.parametrize("line", [
    '{"tweet_id": "1", "text": "no user"}',
    '{"tweet_id": "1", "user_id": "a", "lat": 95, "lon": 0}',
    '{"tweet_id": "1", "user_id": "a", "bbox": [[0, 0], [1, 1]]}',
    '[1, 2, 3]',
])
def test_parse_malformed_variants(tmp_path, line):
    p = tmp_path / "r.jsonl"
    p.write_text(line + "\n")
    assert parse_records(p) == ([], 1)


def test_unreadable_file_is_fatal(tmp_path):
    with pytest.raises(OSError):
        parse_records(tmp_path / "missing.jsonl")


def test_mentions_field_overrides_text(tmp_path):
    p = tmp_path / "r.jsonl"
    p.write_text(json.dumps({"tweet_id": "1", "user_id": "a", "text": "@x", "mentions": ["y"]}) + "\n")
    (u,), _ = parse_records(p)
    assert u.tweets[0].mentions == ("y",)


def test_records_and_profiles_round_trip(tmp_path):
    users = [UserRecord("a", [tw("a", 0, coords=GeoPoint(1.5, 2.25), text="hi @b", ts=5.0),
                              tw("a", 1, bbox=box(0, 1, 0, 1), place="Town", text="yo")],
                        "Paris", ["b", "z"]),
             UserRecord("b", [tw("b", 0, text="solo")], None, None)]
    write_records(users, tmp_path / "r.jsonl")
    write_profiles(users, tmp_path / "p.jsonl")
    parsed, bad = parse_records(tmp_path / "r.jsonl")
    profiles, bad2 = parse_profiles(tmp_path / "p.jsonl")
    assert bad == bad2 == 0
    assert attach_profiles(parsed, profiles) == users


def test_gazetteer_round_trip(tmp_path, tiny_gazetteer):
    write_gazetteer(tiny_gazetteer, tmp_path / "g.tsv")
    g = load_gazetteer(tmp_path / "g.tsv")
    assert sorted(e.geoname_id for e in g) == sorted(e.geoname_id for e in tiny_gazetteer)
    assert g.by_id[10].point == tiny_gazetteer.by_id[10].point
    cols = (tmp_path / "g.tsv").read_text().splitlines()[0].split("\t")
    assert len(cols) == 19 and cols[0] == "10" and cols[8] == "AR"


# geotag resolution ---------------------------------------------------------

def test_coords_exactly_at_city(tiny_gazetteer):
    p = GeoPoint(-34.6037, -58.3816)
    assert resolve_geotag(tw("a", 0, coords=p), tiny_gazetteer) == (10, p)


def test_coords_far_from_everything(tiny_gazetteer):
    p = GeoPoint(-50.0, -40.0)
    assert min(haversine(p, e.point) for e in tiny_gazetteer) > 500
    assert resolve_geotag(tw("a", 0, coords=p), tiny_gazetteer, r_match_km=50) is None


def test_bbox_two_springfields_prefers_population(tiny_gazetteer):
    t = tw("a", 0, bbox=box(39, 41, -91, -89), place="Springfield, IL")
    assert resolve_geotag(t, tiny_gazetteer)[0] == 30


def test_bbox_requires_point_inside(tiny_gazetteer):
    t = tw("a", 0, bbox=box(0, 1, 0, 1), place="Springfield")
    assert resolve_geotag(t, tiny_gazetteer) is None


def test_bbox_population_tie_lowest_id():
    g = Gazetteer([GazetteerEntry(7, "Twin", (), GeoPoint(1, 1), "ZZ", 10),
                   GazetteerEntry(3, "Twin", (), GeoPoint(1.1, 1.1), "ZZ", 10)])
    assert resolve_geotag(tw("a", 0, bbox=box(0, 2, 0, 2), place="Twin"), g)[0] == 3


@given(st.lists(st.tuples(st.floats(-60, 60), st.floats(-170, 170)), min_size=1, max_size=40),
       st.tuples(st.floats(-60, 60), st.floats(-170, 170)))
def test_nearest_matches_exhaustive_scan(cities, query):
    g = Gazetteer([GazetteerEntry(k, f"c{k}", (), GeoPoint(*c), "ZZ", 1) for k, c in enumerate(cities)])
    q = GeoPoint(*query)
    hit = resolve_geotag(tw("a", 0, coords=q), g, r_match_km=3000)
    dists = {e.geoname_id: haversine(q, e.point) for e in g}
    best = min(dists.values())
    if best > 3000:
        assert hit is None
    else:
        assert hit is not None
        assert dists[hit[0]] <= best + 1e-9


def test_ground_truth_majority_tie_and_none(tiny_gazetteer):
    ba, cba = GeoPoint(-34.6037, -58.3816), GeoPoint(-31.4201, -64.1888)
    u = UserRecord("a", [tw("a", 0, coords=ba), tw("a", 1, coords=ba), tw("a", 2, coords=cba)])
    assert assign_ground_truth(u, tiny_gazetteer).city == 10
    u = UserRecord("a", [tw("a", 0, coords=cba), tw("a", 1, coords=ba)])
    assert assign_ground_truth(u, tiny_gazetteer).city == 10
    assert assign_ground_truth(UserRecord("a", [tw("a", 0)]), tiny_gazetteer) is None


@given(st.permutations(list(range(5))))
def test_ground_truth_permutation_invariant(perm):
    g = Gazetteer([GazetteerEntry(1, "A", (), GeoPoint(0, 0), "ZZ", 1),
                   GazetteerEntry(2, "B", (), GeoPoint(0, 10), "ZZ", 1)])
    pts = [GeoPoint(0, 0.01), GeoPoint(0, 10), GeoPoint(0.02, 0), GeoPoint(0, 9.99), GeoPoint(0.01, 0.01)]
    tweets = [tw("u", k, coords=p) for k, p in enumerate(pts)]
    base = assign_ground_truth(UserRecord("u", tweets), g)
    other = assign_ground_truth(UserRecord("u", [tweets[k] for k in perm]), g)
    assert base == other and base.city == 1


# profile matching --------------------------------------------------------

def test_profile_matching_examples(tiny_gazetteer):
    assert match_profile_location("", tiny_gazetteer) == []
    hits = match_profile_location("Buenos Aires, Argentina", tiny_gazetteer)
    assert [e.geoname_id for e in hits] == [10]
    assert [e.geoname_id for e in match_profile_location("Paris", tiny_gazetteer)] == [40, 41]
    assert [e.geoname_id for e in match_profile_location("córdoba!", tiny_gazetteer)] == [20]


@given(st.sampled_from(["Buenos Aires, Argentina", "paris", "I love Cordoba", "springfield ma"]),
       st.lists(st.booleans(), min_size=40, max_size=40))
def test_profile_matching_case_independent(s, flips):
    g = make_tiny_gazetteer()
    mixed = "".join(c.upper() if f else c.lower() for c, f in zip(s, flips + [False] * len(s)))
    assert match_profile_location(mixed, g) == match_profile_location(s.lower(), g)


def test_distance_cdf_hand_computation(tmp_path):
    cdf = DistanceCDF(np.array([0.0, 5.0, 200.0, 300.0]))
    assert cdf.frac_below_10km == 0.5
    assert cdf.frac_below_161km == 0.5
    cum = [f for _, f in cdf.cumulative()]
    assert cum == sorted(cum) and cum[-1] == 1.0
    cdf.to_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "distance_km,cum_fraction"


def test_profile_report_all_same_city(tiny_gazetteer):
    ba = GeoPoint(-34.6037, -58.3816)
    users = [UserRecord(f"u{k}", [tw(f"u{k}", 0, coords=ba)], "Buenos Aires") for k in range(3)]
    users.append(UserRecord("amb", [tw("amb", 0, coords=ba)], "Paris"))
    users.append(UserRecord("none", [tw("none", 0, coords=ba)], None))
    cdf = profile_distance_report(users, tiny_gazetteer, ground_truths(users, tiny_gazetteer))
    assert cdf.n == 3 and cdf.frac_same_city == 1.0
    assert cdf.n_with_profile == 4 and cdf.n_single_match == 3


def test_profile_report_empty(tiny_gazetteer):
    cdf = profile_distance_report([], tiny_gazetteer, {})
    assert cdf.empty and cdf.summary()["empty"]
