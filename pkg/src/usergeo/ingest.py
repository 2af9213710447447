"""Reading tweet/user records and a GeoNames gazetteer, and deriving ground truth.

Record files are line-delimited JSON. A tweet line carries ``tweet_id``,
``user_id``, ``text`` and optionally ``lat``/``lon``, ``bbox`` (four
``[lat, lon]`` corners), ``place_name``, ``mentions`` and ``ts``. A profile
line carries ``user_id``, ``profile_location`` and ``followees``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .geo import GeoPoint, haversine

logger = logging.getLogger(__name__)

DEFAULT_MATCH_RADIUS_KM = 25.0
_MENTION_RE = re.compile(r"@(\w+)")
_PROFILE_SPLIT_RE = re.compile(r"[\W_]+", re.UNICODE)


@dataclass(frozen=True)
class TweetRecord:
    tweet_id: str
    user_id: str
    text: str
    coords: GeoPoint | None = None
    bbox: tuple[GeoPoint, ...] | None = None
    place_name: str | None = None
    mentions: tuple[str, ...] = ()
    timestamp: float = 0.0


@dataclass(frozen=True)
class GazetteerEntry:
    geoname_id: int
    name: str
    alt_names: tuple[str, ...]
    point: GeoPoint
    country_code: str
    population: int


@dataclass
class UserRecord:
    user_id: str
    tweets: list[TweetRecord] = field(default_factory=list)
    profile_location: str | None = None
    followees: list[str] | None = None


@dataclass(frozen=True)
class GroundTruth:
    """Modal city of a user's geotagged tweets.

    ``point`` is the city's gazetteer point; ``home`` is the componentwise
    median of the user's own geotag coordinates inside that city.
    """

    user_id: str
    city: int
    point: GeoPoint
    home: GeoPoint


def extract_mentions(text: str) -> tuple[str, ...]:
    return tuple(_MENTION_RE.findall(text))


def _parse_point(lat, lon) -> GeoPoint:
    return GeoPoint(float(lat), float(lon))


def _parse_tweet(obj: dict) -> TweetRecord:
    if not isinstance(obj, dict):
        raise ValueError("record is not an object")
    tweet_id = obj["tweet_id"]
    user_id = obj["user_id"]
    if tweet_id is None or user_id is None:
        raise ValueError("missing identifier")
    text = obj.get("text") or ""
    if not isinstance(text, str):
        raise ValueError("text must be a string")
    coords = None
    if obj.get("lat") is not None and obj.get("lon") is not None:
        coords = _parse_point(obj["lat"], obj["lon"])
    bbox = None
    if obj.get("bbox"):
        corners = obj["bbox"]
        if len(corners) != 4:
            raise ValueError("bbox needs four corners")
        bbox = tuple(_parse_point(c[0], c[1]) for c in corners)
    mentions = obj.get("mentions")
    if mentions is None:
        mentions = extract_mentions(text)
    return TweetRecord(
        tweet_id=str(tweet_id),
        user_id=str(user_id),
        text=text,
        coords=coords,
        bbox=bbox,
        place_name=obj.get("place_name"),
        mentions=tuple(str(m) for m in mentions),
        timestamp=float(obj.get("ts") or 0.0),
    )


def _iter_json_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if line:
                yield lineno, line


def parse_records(path) -> tuple[list[UserRecord], int]:
    """Parse a tweet record file into users.

    Returns the users sorted by id (tweets in file order) and the number of
    malformed lines that were skipped.
    """
    by_user: dict[str, list[TweetRecord]] = defaultdict(list)
    n_bad = 0
    for lineno, line in _iter_json_lines(path):
        try:
            tweet = _parse_tweet(json.loads(line))
        except (ValueError, KeyError, TypeError, IndexError) as exc:
            n_bad += 1
            logger.warning("%s:%d skipped malformed record (%s)", path, lineno, exc)
            continue
        by_user[tweet.user_id].append(tweet)
    users = [UserRecord(uid, tweets) for uid, tweets in sorted(by_user.items())]
    return users, n_bad


def parse_profiles(path) -> tuple[dict[str, tuple[str | None, list[str] | None]], int]:
    """Parse a profile file into ``user_id -> (profile_location, followees)``."""
    profiles = {}
    n_bad = 0
    for lineno, line in _iter_json_lines(path):
        try:
            obj = json.loads(line)
            uid = str(obj["user_id"])
            loc = obj.get("profile_location")
            if loc is not None and not isinstance(loc, str):
                raise ValueError("profile_location must be a string")
            followees = obj.get("followees")
            if followees is not None:
                followees = [str(f) for f in followees]
        except (ValueError, KeyError, TypeError) as exc:
            n_bad += 1
            logger.warning("%s:%d skipped malformed profile (%s)", path, lineno, exc)
            continue
        profiles[uid] = (loc, followees)
    return profiles, n_bad


def attach_profiles(users: list[UserRecord], profiles: dict) -> list[UserRecord]:
    out = []
    for u in users:
        if u.user_id in profiles:
            loc, followees = profiles[u.user_id]
            u = replace(u, profile_location=loc, followees=followees)
        out.append(u)
    return out


def write_records(users: Iterable[UserRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for u in users:
            for t in u.tweets:
                obj = {"tweet_id": t.tweet_id, "user_id": t.user_id, "text": t.text}
                if t.coords is not None:
                    obj["lat"], obj["lon"] = t.coords.lat, t.coords.lon
                if t.bbox is not None:
                    obj["bbox"] = [[p.lat, p.lon] for p in t.bbox]
                    obj["place_name"] = t.place_name
                obj["mentions"] = list(t.mentions)
                obj["ts"] = t.timestamp
                fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def write_profiles(users: Iterable[UserRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for u in users:
            obj = {"user_id": u.user_id, "profile_location": u.profile_location,
                   "followees": u.followees}
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def profile_tokens(s: str) -> list[str]:
    return [tok for tok in _PROFILE_SPLIT_RE.split(s.casefold()) if tok]


def _name_key(name: str) -> str:
    return " ".join(profile_tokens(name))


class Gazetteer:
    """City table indexed by normalised name and by a one-degree grid."""

    def __init__(self, entries: Iterable[GazetteerEntry]):
        self.entries: list[GazetteerEntry] = sorted(entries, key=lambda e: e.geoname_id)
        self.by_id: dict[int, GazetteerEntry] = {}
        self._by_name: dict[str, list[GazetteerEntry]] = defaultdict(list)
        self._grid: dict[tuple[int, int], list[GazetteerEntry]] = defaultdict(list)
        for e in self.entries:
            if e.geoname_id in self.by_id:
                raise ValueError(f"duplicate geoname_id {e.geoname_id}")
            self.by_id[e.geoname_id] = e
            keys = {_name_key(n) for n in (e.name, *e.alt_names)}
            for key in sorted(k for k in keys if k):
                self._by_name[key].append(e)
            self._grid[self._cell(e.point.lat, e.point.lon)].append(e)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @staticmethod
    def _cell(lat: float, lon: float) -> tuple[int, int]:
        return min(int(math.floor(lat)), 89), _wrap_lon_cell(int(math.floor(lon)))

    def lookup_name(self, name: str) -> list[GazetteerEntry]:
        return list(self._by_name.get(_name_key(name), ()))

    def nearest(self, point: GeoPoint, radius_km: float) -> GazetteerEntry | None:
        """Closest entry within ``radius_km``; ties go to the lower geoname_id."""
        best, best_d = None, math.inf
        for e in self._candidates(point, radius_km):
            d = haversine(point, e.point)
            if d > radius_km:
                continue
            if d < best_d or (d == best_d and e.geoname_id < best.geoname_id):
                best, best_d = e, d
        return best

    def _candidates(self, point: GeoPoint, radius_km: float):
        # 110 km/deg under-estimates a degree of latitude, so the window is a superset.
        dlat = radius_km / 110.0
        lat_lo = max(-90, int(math.floor(point.lat - dlat)))
        lat_hi = min(89, int(math.floor(point.lat + dlat)))
        max_abs_lat = min(90.0, abs(point.lat) + dlat)
        coslat = math.cos(math.radians(max_abs_lat))
        if coslat < 1e-6 or radius_km / (111.0 * coslat) >= 180:
            lon_cells = range(-180, 180)
        else:
            dlon = radius_km / (111.0 * coslat)
            lon_cells = {
                _wrap_lon_cell(c)
                for c in range(int(math.floor(point.lon - dlon)), int(math.floor(point.lon + dlon)) + 1)
            }
        for la in range(lat_lo, lat_hi + 1):
            for lo in lon_cells:
                yield from self._grid.get((la, lo), ())


def _wrap_lon_cell(c: int) -> int:
    return (c + 180) % 360 - 180


def load_gazetteer(path) -> Gazetteer:
    """Load a GeoNames-format tab-separated file (geonameid, name, asciiname,
    alternatenames, latitude, longitude, ..., country code at column 8,
    population at column 14)."""
    entries = []
    n_bad = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.rstrip("\n").split("\t")
            try:
                alt = [a for a in cols[3].split(",") if a]
                if cols[2] and cols[2] != cols[1]:
                    alt.insert(0, cols[2])
                entries.append(GazetteerEntry(
                    geoname_id=int(cols[0]),
                    name=cols[1],
                    alt_names=tuple(alt),
                    point=GeoPoint(float(cols[4]), float(cols[5])),
                    country_code=cols[8],
                    population=int(cols[14] or 0),
                ))
            except (IndexError, ValueError) as exc:
                n_bad += 1
                logger.warning("%s:%d skipped malformed gazetteer row (%s)", path, lineno, exc)
    return Gazetteer(entries)


def write_gazetteer(entries: Iterable[GazetteerEntry], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            cols = [""] * 19
            cols[0] = str(e.geoname_id)
            cols[1] = e.name
            cols[2] = e.name
            cols[3] = ",".join(e.alt_names)
            cols[4] = repr(e.point.lat)
            cols[5] = repr(e.point.lon)
            cols[6], cols[7] = "P", "PPL"
            cols[8] = e.country_code
            cols[14] = str(e.population)
            fh.write("\t".join(cols) + "\n")


def resolve_geotag(t: TweetRecord, g: Gazetteer,
                   r_match_km: float = DEFAULT_MATCH_RADIUS_KM) -> tuple[int, GeoPoint] | None:
    """Snap a tweet's geotag to a gazetteer city.

    Exact coordinates take precedence over a bounding box. Returns the city id
    and the tweet's precise point (the city point for bounding-box tweets).
    """
    if t.coords is not None:
        e = g.nearest(t.coords, r_match_km)
        return None if e is None else (e.geoname_id, t.coords)
    if t.bbox is not None and t.place_name:
        lats = [p.lat for p in t.bbox]
        lons = [p.lon for p in t.bbox]
        lat_lo, lat_hi, lon_lo, lon_hi = min(lats), max(lats), min(lons), max(lons)
        names = [t.place_name]
        head = t.place_name.split(",")[0]
        if head != t.place_name:
            names.append(head)
        for name in names:
            hits = [e for e in g.lookup_name(name)
                    if lat_lo <= e.point.lat <= lat_hi and lon_lo <= e.point.lon <= lon_hi]
            if hits:
                e = min(hits, key=lambda e: (-e.population, e.geoname_id))
                return e.geoname_id, e.point
    return None


def assign_ground_truth(u: UserRecord, g: Gazetteer,
                        r_match_km: float = DEFAULT_MATCH_RADIUS_KM) -> GroundTruth | None:
    """Modal resolved city over the user's tweets (ties: lowest geoname_id)."""
    points: dict[int, list[GeoPoint]] = defaultdict(list)
    for t in u.tweets:
        hit = resolve_geotag(t, g, r_match_km)
        if hit is not None:
            points[hit[0]].append(hit[1])
    if not points:
        return None
    city = min(points, key=lambda c: (-len(points[c]), c))
    pts = points[city]
    home = GeoPoint(float(np.median([p.lat for p in pts])), float(np.median([p.lon for p in pts])))
    return GroundTruth(u.user_id, city, g.by_id[city].point, home)


def ground_truths(users: Iterable[UserRecord], g: Gazetteer,
                  r_match_km: float = DEFAULT_MATCH_RADIUS_KM) -> dict[str, GroundTruth]:
    out = {}
    for u in users:
        gt = assign_ground_truth(u, g, r_match_km)
        if gt is not None:
            out[u.user_id] = gt
    return out


def match_profile_location(s: str | None, g: Gazetteer) -> list[GazetteerEntry]:
    """Gazetteer entries whose name equals a profile token or token bigram."""
    if not s:
        return []
    toks = profile_tokens(s)
    grams = toks + [f"{a} {b}" for a, b in zip(toks, toks[1:])]
    found = {}
    for gram in grams:
        for e in g.lookup_name(gram):
            found[e.geoname_id] = e
    return [found[k] for k in sorted(found)]


@dataclass
class DistanceCDF:
    distances: np.ndarray
    n_with_profile: int = 0
    n_matched: int = 0
    n_single_match: int = 0

    @property
    def empty(self) -> bool:
        return len(self.distances) == 0

    @property
    def n(self) -> int:
        return len(self.distances)

    def fraction_below(self, km: float) -> float:
        if self.empty:
            return float("nan")
        return float(np.mean(self.distances < km))

    @property
    def frac_below_10km(self) -> float:
        return self.fraction_below(10.0)

    @property
    def frac_below_161km(self) -> float:
        return self.fraction_below(161.0)

    @property
    def frac_same_city(self) -> float:
        return self.fraction_below(1e-9)

    def quantiles(self, qs=(0.1, 0.25, 0.5, 0.75, 0.9)) -> dict[float, float]:
        if self.empty:
            return {q: float("nan") for q in qs}
        return {q: float(np.quantile(self.distances, q)) for q in qs}

    def cumulative(self) -> list[tuple[float, float]]:
        n = self.n
        return [(float(d), (i + 1) / n) for i, d in enumerate(self.distances)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["distance_km", "cum_fraction"])
            for d, f in self.cumulative():
                w.writerow([repr(d), repr(f)])

    def summary(self) -> dict:
        return {
            "empty": self.empty,
            "n_with_profile": self.n_with_profile,
            "n_matched": self.n_matched,
            "n_single_match": self.n_single_match,
            "n_eligible": self.n,
            "frac_same_city": self.frac_same_city,
            "frac_below_10km": self.frac_below_10km,
            "frac_below_161km": self.frac_below_161km,
            "quantiles_km": {str(q): v for q, v in self.quantiles().items()},
        }


def profile_distance_report(users: Iterable[UserRecord], g: Gazetteer,
                            truths: dict[str, GroundTruth]) -> DistanceCDF:
    """Distances between an unambiguous profile city and the ground-truth city."""
    dists = []
    n_with, n_matched, n_single = 0, 0, 0
    for u in users:
        if not u.profile_location or not u.profile_location.strip():
            continue
        n_with += 1
        hits = match_profile_location(u.profile_location, g)
        if hits:
            n_matched += 1
        if len(hits) != 1:
            continue
        n_single += 1
        gt = truths.get(u.user_id)
        if gt is None:
            continue
        dists.append(haversine(hits[0].point, gt.point))
    if not dists:
        logger.warning("profile distance report: no eligible users")
    return DistanceCDF(np.sort(np.asarray(dists, dtype=float)), n_with, n_matched, n_single)
