"""Synthetic users with planted location homophily and location-indicative words.

Users are split evenly across cities. Mention and follow links are planted
with probability ``p_in`` inside a city and ``p_out`` across cities. Every
city has a few external hub accounts (not part of the user set) that its
users mention and follow, and a handful of global celebrities are linked
from everywhere so the popularity filter has something to remove. Each
location token of a user's text comes from the home city's vocabulary with
probability ``liw_strength`` and from another city's vocabulary otherwise, so
``liw_strength = 1 / n_cities`` carries no text signal. Filler words from a
shared Zipf-distributed vocabulary are mixed in.

Output files use the exact ingest formats, so a generated directory can be
fed straight to the pipeline.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .geo import GeoPoint, haversine
from .ingest import (GazetteerEntry, TweetRecord, UserRecord, write_gazetteer, write_profiles,
                     write_records)

CITY_NAMES = ["Aldora", "Brenmoor", "Castelia", "Dunhollow", "Eskerby", "Farrowgate",
              "Glenmarch", "Harrowick", "Ilvara", "Jorvale", "Kestrin", "Lowmere"]
BASE_TS = 1_500_000_000
KM_PER_DEG = 111.195


@dataclass
class SynthConfig:
    n_users: int = 1000
    n_cities: int = 5
    centers: list | None = None          # [[lat, lon], ...]; placed automatically when None
    min_separation_km: float = 500.0
    region: tuple = (-45.0, -22.0, -72.0, -54.0)   # lat_min, lat_max, lon_min, lon_max
    p_in: float = 0.05
    p_out: float = 0.001
    follow_p_in: float | None = None     # default: same as p_in
    follow_p_out: float | None = None
    hubs_per_city: int = 3
    hub_attach_prob: float = 0.02
    n_celebrities: int = 2
    celebrity_prob: float = 0.05
    tweets_per_user: int = 4
    tokens_per_user: int = 60           # location tokens
    filler_tokens_per_user: int = 8
    liw_strength: float = 0.3
    city_vocab_size: int = 10
    shared_vocab_size: int = 400
    geotag_prob: float = 0.5
    bbox_prob: float = 0.2
    jitter_km: float = 5.0
    profile_correct_prob: float = 0.6
    profile_wrong_prob: float = 0.2
    n_distractor_places: int = 20
    seed: int = 0

    def __post_init__(self):
        for name in ("p_in", "p_out", "hub_attach_prob", "celebrity_prob", "liw_strength",
                     "geotag_prob", "bbox_prob", "profile_correct_prob", "profile_wrong_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.profile_correct_prob + self.profile_wrong_prob > 1.0:
            raise ValueError("profile probabilities sum above 1")
        if self.n_cities < 1 or self.n_users < self.n_cities:
            raise ValueError("need at least one user per city")
        if self.tokens_per_user < 0 or self.filler_tokens_per_user < 0:
            raise ValueError("token counts must be nonnegative")
        if self.tokens_per_user + self.filler_tokens_per_user < 1 or self.tweets_per_user < 1:
            raise ValueError("users need at least one tweet and one token")
        if self.centers is not None:
            if len(self.centers) != self.n_cities:
                raise ValueError("one center per city")
            pts = [GeoPoint(*c) for c in self.centers]
            for a, b in itertools.combinations(pts, 2):
                if haversine(a, b) < self.min_separation_km:
                    raise ValueError(f"city centers {a} and {b} closer than "
                                     f"{self.min_separation_km} km")

    @property
    def follow_probs(self) -> tuple[float, float]:
        fin = self.p_in if self.follow_p_in is None else self.follow_p_in
        fout = self.p_out if self.follow_p_out is None else self.follow_p_out
        return fin, fout


@dataclass
class SynthDataset:
    users: list[UserRecord]
    gazetteer: list[GazetteerEntry]
    city_of: dict[str, int]                 # user id -> city index
    city_entries: list[GazetteerEntry]      # by city index
    hubs: list[str] = field(default_factory=list)
    celebrities: list[str] = field(default_factory=list)


def place_centers(cfg: SynthConfig, rng: np.random.Generator) -> list[GeoPoint]:
    if cfg.centers is not None:
        return [GeoPoint(*c) for c in cfg.centers]
    lat0, lat1, lon0, lon1 = cfg.region
    centers: list[GeoPoint] = []
    for _ in range(100_000):
        p = GeoPoint(round(float(rng.uniform(lat0, lat1)), 4), round(float(rng.uniform(lon0, lon1)), 4))
        if all(haversine(p, c) >= cfg.min_separation_km for c in centers):
            centers.append(p)
            if len(centers) == cfg.n_cities:
                return centers
    raise ValueError(f"could not place {cfg.n_cities} centers {cfg.min_separation_km} km apart "
                     "inside the region")


def _jitter(center: GeoPoint, km: float, rng) -> GeoPoint:
    dlat, dlon = rng.normal(0.0, km / 2.0, size=2) / KM_PER_DEG
    dlon /= max(np.cos(np.radians(center.lat)), 1e-6)
    return GeoPoint(round(center.lat + float(dlat), 6), round(center.lon + float(dlon), 6))


def _bbox(center: GeoPoint, half_deg: float = 0.2) -> tuple[GeoPoint, ...]:
    lo_lat, hi_lat = center.lat - half_deg, center.lat + half_deg
    lo_lon, hi_lon = center.lon - half_deg, center.lon + half_deg
    return (GeoPoint(round(lo_lat, 6), round(lo_lon, 6)), GeoPoint(round(lo_lat, 6), round(hi_lon, 6)),
            GeoPoint(round(hi_lat, 6), round(hi_lon, 6)), GeoPoint(round(hi_lat, 6), round(lo_lon, 6)))


def _planted_pairs(city: np.ndarray, p_in: float, p_out: float, rng) -> list[tuple[int, int]]:
    """Unordered pairs i < j linked with p_in (same city) or p_out."""
    n = len(city)
    iu, ju = np.triu_indices(n, k=1)
    same = city[iu] == city[ju]
    prob = np.where(same, p_in, p_out)
    hit = rng.random(len(iu)) < prob
    return list(zip(iu[hit].tolist(), ju[hit].tolist()))


def generate_dataset(cfg: SynthConfig) -> SynthDataset:
    rng = np.random.default_rng(cfg.seed)
    centers = place_centers(cfg, rng)
    names = [CITY_NAMES[c] if c < len(CITY_NAMES) else f"City{c}" for c in range(cfg.n_cities)]
    city_entries = [GazetteerEntry(1000 + c, names[c], (names[c].upper(),), centers[c], "ZZ",
                                   100_000 * (cfg.n_cities - c)) for c in range(cfg.n_cities)]
    gazetteer = list(city_entries)
    # distractor places far from every city so snapping never picks them
    lat0, lat1, lon0, lon1 = cfg.region
    k = 0
    while len(gazetteer) < cfg.n_cities + cfg.n_distractor_places:
        p = GeoPoint(round(float(rng.uniform(lat0, lat1)), 4), round(float(rng.uniform(lon0, lon1)), 4))
        k += 1
        if k > 100_000:
            break
        if min(haversine(p, c) for c in centers) < 100.0:
            continue
        j = len(gazetteer) - cfg.n_cities
        gazetteer.append(GazetteerEntry(5000 + j, f"Hamlet{j}", (), p, "ZZ", 500 + j))

    n = cfg.n_users
    width = len(str(n - 1))
    uids = [f"u{i:0{width}d}" for i in range(n)]
    city = np.arange(n) % cfg.n_cities
    hubs = [[f"hub{c}x{h}" for h in range(cfg.hubs_per_city)] for c in range(cfg.n_cities)]
    celebs = [f"celeb{k}" for k in range(cfg.n_celebrities)]

    mention_targets: list[list[str]] = [[] for _ in range(n)]
    for i, j in _planted_pairs(city, cfg.p_in, cfg.p_out, rng):
        src, dst = (i, j) if rng.random() < 0.5 else (j, i)
        mention_targets[src].extend([uids[dst]] * int(rng.integers(1, 4)))
        if rng.random() < 0.3:
            mention_targets[dst].append(uids[src])
    followees: list[list[str]] = [[] for _ in range(n)]
    for i, j in _planted_pairs(city, *cfg.follow_probs, rng):
        src, dst = (i, j) if rng.random() < 0.5 else (j, i)
        followees[src].append(uids[dst])
    for i in range(n):
        for h in hubs[city[i]]:
            if rng.random() < cfg.hub_attach_prob:
                mention_targets[i].append(h)
            if rng.random() < cfg.hub_attach_prob:
                followees[i].append(h)
        for c in celebs:
            if rng.random() < cfg.celebrity_prob:
                mention_targets[i].append(c)
            if rng.random() < cfg.celebrity_prob:
                followees[i].append(c)

    shared = [f"w{k}" for k in range(cfg.shared_vocab_size)]
    local = [[f"{names[c].lower()[:3]}q{k}" for k in range(cfg.city_vocab_size)]
             for c in range(cfg.n_cities)]
    zipf = 1.0 / np.arange(1, cfg.shared_vocab_size + 1)
    zipf /= zipf.sum()

    users = []
    for i, uid in enumerate(uids):
        c = int(city[i])
        n_loc, n_fill = cfg.tokens_per_user, cfg.filler_tokens_per_user
        home = rng.random(n_loc) < cfg.liw_strength
        if cfg.n_cities > 1:
            src = np.where(home, c, (c + rng.integers(1, cfg.n_cities, size=n_loc)) % cfg.n_cities)
        else:
            src = np.full(n_loc, c)
        toks = [local[k][a] for k, a in zip(src, rng.integers(cfg.city_vocab_size, size=n_loc))]
        toks += [shared[b] for b in rng.choice(cfg.shared_vocab_size, size=n_fill, p=zipf)]
        toks = [toks[t] for t in rng.permutation(len(toks))]
        n_tok = len(toks)
        chunks = np.array_split(np.arange(n_tok), cfg.tweets_per_user)
        targets = list(mention_targets[i])
        rng.shuffle(targets)
        per_tweet = np.array_split(np.arange(len(targets)), cfg.tweets_per_user)
        geotagged = rng.random(cfg.tweets_per_user) < cfg.geotag_prob
        if not geotagged.any():
            geotagged[int(rng.integers(cfg.tweets_per_user))] = True
        tweets = []
        for k in range(cfg.tweets_per_user):
            words = [toks[t] for t in chunks[k]] + [f"@{targets[t]}" for t in per_tweet[k]]
            coords = bbox = place = None
            if geotagged[k]:
                if rng.random() < cfg.bbox_prob:
                    bbox, place = _bbox(centers[c]), f"{names[c]}, Synthland"
                else:
                    coords = _jitter(centers[c], cfg.jitter_km, rng)
            tweets.append(TweetRecord(
                tweet_id=f"{uid}t{k}", user_id=uid, text=" ".join(words), coords=coords,
                bbox=bbox, place_name=place,
                mentions=tuple(targets[t] for t in per_tweet[k]),
                timestamp=float(BASE_TS + 3600 * (i * cfg.tweets_per_user + k))))
        r = rng.random()
        if r < cfg.profile_correct_prob:
            profile = f"{names[c]}, Synthland"
        elif r < cfg.profile_correct_prob + cfg.profile_wrong_prob:
            profile = names[int(rng.integers(cfg.n_cities))]
        else:
            profile = "somewhere over the rainbow"
        users.append(UserRecord(uid, tweets, profile, sorted(set(followees[i]))))
    return SynthDataset(users, gazetteer, dict(zip(uids, city.tolist())), city_entries,
                        [h for hs in hubs for h in hs], celebs)


def write_dataset(ds: SynthDataset, outdir) -> dict[str, Path]:
    """Write records, profiles, gazetteer and the planted city table."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"records": out / "records.jsonl", "profiles": out / "profiles.jsonl",
             "gazetteer": out / "gazetteer.tsv", "planted": out / "planted.csv"}
    write_records(ds.users, paths["records"])
    write_profiles(ds.users, paths["profiles"])
    write_gazetteer(ds.gazetteer, paths["gazetteer"])
    with open(paths["planted"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "city_index", "geoname_id"])
        for uid in sorted(ds.city_of):
            c = ds.city_of[uid]
            w.writerow([uid, c, ds.city_entries[c].geoname_id])
    return paths


def generate(cfg: SynthConfig, outdir) -> tuple[SynthDataset, dict[str, Path]]:
    ds = generate_dataset(cfg)
    return ds, write_dataset(ds, outdir)


def config_dict(cfg: SynthConfig) -> dict:
    return asdict(cfg)
