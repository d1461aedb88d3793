"""Synthetic corpus and preference-behavior generator.

Songs carry latent factors (genre, language, and a continuous style vector
correlated with genre). Waveforms draw on one sine bank shared by all genres;
genre and style show only through the amplitude pattern laid over that bank,
plus faint language tones and Gaussian noise. Texts mix
language-, genre-, and shared-pool tokens, with genre-pool probabilities
style-modulated, so audio and text share latent information without being
copies of the labels.

Every song is reproducible from ``default_rng([seed, song_id])`` alone, which
lets the corpus synthesize waveforms lazily instead of holding them in RAM.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import GeneratorConfig
from .errors import DataError
from .textproc import TextDocument

WAVE_MAGIC = b"RF32"

# Sub-stream tags; length-3 seed sequences never collide with the
# length-2 per-song streams.
_BANK_STREAM = 1
_TRIPLET_STREAM = 2
_SESSION_STREAM = 3
_USER_STREAM = 4
_RANKING_STREAM = 5
_EVAL_PAIR_STREAM = 6


@dataclass(frozen=True, eq=False)
class SongSpec:
    song_id: int
    genre: int
    language: int
    style: np.ndarray | None


@dataclass(frozen=True)
class TripletRow:
    trigger_id: int
    rec_id: int


@dataclass(frozen=True)
class PairRow:
    a_id: int
    b_id: int


@dataclass(frozen=True)
class MatchingRow:
    user_id: int
    target_id: int
    trigger_ids: tuple[int, ...]


@dataclass(frozen=True)
class RankingRow:
    user_id: int
    time_idx: int
    candidate_id: int
    click: int
    favor: int
    history_ids: tuple[int, ...]


@dataclass(frozen=True)
class EvalPair:
    anchor_id: int
    other_id: int
    label: int


@dataclass
class PreferenceData:
    triplets: list[TripletRow]
    cooccurrence: list[PairRow]
    matching: list[MatchingRow]
    ranking: list[RankingRow]
    eval_pairs: list[EvalPair]


@dataclass
class LatentBank:
    """Corpus-wide deterministic parameters, derived from the seed only."""

    genre_centroids: np.ndarray  # (G, style_dim)
    bank_freqs: np.ndarray       # (sines,) Hz, shared by every genre
    genre_amp_w: np.ndarray      # (G, sines, style_dim)
    lang_freqs: np.ndarray       # (L, 2) Hz
    genre_token_w: np.ndarray    # (G, genre_pool, style_dim)
    lang_pools: list[np.ndarray]
    genre_pools: list[np.ndarray]
    shared_pool: np.ndarray


def token_string(i: int) -> str:
    return f"w{i:04d}"


def make_latent_bank(cfg: GeneratorConfig) -> LatentBank:
    rng = np.random.default_rng([cfg.seed, _BANK_STREAM, 0])
    g, l, k = cfg.num_genres, cfg.num_languages, cfg.style_dim
    centroids = rng.standard_normal((g, k))
    # log-uniform over a musical band; language tones sit above it.
    # One bank for all genres: spectral support alone identifies nothing,
    # genre only shows through the amplitude pattern laid over the bank.
    bank_freqs = np.exp(rng.uniform(np.log(100.0), np.log(2000.0),
                                    cfg.bank_sines))
    genre_amp_w = rng.standard_normal((g, cfg.bank_sines, k)) / np.sqrt(k)
    lang_freqs = rng.uniform(3000.0, 6000.0, (l, 2))
    genre_token_w = rng.standard_normal((g, cfg.genre_pool_size, k)) \
        / np.sqrt(k)

    ids = np.arange(cfg.vocab_size)
    lang_pools, genre_pools = [], []
    pos = 0
    for _ in range(l):
        lang_pools.append(ids[pos:pos + cfg.lang_pool_size])
        pos += cfg.lang_pool_size
    for _ in range(g):
        genre_pools.append(ids[pos:pos + cfg.genre_pool_size])
        pos += cfg.genre_pool_size
    return LatentBank(centroids, bank_freqs, genre_amp_w, lang_freqs,
                      genre_token_w, lang_pools, genre_pools, ids[pos:])


def song_rng(seed: int, song_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, song_id])


def _draw_song_meta(rng, cfg: GeneratorConfig, bank: LatentBank):
    genre = int(rng.integers(cfg.num_genres))
    language = int(rng.integers(cfg.num_languages))
    style = (cfg.style_coupling * bank.genre_centroids[genre]
             + cfg.style_noise * rng.standard_normal(cfg.style_dim))
    return genre, language, style


def _softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max())
    return z / z.sum()


def _draw_text(rng, cfg: GeneratorConfig, bank: LatentBank, genre: int,
               language: int, style: np.ndarray) -> TextDocument:
    token_p = _softmax(bank.genre_token_w[genre] @ style)
    genre_pool = bank.genre_pools[genre]
    lang_pool = bank.lang_pools[language]

    def mixed_token() -> str:
        r = rng.random()
        if r < 0.45:
            tid = rng.choice(genre_pool, p=token_p)
        elif r < 0.80:
            tid = rng.choice(lang_pool)
        else:
            tid = rng.choice(bank.shared_pool)
        return token_string(int(tid))

    lo, hi = cfg.title_tokens
    title = " ".join(mixed_token() for _ in range(rng.integers(lo, hi + 1)))
    lo, hi = cfg.artist_count
    n_artists = int(rng.integers(lo, hi + 1))
    artists = []
    for _ in range(n_artists):
        a_lo, a_hi = cfg.artist_tokens
        n_tok = int(rng.integers(a_lo, a_hi + 1))
        artists.append(" ".join(
            token_string(int(rng.choice(bank.shared_pool)))
            for _ in range(n_tok)))
    lo, hi = cfg.lyrics_tokens
    lyrics = " ".join(mixed_token() for _ in range(rng.integers(lo, hi + 1)))
    return TextDocument(title=title, artists=tuple(artists), lyrics=lyrics)


def _draw_wave(rng, cfg: GeneratorConfig, bank: LatentBank, genre: int,
               language: int, style: np.ndarray) -> np.ndarray:
    n = int(round(cfg.duration_s * cfg.sample_rate))
    t = np.arange(n, dtype=np.float64) / cfg.sample_rate
    amps = 0.08 + 0.08 * np.tanh(bank.genre_amp_w[genre] @ style)
    # per-song production variation; audio carries style only through this
    # distorted amplitude pattern while text stays an independent noisy view
    amps = amps * np.exp(cfg.amp_jitter * rng.standard_normal(cfg.bank_sines))
    phases = rng.uniform(0.0, 2.0 * np.pi, cfg.bank_sines)
    wave = amps @ np.sin(2.0 * np.pi * bank.bank_freqs[:, None]
                         * t[None, :] + phases[:, None])
    lang_phases = rng.uniform(0.0, 2.0 * np.pi, bank.lang_freqs.shape[1])
    wave = wave + cfg.lang_tone_amp * np.sin(
        2.0 * np.pi * bank.lang_freqs[language][:, None] * t[None, :]
        + lang_phases[:, None]).sum(axis=0)
    wave = wave + cfg.noise_std * rng.standard_normal(n)
    return wave.astype(np.float32)


def is_holdout(song_id: int, modulus: int) -> bool:
    return song_id % modulus == 0


@dataclass
class Corpus:
    """Song metadata, texts, and a waveform source (lazy for synthetic
    corpora, file-backed for loaded ones)."""

    sample_rate: int
    songs: dict[int, SongSpec]
    texts: dict[int, TextDocument]
    holdout_modulus: int
    _wave_fn: Callable[[int], np.ndarray]

    @property
    def song_ids(self) -> list[int]:
        return sorted(self.songs)

    @property
    def train_ids(self) -> list[int]:
        return [i for i in self.song_ids
                if not is_holdout(i, self.holdout_modulus)]

    @property
    def holdout_ids(self) -> list[int]:
        return [i for i in self.song_ids
                if is_holdout(i, self.holdout_modulus)]

    def waveform(self, song_id: int) -> np.ndarray:
        if song_id not in self.songs:
            raise DataError(f"unknown song_id {song_id}")
        return self._wave_fn(song_id)

    def style_matrix(self, ids) -> np.ndarray:
        rows = []
        for i in ids:
            style = self.songs[i].style
            if style is None:
                raise DataError("corpus has no style latents (loaded from "
                                "disk); regenerate synthetically")
            rows.append(style)
        return np.stack(rows)


def generate_corpus(cfg: GeneratorConfig) -> Corpus:
    """Build the synthetic corpus. Texts are materialized; waveforms are
    synthesized on demand from the per-song RNG stream."""
    bank = make_latent_bank(cfg)
    songs, texts = {}, {}
    for song_id in range(cfg.num_songs):
        rng = song_rng(cfg.seed, song_id)
        genre, language, style = _draw_song_meta(rng, cfg, bank)
        texts[song_id] = _draw_text(rng, cfg, bank, genre, language, style)
        songs[song_id] = SongSpec(song_id, genre, language, style)

    def wave_fn(song_id: int) -> np.ndarray:
        rng = song_rng(cfg.seed, song_id)
        genre, language, style = _draw_song_meta(rng, cfg, bank)
        _draw_text(rng, cfg, bank, genre, language, style)  # advance stream
        return _draw_wave(rng, cfg, bank, genre, language, style)

    return Corpus(cfg.sample_rate, songs, texts, cfg.holdout_modulus, wave_fn)


def _knn_table(styles: np.ndarray, ids: np.ndarray, k: int) -> dict:
    """ids -> array of the k nearest other ids, by style distance."""
    d2 = ((styles[:, None, :] - styles[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    k = min(k, len(ids) - 1)
    order = np.argpartition(d2, k - 1, axis=1)[:, :k]
    # sort the k retained columns by distance for stable nearest-first order
    table = {}
    for row, idx in enumerate(order):
        idx = idx[np.argsort(d2[row, idx], kind="stable")]
        table[int(ids[row])] = ids[idx]
    return table


def _nearest_ids(point: np.ndarray, styles: np.ndarray, ids: np.ndarray,
                 count: int) -> np.ndarray:
    d2 = ((styles - point[None, :]) ** 2).sum(axis=1)
    order = np.argsort(d2, kind="stable")[:count]
    return ids[order]


def generate_preference_data(corpus: Corpus,
                             cfg: GeneratorConfig) -> PreferenceData:
    """Simulated preference behavior over the corpus.

    Triplet recommendations follow style neighborhoods with probability
    1 - acceptance_noise, otherwise drift to a same-language song (a
    style-orthogonal but learnable factor). Co-occurrence sessions drift at
    the much higher session_mix_rate to the nearest different-genre songs,
    a consistent pull across semantic boundaries that recommendation
    acceptances respect.
    """
    all_ids = np.asarray(corpus.song_ids)
    train_ids = np.asarray(corpus.train_ids)
    hold_ids = np.asarray(corpus.holdout_ids)
    if len(train_ids) < 2 or len(hold_ids) < 1:
        raise DataError("corpus too small to split into train and held-out "
                        "songs")
    all_styles = corpus.style_matrix(all_ids)
    train_styles = corpus.style_matrix(train_ids)
    hold_styles = corpus.style_matrix(hold_ids)

    train_knn = _knn_table(train_styles, train_ids, cfg.num_neighbors)
    by_lang: dict[int, list[int]] = {}
    for i in train_ids:
        by_lang.setdefault(corpus.songs[int(i)].language, []).append(int(i))
    lang_ids = {l: np.asarray(v) for l, v in by_lang.items()}

    # --- stage-2 training triplets (exact duplicate pairs removed)
    # noisy acceptances still match the trigger's language: acceptance
    # correlates with style-orthogonal factors, so the noise is learnable
    # and pulls against style geometry rather than averaging out
    rng = np.random.default_rng([cfg.seed, _TRIPLET_STREAM, 0])
    triplets, seen = [], set()
    attempts = 0
    while len(triplets) < cfg.num_triplets and attempts < 50 * cfg.num_triplets:
        attempts += 1
        trig = int(rng.choice(train_ids))
        if rng.random() < cfg.acceptance_noise:
            rec = int(rng.choice(lang_ids[corpus.songs[trig].language]))
        else:
            rec = int(rng.choice(train_knn[trig]))
        if rec == trig or (trig, rec) in seen:
            continue
        seen.add((trig, rec))
        triplets.append(TripletRow(trig, rec))

    # --- co-occurrence sessions
    # session drift is variety-seeking: it hops to the closest songs of a
    # DIFFERENT genre, a consistent, learnable pull across the semantic
    # boundaries that recommendation acceptances respect; the
    # style-assortative steps use a loose neighborhood (three times wider
    # than recommendations follow)
    rng = np.random.default_rng([cfg.seed, _SESSION_STREAM, 0])
    session_knn = _knn_table(train_styles, train_ids, 3 * cfg.num_neighbors)
    genre_arr = np.asarray([corpus.songs[int(i)].genre for i in train_ids])
    d2 = ((train_styles[:, None, :] - train_styles[None, :, :]) ** 2).sum(2)
    d2[genre_arr[:, None] == genre_arr[None, :]] = np.inf
    k = min(cfg.num_neighbors, len(train_ids) - 1)
    near = np.argpartition(d2, k - 1, axis=1)[:, :k]
    cross_knn = {int(train_ids[r]): train_ids[near[r]]
                 for r in range(len(train_ids))}
    pairs = []
    while len(pairs) < cfg.num_cooccurrence:
        cur = int(rng.choice(train_ids))
        for _ in range(cfg.session_length - 1):
            if rng.random() < cfg.session_mix_rate:
                nxt = int(rng.choice(cross_knn[cur]))
            else:
                nxt = int(rng.choice(session_knn[cur]))
            if nxt != cur:
                pairs.append(PairRow(cur, nxt))
            cur = nxt
    pairs = pairs[: cfg.num_cooccurrence]

    # --- trigger/target matching task
    rng = np.random.default_rng([cfg.seed, _USER_STREAM, 0])
    matching = []
    pool_size = cfg.triggers_per_user + 15
    for user_id in range(cfg.num_users):
        anchor = corpus.style_matrix(
            [int(rng.choice(train_ids))])[0]  # anchor on a real song
        pref = (anchor
                + 0.25 * cfg.style_noise * rng.standard_normal(len(anchor)))
        pool = _nearest_ids(pref, train_styles, train_ids, pool_size)
        trig = rng.choice(pool, size=min(cfg.triggers_per_user, len(pool)),
                          replace=False)
        # eval targets are noise-free ground truth; acceptance noise belongs
        # to the training signal only
        target = int(_nearest_ids(pref, hold_styles, hold_ids, 1)[0])
        matching.append(MatchingRow(user_id, target,
                                    tuple(int(t) for t in trig)))

    # --- time-indexed ranking rows
    rng = np.random.default_rng([cfg.seed, _RANKING_STREAM, 0])
    ranking = []
    for time_idx in range(cfg.num_ranking_rows):
        user_id = int(rng.integers(cfg.num_users))
        anchor = corpus.style_matrix([int(rng.choice(train_ids))])[0]
        pref = anchor + 0.25 * cfg.style_noise * rng.standard_normal(
            len(anchor))
        near_pool = _nearest_ids(pref, train_styles, train_ids,
                                 cfg.num_neighbors + cfg.history_len)
        hist = rng.choice(near_pool, size=min(cfg.history_len, len(near_pool)),
                          replace=False)
        near = bool(rng.random() < 0.5)
        if near:
            candidate = int(rng.choice(near_pool))
        else:
            candidate = int(rng.choice(all_ids))
        p_click = 0.75 if near else 0.10
        click = int(rng.random() < p_click)
        if click:
            favor = int(rng.random() < (0.50 if near else 0.10))
        else:
            favor = 0
        ranking.append(RankingRow(user_id, time_idx, candidate, click, favor,
                                  tuple(int(h) for h in hist)))

    # --- held-out evaluation pairs, pure style neighborhoods
    rng = np.random.default_rng([cfg.seed, _EVAL_PAIR_STREAM, 0])
    all_knn = _knn_table(all_styles, all_ids, cfg.num_neighbors)
    trip_set = {(t.trigger_id, t.rec_id) for t in triplets}
    trip_set |= {(t.rec_id, t.trigger_id) for t in triplets}
    n_each = cfg.num_eval_pairs // 2
    eval_pairs = []
    guard = 0
    while len(eval_pairs) < n_each and guard < 50 * n_each:
        guard += 1
        anchor = int(rng.choice(hold_ids))
        partner = int(rng.choice(all_knn[anchor]))
        if (anchor, partner) in trip_set or partner == anchor:
            continue
        eval_pairs.append(EvalPair(anchor, partner, 1))
    guard = 0
    while len(eval_pairs) < 2 * n_each and guard < 50 * n_each:
        guard += 1
        anchor = int(rng.choice(hold_ids))
        partner = int(rng.choice(all_ids))
        if partner == anchor or partner in set(int(x) for x in
                                               all_knn[anchor]):
            continue
        eval_pairs.append(EvalPair(anchor, partner, 0))

    return PreferenceData(triplets, pairs, matching, ranking, eval_pairs)


# ---------------------------------------------------------------------------
# on-disk formats


def write_waveform(path, wave: np.ndarray, sample_rate: int) -> None:
    wave = np.ascontiguousarray(wave, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(WAVE_MAGIC)
        fh.write(struct.pack("<I", int(sample_rate)))
        fh.write(wave.tobytes())


def read_waveform(path) -> tuple[np.ndarray, int]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read waveform {path}: {exc}")
    if len(blob) < 8 or blob[:4] != WAVE_MAGIC:
        raise DataError(f"waveform {path} has a bad header")
    if (len(blob) - 8) % 4 != 0:
        raise DataError(f"waveform {path} payload is not float32-aligned")
    (sr,) = struct.unpack("<I", blob[4:8])
    return np.frombuffer(blob, dtype="<f4", offset=8).copy(), int(sr)


def _wave_rel(song_id: int) -> str:
    return os.path.join("waves", f"{song_id:06d}.f32")


def _text_rel(song_id: int) -> str:
    return os.path.join("texts", f"{song_id:06d}.json")


def write_corpus(corpus: Corpus, out_dir) -> None:
    """Write manifest.tsv plus per-song waveform and text files."""
    os.makedirs(os.path.join(out_dir, "waves"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "texts"), exist_ok=True)
    with open(os.path.join(out_dir, "manifest.tsv"), "w",
              encoding="utf-8") as fh:
        for song_id in corpus.song_ids:
            spec = corpus.songs[song_id]
            wav_rel, text_rel = _wave_rel(song_id), _text_rel(song_id)
            write_waveform(os.path.join(out_dir, wav_rel),
                           corpus.waveform(song_id), corpus.sample_rate)
            doc = corpus.texts[song_id]
            with open(os.path.join(out_dir, text_rel), "w",
                      encoding="utf-8") as tf:
                json.dump({"title": doc.title, "artists": list(doc.artists),
                           "lyrics": doc.lyrics}, tf)
            fh.write(f"{song_id}\t{spec.genre}\t{spec.language}\t"
                     f"{wav_rel}\t{text_rel}\n")


def load_corpus(data_dir, holdout_modulus: int = 10) -> Corpus:
    """Load a corpus directory written by write_corpus.

    Style latents are not persisted, so the loaded corpus supports training
    and evaluation but not preference-data generation.
    """
    manifest = os.path.join(data_dir, "manifest.tsv")
    try:
        with open(manifest, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read manifest {manifest}: {exc}")
    songs, texts, wave_paths = {}, {}, {}
    for ln, line in enumerate(lines, 1):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise DataError(f"{manifest}:{ln}: expected 5 tab-separated "
                            "columns")
        try:
            song_id, genre, language = (int(parts[0]), int(parts[1]),
                                        int(parts[2]))
        except ValueError:
            raise DataError(f"{manifest}:{ln}: ids and labels must be "
                            "integers")
        if song_id in songs:
            raise DataError(f"{manifest}:{ln}: duplicate song_id {song_id}")
        songs[song_id] = SongSpec(song_id, genre, language, None)
        wave_paths[song_id] = os.path.join(data_dir, parts[3])
        text_path = os.path.join(data_dir, parts[4])
        try:
            with open(text_path, "r", encoding="utf-8") as tf:
                obj = json.load(tf)
            texts[song_id] = TextDocument(
                title=str(obj["title"]),
                artists=tuple(str(a) for a in obj["artists"]),
                lyrics=str(obj["lyrics"]))
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"bad text file {text_path}: {exc}")
    if not songs:
        raise DataError(f"manifest {manifest} lists no songs")

    first_wave = next(iter(sorted(wave_paths)))
    _, sample_rate = read_waveform(wave_paths[first_wave])

    def wave_fn(song_id: int) -> np.ndarray:
        wave, sr = read_waveform(wave_paths[song_id])
        if sr != sample_rate:
            raise DataError(f"waveform {wave_paths[song_id]} sample rate "
                            f"{sr} != corpus rate {sample_rate}")
        return wave

    return Corpus(sample_rate, songs, texts, holdout_modulus, wave_fn)


def write_preference_data(pref: PreferenceData, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)

    with open(os.path.join(out_dir, "triplets.tsv"), "w",
              encoding="utf-8") as fh:
        for t in pref.triplets:
            fh.write(f"{t.trigger_id}\t{t.rec_id}\n")
    with open(os.path.join(out_dir, "cooccurrence.tsv"), "w",
              encoding="utf-8") as fh:
        for p in pref.cooccurrence:
            fh.write(f"{p.a_id}\t{p.b_id}\n")
    with open(os.path.join(out_dir, "matching.tsv"), "w",
              encoding="utf-8") as fh:
        for m in pref.matching:
            trig = ",".join(str(t) for t in m.trigger_ids)
            fh.write(f"{m.user_id}\t{m.target_id}\t{trig}\n")
    with open(os.path.join(out_dir, "ranking.tsv"), "w",
              encoding="utf-8") as fh:
        for r in pref.ranking:
            hist = ",".join(str(h) for h in r.history_ids)
            fh.write(f"{r.user_id}\t{r.time_idx}\t{r.candidate_id}\t"
                     f"{r.click}\t{r.favor}\t{hist}\n")
    with open(os.path.join(out_dir, "eval_pairs.tsv"), "w",
              encoding="utf-8") as fh:
        for e in pref.eval_pairs:
            fh.write(f"{e.anchor_id}\t{e.other_id}\t{e.label}\n")


def _read_rows(path, n_cols: int) -> list[list[str]]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}")
    rows = []
    for ln, line in enumerate(lines, 1):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != n_cols:
            raise DataError(f"{path}:{ln}: expected {n_cols} tab-separated "
                            f"columns, got {len(parts)}")
        rows.append(parts)
    return rows


def _to_int(value: str, where: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise DataError(f"{where}: expected an integer, got {value!r}")


def _id_list(value: str, where: str) -> tuple[int, ...]:
    if not value:
        return ()
    return tuple(_to_int(v, where) for v in value.split(","))


def load_triplets(path) -> list[TripletRow]:
    return [TripletRow(_to_int(a, path), _to_int(b, path))
            for a, b in _read_rows(path, 2)]


def load_cooccurrence(path) -> list[PairRow]:
    return [PairRow(_to_int(a, path), _to_int(b, path))
            for a, b in _read_rows(path, 2)]


def load_matching(path) -> list[MatchingRow]:
    return [MatchingRow(_to_int(u, path), _to_int(t, path),
                        _id_list(trig, path))
            for u, t, trig in _read_rows(path, 3)]


def load_ranking(path) -> list[RankingRow]:
    rows = []
    for u, ti, c, click, favor, hist in _read_rows(path, 6):
        rows.append(RankingRow(_to_int(u, path), _to_int(ti, path),
                               _to_int(c, path), _to_int(click, path),
                               _to_int(favor, path), _id_list(hist, path)))
    return rows


def load_eval_pairs(path) -> list[EvalPair]:
    pairs = []
    for a, b, label in _read_rows(path, 3):
        lab = _to_int(label, path)
        if lab not in (0, 1):
            raise DataError(f"{path}: pair label must be 0 or 1, got {lab}")
        pairs.append(EvalPair(_to_int(a, path), _to_int(b, path), lab))
    return pairs


def generate_dataset(cfg: GeneratorConfig, out_dir) -> tuple[Corpus,
                                                             PreferenceData]:
    """Generate and write the full dataset directory."""
    corpus = generate_corpus(cfg)
    pref = generate_preference_data(corpus, cfg)
    os.makedirs(out_dir, exist_ok=True)
    write_corpus(corpus, out_dir)
    write_preference_data(pref, out_dir)
    return corpus, pref
