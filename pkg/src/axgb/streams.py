"""Synthetic drifting streams (SEA, Agrawal, rotating hyperplane) and CSV ingestion.

Generators draw in fixed-size internal blocks, so the emitted sequence for a
given seed does not depend on how callers slice it (``take(10)`` twice yields
the same samples as ``take(20)`` once).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

BLOCK = 4096

SEA_THRESHOLDS = {1: 8.0, 2: 9.0, 3: 7.0, 4: 9.5}

AGRAWAL_FEATURES = ("salary", "commission", "age", "elevel", "car", "zipcode", "hvalue", "hyears", "loan")


class ConfigError(ValueError):
    """Invalid generator or stream configuration."""


class IngestionError(ValueError):
    """A CSV file could not be turned into samples."""


class Sample(NamedTuple):
    features: np.ndarray
    label: int


class SampleStream:
    """Base class: an iterator of :class:`Sample` with a vectorized ``take``."""

    n_features: int = 0
    length: int | None = None

    def take(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Next ``n`` samples as ``(X, y)``; fewer only if the stream ends."""
        raise NotImplementedError

    def __iter__(self) -> Iterator[Sample]:
        while True:
            X, y = self.take(BLOCK)
            for k in range(len(y)):
                yield Sample(X[k], int(y[k]))
            if len(y) < BLOCK:
                return


class _BlockGenerator(SampleStream):
    """Infinite generator that refills an internal buffer ``BLOCK`` rows at a time."""

    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)
        self._X = np.zeros((0, self.n_features))
        self._y = np.zeros(0, dtype=np.int64)
        self._pos = 0

    def _block(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def take(self, n: int):
        parts_X, parts_y = [], []
        need = n
        while need > 0:
            if self._pos >= len(self._y):
                self._X, self._y = self._block(BLOCK)
                self._pos = 0
            k = min(need, len(self._y) - self._pos)
            parts_X.append(self._X[self._pos:self._pos + k])
            parts_y.append(self._y[self._pos:self._pos + k])
            self._pos += k
            need -= k
        if not parts_y:
            return np.zeros((0, self.n_features)), np.zeros(0, dtype=np.int64)
        return np.concatenate(parts_X), np.concatenate(parts_y)


def _flip(rng, y, noise_prob):
    if noise_prob <= 0:
        return y
    flips = rng.random(len(y)) < noise_prob
    return np.where(flips, 1 - y, y)


# ---------------------------------------------------------------------------
# SEA
# ---------------------------------------------------------------------------


def sea_label(X, function_id: int) -> np.ndarray:
    theta = SEA_THRESHOLDS[function_id]
    X = np.atleast_2d(X)
    return (X[:, 0] + X[:, 1] <= theta).astype(np.int64)


class SEAGenerator(_BlockGenerator):
    """Three uniform features on ``[0, 10)``; label 1 iff ``f0 + f1 <= theta``."""

    n_features = 3

    def __init__(self, function_id: int = 1, noise_prob: float = 0.1, seed=None):
        if function_id not in SEA_THRESHOLDS:
            raise ConfigError(f"SEA function_id must be one of 1..4, got {function_id}")
        if not 0.0 <= noise_prob <= 1.0:
            raise ConfigError("noise_prob must be in [0, 1]")
        self.function_id = function_id
        self.noise_prob = noise_prob
        super().__init__(seed)

    def _block(self, n):
        X = self.rng.uniform(0.0, 10.0, size=(n, 3))
        y = _flip(self.rng, sea_label(X, self.function_id), self.noise_prob)
        return X, y


def sea_generate(function_id: int, noise_prob: float = 0.1, seed=None) -> SEAGenerator:
    return SEAGenerator(function_id, noise_prob, seed)


# ---------------------------------------------------------------------------
# Agrawal
# ---------------------------------------------------------------------------


def _between(v, lo, hi):
    return (lo <= v) & (v <= hi)


def agrawal_group_a(function_id: int, a: dict) -> np.ndarray:
    """Boolean mask of samples falling in group A (label 0)."""
    salary, commission, age = a["salary"], a["commission"], a["age"]
    elevel, hvalue, hyears, loan = a["elevel"], a["hvalue"], a["hyears"], a["loan"]
    young, middle = age < 40, (age >= 40) & (age < 60)
    old = age >= 60
    if function_id == 1:
        return young | old
    if function_id == 2:
        return (
            (young & _between(salary, 50000, 100000))
            | (middle & _between(salary, 75000, 125000))
            | (old & _between(salary, 25000, 75000))
        )
    if function_id == 3:
        return (
            (young & ((elevel == 0) | (elevel == 1)))
            | (middle & ((elevel >= 1) & (elevel <= 3)))
            | (old & ((elevel >= 2) & (elevel <= 4)))
        )
    if function_id == 4:
        young_lo = (elevel == 0) | (elevel == 1)
        mid_band = (elevel >= 1) & (elevel <= 3)
        old_band = (elevel >= 2) & (elevel <= 4)
        return (
            (young & young_lo & _between(salary, 25000, 75000))
            | (young & ~young_lo & _between(salary, 50000, 100000))
            | (middle & mid_band & _between(salary, 50000, 100000))
            | (middle & ~mid_band & _between(salary, 75000, 125000))
            | (old & old_band & _between(salary, 50000, 100000))
            | (old & ~old_band & _between(salary, 25000, 75000))
        )
    if function_id == 5:
        s_young = _between(salary, 50000, 100000)
        s_mid = _between(salary, 75000, 125000)
        s_old = _between(salary, 25000, 75000)
        return (
            (young & s_young & _between(loan, 100000, 300000))
            | (young & ~s_young & _between(loan, 200000, 400000))
            | (middle & s_mid & _between(loan, 200000, 400000))
            | (middle & ~s_mid & _between(loan, 300000, 500000))
            | (old & s_old & _between(loan, 300000, 500000))
            | (old & ~s_old & _between(loan, 100000, 300000))
        )
    total = salary + commission
    if function_id == 6:
        return (
            (young & _between(total, 50000, 100000))
            | (middle & _between(total, 75000, 125000))
            | (old & _between(total, 25000, 75000))
        )
    if function_id == 7:
        return 2.0 * total / 3.0 - loan / 5.0 - 20000.0 > 0
    if function_id == 8:
        return 2.0 * total / 3.0 - 5000.0 * elevel - 20000.0 > 0
    if function_id == 9:
        return 2.0 * total / 3.0 - 5000.0 * elevel - loan / 5.0 - 10000.0 > 0
    if function_id == 10:
        equity = np.where(hyears >= 20, hvalue * (hyears - 20.0) / 10.0, 0.0)
        return 2.0 * total / 3.0 - 5000.0 * elevel + equity / 5.0 - 10000.0 > 0
    raise ConfigError(f"Agrawal function_id must be in 1..10, got {function_id}")


def agrawal_label(X, function_id: int) -> np.ndarray:
    X = np.atleast_2d(X)
    attrs = {name: X[:, k] for k, name in enumerate(AGRAWAL_FEATURES)}
    return np.where(agrawal_group_a(function_id, attrs), 0, 1).astype(np.int64)


class AgrawalGenerator(_BlockGenerator):
    """Nine loan-applicant attributes; nominal ones (elevel, car, zipcode) integer-coded.

    Labels come from the clean attributes; ``perturbation`` then shifts numeric
    attributes by up to that fraction of their range, so perturbed streams
    carry feature noise relative to the label rule.
    """

    n_features = 9

    def __init__(self, function_id: int = 1, perturbation: float = 0.05, seed=None):
        if function_id not in range(1, 11):
            raise ConfigError(f"Agrawal function_id must be in 1..10, got {function_id}")
        if not 0.0 <= perturbation <= 1.0:
            raise ConfigError("perturbation must be in [0, 1]")
        self.function_id = function_id
        self.perturbation = perturbation
        super().__init__(seed)

    def _perturb(self, v, span, lo, hi):
        shift = span * (2.0 * (self.rng.random(len(v)) - 0.5)) * self.perturbation
        return np.clip(v + shift, lo, hi)

    def _block(self, n):
        rng = self.rng
        salary = rng.uniform(20000.0, 150000.0, n)
        commission = np.where(salary >= 75000.0, 0.0, rng.uniform(10000.0, 75000.0, n))
        age = rng.integers(20, 81, n).astype(np.float64)
        elevel = rng.integers(0, 5, n).astype(np.float64)
        car = rng.integers(1, 21, n).astype(np.float64)
        zipcode = rng.integers(0, 9, n).astype(np.float64)
        hvalue = (9.0 - zipcode) * 100000.0 * rng.uniform(0.5, 1.5, n)
        hyears = rng.integers(1, 31, n).astype(np.float64)
        loan = rng.uniform(0.0, 500000.0, n)
        X = np.column_stack([salary, commission, age, elevel, car, zipcode, hvalue, hyears, loan])
        y = agrawal_label(X, self.function_id)
        if self.perturbation > 0:
            X[:, 0] = self._perturb(salary, 130000.0, 20000.0, 150000.0)
            X[:, 1] = np.where(commission > 0, self._perturb(commission, 65000.0, 10000.0, 75000.0), 0.0)
            X[:, 2] = np.round(self._perturb(age, 60.0, 20.0, 80.0))
            base = (9.0 - zipcode) * 100000.0
            X[:, 6] = np.clip(hvalue + base * 2.0 * (rng.random(n) - 0.5) * self.perturbation, 0.0, None)
            X[:, 7] = np.round(self._perturb(hyears, 29.0, 1.0, 30.0))
            X[:, 8] = self._perturb(loan, 500000.0, 0.0, 500000.0)
        return X, y


def agrawal_generate(function_id: int, perturbation: float = 0.05, seed=None) -> AgrawalGenerator:
    return AgrawalGenerator(function_id, perturbation, seed)


# ---------------------------------------------------------------------------
# rotating hyperplane
# ---------------------------------------------------------------------------


class HyperplaneGenerator(_BlockGenerator):
    """Label 1 iff ``w . x >= sum(w) / 2`` with weights that move every sample.

    After each sample every drifting weight moves by ``drift_magnitude`` in its
    current direction, and each direction reverses with probability
    ``sigma``.
    """

    def __init__(self, dims: int = 10, drift_magnitude: float = 0.001, noise_prob: float = 0.05,
                 seed=None, n_drift_features: int | None = None, sigma: float = 0.1):
        if dims < 2:
            raise ConfigError("hyperplane needs dims >= 2")
        if drift_magnitude < 0:
            raise ConfigError("drift_magnitude must be >= 0")
        if not 0.0 <= noise_prob <= 1.0:
            raise ConfigError("noise_prob must be in [0, 1]")
        self.n_features = dims
        self.drift_magnitude = drift_magnitude
        self.noise_prob = noise_prob
        self.n_drift = dims if n_drift_features is None else int(n_drift_features)
        self.sigma = sigma
        super().__init__(seed)
        self.weights = self.rng.random(dims)
        self.directions = np.where(self.rng.random(self.n_drift) < 0.5, -1.0, 1.0)

    def _block(self, n):
        rng = self.rng
        X = rng.random((n, self.n_features))
        W = np.repeat(self.weights[None, :], n, axis=0)
        if self.drift_magnitude > 0 and self.n_drift > 0:
            flips = np.where(rng.random((n, self.n_drift)) < self.sigma, -1.0, 1.0)
            # direction used at step s is the one before the flip drawn at s
            dirs = self.directions * np.vstack([np.ones((1, self.n_drift)), np.cumprod(flips, axis=0)[:-1]])
            steps = np.cumsum(dirs, axis=0) * self.drift_magnitude
            W[1:, :self.n_drift] += steps[:-1]
            self.weights[:self.n_drift] += steps[-1]
            self.directions = self.directions * np.prod(flips, axis=0)
        y = (np.einsum("ij,ij->i", X, W) >= 0.5 * W.sum(axis=1)).astype(np.int64)
        return X, _flip(rng, y, self.noise_prob)


def hyperplane_generate(dims: int = 10, drift_magnitude: float = 0.001, noise_prob: float = 0.05,
                        seed=None) -> HyperplaneGenerator:
    return HyperplaneGenerator(dims, drift_magnitude, noise_prob, seed)


# ---------------------------------------------------------------------------
# drift composition
# ---------------------------------------------------------------------------


@dataclass
class StreamSpec:
    generator: str = "SEA"
    length: int = 100_000
    concept_sequence: Sequence[int] = (1,)
    drift_positions: Sequence[int] = ()
    drift_widths: Sequence[int] = ()
    noise_prob: float = 0.1
    seed: int = 1
    # generator-specific knobs
    perturbation: float = 0.05
    dims: int = 10
    drift_magnitude: float = 0.001
    name: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.generator = self.generator.upper()
        self.concept_sequence = tuple(int(c) for c in self.concept_sequence)
        self.drift_positions = tuple(int(p) for p in self.drift_positions)
        if not self.drift_widths:
            self.drift_widths = (0,) * len(self.drift_positions)
        self.drift_widths = tuple(int(w) for w in self.drift_widths)
        self.validate()

    def validate(self):
        if self.generator not in ("SEA", "AGRAWAL", "HYPERPLANE"):
            raise ConfigError(f"unknown generator {self.generator!r}")
        if self.length < 0:
            raise ConfigError("length must be >= 0")
        if len(self.concept_sequence) != len(self.drift_positions) + 1:
            raise ConfigError("concept_sequence must have one more entry than drift_positions")
        if len(self.drift_widths) != len(self.drift_positions):
            raise ConfigError("drift_widths must match drift_positions")
        if any(b <= a for a, b in zip(self.drift_positions, self.drift_positions[1:])):
            raise ConfigError("drift positions must be strictly increasing")
        if any(p >= self.length or p < 0 for p in self.drift_positions):
            raise ConfigError("drift positions must lie inside the stream")
        if any(w < 0 for w in self.drift_widths):
            raise ConfigError("drift widths must be >= 0")
        if not 0.0 <= self.noise_prob <= 1.0:
            raise ConfigError("noise_prob must be in [0, 1]")

    @property
    def n_features(self) -> int:
        return {"SEA": 3, "AGRAWAL": 9, "HYPERPLANE": self.dims}[self.generator]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "generator": self.generator,
            "length": self.length,
            "concept_sequence": list(self.concept_sequence),
            "drift_positions": list(self.drift_positions),
            "drift_widths": list(self.drift_widths),
            "noise_prob": self.noise_prob,
            "perturbation": self.perturbation,
            "dims": self.dims,
            "drift_magnitude": self.drift_magnitude,
            "seed": self.seed,
        }


def make_concept(spec: StreamSpec, function_id: int, seed) -> _BlockGenerator:
    if spec.generator == "SEA":
        return SEAGenerator(function_id, spec.noise_prob, seed)
    if spec.generator == "AGRAWAL":
        return AgrawalGenerator(function_id, spec.perturbation, seed)
    return HyperplaneGenerator(spec.dims, spec.drift_magnitude, spec.noise_prob, seed)


def mixing_probability(t, center: float, width: float):
    """Probability of drawing from the next concept at index ``t``."""
    t = np.asarray(t, dtype=np.float64)
    if width <= 0:
        return (t >= center).astype(np.float64)
    z = -4.0 * (t - center) / width
    return 1.0 / (1.0 + np.exp(np.clip(z, -700, 700)))


def concept_probabilities(spec: StreamSpec, t):
    """``(j, p)``: nearest drift index and the probability of concept ``j + 1``."""
    t = np.asarray(t, dtype=np.float64)
    centers = np.asarray(spec.drift_positions, dtype=np.float64)
    if centers.size == 0:
        return np.zeros(t.shape, dtype=np.int64), np.zeros(t.shape)
    j = np.argmin(np.abs(t[..., None] - centers), axis=-1)
    widths = np.asarray(spec.drift_widths, dtype=np.float64)[j]
    p = np.empty(t.shape)
    abrupt = widths <= 0
    p[abrupt] = (t[abrupt] >= centers[j][abrupt]).astype(np.float64)
    z = -4.0 * (t[~abrupt] - centers[j][~abrupt]) / widths[~abrupt]
    p[~abrupt] = 1.0 / (1.0 + np.exp(np.clip(z, -700, 700)))
    return j, p


class DriftStream(SampleStream):
    """Finite stream of ``spec.length`` samples mixing concepts around drift points."""

    def __init__(self, spec: StreamSpec):
        spec.validate()
        self.spec = spec
        self.length = spec.length
        self.n_features = spec.n_features
        seeds = np.random.SeedSequence(spec.seed).spawn(len(spec.concept_sequence) + 1)
        self._mix_seed = seeds[0]
        self.concepts = [make_concept(spec, fid, s) for fid, s in zip(spec.concept_sequence, seeds[1:])]
        self._t = 0
        self._choice = np.zeros(0, dtype=np.int64)
        self._choice_start = 0

    def _choices(self, start, n):
        # each BLOCK of concept choices has its own seed, so lookups in any
        # order see the same sequence
        out = np.empty(n, dtype=np.int64)
        filled = 0
        while filled < n:
            t = start + filled
            if not (self._choice_start <= t < self._choice_start + len(self._choice)):
                self._choice_start = t - (t % BLOCK)
                ts = np.arange(self._choice_start, self._choice_start + BLOCK)
                j, p = concept_probabilities(self.spec, ts)
                block_seed = np.random.SeedSequence(self._mix_seed.entropy,
                                                    spawn_key=self._mix_seed.spawn_key + (t // BLOCK,))
                self._choice = j + (np.random.default_rng(block_seed).random(BLOCK) < p)
            off = t - self._choice_start
            k = min(n - filled, len(self._choice) - off)
            out[filled:filled + k] = self._choice[off:off + k]
            filled += k
        return out

    def take(self, n):
        n = max(0, min(n, self.length - self._t))
        X = np.empty((n, self.n_features))
        y = np.empty(n, dtype=np.int64)
        if n:
            choice = self._choices(self._t, n)
            for c in np.unique(choice):
                rows = np.flatnonzero(choice == c)
                Xc, yc = self.concepts[c].take(len(rows))
                X[rows], y[rows] = Xc, yc
        self._t += n
        return X, y

    def concept_at(self, t: int) -> int:
        return int(self._choices(t, 1)[0]) if t < self.length else -1


def compose_drift(spec: StreamSpec) -> DriftStream:
    return DriftStream(spec)


PRESETS = ("SEA_a", "SEA_g", "AGR_a", "AGR_g", "HYPER_f")


def preset_spec(name: str, length: int = 1_000_000, seed: int = 1, **overrides) -> StreamSpec:
    """Benchmark streams: four concepts with drifts at 25/50/75% of the stream.

    Gradual variants use a drift width of 10% of the stream length.
    """
    key = name.upper()
    quarters = (length // 4, length // 2, 3 * length // 4)
    gradual = max(1, length // 10)
    if key in ("SEA_A", "SEA_G"):
        spec = dict(generator="SEA", concept_sequence=(1, 2, 3, 4), drift_positions=quarters,
                    drift_widths=(gradual,) * 3 if key.endswith("G") else (0, 0, 0), noise_prob=0.1)
    elif key in ("AGR_A", "AGR_G"):
        spec = dict(generator="AGRAWAL", concept_sequence=(1, 2, 3, 4), drift_positions=quarters,
                    drift_widths=(gradual,) * 3 if key.endswith("G") else (0, 0, 0), noise_prob=0.0,
                    perturbation=0.05)
    elif key == "HYPER_F":
        spec = dict(generator="HYPERPLANE", concept_sequence=(1,), drift_positions=(), dims=10,
                    drift_magnitude=0.001, noise_prob=0.05)
    else:
        raise ConfigError(f"unknown stream preset {name!r}; choose from {', '.join(PRESETS)}")
    spec.update(overrides)
    return StreamSpec(length=length, seed=seed, name=name, **spec)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


class CsvStream(SampleStream):
    """Row-by-row reader; memory use does not grow with the file length.

    The class column is the last one unless ``class_column`` says otherwise.
    Class cells are mapped through ``class_map`` when given, otherwise they
    must parse as 0 or 1.  ``header=None`` auto-detects a header row.
    """

    def __init__(self, path, class_column: int = -1, class_map: dict | None = None, header: bool | None = None):
        self.path = str(path)
        self.class_column = class_column
        self.class_map = {str(k): int(v) for k, v in (class_map or {}).items()}
        self.header = header
        self.columns: list[str] | None = None
        try:
            self._fh = open(self.path, newline="", encoding="utf-8")
        except OSError as exc:
            raise IngestionError(f"cannot open CSV file {self.path}: {exc.strerror}") from exc
        first = next(csv.reader(self._fh), None)
        self.n_features = len(first) - 1 if first else 0
        self._fh.seek(0)
        self._rows = self._iter_rows()

    def _iter_rows(self):
        reader = csv.reader(self._fh)
        width = None
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1:
                cls = self.class_column % len(row)
                is_header = self.header
                if is_header is None:
                    is_header = any(not _is_number(c) for k, c in enumerate(row) if k != cls)
                if is_header:
                    self.columns = [c.strip() for c in row]
                    width = len(row)
                    continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise IngestionError(f"{self.path}: row {lineno} has {len(row)} columns, expected {width}")
            yield lineno, row

    def _parse(self, lineno, row):
        cls = self.class_column % len(row)
        feats = []
        for k, cell in enumerate(row):
            if k == cls:
                continue
            try:
                feats.append(float(cell))
            except ValueError:
                raise IngestionError(
                    f"{self.path}: non-numeric value {cell!r} at row {lineno}, column {k + 1}"
                ) from None
        raw = row[cls].strip()
        if self.class_map:
            if raw not in self.class_map:
                raise IngestionError(f"{self.path}: unmapped class value {raw!r} at row {lineno}")
            label = self.class_map[raw]
        else:
            try:
                label = float(raw)
            except ValueError:
                label = None
            if label not in (0.0, 1.0):
                raise IngestionError(
                    f"{self.path}: class value {raw!r} at row {lineno} is not 0/1; pass a class mapping"
                )
        if label not in (0, 1):
            raise IngestionError(f"{self.path}: class mapping must produce 0 or 1 (row {lineno})")
        return feats, int(label)

    def take(self, n):
        feats, labels = [], []
        for _ in range(n):
            nxt = next(self._rows, None)
            if nxt is None:
                self._fh.close()
                break
            f, lab = self._parse(*nxt)
            feats.append(f)
            labels.append(lab)
        if not labels:
            return np.zeros((0, self.n_features)), np.zeros(0, dtype=np.int64)
        return np.asarray(feats, dtype=np.float64), np.asarray(labels, dtype=np.int64)


def load_csv(path, class_column: int = -1, class_map: dict | None = None, header: bool | None = None) -> CsvStream:
    return CsvStream(path, class_column, class_map, header)


def write_csv(stream: SampleStream, path, n: int | None = None, chunk: int = BLOCK) -> int:
    """Materialize ``n`` samples (or the whole finite stream) with an ``f0..fN,class`` header."""
    total = stream.length if n is None else n
    if total is None:
        raise ConfigError("an infinite stream needs an explicit sample count")
    written = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join([f"f{k}" for k in range(stream.n_features)] + ["class"]) + "\n")
        while written < total:
            X, y = stream.take(min(chunk, total - written))
            if not len(y):
                break
            lines = [",".join([repr(float(v)) for v in row] + [str(int(lab))]) for row, lab in zip(X, y)]
            fh.write("\n".join(lines) + "\n")
            written += len(y)
    return written

