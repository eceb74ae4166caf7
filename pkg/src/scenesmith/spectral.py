"""Spectral curves, material libraries, band resampling and SAM matching."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class CoverageError(ValueError):
    """A sensor band has no overlap with a spectral curve."""


@dataclass(frozen=True)
class SpectralCurve:
    wavelengths: np.ndarray
    reflectance: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.wavelengths, dtype=float)
        r = np.asarray(self.reflectance, dtype=float)
        if w.ndim != 1 or w.shape != r.shape:
            raise ValueError("wavelengths and reflectance must be parallel 1D arrays")
        if len(w) < 2:
            raise ValueError("a curve needs at least 2 samples")
        if not np.all(np.isfinite(w)) or not np.all(np.isfinite(r)):
            raise ValueError("curve values must be finite")
        if np.any(np.diff(w) <= 0):
            raise ValueError("wavelengths must be strictly increasing")
        if np.any(r < -0.01) or np.any(r > 1.5):
            raise ValueError("reflectance outside [-0.01, 1.5]")
        object.__setattr__(self, "wavelengths", w)
        object.__setattr__(self, "reflectance", np.maximum(r, 0.0))

    def __eq__(self, other):
        return (isinstance(other, SpectralCurve)
                and np.array_equal(self.wavelengths, other.wavelengths)
                and np.array_equal(self.reflectance, other.reflectance))

    __hash__ = None


@dataclass(frozen=True)
class BandSet:
    """Sensor bands as (low, high) wavelength edges in nm."""

    bands: tuple[tuple[float, float], ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        b = tuple((float(lo), float(hi)) for lo, hi in self.bands)
        if not b:
            raise ValueError("empty band set")
        for lo, hi in b:
            if not lo < hi:
                raise ValueError(f"band ({lo}, {hi}) has low >= high")
        if any(b[i][0] > b[i + 1][0] for i in range(len(b) - 1)):
            raise ValueError("bands must be ordered by low edge")
        object.__setattr__(self, "bands", b)

    def __len__(self):
        return len(self.bands)


WORLDVIEW3_VNIR = BandSet(
    ((400, 450), (450, 510), (510, 580), (585, 625),
     (630, 690), (705, 745), (770, 895), (860, 1040)),
    ("coastal", "blue", "green", "yellow", "red", "red_edge", "nir1", "nir2"),
)


@dataclass(frozen=True)
class MaterialRecord:
    id: int
    name: str
    class_tags: tuple[str, ...]
    curve: SpectralCurve

    def has_tag(self, tag: str) -> bool:
        return tag.lower() in (t.lower() for t in self.class_tags)


@dataclass
class MaterialLibrary:
    records: list[MaterialRecord]
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.records = sorted(self.records, key=lambda r: r.id)
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("material ids must be unique")
        self._by_id = {r.id: r for r in self.records}

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def get(self, material_id: int) -> MaterialRecord:
        return self._by_id[material_id]

    def find(self, key) -> MaterialRecord:
        """Look a record up by id, exact name, or (first) class tag."""
        if isinstance(key, (int, np.integer)):
            return self._by_id[int(key)]
        for r in self.records:
            if r.name == key:
                return r
        for r in self.records:
            if r.has_tag(key):
                return r
        raise KeyError(key)

    def resampled(self, bands: BandSet) -> np.ndarray:
        """Library spectra resampled to ``bands``; rows follow record order. Cached."""
        if bands not in self._cache:
            self._cache[bands] = np.array([resample_to_bands(r.curve, bands) for r in self.records])
        return self._cache[bands]


def resample_to_bands(curve: SpectralCurve, bands: BandSet) -> np.ndarray:
    """Band-average reflectance of a piecewise-linear curve.

    Each band value is the trapezoid integral of the interpolated curve over
    the part of [low, high] the curve covers, divided by that covered width.
    """
    w, r = curve.wavelengths, curve.reflectance
    out = np.empty(len(bands))
    for i, (lo, hi) in enumerate(bands.bands):
        a, b = max(lo, w[0]), min(hi, w[-1])
        if not a < b:
            raise CoverageError(f"curve [{w[0]}, {w[-1]}] nm does not cover band ({lo}, {hi})")
        inner = w[(w > a) & (w < b)]
        knots = np.concatenate([[a], inner, [b]])
        vals = np.interp(knots, w, r)
        out[i] = np.sum((vals[1:] + vals[:-1]) * np.diff(knots)) / 2.0 / (b - a)
    return out


def _unit_rows(a: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise ValueError("spectral angle undefined for zero or non-finite vectors")
    return a / norms


def spectral_angle(x, r) -> float:
    """Angle in radians between two spectra (SAM).

    Equal to ``arccos(x.r / (|x||r|))`` but evaluated as
    ``2 atan2(|x^ - r^|, |x^ + r^|)`` on the unit vectors, which stays
    accurate near 0 and pi where arccos loses half its digits.
    """
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    if x.shape != r.shape or x.ndim != 1:
        raise ValueError("spectra must be 1D vectors of equal length")
    xu, ru = _unit_rows(x), _unit_rows(r)
    return float(2.0 * math.atan2(np.linalg.norm(xu - ru), np.linalg.norm(xu + ru)))


def spectral_angles(pixels, references) -> np.ndarray:
    """Pairwise SAM angles, shape ``(len(pixels), len(references))``."""
    p = _unit_rows(np.atleast_2d(np.asarray(pixels, dtype=float)))
    q = _unit_rows(np.atleast_2d(np.asarray(references, dtype=float)))
    diff = np.linalg.norm(p[:, None, :] - q[None, :, :], axis=-1)
    summ = np.linalg.norm(p[:, None, :] + q[None, :, :], axis=-1)
    return 2.0 * np.arctan2(diff, summ)


def paired_spectral_angles(x, r) -> np.ndarray:
    """Row-wise SAM angles between two ``(N, B)`` arrays, shape ``(N,)``."""
    p = _unit_rows(np.atleast_2d(np.asarray(x, dtype=float)))
    q = _unit_rows(np.atleast_2d(np.asarray(r, dtype=float)))
    if p.shape != q.shape:
        raise ValueError("spectra arrays must have equal shapes")
    return 2.0 * np.arctan2(np.linalg.norm(p - q, axis=-1), np.linalg.norm(p + q, axis=-1))


def match_material(x, library: MaterialLibrary, bands: BandSet) -> tuple[int, float]:
    """Best SAM match: ``(material id, angle)``; ties go to the lowest id."""
    if len(library) == 0:
        raise ValueError("material library is empty")
    angles = spectral_angles(x, library.resampled(bands))[0]
    best = int(np.argmin(angles))  # records are sorted by id
    return library.records[best].id, float(angles[best])


def match_materials(pixels, library: MaterialLibrary, bands: BandSet):
    """Vectorized :func:`match_material` for many spectra; returns (ids, angles)."""
    if len(library) == 0:
        raise ValueError("material library is empty")
    refs = library.resampled(bands)
    chunk = max(1, 4_000_000 // refs.size)
    ids = np.array([r.id for r in library.records])
    pixels = np.atleast_2d(np.asarray(pixels, dtype=float))
    out_i = np.empty(len(pixels), dtype=np.int64)
    out_a = np.empty(len(pixels))
    for s in range(0, len(pixels), chunk):
        ang = spectral_angles(pixels[s:s + chunk], refs)
        k = np.argmin(ang, axis=1)
        out_i[s:s + chunk] = ids[k]
        out_a[s:s + chunk] = ang[np.arange(len(k)), k]
    return out_i, out_a


# --- scene-specific calibration -------------------------------------------------

@dataclass(frozen=True)
class CalibrationAdjustment:
    gain: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gain, dtype=float)
        o = np.asarray(self.offset, dtype=float)
        if g.shape != o.shape or g.ndim != 1:
            raise ValueError("gain and offset must be parallel 1D arrays")
        if not np.all(np.isfinite(g)) or np.any(g <= 0):
            raise ValueError("gains must be finite and positive")
        if not np.all(np.isfinite(o)):
            raise ValueError("offsets must be finite")
        object.__setattr__(self, "gain", g)
        object.__setattr__(self, "offset", o)

    @classmethod
    def identity(cls, n: int) -> "CalibrationAdjustment":
        return cls(np.ones(n), np.zeros(n))

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Apply to an array whose last axis is bands; clamps at 0."""
        return np.maximum(values * self.gain + self.offset, 0.0)


def fit_calibration(samples, reference) -> CalibrationAdjustment:
    """Per-band affine correction mapping image samples onto reference spectra.

    Parameters
    ----------
    samples : (N, B) array
        Image spectra from pixels of known material, N >= 2.
    reference : (B,) or (N, B) array
        Reference spectrum of that material, or one reference per sample when
        pixels of several known materials are pooled.

    For each band, ``gain * s + offset`` is fit to the references by least
    squares. A band where either the samples or the references do not vary
    cannot identify a slope; it falls back to gain 1 and
    ``offset = mean(ref) - mean(s)``. The same fallback is used when the
    slope comes out non-positive.
    """
    s = np.atleast_2d(np.asarray(samples, dtype=float))
    if s.shape[0] < 2:
        raise ValueError("need at least 2 samples to fit a calibration")
    ref = np.asarray(reference, dtype=float)
    if ref.ndim == 1:
        ref = np.broadcast_to(ref, s.shape)
    if ref.shape != s.shape:
        raise ValueError(f"reference shape {ref.shape} incompatible with samples {s.shape}")
    gain = np.ones(s.shape[1])
    offset = np.zeros(s.shape[1])
    for b in range(s.shape[1]):
        sb, rb = s[:, b], ref[:, b]
        ds = sb - sb.mean()
        dr = rb - rb.mean()
        sxx = float(ds @ ds)
        scale = max(1.0, float(np.abs(sb).max()) ** 2) * len(sb)
        if sxx <= 1e-24 * scale or float(dr @ dr) <= 1e-24 * scale:
            gain[b], offset[b] = 1.0, rb.mean() - sb.mean()
            continue
        g = float(ds @ dr) / sxx
        if g <= 0:
            log.warning("band %d: non-positive calibration slope %.4g, using offset only", b, g)
            gain[b], offset[b] = 1.0, rb.mean() - sb.mean()
            continue
        gain[b], offset[b] = g, rb.mean() - g * sb.mean()
    return CalibrationAdjustment(gain, offset)


# --- library files --------------------------------------------------------------

def parse_spectrum_text(text: str):
    """Parse a library spectrum file into ``(name, tags, curve)``.

    Header lines ``Name: ...`` and ``Class: tag1, tag2`` are optional; data
    lines are ``wavelength_nm reflectance``. Reflectance is treated as percent
    (and divided by 100) when any value exceeds 2.
    """
    name, tags, rows = None, (), []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        low = line.lower()
        if low.startswith("name:"):
            name = line.split(":", 1)[1].strip()
            continue
        if low.startswith("class:"):
            tags = tuple(t.strip() for t in line.split(":", 1)[1].split(",") if t.strip())
            continue
        parts = line.replace(",", " ").split()
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except (ValueError, IndexError):
            continue  # other free-form header lines
    if len(rows) < 2:
        raise ValueError("spectrum has fewer than 2 data rows")
    data = np.array(sorted(rows))
    w, r = data[:, 0], data[:, 1]
    if np.any(r > 2.0):
        r = r / 100.0
    return name, tags, SpectralCurve(w, r)


def load_library(directory) -> MaterialLibrary:
    """Load every ``*.txt`` spectrum in a directory; ids follow sorted file names."""
    paths = sorted(Path(directory).glob("*.txt"))
    if not paths:
        raise ValueError(f"no spectra found in {directory}")
    records = []
    for i, p in enumerate(paths):
        name, tags, curve = parse_spectrum_text(p.read_text(encoding="utf-8", errors="replace"))
        records.append(MaterialRecord(i, name or p.stem, tags, curve))
    return MaterialLibrary(records)


def format_reflectance(curve: SpectralCurve) -> str:
    return "".join(f"{w!r} {r!r}\n" for w, r in zip(curve.wavelengths.tolist(), curve.reflectance.tolist()))


def write_spectrum_file(record: MaterialRecord, path) -> None:
    text = f"Name: {record.name}\nClass: {', '.join(record.class_tags)}\n" + format_reflectance(record.curve)
    Path(path).write_text(text, encoding="utf-8")


def read_reflectance(path) -> SpectralCurve:
    data = np.loadtxt(path, ndmin=2)
    return SpectralCurve(data[:, 0], data[:, 1])

