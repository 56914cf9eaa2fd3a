"""Geometric and photometric normalization of face and ear images.

Images are aligned by a similarity transform (rotation + uniform scale +
translation) that carries the annotated landmarks onto fixed canonical
positions, cropped to a canonical frame, and histogram-equalized. All
functions are pure; none mutate their inputs.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateLandmarks, ManifestError

FACE_LABELS = ("left_eye", "right_eye", "mouth_center")
EAR_LABELS = ("triangular_fossa", "antitragus")

_LABELS = {"face": FACE_LABELS, "ear": EAR_LABELS}


@dataclass(frozen=True)
class LandmarkSet:
    """Labeled 2D points in source-image pixel space (x right, y down).

    Face sets carry exactly left_eye / right_eye / mouth_center; ear sets
    exactly triangular_fossa / antitragus.
    """

    modality: str
    points: dict

    def __post_init__(self):
        if self.modality not in _LABELS:
            raise ValueError(f"unknown modality {self.modality!r}")
        expected = set(_LABELS[self.modality])
        got = set(self.points)
        if got != expected:
            raise ValueError(
                f"{self.modality} landmarks must be exactly {sorted(expected)}, "
                f"got {sorted(got)}")

    def ordered(self):
        """Points as complex numbers x + iy, in canonical label order."""
        labels = _LABELS[self.modality]
        return labels, np.array(
            [complex(*self.points[lb]) for lb in labels])


@dataclass(frozen=True)
class CanonicalLayout:
    """Canonical frame geometry: crop size plus fixed landmark targets."""

    width: int = 200
    height: int = 220
    face: dict = field(default_factory=lambda: {
        "left_eye": (60.0, 70.0),
        "right_eye": (140.0, 70.0),
        "mouth_center": (100.0, 170.0),
    })
    ear: dict = field(default_factory=lambda: {
        "triangular_fossa": (100.0, 60.0),
        "antitragus": (100.0, 160.0),
    })

    def positions(self, modality: str) -> dict:
        if modality == "face":
            return self.face
        if modality == "ear":
            return self.ear
        raise ValueError(f"unknown modality {modality!r}")


DEFAULT_LAYOUT = CanonicalLayout()


def _similarity_fit(src: np.ndarray, dst: np.ndarray):
    """Least-squares similarity transform z -> a*z + b (complex form).

    Exact for two points; least-squares for three or more. Rotation and
    uniform scale only, never a reflection.
    """
    src_mean = src.mean()
    dst_mean = dst.mean()
    zc = src - src_mean
    wc = dst - dst_mean
    denom = np.sum((zc * np.conj(zc)).real)
    if denom <= 0.0:
        raise DegenerateLandmarks("all landmarks coincide")
    a = np.sum(wc * np.conj(zc)) / denom
    if abs(a) < 1e-12:
        raise DegenerateLandmarks("fitted scale is zero")
    b = dst_mean - a * src_mean
    return a, b


def _bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample img at float coords, zero outside the source plane."""
    h, w = img.shape
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    dx = xs - x0
    dy = ys - y0

    out = np.zeros(xs.shape, dtype=np.float64)
    vals = img.astype(np.float64)
    for oy, wy in ((0, 1.0 - dy), (1, dy)):
        for ox, wx in ((0, 1.0 - dx), (1, dx)):
            xi = x0 + ox
            yi = y0 + oy
            valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            sample = np.where(
                valid, vals[yi.clip(0, h - 1), xi.clip(0, w - 1)], 0.0)
            out += wx * wy * sample
    return out


def geometric_normalize(img: np.ndarray, marks: LandmarkSet,
                        layout: CanonicalLayout = DEFAULT_LAYOUT) -> np.ndarray:
    """Align img so its landmarks land on the canonical positions, then
    crop to the canonical frame.

    Bilinear resampling; samples falling outside the source are 0.
    Output is always exactly (layout.height, layout.width) uint8.
    """
    a = np.asarray(img)
    if a.ndim != 2:
        raise ValueError("expected a 2D grayscale image")
    h, w = a.shape

    labels, src = marks.ordered()
    for i in range(len(src)):
        x, y = src[i].real, src[i].imag
        if not (0 <= x <= w - 1 and 0 <= y <= h - 1):
            raise ValueError(
                f"landmark {labels[i]} at ({x}, {y}) outside {w}x{h} image")
        for j in range(i + 1, len(src)):
            if src[i] == src[j]:
                raise DegenerateLandmarks(
                    f"landmarks {labels[i]} and {labels[j]} coincide")

    positions = layout.positions(marks.modality)
    dst = np.array([complex(*positions[lb]) for lb in labels])
    coeff, offset = _similarity_fit(src, dst)

    # Inverse-map every canonical pixel back into the source plane.
    ys_c, xs_c = np.mgrid[0:layout.height, 0:layout.width]
    z = (xs_c + 1j * ys_c - offset) / coeff
    sampled = _bilinear(a, z.real, z.imag)
    return np.clip(np.rint(sampled), 0, 255).astype(np.uint8)


def histogram_equalize(img: np.ndarray) -> np.ndarray:
    """Standard CDF remap: out = round(255 * (cdf(v) - cdf_min) / (1 - cdf_min)).

    Monotone nondecreasing in input intensity. A constant image is returned
    unchanged (the remap is 0/0 there and any constant output is equivalent).
    """
    a = np.asarray(img)
    if a.ndim != 2 or a.dtype != np.uint8:
        raise ValueError("expected a 2D uint8 image")
    hist = np.bincount(a.ravel(), minlength=256)
    cdf = np.cumsum(hist) / a.size
    cdf_min = cdf[np.nonzero(hist)[0][0]]
    if cdf_min >= 1.0:
        return a.copy()
    lut = np.rint(255.0 * (cdf - cdf_min) / (1.0 - cdf_min))
    lut = np.clip(lut, 0, 255).astype(np.uint8)
    return lut[a]


@dataclass(frozen=True)
class ManifestEntry:
    image_path: str
    modality: str
    subject_id: str
    session: int
    landmarks: LandmarkSet


def load_manifest(path) -> list:
    """Parse a dataset manifest: a JSON array of records
    {image_path, modality, subject_id, session, landmarks: {label: [x, y]}}.

    Raises ManifestError naming the offending record on any defect.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            records = json.load(fh)
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(records, list):
        raise ManifestError(f"manifest {path} must be a JSON array")

    entries = []
    for i, rec in enumerate(records):
        where = f"manifest record {i}"
        if not isinstance(rec, dict):
            raise ManifestError(f"{where}: not an object")
        for key in ("image_path", "modality", "subject_id", "session", "landmarks"):
            if key not in rec:
                raise ManifestError(f"{where}: missing key {key!r}")
        image_path = rec["image_path"]
        modality = rec["modality"]
        if modality not in _LABELS:
            raise ManifestError(
                f"{where} ({image_path}): unknown modality {modality!r}")
        raw_marks = rec["landmarks"]
        if not isinstance(raw_marks, dict):
            raise ManifestError(f"{where} ({image_path}): landmarks not an object")
        for label in _LABELS[modality]:
            if label not in raw_marks:
                raise ManifestError(
                    f"{where} ({image_path}): missing landmark {label!r}")
        points = {}
        for label, xy in raw_marks.items():
            if label not in _LABELS[modality]:
                raise ManifestError(
                    f"{where} ({image_path}): unexpected landmark {label!r}")
            try:
                points[label] = (float(xy[0]), float(xy[1]))
            except (TypeError, ValueError, IndexError):
                raise ManifestError(
                    f"{where} ({image_path}): landmark {label!r} is not [x, y]"
                ) from None
        try:
            session = int(rec["session"])
        except (TypeError, ValueError):
            raise ManifestError(f"{where} ({image_path}): bad session") from None
        entries.append(ManifestEntry(
            image_path=str(image_path),
            modality=modality,
            subject_id=str(rec["subject_id"]),
            session=session,
            landmarks=LandmarkSet(modality, points),
        ))
    return entries
