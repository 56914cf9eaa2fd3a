"""Pipeline configuration: one INI-style key/value file per experiment.

Sections mirror the pipeline stages; every omitted key falls back to the
built-in default, so an empty file is a complete configuration. Relative
paths are resolved against the config file's directory.
"""

import configparser
import math
import os
from dataclasses import dataclass, field, replace

from .gabor import GaborParams
from .gmm import EmConfig
from .preprocess import CanonicalLayout


@dataclass(frozen=True)
class FusionSettings:
    alpha_face: float = 0.9
    alpha_ear: float = 0.9
    threshold: float = 0.5


@dataclass(frozen=True)
class EvalSettings:
    num_thresholds: int = 10001
    seed: int = 42
    n_genuine: int = 10000
    n_impostor: int = 10000


@dataclass(frozen=True)
class SynthModality:
    """Score distributions of one synthetic matcher (normal per class)."""
    genuine_mean: float
    genuine_std: float = 1.0
    impostor_mean: float = 0.0
    impostor_std: float = 1.0

    def validate(self):
        if self.genuine_std <= 0 or self.impostor_std <= 0:
            raise ValueError("synthetic score stddevs must be positive")


# Defaults put the unimodal equal-error rates near 8.0% and 6.7%
# (separations of 2.81 and 3.00 standard deviations).
DEFAULT_SYNTH = {
    "face": SynthModality(genuine_mean=2.81),
    "ear": SynthModality(genuine_mean=3.00),
}


@dataclass(frozen=True)
class Paths:
    manifest: str = "manifest.json"
    model_dir: str = "models"
    output_dir: str = "out"


@dataclass(frozen=True)
class PipelineConfig:
    gabor: GaborParams = GaborParams()
    stride: int = 10
    layout: CanonicalLayout = CanonicalLayout()
    gmm: dict = field(default_factory=lambda: {
        "face": EmConfig(), "ear": EmConfig()})
    fusion: FusionSettings = FusionSettings()
    eval: EvalSettings = EvalSettings()
    synth: dict = field(default_factory=lambda: dict(DEFAULT_SYNTH))
    paths: Paths = Paths()

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, eval=replace(self.eval, seed=seed))


def _section(parser, name):
    return parser[name] if parser.has_section(name) else {}


def _get(sec, key, cast, default):
    if key in sec:
        return cast(sec[key])
    return default


def _point(text):
    parts = [float(p) for p in text.replace(",", " ").split()]
    if len(parts) != 2:
        raise ValueError(f"expected 'x, y', got {text!r}")
    return (parts[0], parts[1])


_KNOWN = {
    "gabor": {"num_frequencies", "num_orientations", "k_max", "freq_spacing",
              "sigma", "kernel_radius", "stride"},
    "canonical": {"width", "height", "face_left_eye", "face_right_eye",
                  "face_mouth_center", "ear_triangular_fossa", "ear_antitragus"},
    "gmm_face": {"n_components", "max_iters", "tol", "cov_floor", "restarts"},
    "gmm_ear": {"n_components", "max_iters", "tol", "cov_floor", "restarts"},
    "fusion": {"alpha_face", "alpha_ear", "threshold"},
    "eval": {"num_thresholds", "seed", "n_genuine", "n_impostor"},
    "synth_face": {"genuine_mean", "genuine_std", "impostor_mean", "impostor_std"},
    "synth_ear": {"genuine_mean", "genuine_std", "impostor_mean", "impostor_std"},
    "paths": {"manifest", "model_dir", "output_dir"},
}


def load_config(path) -> PipelineConfig:
    """Parse an INI config file; unknown sections or keys are errors."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path, "r", encoding="utf-8") as fh:
        parser.read_file(fh)

    for section in parser.sections():
        if section not in _KNOWN:
            raise ValueError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in _KNOWN[section]:
                raise ValueError(f"unknown config key {key!r} in [{section}]")

    sec = _section(parser, "gabor")
    gabor = GaborParams(
        num_frequencies=_get(sec, "num_frequencies", int, 5),
        num_orientations=_get(sec, "num_orientations", int, 8),
        k_max=_get(sec, "k_max", float, math.pi / 2.0),
        freq_spacing=_get(sec, "freq_spacing", float, math.sqrt(2.0)),
        sigma=_get(sec, "sigma", float, 2.0 * math.pi),
        kernel_radius=_get(sec, "kernel_radius", int, 16),
    )
    stride = _get(sec, "stride", int, 10)

    sec = _section(parser, "canonical")
    default = CanonicalLayout()
    layout = CanonicalLayout(
        width=_get(sec, "width", int, default.width),
        height=_get(sec, "height", int, default.height),
        face={
            "left_eye": _get(sec, "face_left_eye", _point,
                             default.face["left_eye"]),
            "right_eye": _get(sec, "face_right_eye", _point,
                              default.face["right_eye"]),
            "mouth_center": _get(sec, "face_mouth_center", _point,
                                 default.face["mouth_center"]),
        },
        ear={
            "triangular_fossa": _get(sec, "ear_triangular_fossa", _point,
                                     default.ear["triangular_fossa"]),
            "antitragus": _get(sec, "ear_antitragus", _point,
                               default.ear["antitragus"]),
        },
    )

    gmm = {}
    for modality in ("face", "ear"):
        sec = _section(parser, f"gmm_{modality}")
        gmm[modality] = EmConfig(
            n_components=_get(sec, "n_components", int, 8),
            max_iters=_get(sec, "max_iters", int, 200),
            tol=_get(sec, "tol", float, 1e-6),
            cov_floor=_get(sec, "cov_floor", float, 1e-4),
            restarts=_get(sec, "restarts", int, 3),
        )

    sec = _section(parser, "fusion")
    fusion = FusionSettings(
        alpha_face=_get(sec, "alpha_face", float, 0.9),
        alpha_ear=_get(sec, "alpha_ear", float, 0.9),
        threshold=_get(sec, "threshold", float, 0.5),
    )

    sec = _section(parser, "eval")
    ev = EvalSettings(
        num_thresholds=_get(sec, "num_thresholds", int, 10001),
        seed=_get(sec, "seed", int, 42),
        n_genuine=_get(sec, "n_genuine", int, 10000),
        n_impostor=_get(sec, "n_impostor", int, 10000),
    )

    synth = {}
    for modality in ("face", "ear"):
        sec = _section(parser, f"synth_{modality}")
        base = DEFAULT_SYNTH[modality]
        spec = SynthModality(
            genuine_mean=_get(sec, "genuine_mean", float, base.genuine_mean),
            genuine_std=_get(sec, "genuine_std", float, base.genuine_std),
            impostor_mean=_get(sec, "impostor_mean", float, base.impostor_mean),
            impostor_std=_get(sec, "impostor_std", float, base.impostor_std),
        )
        spec.validate()
        synth[modality] = spec

    sec = _section(parser, "paths")
    base_dir = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base_dir, p)

    paths = Paths(
        manifest=resolve(_get(sec, "manifest", str, "manifest.json")),
        model_dir=resolve(_get(sec, "model_dir", str, "models")),
        output_dir=resolve(_get(sec, "output_dir", str, "out")),
    )

    return PipelineConfig(gabor=gabor, stride=stride, layout=layout, gmm=gmm,
                          fusion=fusion, eval=ev, synth=synth, paths=paths)
