"""Shared orchestration between the CLI commands and the image experiment.

Gallery protocol: session 1 trains one client mixture per (subject,
modality) plus one pooled background mixture and the channel scaler per
modality; score calibration bounds come from gallery-vs-client scores
only, never from probes.
"""

import hashlib
import os
from dataclasses import dataclass, replace

import numpy as np

from .config import PipelineConfig
from .errors import BiofuseError, ManifestError
from .gabor import ChannelScaler, ObservationSet, convolve, downsample
from .gmm import EmConfig, GmmModel, em_fit, match_score
from .pgm import load_pgm
from .preprocess import geometric_normalize, histogram_equalize

MODALITIES = ("face", "ear")
STATS_FORMAT_VERSION = 1
BACKGROUND_ID = "background"


def prep_image(img: np.ndarray, marks, config: PipelineConfig) -> np.ndarray:
    """Geometric normalization to the canonical frame, then equalization."""
    return histogram_equalize(geometric_normalize(img, marks, config.layout))


def image_observations(img: np.ndarray, bank, stride: int,
                       params=None, cache_dir=None) -> ObservationSet:
    """Response-magnitude observations for one prepped image.

    When cache_dir is given, results are cached on disk keyed by the image
    content and the bank parameters; a 200x220 image costs 40 convolutions,
    so re-runs skip straight to the cached observation matrix.
    """
    if cache_dir is not None and params is not None:
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(img).tobytes())
        digest.update(params.cache_key().encode())
        digest.update(f";stride={stride}".encode())
        path = os.path.join(cache_dir, digest.hexdigest() + ".npz")
        if os.path.exists(path):
            return ObservationSet.load(path)
        obs = downsample(convolve(img, bank), stride)
        os.makedirs(cache_dir, exist_ok=True)
        tmp = f"{path}.tmp{os.getpid()}"
        obs.save(tmp)
        os.replace(tmp, path)
        return obs
    return downsample(convolve(img, bank), stride)


def load_entry_image(entry) -> np.ndarray:
    try:
        return load_pgm(entry.image_path)
    except OSError as exc:
        raise ManifestError(f"missing image file {entry.image_path}") from exc


def split_by_session(entries):
    """(gallery, probes) = session-1 and session-2 manifest entries."""
    gallery = [e for e in entries if e.session == 1]
    probes = [e for e in entries if e.session == 2]
    return gallery, probes


def check_protocol(entries):
    """Enforce the verification protocol: >= 2 subjects, each with both
    modalities in both sessions."""
    subjects = sorted({e.subject_id for e in entries})
    if len(subjects) < 2:
        raise ManifestError("protocol needs at least 2 subjects")
    have = {(e.subject_id, e.modality, e.session) for e in entries}
    for sid in subjects:
        for modality in MODALITIES:
            for session in (1, 2):
                if (sid, modality, session) not in have:
                    raise ManifestError(
                        f"subject {sid} has no {modality} image "
                        f"in session {session}")
    return subjects


@dataclass(frozen=True)
class ModalityArtifacts:
    """Everything `verify` needs for one modality."""
    clients: dict              # subject_id -> GmmModel
    background: GmmModel
    scaler: ChannelScaler
    calibration: tuple         # (lo, hi) gallery score bounds


def _fit_seed(base_seed: int, index: int) -> int:
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(index,))
    return int(ss.generate_state(1)[0])


def train_modality(modality: str, gallery_obs: dict,
                   config: PipelineConfig) -> ModalityArtifacts:
    """Fit client + background mixtures from raw gallery observations.

    gallery_obs maps subject_id -> list of (n_i, dim) observation matrices.
    """
    subjects = sorted(gallery_obs)
    pooled = np.vstack([m for sid in subjects for m in gallery_obs[sid]])
    scaler = ChannelScaler.fit(pooled)

    base = config.gmm[modality]
    seed_base = config.eval.seed + (0 if modality == "face" else 1_000_000)

    background, _ = em_fit(scaler.transform(pooled),
                           _with_seed(base, _fit_seed(seed_base, 0)))
    clients = {}
    for i, sid in enumerate(subjects):
        data = scaler.transform(np.vstack(gallery_obs[sid]))
        try:
            clients[sid], _ = em_fit(
                data, _with_seed(base, _fit_seed(seed_base, i + 1)))
        except BiofuseError as exc:
            raise type(exc)(
                f"fitting {modality} model for subject {sid}: {exc}") from exc

    scores = []
    for sid in subjects:
        for matrix in gallery_obs[sid]:
            std = scaler.transform(matrix)
            for claimed in subjects:
                scores.append(match_score(clients[claimed], background, std))
    calibration = (min(scores), max(scores))
    return ModalityArtifacts(clients=clients, background=background,
                             scaler=scaler, calibration=calibration)


def _with_seed(cfg: EmConfig, seed: int) -> EmConfig:
    return replace(cfg, seed=seed)


def probe_score(artifacts: ModalityArtifacts, claimed_id: str,
                obs_matrix: np.ndarray) -> float:
    client = artifacts.clients[claimed_id]
    return match_score(client, artifacts.background,
                       artifacts.scaler.transform(obs_matrix))


# --- persistence of per-modality training artifacts ---

def stats_to_dict(modality: str, artifacts: ModalityArtifacts) -> dict:
    return {
        "format_version": STATS_FORMAT_VERSION,
        "modality": modality,
        "scaler": artifacts.scaler.to_dict(),
        "calibration": [artifacts.calibration[0], artifacts.calibration[1]],
    }


def stats_from_dict(doc: dict):
    if int(doc.get("format_version", -1)) != STATS_FORMAT_VERSION:
        raise ValueError("unsupported stats format version")
    scaler = ChannelScaler.from_dict(doc["scaler"])
    lo, hi = doc["calibration"]
    return doc["modality"], scaler, (float(lo), float(hi))


def model_filename(modality: str, subject_id: str) -> str:
    return f"{modality}_{subject_id}.json"


def stats_filename(modality: str) -> str:
    return f"{modality}_stats.json"
