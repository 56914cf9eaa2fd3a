"""Shared fixtures: a tiny two-subject corpus with orientation-distinct
textures, separable by construction."""

import json
import math
import os

import numpy as np
import pytest

from biofuse.pgm import write_pgm

FACE_MARKS = {"left_eye": [60.0, 70.0], "right_eye": [140.0, 70.0],
              "mouth_center": [100.0, 170.0]}
EAR_MARKS = {"triangular_fossa": [100.0, 60.0], "antitragus": [100.0, 160.0]}

# per (subject, modality) grating orientation, spaced far apart
ORIENTATIONS = {
    ("alice", "face"): 0.0,
    ("alice", "ear"): math.pi / 8.0,
    ("bob", "face"): math.pi / 2.0,
    ("bob", "ear"): 5.0 * math.pi / 8.0,
}


def grating_image(theta, phase, seed, size=(220, 200),
                  freq=math.pi / (2.0 * math.sqrt(2.0))):
    """Sinusoidal grating at orientation theta plus mild sensor noise."""
    h, w = size
    ys, xs = np.mgrid[0:h, 0:w]
    rng = np.random.default_rng(seed)
    vals = 128.0 + 80.0 * np.cos(
        freq * (xs * math.cos(theta) + ys * math.sin(theta)) + phase)
    vals += rng.normal(0.0, 4.0, size)
    return np.clip(np.rint(vals), 0, 255).astype(np.uint8)


def build_toy_corpus(root):
    """Write 8 PGMs (2 subjects x 2 modalities x 2 sessions) plus a
    manifest; landmarks sit at the canonical positions, so geometric
    normalization is an exact crop."""
    os.makedirs(root, exist_ok=True)
    records = []
    seed = 0
    for sid in ("alice", "bob"):
        for modality in ("face", "ear"):
            for session in (1, 2):
                seed += 1
                img = grating_image(ORIENTATIONS[(sid, modality)],
                                    0.0 if session == 1 else 0.7, seed)
                path = os.path.join(root, f"{sid}_{modality}_{session}.pgm")
                write_pgm(img, path)
                records.append({
                    "image_path": path,
                    "modality": modality,
                    "subject_id": sid,
                    "session": session,
                    "landmarks": FACE_MARKS if modality == "face" else EAR_MARKS,
                })
    manifest = os.path.join(root, "manifest.json")
    with open(manifest, "w", encoding="utf-8") as fh:
        json.dump(records, fh, indent=2)
    return manifest, records


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    manifest, records = build_toy_corpus(str(root))
    return {"root": str(root), "manifest": manifest, "records": records}
