"""Verification experiments: trial generation, FAR/FRR/EER/ROC, reports.

FAR(t) is the fraction of impostor scores >= t, FRR(t) the fraction of
genuine scores < t, swept over a uniform threshold grid spanning the
pooled score range. The equal-error rate is read off the FAR/FRR crossing
by linear interpolation. Reported recognition rate is 100 - EER.

Two experiment drivers: a synthetic-matcher run (seeded normal score
generators per modality) and a full image run (prep -> filter bank ->
mixture scoring -> evidence fusion) over a dataset manifest.
"""

from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .dempster import (GENUINE, VERIFICATION_FRAME, bpa_from_score,
                       combine_dempster)
from .errors import EmptyScoreList, ManifestError, TotalConflict
from .gabor import build_bank
from .pipeline import (MODALITIES, check_protocol, image_observations,
                       load_entry_image, prep_image, probe_score,
                       split_by_session, train_modality)
from .preprocess import load_manifest

_GENUINE_MASK = VERIFICATION_FRAME.subset([GENUINE])


@dataclass(frozen=True)
class TrialRecord:
    claimed_subject: str
    true_subject: str
    face_score: float
    ear_score: float
    fused_genuine_mass: float
    label: str  # "genuine" | "impostor"

    def __post_init__(self):
        expected = "genuine" if self.claimed_subject == self.true_subject \
            else "impostor"
        if self.label != expected:
            raise ValueError(
                f"label {self.label!r} contradicts subject ids")


@dataclass(frozen=True)
class RocCurve:
    """Parallel arrays of (threshold, FAR, FRR); thresholds strictly
    increasing, FAR nonincreasing, FRR nondecreasing."""

    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray

    def to_csv(self) -> str:
        lines = ["threshold,far,frr"]
        for t, fa, fr in zip(self.thresholds, self.far, self.frr):
            lines.append(f"{t!r},{fa!r},{fr!r}")
        return "\n".join(lines) + "\n"


def compute_roc(genuine, impostor, num_thresholds: int = 10001) -> RocCurve:
    """Sweep a uniform threshold grid over [min - d, max + d] of the pooled
    scores and count error rates at each threshold."""
    g = np.asarray(genuine, dtype=np.float64)
    imp = np.asarray(impostor, dtype=np.float64)
    if g.size == 0 or imp.size == 0:
        raise EmptyScoreList("need nonempty genuine and impostor scores")
    if num_thresholds < 2:
        raise ValueError("num_thresholds must be at least 2")
    lo = min(g.min(), imp.min())
    hi = max(g.max(), imp.max())
    span = hi - lo
    margin = span * 1e-6 if span > 0 else max(abs(hi), 1.0) * 1e-9
    ts = np.linspace(lo - margin, hi + margin, num_thresholds)

    g_sorted = np.sort(g)
    i_sorted = np.sort(imp)
    far = (imp.size - np.searchsorted(i_sorted, ts, side="left")) / imp.size
    frr = np.searchsorted(g_sorted, ts, side="left") / g.size
    return RocCurve(thresholds=ts, far=far, frr=frr)


def eer(roc: RocCurve) -> float:
    """Equal-error rate: linear interpolation at the FAR/FRR crossing.

    The sweep margins guarantee FAR - FRR starts at +1 and ends at -1, so
    a crossing always exists.
    """
    d = roc.far - roc.frr
    k = int(np.argmax(d < 0))  # first strictly negative index
    if d[k] >= 0:              # no sign change: curves meet at the end
        return float((roc.far[-1] + roc.frr[-1]) / 2.0)
    if k == 0:
        return float((roc.far[0] + roc.frr[0]) / 2.0)
    lam = d[k - 1] / (d[k - 1] - d[k])
    return float(roc.far[k - 1] + lam * (roc.far[k] - roc.far[k - 1]))


def synth_scores(matchers: dict, n_genuine: int, n_impostor: int,
                 seed: int) -> dict:
    """Draw per-modality genuine/impostor score lists from normal score
    generators. Deterministic given seed; modalities are independent."""
    if n_genuine < 1 or n_impostor < 1:
        raise ValueError("trial counts must be at least 1")
    rng = np.random.default_rng(seed)
    out = {}
    for modality in sorted(matchers):
        m = matchers[modality]
        m.validate()
        genuine = rng.normal(m.genuine_mean, m.genuine_std, n_genuine)
        impostor = rng.normal(m.impostor_mean, m.impostor_std, n_impostor)
        out[modality] = (genuine, impostor)
    return out


@dataclass(frozen=True)
class MethodReport:
    """One table row; rates are percentages and recognition_rate is
    100 - EER by construction. FAR/FRR are read at the sweep threshold
    closest to the equal-error operating point."""

    method: str
    frr: float
    far: float
    eer: float
    recognition_rate: float


@dataclass(frozen=True)
class ErrorReport:
    rows: tuple

    def row(self, method: str) -> MethodReport:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def to_csv(self) -> str:
        lines = ["method,frr,far,eer,recognition_rate"]
        for r in self.rows:
            lines.append(f"{r.method},{r.frr:.4f},{r.far:.4f},"
                         f"{r.eer:.4f},{r.recognition_rate:.4f}")
        return "\n".join(lines) + "\n"

    def format_table(self) -> str:
        header = f"{'method':<8} {'FRR%':>8} {'FAR%':>8} {'EER%':>8} {'recog%':>8}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            lines.append(f"{r.method:<8} {r.frr:>8.2f} {r.far:>8.2f} "
                         f"{r.eer:>8.2f} {r.recognition_rate:>8.2f}")
        return "\n".join(lines)


def _method_report(method, genuine, impostor, num_thresholds):
    roc = compute_roc(genuine, impostor, num_thresholds)
    rate = eer(roc)
    at = int(np.argmin(np.abs(roc.far - roc.frr)))
    return MethodReport(
        method=method,
        frr=float(roc.frr[at]) * 100.0,
        far=float(roc.far[at]) * 100.0,
        eer=rate * 100.0,
        recognition_rate=100.0 - rate * 100.0,
    ), roc


def fused_genuine_mass(face_score, ear_score, calib_face, calib_ear,
                       alpha_face, alpha_ear):
    """Combined genuine mass for one trial; (mass, conflicted) where a
    totally conflicting pair is scored 0 (reject) instead of aborting."""
    m_face = bpa_from_score(face_score, calib_face, alpha_face)
    m_ear = bpa_from_score(ear_score, calib_ear, alpha_ear)
    try:
        combined, _ = combine_dempster(m_face, m_ear)
    except TotalConflict:
        return 0.0, True
    return combined.mass(_GENUINE_MASK), False


def run_fusion_experiment(matchers: dict, alpha_face: float, alpha_ear: float,
                          seed: int, n_genuine: int = 10000,
                          n_impostor: int = 10000,
                          num_thresholds: int = 10001):
    """Synthetic-matcher experiment: unimodal rows from raw scores, the
    fused row from combined genuine masses. Calibration bounds are the
    min/max of each modality's pooled scores.

    Returns (ErrorReport, {method: RocCurve}).
    """
    scores = synth_scores(matchers, n_genuine, n_impostor, seed)
    face_g, face_i = scores["face"]
    ear_g, ear_i = scores["ear"]

    calib = {}
    for modality, (g, imp) in scores.items():
        pool = np.concatenate([g, imp])
        calib[modality] = (float(pool.min()), float(pool.max()))

    fused_g = np.array([
        fused_genuine_mass(fs, es, calib["face"], calib["ear"],
                           alpha_face, alpha_ear)[0]
        for fs, es in zip(face_g, ear_g)])
    fused_i = np.array([
        fused_genuine_mass(fs, es, calib["face"], calib["ear"],
                           alpha_face, alpha_ear)[0]
        for fs, es in zip(face_i, ear_i)])

    rows = []
    rocs = {}
    for method, (g, imp) in (("face", (face_g, face_i)),
                             ("ear", (ear_g, ear_i)),
                             ("fusion", (fused_g, fused_i))):
        row, roc = _method_report(method, g, imp, num_thresholds)
        rows.append(row)
        rocs[method] = roc
    return ErrorReport(rows=tuple(rows)), rocs


def run_image_experiment(manifest_path, config: PipelineConfig,
                         cache_dir=None):
    """Full verification experiment over a dataset manifest.

    Session 1 trains and calibrates; session-2 probes claim every identity
    (their own -> genuine trial, each other -> impostor trial).

    Returns (ErrorReport, {method: RocCurve}, [TrialRecord, ...]).
    """
    entries = load_manifest(manifest_path)
    subjects = check_protocol(entries)
    gallery, probes = split_by_session(entries)

    bank = build_bank(config.gabor)

    def observations_for(entry):
        img = prep_image(load_entry_image(entry), entry.landmarks, config)
        return image_observations(img, bank, config.stride,
                                  params=config.gabor, cache_dir=cache_dir)

    artifacts = {}
    for modality in MODALITIES:
        gallery_obs = {}
        for entry in gallery:
            if entry.modality != modality:
                continue
            obs = observations_for(entry)
            gallery_obs.setdefault(entry.subject_id, []).append(
                obs.observations)
        artifacts[modality] = train_modality(modality, gallery_obs, config)

    probe_obs = {}
    for entry in probes:
        key = (entry.subject_id, entry.modality)
        if key in probe_obs:
            raise ManifestError(
                f"subject {entry.subject_id} has multiple session-2 "
                f"{entry.modality} images; one probe per modality expected")
        probe_obs[key] = observations_for(entry).observations

    trials = []
    for true_sid in subjects:
        face_matrix = probe_obs[(true_sid, "face")]
        ear_matrix = probe_obs[(true_sid, "ear")]
        for claimed in subjects:
            fs = probe_score(artifacts["face"], claimed, face_matrix)
            es = probe_score(artifacts["ear"], claimed, ear_matrix)
            mass, _ = fused_genuine_mass(
                fs, es,
                artifacts["face"].calibration, artifacts["ear"].calibration,
                config.fusion.alpha_face, config.fusion.alpha_ear)
            trials.append(TrialRecord(
                claimed_subject=claimed, true_subject=true_sid,
                face_score=fs, ear_score=es, fused_genuine_mass=mass,
                label="genuine" if claimed == true_sid else "impostor"))

    rows = []
    rocs = {}
    for method, pick in (("face", lambda t: t.face_score),
                         ("ear", lambda t: t.ear_score),
                         ("fusion", lambda t: t.fused_genuine_mass)):
        genuine = [pick(t) for t in trials if t.label == "genuine"]
        impostor = [pick(t) for t in trials if t.label == "impostor"]
        row, roc = _method_report(method, genuine, impostor,
                                  config.eval.num_thresholds)
        rows.append(row)
        rocs[method] = roc
    return ErrorReport(rows=tuple(rows)), rocs, trials
