"""Command-line frontend.

Subcommands: prep, train, verify, eval, synth-eval. One INI config file
drives everything; --seed overrides the config seed. Exit codes: 0 on
success (or ACCEPT), 1 on REJECT, 2 on any error. All file writes are
atomic (write to a temp file, then rename).
"""

import argparse
import json
import os
import sys

from . import __version__
from .config import PipelineConfig, load_config
from .dempster import (GENUINE, IMPOSTOR, VERIFICATION_FRAME, bpa_from_score,
                       decide)
from .errors import BiofuseError, ManifestError, TotalConflict
from .evaluate import run_fusion_experiment, run_image_experiment
from .gabor import build_bank
from .gmm import MODEL_FORMAT_VERSION, load_model, match_score, save_model
from .pgm import load_pgm, write_pgm
from .pipeline import (MODALITIES, image_observations, load_entry_image,
                       model_filename, prep_image, stats_filename,
                       stats_from_dict, stats_to_dict, split_by_session,
                       train_modality)
from .preprocess import load_manifest


def _atomic_write_text(path, text):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path, obj):
    _atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _cache_dir(config):
    return os.path.join(config.paths.output_dir, "cache")


def cmd_prep(config: PipelineConfig, manifest_path, out_dir) -> int:
    """Normalize every manifest image to the canonical frame and write the
    results plus an updated manifest (landmarks moved to their canonical
    positions, so re-running on the output is the identity transform)."""
    entries = load_manifest(manifest_path)
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for i, entry in enumerate(entries):
        try:
            img = load_entry_image(entry)
            prepped = prep_image(img, entry.landmarks, config)
        except ManifestError:
            raise
        except BiofuseError as exc:
            raise type(exc)(f"{entry.image_path}: {exc}") from exc
        name = f"{i:04d}_{entry.subject_id}_{entry.modality}_s{entry.session}.pgm"
        out_path = os.path.join(out_dir, name)
        write_pgm(prepped, out_path)
        canonical = config.layout.positions(entry.modality)
        records.append({
            "image_path": out_path,
            "modality": entry.modality,
            "subject_id": entry.subject_id,
            "session": entry.session,
            "landmarks": {k: [v[0], v[1]] for k, v in canonical.items()},
        })
    _write_json(os.path.join(out_dir, "manifest.json"), records)
    print(f"prepped {len(records)} images -> {out_dir}")
    return 0


def cmd_train(config: PipelineConfig, manifest_path) -> int:
    """Fit client and background mixtures from session-1 (gallery) images
    of a prepped manifest and persist them with the per-modality stats."""
    entries = load_manifest(manifest_path)
    gallery, _ = split_by_session(entries)
    subjects = sorted({e.subject_id for e in entries})
    bank = build_bank(config.gabor)
    os.makedirs(config.paths.model_dir, exist_ok=True)

    for modality in MODALITIES:
        gallery_obs = {}
        for entry in gallery:
            if entry.modality != modality:
                continue
            img = load_entry_image(entry)
            obs = image_observations(img, bank, config.stride,
                                     params=config.gabor,
                                     cache_dir=_cache_dir(config))
            gallery_obs.setdefault(entry.subject_id, []).append(
                obs.observations)
        for sid in subjects:
            if sid not in gallery_obs:
                raise ManifestError(
                    f"subject {sid} has no gallery (session 1) "
                    f"{modality} images")
        artifacts = train_modality(modality, gallery_obs, config)
        for sid, model in sorted(artifacts.clients.items()):
            save_model(model,
                       os.path.join(config.paths.model_dir,
                                    model_filename(modality, sid)),
                       modality, sid)
        save_model(artifacts.background,
                   os.path.join(config.paths.model_dir,
                                model_filename(modality, "background")),
                   modality, "background")
        _write_json(os.path.join(config.paths.model_dir,
                                 stats_filename(modality)),
                    stats_to_dict(modality, artifacts))
        print(f"trained {len(artifacts.clients)} {modality} client models "
              f"+ background")
    return 0


def _load_modality(config, modality, claimed_id):
    model_dir = config.paths.model_dir
    client_path = os.path.join(model_dir, model_filename(modality, claimed_id))
    if not os.path.exists(client_path):
        raise BiofuseError(
            f"no {modality} model for claimed id {claimed_id!r} "
            f"({client_path} missing); run `train` first")
    client, _, _ = load_model(client_path)
    background, _, _ = load_model(
        os.path.join(model_dir, model_filename(modality, "background")))
    with open(os.path.join(model_dir, stats_filename(modality)),
              encoding="utf-8") as fh:
        _, scaler, calibration = stats_from_dict(json.load(fh))
    return client, background, scaler, calibration


def cmd_verify(config: PipelineConfig, face_path, ear_path, claimed_id) -> int:
    """Score one prepped face/ear probe pair against a claimed identity."""
    bank = build_bank(config.gabor)
    masses = {}
    scores = {}
    for modality, path in (("face", face_path), ("ear", ear_path)):
        client, background, scaler, calibration = _load_modality(
            config, modality, claimed_id)
        img = load_pgm(path)
        obs = image_observations(img, bank, config.stride,
                                 params=config.gabor,
                                 cache_dir=_cache_dir(config))
        score = match_score(client, background,
                            scaler.transform(obs.observations))
        scores[modality] = score
        alpha = config.fusion.alpha_face if modality == "face" \
            else config.fusion.alpha_ear
        masses[modality] = bpa_from_score(score, calibration, alpha)

    tau = config.fusion.threshold
    try:
        decision = decide(masses["face"], masses["ear"], tau)
        accepted = decision.accepted
        genuine_mass = decision.combined.mass(
            VERIFICATION_FRAME.subset([GENUINE]))
        impostor_mass = decision.combined.mass(
            VERIFICATION_FRAME.subset([IMPOSTOR]))
        conflict = decision.conflict
        flagged = False
    except TotalConflict:
        # evaluation policy: a fully conflicting trial is a flagged reject
        accepted = False
        genuine_mass = 0.0
        impostor_mass = 0.0
        conflict = 1.0
        flagged = True

    verdict = "ACCEPT" if accepted else "REJECT"
    print(f"{verdict} m_genuine={genuine_mass:.6f} conflict={conflict:.6f} "
          f"threshold={tau}")
    print(json.dumps({
        "decision": verdict,
        "claimed_id": claimed_id,
        "m_genuine": genuine_mass,
        "m_impostor": impostor_mass,
        "conflict": conflict,
        "threshold": tau,
        "face_score": scores["face"],
        "ear_score": scores["ear"],
        "total_conflict_flag": flagged,
    }, sort_keys=True))
    return 0 if accepted else 1


def _emit_report(report, rocs, out_dir, prefix=""):
    os.makedirs(out_dir, exist_ok=True)
    _atomic_write_text(os.path.join(out_dir, f"{prefix}report.csv"),
                       report.to_csv())
    for method, roc in rocs.items():
        _atomic_write_text(os.path.join(out_dir, f"{prefix}roc_{method}.csv"),
                           roc.to_csv())
    print(report.format_table())


def cmd_eval(config: PipelineConfig, manifest_path) -> int:
    """Full image experiment: report.csv plus one ROC CSV per method."""
    report, rocs, _ = run_image_experiment(manifest_path, config,
                                           cache_dir=_cache_dir(config))
    _emit_report(report, rocs, config.paths.output_dir)
    return 0


def cmd_synth_eval(config: PipelineConfig) -> int:
    """Synthetic-matcher experiment from the [synth_*] config sections."""
    report, rocs = run_fusion_experiment(
        config.synth, config.fusion.alpha_face, config.fusion.alpha_ear,
        seed=config.eval.seed, n_genuine=config.eval.n_genuine,
        n_impostor=config.eval.n_impostor,
        num_thresholds=config.eval.num_thresholds)
    _emit_report(report, rocs, config.paths.output_dir, prefix="synth_")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biofuse",
        description="Face/ear verification with Gabor features, mixture "
                    "scoring, and Dempster-Shafer fusion.")
    parser.add_argument("--config", help="INI config file path")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument(
        "--version", action="version",
        version=f"biofuse {__version__} (model format_version "
                f"{MODEL_FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="normalize manifest images")
    p.add_argument("--manifest", help="raw dataset manifest (JSON)")
    p.add_argument("--out-dir", help="directory for prepped images")

    p = sub.add_parser("train", help="fit client + background models")
    p.add_argument("--manifest", help="prepped dataset manifest (JSON)")

    p = sub.add_parser("verify", help="verify one identity claim")
    p.add_argument("--face", required=True, help="prepped face probe (PGM)")
    p.add_argument("--ear", required=True, help="prepped ear probe (PGM)")
    p.add_argument("--claim", required=True, help="claimed subject id")

    p = sub.add_parser("eval", help="full image experiment")
    p.add_argument("--manifest", help="raw dataset manifest (JSON)")

    sub.add_parser("synth-eval", help="synthetic-matcher experiment")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else PipelineConfig()
        if args.seed is not None:
            config = config.with_seed(args.seed)

        if args.command == "prep":
            manifest = args.manifest or config.paths.manifest
            out_dir = args.out_dir or os.path.join(
                config.paths.output_dir, "prepped")
            return cmd_prep(config, manifest, out_dir)
        if args.command == "train":
            return cmd_train(config, args.manifest or config.paths.manifest)
        if args.command == "verify":
            return cmd_verify(config, args.face, args.ear, args.claim)
        if args.command == "eval":
            return cmd_eval(config, args.manifest or config.paths.manifest)
        if args.command == "synth-eval":
            return cmd_synth_eval(config)
        raise AssertionError(f"unhandled command {args.command}")
    except (BiofuseError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
