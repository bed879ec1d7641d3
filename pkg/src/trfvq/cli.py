"""Batch command-line front end.

Exit codes: 0 success, 2 input error, 3 numerical divergence, 4 artifact
incompatibility.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import dsp
from .autodiff import AdamState
from .autodiff.checkpoint import CheckpointError
from .evaluation import abx_error_rate, bitrate, codebook_usage
from .models import (
    SUPPORTED_K,
    Batch,
    CodebookInverter,
    DivergenceError,
    InverterConfig,
    TransformerVQVAE,
    UtteranceTooShort,
    VqVaeConfig,
    synthesize,
    train_step_inverter,
    train_step_vqvae,
)
from .vq import SymbolSequence

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED, EXIT_INCOMPATIBLE = 0, 2, 3, 4

KIND_ALIASES = {"mfcc": "mfcc", "logmel": "log_mel", "log_mel": "log_mel"}
FEATURE_DIMS = {"mfcc": 3 * dsp.N_CEPS, "log_mel": dsp.N_MELS}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# -- manifest -------------------------------------------------------------------

@dataclass(frozen=True)
class Record:
    utterance_id: str
    wav_path: Path
    speaker_id: str
    duration_s: float


def load_manifest(path, check_files: bool = True) -> list[Record]:
    """Read a JSON-lines manifest.

    Relative ``wav_path`` entries resolve against the working directory, then
    against the manifest's own directory.
    """
    path = Path(path)
    if not path.is_file():
        raise CliError(EXIT_INPUT, f"manifest not found: {path}")
    records, seen = [], set()
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            rec = Record(str(raw["utterance_id"]), Path(raw["wav_path"]),
                         str(raw["speaker_id"]), float(raw["duration_s"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CliError(EXIT_INPUT, f"{path}:{lineno}: bad manifest record ({exc})") from exc
        if rec.utterance_id in seen:
            raise CliError(EXIT_INPUT, f"{path}:{lineno}: duplicate id {rec.utterance_id!r}")
        if rec.duration_s <= 0:
            raise CliError(EXIT_INPUT, f"{path}:{lineno}: duration must be positive")
        seen.add(rec.utterance_id)
        wav = rec.wav_path
        if not wav.is_absolute() and not wav.exists() and (path.parent / wav).exists():
            wav = path.parent / wav
        records.append(Record(rec.utterance_id, wav, rec.speaker_id, rec.duration_s))
    if check_files:
        missing = [str(r.wav_path) for r in records if not r.wav_path.is_file()]
        if missing:
            raise CliError(EXIT_INPUT, "missing audio files: " + ", ".join(missing))
    return records


# -- run configuration ---------------------------------------------------------

@dataclass
class RunConfig:
    feature_kind: str = "mfcc"
    K: int = 128
    d_mdl: int = 128
    heads: int = 4
    d_ff: int = 256
    code_dim: int = 64
    speaker_dim: int = 32
    total_stride: int = 4
    gamma: float = 0.25
    smoothing: float = 0.0
    jitter_p: float = 0.0
    ema_decay: float = 0.99
    lr: float = 1e-4
    steps: int = 1000
    batch_size: int = 8
    segment_frames: int = 64
    seed: int = 0
    inverter_d_mdl: int = 128
    inverter_heads: int = 4
    inverter_d_ff: int = 256
    inverter_lr: float = 1e-4
    inverter_steps: int = 1000
    inverter_segment_codes: int = 16
    gl_iters: int = dsp.GRIFFIN_LIM_ITERS

    def validate(self):
        if self.feature_kind not in KIND_ALIASES:
            raise ValueError(f"feature_kind must be mfcc or logmel, got {self.feature_kind!r}")
        if self.K not in SUPPORTED_K:
            raise ValueError(f"K={self.K} is not one of the supported sizes {SUPPORTED_K}")
        for name in ("steps", "batch_size", "segment_frames", "inverter_steps",
                     "inverter_segment_codes", "gl_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.segment_frames % self.total_stride:
            raise ValueError("segment_frames must be a multiple of total_stride")
        self.vqvae_config()
        self.inverter_config()

    @property
    def kind(self) -> str:
        return KIND_ALIASES[self.feature_kind]

    def vqvae_config(self) -> VqVaeConfig:
        return VqVaeConfig(input_dims=FEATURE_DIMS[self.kind], d_mdl=self.d_mdl,
                           heads=self.heads, d_ff=self.d_ff, code_dim=self.code_dim, K=self.K,
                           total_stride=self.total_stride, gamma=self.gamma,
                           smoothing=self.smoothing, jitter_p=self.jitter_p,
                           speaker_dim=self.speaker_dim, ema_decay=self.ema_decay, lr=self.lr)

    def inverter_config(self) -> InverterConfig:
        return InverterConfig(code_dim=self.code_dim, d_mdl=self.inverter_d_mdl,
                              heads=self.inverter_heads, d_ff=self.inverter_d_ff,
                              n_bins=dsp.N_FFT // 2 + 1, r=self.total_stride,
                              lr=self.inverter_lr)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path=None, overrides=(), seed=None) -> RunConfig:
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_INPUT, f"cannot read config {path}: {exc}") from exc
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise CliError(EXIT_INPUT, f"--set expects key=value, got {item!r}")
        data[key.strip()] = _parse_value(value)
    if seed is not None:
        data["seed"] = seed
    names = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise CliError(EXIT_INPUT, f"unknown config keys: {unknown}")
    try:
        cfg = RunConfig(**data)
        cfg.validate()
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_INPUT, f"invalid config: {exc}") from exc
    return cfg


# -- helpers ---------------------------------------------------------------------

def _feature_path(directory: Path, utt_id: str) -> Path:
    return Path(directory) / f"{utt_id}.f32"


def _load_features(records, kind: str, features_dir=None) -> dict:
    """Features per utterance, from ``features_dir`` if given, else computed from audio."""
    out, failures = {}, []
    for r in records:
        try:
            if features_dir is not None:
                out[r.utterance_id] = dsp.read_features(_feature_path(features_dir, r.utterance_id))
            else:
                out[r.utterance_id] = dsp.extract(dsp.read_wav(r.wav_path), kind)
        except (OSError, ValueError) as exc:
            failures.append(f"{r.utterance_id}: {exc}")
    if failures:
        raise CliError(EXIT_INPUT, "feature loading failed:\n  " + "\n  ".join(failures))
    return out


def _crop_batch(arrays, lengths, rng, batch_size: int, segment: int, stride: int):
    # crop starts are stride-aligned so unit boundaries match encode-time framing
    items = rng.integers(len(arrays), size=batch_size)
    crops = []
    for i in items:
        start = stride * int(rng.integers((lengths[i] - segment) // stride + 1))
        crops.append(arrays[i][start:start + segment])
    return items, np.stack(crops)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([row[0]] + [f"{v:.9g}" for v in row[1:]])


def _load_vqvae(path) -> tuple[TransformerVQVAE, dict]:
    try:
        return TransformerVQVAE.load(path)
    except FileNotFoundError as exc:
        raise CliError(EXIT_INPUT, f"checkpoint not found: {path}") from exc
    except (CheckpointError, KeyError) as exc:
        raise CliError(EXIT_INCOMPATIBLE, f"{path}: {exc}") from exc


def _load_inverter(path) -> tuple[CodebookInverter, dict]:
    try:
        return CodebookInverter.load(path)
    except FileNotFoundError as exc:
        raise CliError(EXIT_INPUT, f"checkpoint not found: {path}") from exc
    except (CheckpointError, KeyError) as exc:
        raise CliError(EXIT_INCOMPATIBLE, f"{path}: {exc}") from exc


def _check_dims(model: TransformerVQVAE, feats: dict):
    want = model.config.input_dims
    for utt, f in feats.items():
        if f.dims != want:
            raise CliError(EXIT_INCOMPATIBLE,
                           f"{utt}: features have {f.dims} dims, checkpoint expects {want}")


def _read_units(units_dir: Path, utt_id: str, hop_ms: float) -> SymbolSequence:
    path = Path(units_dir) / f"{utt_id}.txt"
    if not path.is_file():
        raise CliError(EXIT_INPUT, f"missing transcription for {utt_id}: {path}")
    try:
        return SymbolSequence.from_text(path.read_text(), hop_ms)
    except ValueError as exc:
        raise CliError(EXIT_INPUT, f"{path}: malformed unit file ({exc})") from exc


# -- commands ----------------------------------------------------------------------

def cmd_extract_features(args) -> int:
    cfg = load_config(args.config, args.set, args.seed)
    records = load_manifest(args.manifest, check_files=False)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failures = []
    for r in records:
        try:
            feats = dsp.extract(dsp.read_wav(r.wav_path), cfg.kind)
        except (OSError, ValueError) as exc:
            failures.append(f"{r.wav_path}: {exc}")
            continue
        dsp.write_features(_feature_path(out, r.utterance_id), feats)
    for f in failures:
        print(f"error: {f}", file=sys.stderr)
    return EXIT_INPUT if failures else EXIT_OK


def cmd_train_vqvae(args) -> int:
    cfg = load_config(args.config, args.set, args.seed)
    records = load_manifest(args.manifest, check_files=args.features is None)
    feats = _load_features(records, cfg.kind, args.features)
    vcfg = cfg.vqvae_config()
    for utt, f in feats.items():
        if f.dims != vcfg.input_dims:
            raise CliError(EXIT_INCOMPATIBLE,
                           f"{utt}: {f.dims}-d features do not match feature_kind={cfg.feature_kind}")
    speakers = sorted({r.speaker_id for r in records})
    model = TransformerVQVAE(vcfg, speakers, seed=cfg.seed)
    arrays = [feats[r.utterance_id].data for r in records]
    spk = [r.speaker_id for r in records]
    lengths = [a.shape[0] for a in arrays]
    segment = min(cfg.segment_frames, (min(lengths) // cfg.total_stride) * cfg.total_stride)
    if segment < cfg.total_stride:
        raise CliError(EXIT_INPUT, "utterances are too short to train on")
    model.fit_normalization(arrays)
    adam = AdamState(lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    try:
        for step in range(1, cfg.steps + 1):
            items, x = _crop_batch(arrays, lengths, rng, cfg.batch_size, segment,
                                   cfg.total_stride)
            loss = train_step_vqvae(model, Batch(x, [spk[i] for i in items]), adam, rng)
            rows.append([step] + loss.as_row())
    except DivergenceError as exc:
        _write_csv(out / "vqvae_loss.csv", ["step", "total", "rec", "commit", "smooth"], rows)
        last = rows[-1][0] if rows else 0
        raise CliError(EXIT_DIVERGED, f"training diverged ({exc}); last finite step {last}") from exc
    _write_csv(out / "vqvae_loss.csv", ["step", "total", "rec", "commit", "smooth"], rows)
    model.save(out / "vqvae.tvq", {"feature_kind": cfg.kind, "hop_ms": dsp.HOP_MS,
                                   "run_config": asdict(cfg)})
    return EXIT_OK


def cmd_train_inverter(args) -> int:
    if args.checkpoint is None:
        raise CliError(EXIT_INPUT, "train-inverter needs --checkpoint (a trained VQ-VAE)")
    cfg = load_config(args.config, args.set, args.seed)
    model, meta = _load_vqvae(args.checkpoint)
    records = load_manifest(args.manifest)
    feats = _load_features(records, meta.get("feature_kind", cfg.kind), args.features)
    _check_dims(model, feats)
    icfg = cfg.inverter_config()
    if icfg.code_dim != model.config.code_dim or icfg.r != model.config.total_stride:
        raise CliError(EXIT_INCOMPATIBLE, "run config code_dim/stride differ from the checkpoint")
    r = icfg.r
    codes, targets = [], []
    for rec in records:
        try:
            seq = model.encode_utterance(feats[rec.utterance_id])
        except UtteranceTooShort as exc:
            raise CliError(EXIT_INPUT, f"{rec.utterance_id}: {exc}") from exc
        mag, _ = dsp.stft(dsp.read_wav(rec.wav_path))
        S = r * len(seq)
        tgt = mag.data[:S]
        if tgt.shape[0] < S:
            tgt = np.pad(tgt, [(0, S - tgt.shape[0]), (0, 0)], mode="edge")
        codes.append(seq.indices)
        targets.append(tgt)
    inv = CodebookInverter(icfg, model.codebook.vectors, seed=cfg.seed)
    inv.fit_scale(targets)
    seg = min(cfg.inverter_segment_codes, min(len(c) for c in codes))
    adam = AdamState(lr=cfg.inverter_lr)
    rng = np.random.default_rng(cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    try:
        for step in range(1, cfg.inverter_steps + 1):
            items = rng.integers(len(codes), size=cfg.batch_size)
            cb, tb = [], []
            for i in items:
                start = int(rng.integers(len(codes[i]) - seg + 1))
                cb.append(codes[i][start:start + seg])
                tb.append(targets[i][r * start:r * (start + seg)])
            loss = train_step_inverter(inv, np.stack(cb), np.stack(tb), adam)
            rows.append([step, loss])
    except DivergenceError as exc:
        _write_csv(out / "inverter_loss.csv", ["step", "loss"], rows)
        last = rows[-1][0] if rows else 0
        raise CliError(EXIT_DIVERGED, f"training diverged ({exc}); last finite step {last}") from exc
    _write_csv(out / "inverter_loss.csv", ["step", "loss"], rows)
    inv.save(out / "inverter.tvq", {"run_config": asdict(cfg)})
    return EXIT_OK


def cmd_encode(args) -> int:
    if args.checkpoint is None:
        raise CliError(EXIT_INPUT, "encode needs --checkpoint")
    model, meta = _load_vqvae(args.checkpoint)
    records = load_manifest(args.manifest, check_files=args.features is None)
    feats = _load_features(records, meta.get("feature_kind", "mfcc"), args.features)
    _check_dims(model, feats)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for r in records:
        try:
            seq = model.encode_utterance(feats[r.utterance_id])
        except UtteranceTooShort as exc:
            raise CliError(EXIT_INPUT, f"{r.utterance_id}: {exc}") from exc
        (out / f"{r.utterance_id}.txt").write_text(seq.to_text(), encoding="utf-8")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    if args.inverter is None:
        raise CliError(EXIT_INPUT, "synthesize needs --inverter")
    inv, _ = _load_inverter(args.inverter)
    if args.checkpoint is not None:
        model, _ = _load_vqvae(args.checkpoint)
        if model.codebook_hash() != inv.codebook_hash:
            raise CliError(EXIT_INCOMPATIBLE,
                           "inverter was trained against a different codebook than --checkpoint")
    units = Path(args.units)
    if not units.is_dir():
        raise CliError(EXIT_INPUT, f"units directory not found: {units}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in sorted(units.glob("*.txt")):
        try:
            seq = SymbolSequence.from_text(path.read_text())
        except ValueError as exc:
            raise CliError(EXIT_INPUT, f"{path}: malformed unit file ({exc})") from exc
        if len(seq) == 0:
            raise CliError(EXIT_INPUT, f"{path}: empty unit file")
        if seq.indices.min() < 0 or seq.indices.max() >= inv.codebook.shape[0]:
            raise CliError(EXIT_INCOMPATIBLE, f"{path}: unit index outside the codebook")
        wav = synthesize(seq, inv, args.gl_iters)
        dsp.write_wav(out / f"{path.stem}.wav", wav)
    return EXIT_OK


def _triplet_item(item, units: dict, embed_seq):
    if isinstance(item, str):
        utt, onset, offset = item, None, None
    else:
        utt, onset, offset = item["utterance_id"], item.get("onset_s"), item.get("offset_s")
    if utt not in units:
        raise CliError(EXIT_INPUT, f"triplet references unknown utterance {utt!r}")
    seq = units[utt]
    frames = embed_seq(seq.indices)
    if onset is not None or offset is not None:
        hop = seq.frame_hop_ms / 1000.0
        lo = int(np.floor((onset or 0.0) / hop))
        hi = int(np.ceil(offset / hop)) if offset is not None else len(seq)
        frames = frames[lo:max(hi, lo + 1)]
        if frames.shape[0] == 0:
            raise CliError(EXIT_INPUT, f"empty triplet segment in {utt!r}")
    return frames


def cmd_evaluate(args) -> int:
    records = load_manifest(args.manifest, check_files=False)
    if args.units is None:
        raise CliError(EXIT_INPUT, "evaluate needs --units")
    model = None
    if args.checkpoint is not None:
        model, _ = _load_vqvae(args.checkpoint)
        K = model.config.K
        hop = dsp.HOP_MS * model.config.total_stride
    else:
        cfg = load_config(args.config, args.set)
        K, hop = cfg.K, dsp.HOP_MS * cfg.total_stride
    units = {r.utterance_id: _read_units(args.units, r.utterance_id, hop) for r in records}
    seqs = [units[r.utterance_id] for r in records]
    for s in seqs:
        if len(s) and s.indices.max() >= K:
            raise CliError(EXIT_INCOMPATIBLE, f"unit index >= K={K}")
    try:
        rate = bitrate(seqs, [r.duration_s for r in records])
    except ValueError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc
    usage = codebook_usage(seqs, K)
    abx = None
    if args.triplets is not None:
        if model is not None:
            table = np.asarray(model.codebook.vectors, dtype=np.float64)
        else:
            table = np.eye(K)
        try:
            lines = [json.loads(line) for line in Path(args.triplets).read_text().splitlines()
                     if line.strip()]
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_INPUT, f"cannot read triplets: {exc}") from exc
        trip = []
        for t in lines:
            try:
                trip.append(tuple(_triplet_item(t[k], units, table.__getitem__)
                                  for k in ("a", "b", "x")))
            except KeyError as exc:
                raise CliError(EXIT_INPUT, f"triplet missing field {exc}") from exc
        if not trip:
            raise CliError(EXIT_INPUT, "triplet file is empty")
        abx = abx_error_rate(trip)
    report = {"abx": abx, "bitrate": rate.bitrate, "perplexity": usage.perplexity,
              "dead_codes": usage.dead_codes}
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "extract-features": cmd_extract_features,
    "train-vqvae": cmd_train_vqvae,
    "train-inverter": cmd_train_inverter,
    "encode": cmd_encode,
    "synthesize": cmd_synthesize,
    "evaluate": cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trfvq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--manifest", help="JSON-lines utterance manifest")
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value (repeatable)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--checkpoint", help="VQ-VAE checkpoint (.tvq)")
        if name in ("train-vqvae", "train-inverter", "encode"):
            p.add_argument("--features", help="directory written by extract-features")
        if name in ("synthesize", "evaluate"):
            p.add_argument("--units", help="directory of <utterance_id>.txt unit files")
        if name == "synthesize":
            p.add_argument("--inverter", help="inverter checkpoint (.tvq)")
            p.add_argument("--gl-iters", type=int, default=dsp.GRIFFIN_LIM_ITERS)
        if name == "evaluate":
            p.add_argument("--triplets", help="JSON-lines ABX triplets {a, b, x}")
    return parser


_REQUIRED = {
    "extract-features": ("manifest", "out"),
    "train-vqvae": ("manifest", "out"),
    "train-inverter": ("manifest", "out"),
    "encode": ("manifest", "out"),
    "synthesize": ("units", "out"),
    "evaluate": ("manifest",),
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        missing = [f"--{k}" for k in _REQUIRED[args.command] if getattr(args, k) is None]
        if missing:
            raise CliError(EXIT_INPUT, f"{args.command}: missing {', '.join(missing)}")
        if getattr(args, "gl_iters", 1) < 1:
            raise CliError(EXIT_INPUT, "--gl-iters must be >= 1")
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
