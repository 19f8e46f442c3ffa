"""Command-line interface: enroll, verify, eval, calibrate.

Exit codes: 0 accept/success, 1 reject, 2 parse error, 3 parameter or
capacity error, 4 codec fingerprint mismatch.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .codec import (CodecConfig, balance_overlap_f, clone_factor, encode_characteristic,
                    estimate_profile)
from .decoder import GsParams
from .errors import (ConfigError, EncodingOverflowError, ExtrapolationError, ParameterError,
                     RecordFormatError)
from .evaluation import (TrialConfig, curve_text, extrapolate_fas, gmr_fas_curve, run_trials)
from .galois import field_for
from .harden import open_record, seal
from .vault import DecoderChoice, VaultRecord, encode_secret, enroll, verify

log = logging.getLogger("mbfv")

EXIT_ACCEPT, EXIT_REJECT, EXIT_PARSE, EXIT_PARAM, EXIT_MISMATCH = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# File helpers
# ---------------------------------------------------------------------------

def _read_json(path: str, what: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(EXIT_PARSE, f"{path}: cannot read {what}: {exc.strerror}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_PARSE, f"{path}:{exc.lineno}: invalid JSON in {what}: {exc.msg}")


def read_documents(path: str) -> list[dict]:
    """One JSON document per non-empty line."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise CliError(EXIT_PARSE, f"{path}: cannot read feature file: {exc.strerror}")
    docs = []
    for no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_PARSE, f"{path}:{no}: invalid JSON: {exc.msg}")
        if not isinstance(doc, dict):
            raise CliError(EXIT_PARSE, f"{path}:{no}: expected a JSON object")
        docs.append(doc)
    if not docs:
        raise CliError(EXIT_PARSE, f"{path}: no feature documents")
    return docs


def load_codec_config(path: str) -> CodecConfig:
    try:
        cfg = CodecConfig.from_dict(_read_json(path, "codec config"))
    except ConfigError as exc:
        raise CliError(EXIT_PARSE, f"{path}: {exc}")
    try:
        cfg.check_capacity()
    except EncodingOverflowError as exc:
        raise CliError(EXIT_PARAM, f"{path}: {exc}")
    return cfg


def _gather_inputs(cfg: CodecConfig, pairs: list[list[str]]) -> dict[str, list[dict]]:
    names = {c.name for c in cfg.characteristics}
    inputs: dict[str, list[dict]] = {}
    for name, path in pairs or []:
        if name not in names:
            raise CliError(EXIT_PARSE, f"{path}: unknown characteristic {name!r}")
        inputs.setdefault(name, []).extend(read_documents(path))
    missing = [c.name for c in cfg.characteristics if c.name not in inputs]
    if missing:
        raise CliError(EXIT_PARSE, f"missing input for characteristic(s): {', '.join(missing)}")
    return inputs


def _encode(cfg: CodecConfig, inputs):
    try:
        return cfg.encode(inputs)
    except EncodingOverflowError as exc:
        raise CliError(EXIT_PARAM, str(exc))
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_PARSE, f"bad feature document: {exc}")


def _rng(seed: Optional[int]):
    return None if seed is None else np.random.default_rng(seed)


def _decoder(args) -> DecoderChoice:
    try:
        return DecoderChoice(args.decoder, GsParams(args.multiplicity, args.max_list), args.budget)
    except ParameterError as exc:
        raise CliError(EXIT_PARAM, str(exc))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_enroll(args) -> int:
    cfg = load_codec_config(args.config)
    features = _encode(cfg, _gather_inputs(cfg, args.input))
    rng = _rng(args.seed)
    try:
        record, secret = enroll(features, args.k, cfg.field, rng=rng, codec_fingerprint=cfg.fingerprint())
    except (ParameterError, EncodingOverflowError) as exc:
        raise CliError(EXIT_PARAM, str(exc))
    if args.password is not None:
        record = seal(record, args.password, rng=rng)
    Path(args.out).write_bytes(record.to_bytes())
    print(f"enrolled t={record.t} k={record.k} field=GF(2^{cfg.field.e}) sealed={record.sealed}")
    print(f"secret digest {record.secret_hash.hex()}")
    if args.emit_secret:
        print(f"secret {encode_secret(secret, cfg.field).hex()}")
    return EXIT_ACCEPT


def cmd_verify(args) -> int:
    cfg = load_codec_config(args.config)
    try:
        record = VaultRecord.from_bytes(Path(args.record).read_bytes())
    except OSError as exc:
        raise CliError(EXIT_PARSE, f"{args.record}: cannot read record: {exc.strerror}")
    except (RecordFormatError, ParameterError) as exc:
        raise CliError(EXIT_PARSE, f"{args.record}: {exc}")
    if record.codec_fingerprint != cfg.fingerprint():
        raise CliError(EXIT_MISMATCH, f"{args.record}: codec config does not match the record's fingerprint")
    if cfg.field != record.field:
        raise CliError(EXIT_MISMATCH, f"{args.record}: record field differs from the codec config field")
    if record.sealed:
        if args.password is None:
            log.warning("record is password protected but no password was given")
        record = open_record(record, args.password or "")
    probe = _encode(cfg, _gather_inputs(cfg, args.input))
    out = verify(record, probe, _decoder(args))
    print(f"decode_ops {out.decode_ops:.6g} radius {out.radius} decoder {args.decoder}")
    if out.accepted:
        digest = hashlib.sha256(encode_secret(out.recovered_secret, record.field)).hexdigest()
        print(f"accept secret digest {digest}")
        return EXIT_ACCEPT
    print(f"reject: {out.reason}")
    return EXIT_REJECT


BUNDLED = ("paper-tables", "fas-check")


def load_eval_config(spec: str) -> dict:
    if spec in BUNDLED:
        return json.loads(resources.files("mbfv.configs").joinpath(f"{spec}.json").read_text())
    return _read_json(spec, "trial config")


def _k_values(d: dict, scale: float) -> list[int]:
    if "k_values" in d:
        return [int(k) for k in d["k_values"]]
    r = d.get("k_range")
    if r is None:
        raise ConfigError("system needs k_values or k_range")
    ks = []
    for k in range(int(r["start"]), int(r["stop"]) + 1, int(r["step"])):
        ks.append(max(1, int(k / scale + 0.5)))
    return sorted(set(ks))


def build_trial_configs(doc: dict, args) -> list[TrialConfig]:
    """System sections over the config defaults, command-line flags over both."""
    defaults = doc.get("defaults", {})
    flags = {key: getattr(args, key) for key in ("seed", "scale", "n_mated", "n_nonmated")
             if getattr(args, key, None) is not None}
    if getattr(args, "decoder", None) is not None:
        flags["decoder"] = {"kind": args.decoder, "multiplicity": args.multiplicity,
                            "max_list": args.max_list, "budget": args.budget}
    out = []
    for sysdoc in doc.get("systems", []):
        merged = {**defaults, **sysdoc, **flags}
        merged["k_values"] = _k_values(merged, float(merged.get("scale", 1)))
        merged.pop("k_range", None)
        out.append(TrialConfig.from_dict(merged))
    return out


def run_fas_fixtures(doc: dict) -> tuple[str, list[dict]]:
    text, data = [], []
    for fx in doc.get("fas_fixtures", []):
        rows = [(int(k), None if f is None else float(f)) for k, f in fx["rows"]]
        done = extrapolate_fas(rows)
        text.append(f"# {fx['name']}")
        text.append(f"{'k':>5}  {'FAS (in bits)':>13}")
        for k, f, ext in done:
            text.append(f"{k:>5}  {f:>12.2f}{'*' if ext else ' '}")
        data.append({"name": fx["name"], "rows": [{"k": k, "fas": f, "extrapolated": e} for k, f, e in done]})
    if data:
        text.append("* extrapolated from the last two estimable rows")
    return "\n".join(text) + ("\n" if text else ""), data


def cmd_eval(args) -> int:
    doc = load_eval_config(args.config)
    try:
        configs = build_trial_configs(doc, args)
        fas_text, fas_data = run_fas_fixtures(doc)
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_PARSE, f"{args.config}: {exc}")
    except ExtrapolationError as exc:
        raise CliError(EXIT_PARAM, f"{args.config}: {exc}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    status = EXIT_ACCEPT
    if fas_data:
        (out / "fas-check.txt").write_text(fas_text)
        (out / "fas-check.json").write_text(json.dumps(fas_data, indent=2, sort_keys=True) + "\n")
        sys.stdout.write(fas_text)
    for cfg in configs:
        report = run_trials(cfg)
        name = cfg.name or "system"
        (out / f"{name}.txt").write_text(report.to_text())
        (out / f"{name}.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        (out / f"{name}.curve.txt").write_text(curve_text(gmr_fas_curve(report)))
        sys.stdout.write(report.to_text())
        bad = [r.k for r in report.rows if r.infeasible]
        if bad:
            print(f"{name}: infeasible rows k={bad} (k not below the mean enrolment size)", file=sys.stderr)
            status = EXIT_PARAM
    return status


def cmd_calibrate(args) -> int:
    cfg = load_codec_config(args.config)
    corpus = _read_json(args.corpus, "calibration corpus")
    # corpus: {"pairs": [{"mated": bool, "a": {name: path}, "b": {name: path}}, ...]}
    try:
        pairs = corpus["pairs"]
        per_char = {c.name: [(read_documents(p["a"][c.name]), read_documents(p["b"][c.name]), bool(p["mated"]))
                             for p in pairs] for c in cfg.characteristics}
    except (KeyError, TypeError) as exc:
        raise CliError(EXIT_PARSE, f"{args.corpus}: bad corpus layout: {exc}")

    def profile(codec, raw):
        try:
            return estimate_profile([(encode_characteristic(codec, a), encode_characteristic(codec, b), m)
                                     for a, b, m in raw], codec.name)
        except (ConfigError, ValueError) as exc:
            raise CliError(EXIT_PARSE, f"{args.corpus}: {exc}")

    before = {c.name: profile(c, per_char[c.name]) for c in cfg.characteristics}
    for p in before.values():
        print(f"before {p.name}: size {p.avg_size:.2f} mated {p.mated_overlap:.2f} "
              f"non-mated {p.nonmated_overlap:.2f} relative {p.relative_nonmated:.4f}")
    codecs = list(cfg.characteristics)
    if len(codecs) > 1:
        # f: raise the weaker characteristics' relative non-mated overlap to the strongest one
        target = max(p.relative_nonmated for p in before.values())
        for i, c in enumerate(codecs):
            if before[c.name].relative_nonmated >= target or not c.knob_grid():
                continue
            res = balance_overlap_f(replace(c, clone=1), per_char[c.name], target)
            if res.reached:
                codecs[i] = replace(res.codec, clone=c.clone)
                print(f"f {c.name}: knob {c.knob} -> {res.codec.knob}, relative overlap "
                      f"{res.nonmated_before:.4f} -> {res.achieved:.4f}, mated {res.mated_before:.4f} -> "
                      f"{res.mated_after:.4f}")
            else:
                log.warning("%s: overlap target %.4f unreachable (best %.4f); keeping the quantiser",
                            c.name, target, res.achieved)
        # g: clone the smaller sets up to the largest expected size
        mid = {c.name: profile(replace(c, clone=1), per_char[c.name]) for c in codecs}
        largest = max(p.avg_size for p in mid.values())
        for i, c in enumerate(codecs):
            m = clone_factor(mid[c.name].avg_size, largest) if mid[c.name].avg_size > 0 else 1
            codecs[i] = replace(c, clone=m)
            print(f"g {c.name}: m = {m}")
    new = CodecConfig(tuple(codecs), cfg.field)
    if new.max_value() >= new.field.order:
        new = replace(new, field=field_for(new.max_value(), cfg.field.e))
        print(f"field widened to GF(2^{new.field.e}) for the cloned universe")
    after = tuple(profile(c, per_char[c.name]) for c in new.characteristics)
    for p in after:
        print(f"after {p.name}: size {p.avg_size:.2f} mated {p.mated_overlap:.2f} "
              f"non-mated {p.nonmated_overlap:.2f} relative {p.relative_nonmated:.4f}")
    new = replace(new, profiles=after)
    Path(args.out).write_text(json.dumps(new.to_dict(), indent=2) + "\n")
    return EXIT_ACCEPT


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _add_decoder_flags(p, default: Optional[str] = "gs"):
    p.add_argument("--decoder", choices=("gs", "bruteforce"), default=default)
    p.add_argument("--multiplicity", type=int, default=1, help="GS interpolation multiplicity")
    p.add_argument("--max-list", type=int, default=16, help="GS list size / Y-degree cap")
    p.add_argument("--budget", type=int, default=None, help="brute-force subset budget")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mbfv", description="Multi-biometric improved fuzzy vault")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enroll", help="lock feature files into a vault record")
    p.add_argument("--config", required=True, help="codec config (JSON)")
    p.add_argument("--input", nargs=2, action="append", metavar=("NAME", "PATH"),
                   help="feature file for a characteristic (repeatable)")
    p.add_argument("--k", type=int, required=True, help="secret polynomial degree bound")
    p.add_argument("--out", required=True)
    p.add_argument("--password")
    p.add_argument("--seed", type=int)
    p.add_argument("--emit-secret", action="store_true", help="print the secret polynomial encoding")
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("verify", help="verify probe feature files against a record")
    p.add_argument("record")
    p.add_argument("--config", required=True)
    p.add_argument("--input", nargs=2, action="append", metavar=("NAME", "PATH"))
    p.add_argument("--password")
    _add_decoder_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eval", help="run synthetic GMR/FMR/FAS trials")
    p.add_argument("--config", required=True, help="trial config path or bundled name: " + ", ".join(BUNDLED))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--scale", type=float)
    p.add_argument("--n-mated", type=int)
    p.add_argument("--n-nonmated", type=int)
    _add_decoder_flags(p, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("calibrate", help="measure overlap profiles and derive f/g balancing")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus", required=True, help="JSON listing labelled sample pairs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_ACCEPT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ParameterError, EncodingOverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
