import json
import subprocess
import sys

import numpy as np
import pytest

from mbfv.cli import main
from mbfv.evaluation import minutiae_doc, perturb_minutiae, synthetic_minutiae
from mbfv.vault import HEADER_SIZE, VaultRecord

CODEC = {
    "field": {"e": 16, "reduction": 0x1100B},
    "characteristics": [
        {"name": "fingers", "type": "minutiae", "instances": 4,
         "grid": {"spacing": 25, "angle_quanta": 6, "region": [400, 500], "t_max": 40}},
        {"name": "face", "type": "embedding", "dims": 512, "intervals": 4, "thresholds": "standard-normal"},
    ],
}


def _write_lines(path, docs):
    path.write_text("".join(json.dumps(d) + "\n" for d in docs))
    return str(path)


@pytest.fixture(scope="module")
def subject(tmp_path_factory):
    d = tmp_path_factory.mktemp("subject")
    rng = np.random.default_rng(0)
    (d / "codec.json").write_text(json.dumps(CODEC))
    fingers = [synthetic_minutiae(rng, 60) for _ in range(4)]
    face = rng.normal(size=512)
    paths = {"dir": d, "config": str(d / "codec.json")}
    paths["fingers"] = [_write_lines(d / f"finger{i}.jsonl", [minutiae_doc(f)]) for i, f in enumerate(fingers)]
    paths["face"] = _write_lines(d / "face.jsonl", [{"values": face.tolist()}])
    paths["probe_fingers"] = [_write_lines(d / f"probe{i}.jsonl", [minutiae_doc(perturb_minutiae(rng, f))])
                              for i, f in enumerate(fingers)]
    paths["probe_face"] = _write_lines(d / "probe_face.jsonl",
                                       [{"values": (face + rng.normal(0, 0.3, 512)).tolist()}])
    paths["other_fingers"] = [_write_lines(d / f"other{i}.jsonl", [minutiae_doc(synthetic_minutiae(rng, 60))])
                              for i in range(4)]
    paths["other_face"] = _write_lines(d / "other_face.jsonl", [{"values": rng.normal(size=512).tolist()}])
    return paths


def _inputs(fingers, face):
    args = []
    for f in fingers:
        args += ["--input", "fingers", f]
    return args + ["--input", "face", face]


def _enroll(subject, out, k=400, extra=()):
    return main(["enroll", "--config", subject["config"], "--k", str(k), "--out", str(out), "--seed", "7",
                 *_inputs(subject["fingers"], subject["face"]), *extra])


def _verify(subject, record, fingers=None, face=None, extra=()):
    return main(["verify", str(record), "--config", subject["config"],
                 *_inputs(fingers or subject["fingers"], face or subject["face"]), *extra])


def test_enroll_verify_round_trip(subject, capsys):
    rec = subject["dir"] / "plain.mbfv"
    assert _enroll(subject, rec) == 0
    out = capsys.readouterr().out
    assert "secret digest" in out and "secret " not in out.replace("secret digest", "")
    record = VaultRecord.from_bytes(rec.read_bytes())
    assert 880 <= record.t <= 980 and record.k == 400 and not record.sealed
    assert _verify(subject, rec) == 0
    assert "accept" in capsys.readouterr().out
    assert _verify(subject, rec, subject["other_fingers"], subject["other_face"]) == 1


def test_emit_secret_and_determinism(subject, capsys):
    a, b = subject["dir"] / "a.mbfv", subject["dir"] / "b.mbfv"
    assert _enroll(subject, a, extra=["--emit-secret"]) == 0
    assert "\nsecret " in capsys.readouterr().out
    assert _enroll(subject, b, extra=["--emit-secret"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_noisy_genuine_probe(subject):
    rec = subject["dir"] / "noisy.mbfv"
    assert _enroll(subject, rec, k=300) == 0
    code = _verify(subject, rec, subject["probe_fingers"], subject["probe_face"], ["--multiplicity", "2"])
    assert code == 0


def test_password(subject):
    rec = subject["dir"] / "sealed.mbfv"
    assert _enroll(subject, rec, extra=["--password", "s3cret"]) == 0
    data = rec.read_bytes()
    assert data[5] & 1
    assert _verify(subject, rec, extra=["--password", "s3cret"]) == 0
    assert _verify(subject, rec, extra=["--password", "wrong"]) == 1
    assert _verify(subject, rec) == 1


def test_parse_errors(subject, tmp_path, capsys):
    rec = tmp_path / "r.mbfv"
    code = main(["enroll", "--config", subject["config"], "--k", "10", "--out", str(rec),
                 *_inputs(subject["fingers"][:4], subject["face"])[:-3]])
    assert code == 2
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps({"values": [0.0] * 512}) + "\n{oops\n")
    assert main(["enroll", "--config", subject["config"], "--k", "10", "--out", str(rec),
                 *_inputs(subject["fingers"], str(bad))]) == 2
    assert f"{bad}:2:" in capsys.readouterr().err
    assert main(["enroll", "--config", str(tmp_path / "missing.json"), "--k", "3", "--out", str(rec)]) == 2
    assert main(["frobnicate"]) == 2


def test_parameter_errors(subject, tmp_path):
    small = dict(CODEC, field={"e": 8})
    cfg = tmp_path / "small.json"
    cfg.write_text(json.dumps(small))
    rec = tmp_path / "r.mbfv"
    assert main(["enroll", "--config", str(cfg), "--k", "10", "--out", str(rec),
                 *_inputs(subject["fingers"], subject["face"])]) == 3
    assert _enroll(subject, rec, k=5000) == 3


def test_fingerprint_mismatch(subject, tmp_path):
    rec = tmp_path / "r.mbfv"
    assert _enroll(subject, rec) == 0
    other = json.loads(json.dumps(CODEC))
    other["characteristics"][0]["grid"]["spacing"] = 30
    cfg = tmp_path / "other.json"
    cfg.write_text(json.dumps(other))
    assert main(["verify", str(rec), "--config", str(cfg),
                 *_inputs(subject["fingers"], subject["face"])]) == 4


def test_single_bit_corruptions_never_accept(subject, tmp_path):
    rec = tmp_path / "r.mbfv"
    assert _enroll(subject, rec, k=400) == 0
    data = rec.read_bytes()
    rng = np.random.default_rng(9)
    positions = list(range(0, HEADER_SIZE * 8, 7)) + rng.integers(HEADER_SIZE * 8, len(data) * 8, 40).tolist()
    codes = []
    for bit in positions:
        bad = bytearray(data)
        bad[bit // 8] ^= 1 << (bit % 8)
        rec.write_bytes(bytes(bad))
        codes.append(_verify(subject, rec))
    assert 0 not in codes
    assert set(codes) <= {1, 2, 3, 4}


def test_eval_bundled_fas_check(tmp_path, capsys):
    assert main(["eval", "--config", "fas-check", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    for value in ("27.35*", "30.03*", "32.71*", "35.39*", "24.03*", "46.57*", "25.20*"):
        assert value in out
    data = json.loads((tmp_path / "fas-check.json").read_text())
    assert [r["extrapolated"] for r in data[1]["rows"]] == [False, False, True, True, True, True]


def test_eval_trials_deterministic(tmp_path):
    cfg = {"defaults": {"scale": 10, "n_mated": 15, "n_nonmated": 15,
                        "decoder": {"kind": "gs", "multiplicity": 1}},
           "systems": [{"name": "fingers", "profiles": ["fingers"], "k_values": [2, 3, 4]}]}
    path = tmp_path / "trials.json"
    path.write_text(json.dumps(cfg))
    for run in ("a", "b"):
        assert main(["eval", "--config", str(path), "--out", str(tmp_path / run), "--seed", "5"]) == 0
    for name in ("fingers.txt", "fingers.json", "fingers.curve.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    report = json.loads((tmp_path / "a" / "fingers.json").read_text())
    assert report["metadata"]["seed"] == 5 and report["metadata"]["scale"] == 10


def test_eval_infeasible_row(tmp_path, capsys):
    cfg = {"systems": [{"name": "f", "profiles": ["fingers"], "k_values": [2, 40], "scale": 10,
                        "n_mated": 3, "n_nonmated": 3}]}
    path = tmp_path / "t.json"
    path.write_text(json.dumps(cfg))
    assert main(["eval", "--config", str(path), "--out", str(tmp_path / "o")]) == 3
    assert "k=[40]" in capsys.readouterr().err


def test_eval_bundled_paper_tables_parses():
    from types import SimpleNamespace
    from mbfv.cli import build_trial_configs, load_eval_config
    args = SimpleNamespace(seed=None, scale=None, n_mated=None, n_nonmated=None, decoder=None)
    configs = build_trial_configs(load_eval_config("paper-tables"), args)
    assert [c.name for c in configs] == ["fingers", "face", "fusion"]
    assert configs[1].k_values == (26, 27, 29, 30, 32, 34, 35, 37, 38, 40, 42, 43, 45, 46, 48)
    assert configs[0].k_values == tuple(range(2, 9))
    assert all(c.scale == 10 for c in configs)


def test_calibrate(subject, tmp_path, capsys):
    rng = np.random.default_rng(4)
    pairs = []
    for i in range(6):
        mated = i % 2 == 0
        entry = {"mated": mated, "a": {}, "b": {}}
        fa = [synthetic_minutiae(rng, 60) for _ in range(4)]
        fb = [perturb_minutiae(rng, f) for f in fa] if mated else [synthetic_minutiae(rng, 60) for _ in range(4)]
        va = rng.normal(size=512)
        vb = va + rng.normal(0, 0.3, 512) if mated else rng.normal(size=512)
        for side, fs, v in (("a", fa, va), ("b", fb, vb)):
            entry[side]["fingers"] = _write_lines(tmp_path / f"{i}{side}_f.jsonl", [minutiae_doc(f) for f in fs])
            entry[side]["face"] = _write_lines(tmp_path / f"{i}{side}_v.jsonl", [{"values": v.tolist()}])
        pairs.append(entry)
    corpus = tmp_path / "corpus.json"
    corpus.write_text(json.dumps({"pairs": pairs}))
    out = tmp_path / "calibrated.json"
    assert main(["calibrate", "--config", subject["config"], "--corpus", str(corpus), "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "before fingers" in printed and "after face" in printed
    cal = json.loads(out.read_text())
    clones = {c["name"]: c.get("clone", 1) for c in cal["characteristics"]}
    assert clones["face"] == 1 and clones["fingers"] == 5
    assert cal["field"]["e"] > 16  # cloned fingerprint universe needs a wider field
    assert len(cal["profiles"]) == 2


def test_calibrate_single_characteristic(tmp_path):
    cfg = {"characteristics": [{"name": "s", "type": "set", "universe": 50}]}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    pairs = []
    for i, (a, b, m) in enumerate([([1, 2, 3], [1, 2, 4], True), ([5, 6, 7], [8, 9, 10], False)]):
        pairs.append({"mated": m, "a": {"s": _write_lines(tmp_path / f"{i}a", [{"elements": a}])},
                      "b": {"s": _write_lines(tmp_path / f"{i}b", [{"elements": b}])}})
    (tmp_path / "corpus.json").write_text(json.dumps({"pairs": pairs}))
    out = tmp_path / "o.json"
    assert main(["calibrate", "--config", str(tmp_path / "c.json"), "--corpus", str(tmp_path / "corpus.json"),
                 "--out", str(out)]) == 0
    assert json.loads(out.read_text())["characteristics"][0]["clone"] == 1


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "mbfv", "eval", "--config", "fas-check", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "25.20*" in res.stdout
