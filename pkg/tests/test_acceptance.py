"""Acceptance gate: one test per shipping criterion.

Each test prints a single ``criterion NN <name>: PASS/FAIL`` line (visible
with ``pytest -s``) and enforces its runtime budget. Tolerances are pinned
here and nowhere else; loosening them is a contract change.
"""
import functools
import itertools
import json
import os
import tempfile
import time

import numpy as np

from tritrack.assignment import hungarian
from tritrack.association import TrackerConfig, TrackerState, step, track
from tritrack.camera import CameraCrop, lift_translation
from tritrack.cli import main
from tritrack.embeddings import AttributeDims, ClipBatch
from tritrack.errors import ChecksumError, FormatError, VersionError
from tritrack.io import (load_weights, read_detections_binary,
                         read_detections_jsonl, read_tracks, save_weights,
                         write_detections_binary, write_detections_jsonl,
                         write_tracks)
from tritrack.metrics import LabeledDetection, compute_idf1, evaluate
from tritrack.simulate import SimConfig, generate
from tritrack.training import LossConfig, build_pairs, clip_loss, \
    loss_gradients, train
from tritrack.transformer import (AttentionConfig, attribute_attention,
                                  forward_with_cache, init_weights,
                                  total_attention)

from .oracles import brute_force_assignment, brute_force_idf1, fd_entries

SHRUNK = AttributeDims(app=8, pose=16, loc=4)


def criterion(number, name, budget=None):
    """Wrap a test so it reports one pass/fail line and a time budget."""
    def deco(fn):
        @functools.wraps(fn)
        def wrapper():
            start = time.perf_counter()
            try:
                fn()
                elapsed = time.perf_counter() - start
                if budget is not None and elapsed >= budget:
                    raise AssertionError(
                        f"runtime {elapsed:.2f}s exceeds {budget}s budget")
            except BaseException:
                print(f"criterion {number:2d} {name}: FAIL", flush=True)
                raise
            print(f"criterion {number:2d} {name}: PASS ({elapsed:.2f}s)",
                  flush=True)
        return wrapper
    return deco


# -------------------------------------------------------------------------
# 1. weak-perspective lifting


@criterion(1, "camera-lift", budget=1.0)
def test_criterion_camera_lift():
    centered = CameraCrop(image_w=1000.0, image_h=1000.0, center_x=500.0,
                          center_y=500.0, box_size=2000.0, cam_scale=1.0,
                          cam_tx=0.0, cam_ty=0.0, focal=1000.0)
    assert np.all(np.abs(lift_translation(centered)
                         - np.array([0.0, 0.0, 1.0])) <= 1e-12)

    offset = CameraCrop(image_w=1920.0, image_h=1080.0, center_x=1060.0,
                        center_y=640.0, box_size=200.0, cam_scale=0.5,
                        cam_tx=0.1, cam_ty=-0.2, focal=1000.0)
    assert np.all(np.abs(lift_translation(offset)
                         - np.array([2.1, 1.8, 20.0])) <= 1e-12)

    # the lift depends on cam_scale and box_size only through their product
    rng = np.random.default_rng(20240901)
    base = lift_translation(offset)
    for _ in range(100):
        k = float(np.exp(rng.uniform(-6.0, 6.0)))
        traded = CameraCrop(image_w=1920.0, image_h=1080.0, center_x=1060.0,
                            center_y=640.0, box_size=200.0 * k,
                            cam_scale=0.5 / k, cam_tx=0.1, cam_ty=-0.2, focal=1000.0)
        assert np.allclose(lift_translation(traded), base,
                           rtol=1e-12, atol=0.0)


# -------------------------------------------------------------------------
# 2. attention rows are proper distributions


@criterion(2, "attention-rows", budget=5.0)
def test_criterion_attention_rows():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(2, 9))
        mask = rng.random(n) < 0.7
        if not mask.any():
            mask[int(rng.integers(0, n))] = True
        per_attr = {}
        for att, d in (("app", 8), ("pose", 16), ("loc", 4)):
            q = rng.normal(size=(n, d))
            k = rng.normal(size=(n, d))
            a = attribute_attention(q, k, d, mask)
            assert np.all(np.abs(a[mask].sum(axis=1) - 1.0) <= 1e-12)
            assert np.all(a[:, ~mask] == 0.0)
            assert np.all(a[~mask, :] == 0.0)
            per_attr[att] = a
        betas = rng.uniform(0.1, 2.0, size=3)
        cfg = AttentionConfig(*betas)
        tot = total_attention(per_attr, cfg)
        assert np.all(np.abs(tot[mask].sum(axis=1) - betas.sum()) <= 1e-12)
        assert np.all(tot[:, ~mask] == 0.0)


# -------------------------------------------------------------------------
# 3. analytic gradients versus central finite differences


def _random_instance(seed):
    rng = np.random.default_rng(seed)
    t = int(rng.integers(2, 5))
    p = int(rng.integers(2, 4))
    feats = rng.normal(size=(t, p, SHRUNK.total))
    valid = np.ones((t, p), dtype=bool)
    ids = rng.integers(0, p + 1, size=(t, p)).astype(np.int64)
    batch = ClipBatch(features=feats, valid=valid, identities=ids,
                      dims=SHRUNK)
    weights = init_weights(SHRUNK, seed=seed + 90000)
    return batch, weights


def _kink_adjacent(batch, weights, attn_cfg, margin, gap=1e-3):
    """True when some relu input or pair distance sits within ``gap`` of a
    non-differentiable point, where finite differences are meaningless."""
    outputs, caches = forward_with_cache(batch, weights, attn_cfg)
    flat_valid = batch.flat_valid()
    for _, ff_cache in caches:
        for att in ("app", "pose", "loc"):
            z = ff_cache["per_attr"][att]["z"][flat_valid]
            if np.abs(z).min() < gap:
                return True
    pairs = build_pairs(batch)
    if not pairs.positives or not pairs.negatives:
        return True
    for (ta, ia), (tb, ib) in pairs.positives + pairs.negatives:
        d = float(np.linalg.norm(outputs[ta, ia] - outputs[tb, ib]))
        if d < gap or abs(d - margin) < gap:
            return True
    return False


@criterion(3, "gradient-check", budget=60.0)
def test_criterion_gradient_check():
    attn_cfg = AttentionConfig()
    loss_cfg = LossConfig()
    entries_per_tensor = 4
    checked = 0
    seed_stream = itertools.count(500)
    while checked < 50:
        seed = next(seed_stream)
        batch, weights = _random_instance(seed)
        if _kink_adjacent(batch, weights, attn_cfg, loss_cfg.margin):
            continue
        grads, _ = loss_gradients(batch, weights, loss_cfg, attn_cfg)
        rng = np.random.default_rng(seed + 1)
        for (name, g), (_, w) in zip(grads.named_tensors(),
                                     weights.named_tensors()):
            flat = g.reshape(-1)
            picks = {int(np.abs(flat).argmax())}
            while len(picks) < min(entries_per_tensor, flat.size):
                picks.add(int(rng.integers(0, flat.size)))
            picks = sorted(picks)
            analytic = flat[picks]
            fd = fd_entries(
                lambda: clip_loss(batch, weights, loss_cfg, attn_cfg),
                w, picks, step=1e-5)
            scale = max(np.linalg.norm(analytic), np.linalg.norm(fd))
            if scale < 1e-5:
                # degenerate direction (for example the final shared bias,
                # which cancels in every pairwise difference)
                continue
            rel = np.linalg.norm(analytic - fd) / scale
            assert rel < 1e-4, f"instance {seed} tensor {name}: {rel:.2e}"
        checked += 1


# -------------------------------------------------------------------------
# 4. assignment optimality against brute force


def _ordered_total(cost, pairs):
    """Sum the selected entries smallest-first so that equal assignments
    produce the identical float regardless of row order."""
    vals = np.sort(np.array([cost[r, c] for r, c in pairs]))
    return float(vals.sum())


@criterion(4, "assignment-optimal", budget=10.0)
def test_criterion_assignment_optimal():
    rng = np.random.default_rng(99)
    for trial in range(1000):
        n = int(rng.integers(1, 8))
        m = int(rng.integers(1, 8))
        if trial % 3 == 0:
            cost = rng.integers(-10, 11, size=(n, m)).astype(np.float64)
        else:
            cost = rng.uniform(-10.0, 10.0, size=(n, m))
        pairs = hungarian(cost)
        best, oracle_pairs = brute_force_assignment(cost)
        assert len(pairs) == min(n, m)
        mine = _ordered_total(cost, pairs)
        assert mine == _ordered_total(cost, oracle_pairs), \
            f"trial {trial}: {mine} != {best}"


# -------------------------------------------------------------------------
# 5. tracklet lifecycle


def _vec(x, y=0.0):
    return np.array([x, y], dtype=np.float64)


@criterion(5, "tracklet-lifecycle", budget=10.0)
def test_criterion_tracklet_lifecycle():
    cfg = TrackerConfig()
    assert (cfg.tau, cfg.history_len, cfg.max_age) == (8.0, 20, 24)

    # (a) first frame spawns ids 1..k in slot order
    state = TrackerState(config=cfg)
    first = step(0, [(s, _vec(100.0 * s)) for s in range(4)], state)
    assert first.new_tracks == [(0, 1), (1, 2), (2, 3), (3, 4)]

    # (b) age increments every missed frame; kill once age reaches 24
    state = TrackerState(config=cfg)
    step(0, [(0, _vec(0.0))], state)
    killed_at = None
    for f in range(1, 30):
        out = step(f, [], state)
        if out.killed_tracks:
            killed_at = f
            assert out.killed_tracks == [1]
            break
        assert state.tracks[0].age == f
    assert killed_at == 24
    assert state.tracks == []

    # (c) history is capped at 20 embeddings
    state = TrackerState(config=cfg)
    for f in range(25):
        step(f, [(0, _vec(float(f) * 0.01))], state)
    assert len(state.tracks) == 1
    assert len(state.tracks[0].history) == 20
    assert state.tracks[0].history[0][0] == 0.05

    # (d) a detection exactly at the cap must not match
    state = TrackerState(config=cfg)
    step(0, [(0, _vec(0.0))], state)
    out = step(1, [(0, _vec(cfg.tau))], state)
    assert out.matches == []
    assert out.new_tracks == [(0, 2)]
    inside = TrackerState(config=cfg)
    step(0, [(0, _vec(0.0))], inside)
    out = step(1, [(0, _vec(cfg.tau - 1e-9))], inside)
    assert out.matches == [(0, 1)]

    # (e) a 4-frame gap keeps the identity; a 24-frame gap does not
    frames = [[(0, _vec(0.0))]] + [[]] * 4 + [[(0, _vec(0.1))]]
    outs, _ = track(frames, cfg)
    assert outs[-1].matches == [(0, 1)]
    frames = [[(0, _vec(0.0))]] + [[]] * 24 + [[(0, _vec(0.1))]]
    outs, _ = track(frames, cfg)
    assert outs[-1].matches == []
    assert outs[-1].new_tracks == [(0, 2)]


# -------------------------------------------------------------------------
# 6. metric oracles


@criterion(6, "metrics-oracle", budget=10.0)
def test_criterion_metrics_oracle():
    # ten detections, one label flip in the middle: IDSW=1, MOTA=0.9
    seq = [LabeledDetection(frame=f, det_key="a", gt_id=0,
                            pred_id=(1 if f < 6 else 2))
           for f in range(10)]
    report = evaluate(seq)
    assert report.id_switches == 1
    assert report.mota == 0.9

    # one identity split into two equal halves scores IDF1 = 0.5
    split = [LabeledDetection(frame=f, det_key="a", gt_id=0,
                              pred_id=(1 if f < 5 else 2))
             for f in range(10)]
    assert compute_idf1(split) == 0.5

    rng = np.random.default_rng(31)
    for _ in range(200):
        n = int(rng.integers(4, 40))
        dets = []
        labeled = []
        for i in range(n):
            gt = int(rng.integers(0, 6)) if rng.random() < 0.9 else None
            pred = int(rng.integers(0, 6)) if rng.random() < 0.9 else None
            if gt is None and pred is None:
                gt = 0
            dets.append(LabeledDetection(frame=i, det_key="a",
                                         gt_id=gt, pred_id=pred))
            labeled.append((gt, pred))
        assert compute_idf1(dets) == brute_force_idf1(labeled)


# -------------------------------------------------------------------------
# 7. separable scenario tracks perfectly end to end


@criterion(7, "separable-scenario", budget=30.0)
def test_criterion_separable_scenario():
    cfg = SimConfig(num_people=5, num_frames=200, seed=0)
    scenario = generate(cfg)
    tau = TrackerConfig().tau
    bases = scenario.appearance[:, 0]
    for i in range(5):
        assert np.all(scenario.appearance[i] == bases[i])  # zero noise
        for j in range(i + 1, 5):
            assert np.linalg.norm(bases[i] - bases[j]) > 2.0 * tau

    with tempfile.TemporaryDirectory() as td:
        det = os.path.join(td, "det.jsonl")
        tracks = os.path.join(td, "tracks.jsonl")
        rep = os.path.join(td, "report.json")
        assert main(["simulate", "--people", "5", "--frames", "200",
                     "--seed", "0", "--out", det]) == 0
        assert main(["track", "--detections", det, "--out", tracks]) == 0
        assert main(["eval", "--detections", det, "--tracks", tracks,
                     "--out", rep]) == 0
        with open(rep) as fh:
            report = json.load(fh)
    assert report["id_switches"] == 0
    assert report["idf1"] == 1.0
    assert report["mota"] == 1.0


# -------------------------------------------------------------------------
# 8. identity cues survive a shot change, location alone does not


@criterion(8, "shot-change", budget=30.0)
def test_criterion_shot_change():
    with tempfile.TemporaryDirectory() as td:
        det = os.path.join(td, "det.jsonl")
        assert main(["simulate", "--people", "3", "--frames", "40",
                     "--seed", "42", "--shot-change", "20",
                     "--out", det]) == 0
        switches = {}
        for label, beta in (("identity", "0.5,0.5,0"),
                            ("location", "0,0,1")):
            tracks = os.path.join(td, f"tracks_{label}.jsonl")
            rep = os.path.join(td, f"report_{label}.json")
            assert main(["track", "--detections", det, "--out", tracks,
                         "--beta", beta, "--z-norm", "1"]) == 0
            assert main(["eval", "--detections", det, "--tracks", tracks,
                         "--out", rep]) == 0
            with open(rep) as fh:
                switches[label] = json.load(fh)["id_switches"]
    assert switches["identity"] == 0
    assert switches["location"] == 3  # every person re-ids at the cut


# -------------------------------------------------------------------------
# 9. training reduces the contrastive loss reproducibly


def _training_clip(seed):
    rng = np.random.default_rng(seed)
    bases = rng.normal(size=(3, SHRUNK.total)) * 3.0
    feats = np.empty((8, 3, SHRUNK.total))
    for t in range(8):
        for i in range(3):
            feats[t, i] = bases[i] + 0.5 * rng.normal(size=SHRUNK.total)
    valid = np.ones((8, 3), dtype=bool)
    ids = np.tile(np.arange(3, dtype=np.int64), (8, 1))
    return ClipBatch(features=feats, valid=valid, identities=ids,
                     dims=SHRUNK)


@criterion(9, "training-smoke", budget=60.0)
def test_criterion_training_smoke():
    clip = _training_clip(7)
    cfg = LossConfig(learning_rate=0.001, iterations=200)
    _, history = train([clip], init_weights(SHRUNK, seed=0), cfg,
                       AttentionConfig())
    assert len(history) == 200
    assert history[-1] <= 0.5 * history[0]
    _, rerun = train([clip], init_weights(SHRUNK, seed=0), cfg,
                     AttentionConfig())
    assert history == rerun  # bit-identical


# -------------------------------------------------------------------------
# 10. file formats round-trip and reject corruption


@criterion(10, "format-roundtrip", budget=30.0)
def test_criterion_format_roundtrip():
    scenario = generate(SimConfig(num_people=2, num_frames=4, seed=5,
                                  appearance_noise_sigma=0.2))
    with tempfile.TemporaryDirectory() as td:
        jpath = os.path.join(td, "det.jsonl")
        bpath = os.path.join(td, "det.t3db")
        write_detections_jsonl(jpath, scenario.detections)
        write_detections_binary(bpath, scenario.detections)
        jback = read_detections_jsonl(jpath)
        bback = read_detections_binary(bpath)
        for orig, a, b in zip(scenario.detections, jback, bback):
            for got in (a, b):
                assert got.frame == orig.frame
                assert got.det_key == orig.det_key
                assert got.crop == orig.crop
                assert np.array_equal(got.keypoints, orig.keypoints)
                assert np.array_equal(got.appearance, orig.appearance)
                assert np.array_equal(got.pose, orig.pose)
        j2 = os.path.join(td, "det2.jsonl")
        b2 = os.path.join(td, "det2.t3db")
        write_detections_jsonl(j2, jback)
        write_detections_binary(b2, bback)
        with open(jpath, "rb") as fh:
            jbytes = fh.read()
        with open(j2, "rb") as fh:
            assert fh.read() == jbytes
        with open(bpath, "rb") as fh:
            bbytes = fh.read()
        with open(b2, "rb") as fh:
            assert fh.read() == bbytes

        # tracks
        from tritrack.io import TrackRecord
        trows = [TrackRecord(det_key=f"p{i:03d}", frame=f, track_id=i + 1)
                 for f in range(3) for i in range(2)]
        tpath = os.path.join(td, "tracks.jsonl")
        write_tracks(tpath, trows)
        assert read_tracks(tpath) == sorted(trows,
                                            key=lambda r: r.sort_key())

        # weights
        wpath = os.path.join(td, "model.t3dw")
        weights = init_weights(SHRUNK, seed=2)
        save_weights(wpath, weights, AttentionConfig(0.2, 0.3, 0.5))
        loaded, lcfg = load_weights(wpath)
        assert (lcfg.beta_app, lcfg.beta_pose, lcfg.beta_loc) == \
            (0.2, 0.3, 0.5)
        for (name, a), (_, b) in zip(weights.named_tensors(),
                                     loaded.named_tensors()):
            assert np.array_equal(a, b), name

        # corruption raises the designated errors
        with open(bpath, "rb") as fh:
            raw = fh.read()
        trunc = os.path.join(td, "trunc.t3db")
        with open(trunc, "wb") as fh:
            fh.write(raw[:len(raw) - 8])
        _expect(ChecksumError, read_detections_binary, trunc)
        flip = bytearray(raw)
        flip[len(flip) // 2] ^= 0x40
        bad = os.path.join(td, "bad.t3db")
        with open(bad, "wb") as fh:
            fh.write(bytes(flip))
        _expect(ChecksumError, read_detections_binary, bad)

        with open(wpath, "rb") as fh:
            wraw = fh.read()
        wtrunc = os.path.join(td, "trunc.t3dw")
        with open(wtrunc, "wb") as fh:
            fh.write(wraw[:len(wraw) - 8])
        _expect(ChecksumError, load_weights, wtrunc)
        wmagic = os.path.join(td, "magic.t3dw")
        with open(wmagic, "wb") as fh:
            fh.write(b"XXXX" + wraw[4:])
        _expect(FormatError, load_weights, wmagic)
        wver = bytearray(wraw)
        wver[4:8] = (7).to_bytes(4, "little")
        wvpath = os.path.join(td, "version.t3dw")
        with open(wvpath, "wb") as fh:
            fh.write(bytes(wver))
        _expect(VersionError, load_weights, wvpath)

        # the command line maps corrupt inputs to exit code 2
        out = os.path.join(td, "out.jsonl")
        assert main(["track", "--detections", jpath, "--weights", wtrunc,
                     "--out", out]) == 2


def _expect(err, fn, *args):
    try:
        fn(*args)
    except err:
        return
    raise AssertionError(f"{fn.__name__} did not raise {err.__name__}")
