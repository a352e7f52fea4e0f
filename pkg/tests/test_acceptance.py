"""End-to-end acceptance checks, one pass/fail line per criterion.

Criterion 7 is long (about an hour on one core) and only runs with
``--runslow``. Criterion 8 covers what cannot be reproduced at desk scale and
checks that the full-run procedure is documented.
"""

import hashlib
import math
import re
import time
from pathlib import Path

import numpy as np
import pytest

from rectdyn.collision import resolve_contact, sat_contact, step_world
from rectdyn.dataset import generate_dataset
from rectdyn.model import NetworkConfig, build_network, param_count
from rectdyn.nn import (
    BatchNorm2d,
    QuadraticLoss,
    ReLU,
    ResidualAdd,
    ResidualModule,
    grad_check,
    init_params,
    kink_free_input,
)
from rectdyn.nn.layers import Conv2d
from rectdyn.physics import PhysicsParams, make_body
from rectdyn.report import dump_activations, render_report
from rectdyn.scene import GraspSpec, Scene, rollout, sample_grasp, sample_scene, stream
from rectdyn.train import TrainConfig, fit, train

PARAMS = PhysicsParams()
ROOT = Path(__file__).resolve().parents[1]


def test_criterion_1_parameter_count(criterion):
    t = time.perf_counter()
    net = build_network(NetworkConfig(f=5, q=16, d=8))
    count, convs = param_count(net), len(net.convs())
    dt = time.perf_counter() - t
    criterion(1, count == 104_417 and convs == 18 and dt < 1.0,
              f"{count} parameters, {convs} convolutions, {dt:.2f}s")


def test_criterion_2_gradient_fidelity(criterion):
    t = time.perf_counter()
    rng = np.random.default_rng(2024)
    errors = {}

    conv = Conv2d(3, 4, 3, dtype=np.float64)
    init_params(conv, rng)
    errors["conv2d"] = grad_check(conv, (2, 3, 6, 6), rng=rng)

    bn = BatchNorm2d(3, dtype=np.float64)
    init_params(bn, rng)
    errors["batchnorm"] = grad_check(bn, (4, 3, 5, 5), rng=rng)

    errors["relu"] = grad_check(ReLU(), (2, 3, 5, 5), rng=rng, min_abs=1e-3)
    errors["residual_add"] = grad_check(ResidualAdd(), [(2, 3, 4, 4), (2, 3, 4, 4)], rng=rng)
    errors["quadratic_loss"] = grad_check(QuadraticLoss(rng.random((2, 1, 6, 6))), (2, 1, 6, 6), rng=rng)

    # Conv biases that feed batch norm have gradients that are exactly zero;
    # the 1e-8 denominator floor then turns float64 finite-difference noise
    # (~1e-11) into ~1e-3 relative error. These two checks run the same
    # central differences in extended precision.
    module = ResidualModule(3, 3, dtype=np.float64)
    init_params(module, rng)
    x = kink_free_input(module, (2, 3, 5, 5), rng)
    errors["module M"] = grad_check(module, (2, 3, 5, 5), rng=rng, inputs=[x], dtype=np.longdouble)

    net = build_network(NetworkConfig(q=4, d=1), rng, dtype=np.float64)
    x = kink_free_input(net, (2, 2, 16, 16), rng)
    errors["network q=4 d=1 16x16"] = grad_check(net, (2, 2, 16, 16), rng=rng, inputs=[x], dtype=np.longdouble)

    dt = time.perf_counter() - t
    worst = max(errors.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errors.items())
    criterion(2, worst <= 1e-4 and dt < 60, f"max relative error {worst:.1e} ({detail}); {dt:.0f}s")


def _momentum(bodies):
    return np.sum([np.multiply(b.mass, b.lin_vel) for b in bodies], axis=0)


def _normal_speed(a, b, c):
    va, vb = a.point_velocity(c.point), b.point_velocity(c.point)
    return (vb[0] - va[0]) * c.normal[0] + (vb[1] - va[1]) * c.normal[1]


def test_criterion_3_physics_conservation(criterion):
    t = time.perf_counter()
    rng = np.random.default_rng(3)
    free = PARAMS.replace(lin_drag=0.0, ang_drag=0.0)
    ext = PARAMS.half_extents
    worst_momentum = 0.0
    worst_restitution = -math.inf
    collisions = 0
    impacts = 0
    for _ in range(1000):
        a = make_body((0.42, 0.5 + rng.uniform(-0.03, 0.03)), rng.uniform(0, math.pi), ext,
                      mass=rng.uniform(0.5, 2), lin_vel=(rng.uniform(0.5, 2), rng.uniform(-0.3, 0.3)),
                      ang_vel=rng.uniform(-3, 3))
        b = make_body((0.6, 0.5 + rng.uniform(-0.03, 0.03)), rng.uniform(0, math.pi), ext,
                      mass=rng.uniform(0.5, 2), lin_vel=(rng.uniform(-2, -0.5), rng.uniform(-0.3, 0.3)),
                      ang_vel=rng.uniform(-3, 3))
        scene = Scene(bodies=(a, b))
        p0 = _momentum(scene.bodies)
        touched = False
        for _ in range(8):
            scene = step_world(scene, None, free)
            rel = np.linalg.norm(_momentum(scene.bodies) - p0) / np.linalg.norm(p0)
            worst_momentum = max(worst_momentum, rel)
            touched |= sat_contact(*scene.bodies) is not None
        collisions += touched

        # a single resolved contact recovers at most e of the approach speed
        e = rng.uniform(0, 1)
        pa = a.replace(lin_vel=tuple(rng.uniform(-2, 2, 2)))
        pb = make_body((a.center[0] + rng.uniform(0.05, 0.15), a.center[1] + rng.uniform(-0.05, 0.05)),
                       rng.uniform(0, math.pi), ext, lin_vel=tuple(rng.uniform(-2, 2, 2)),
                       ang_vel=rng.uniform(-3, 3))
        c = sat_contact(pa, pb)
        if c is not None:
            before = _normal_speed(pa, pb, c)
            after = _normal_speed(*resolve_contact(pa, pb, c, e), c)
            if before < 0:
                worst_restitution = max(worst_restitution, abs(after) - e * abs(before))
                impacts += 1

    overlaps = 0
    outside = 0
    for i in range(1000):
        rng_i = stream(33, i)
        scene = sample_scene(rng_i)
        overlaps += sum(sat_contact(scene.bodies[j], scene.bodies[k]) is not None
                        for j in range(10) for k in range(j + 1, 10))
        g = sample_grasp(rng_i, scene)
        outside += not scene.bodies[g.body_index].contains(g.anchor_world_initial)
    dt = time.perf_counter() - t
    ok = worst_momentum <= 1e-6 and worst_restitution <= 1e-9 and overlaps == 0 and outside == 0 and dt < 60
    criterion(3, ok, f"momentum drift {worst_momentum:.1e} over {collisions} colliding pairs, "
                     f"restitution excess {worst_restitution:.1e} over {impacts} impacts, {overlaps} overlaps, "
                     f"{outside} grasps outside; {dt:.0f}s")


def _inside(scene, tol):
    return all(-tol <= x <= 1 + tol and -tol <= y <= 1 + tol for b in scene.bodies for x, y in b.corners())


def test_criterion_4_border_impenetrability(criterion):
    t = time.perf_counter()
    hx, hy = PARAMS.half_extents
    runs = violations = 0
    worst = 0.0
    i = 0
    while runs < 200:
        rng = stream(44, i)
        i += 1
        scene = sample_scene(rng)
        top = [k for k, b in enumerate(scene.bodies) if b.center[1] > 0.85]
        if not top:
            continue
        k = top[int(rng.integers(len(top)))]
        anchor = (float(rng.uniform(-hx, hx)), float(rng.uniform(-hy, hy)))
        grasp = GraspSpec(k, anchor, scene.bodies[k].to_world(anchor))
        rec = rollout(scene, grasp, PARAMS)
        for f in rec.frames:
            for b in f.bodies:
                for x, y in b.corners():
                    worst = max(worst, -x, -y, x - 1, y - 1)
            violations += not _inside(f, PARAMS.pen_tol)
        runs += 1
    dt = time.perf_counter() - t
    criterion(4, violations == 0 and dt < 60,
              f"{runs} top-band rollouts, {violations} frames outside, worst excursion {max(worst, 0):.2e} "
              f"(pen_tol {PARAMS.pen_tol:g}); {dt:.0f}s")


def _sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def test_criterion_5_determinism(criterion, tmp_path):
    t = time.perf_counter()
    one, many, again = tmp_path / "a.bin", tmp_path / "b.bin", tmp_path / "c.bin"
    generate_dataset(1, 256, PARAMS, one, workers=1)
    generate_dataset(1, 256, PARAMS, many, workers=4)
    generate_dataset(1, 256, PARAMS, again, workers=1)
    digests = {_sha(one), _sha(many), _sha(again)}

    def run(name):
        cfg = TrainConfig(epochs=2, train_path=str(one), seed=5, checkpoint_out=str(tmp_path / name))
        train(cfg, NetworkConfig())
        return _sha(tmp_path / name)

    ckpts = {run("w1.ckpt"), run("w2.ckpt")}
    dt = time.perf_counter() - t
    criterion(5, len(digests) == 1 and len(ckpts) == 1 and dt < 600,
              f"dataset digest {next(iter(digests))[:12]} at 1 and 4 workers ({len(digests)} distinct), "
              f"2-epoch checkpoints {len(ckpts)} distinct; {dt:.0f}s")


def test_criterion_6_overfit(criterion, tmp_path):
    t = time.perf_counter()
    path = tmp_path / "tiny.bin"
    data = generate_dataset(6, 16, PARAMS, path).crop(32)
    net = build_network(NetworkConfig(q=8, d=2), np.random.default_rng(6))
    # full-batch steps: 300 epochs of one batch each
    log = fit(net, data, TrainConfig(lr=0.1, batch_size=16, epochs=300, seed=6))
    x, y = data.batch(np.arange(16))
    net.train()
    final = float(np.mean((net.forward(x) - y) ** 2))
    ratio = log.train[0] / final
    dt = time.perf_counter() - t
    criterion(6, ratio >= 20 and dt < 900,
              f"training MSE {log.train[0]:.4g} -> {final:.4g} after 300 steps ({ratio:.1f}x); {dt:.0f}s")


@pytest.mark.slow
def test_criterion_7_desk_scale_trend(criterion, tmp_path):
    t = time.perf_counter()
    tr, va = tmp_path / "tr.bin", tmp_path / "va.bin"
    generate_dataset(70, 1024, PARAMS, tr)
    generate_dataset(71, 256, PARAMS, va)
    cfg = TrainConfig(epochs=10, train_path=str(tr), val_path=str(va), seed=7,
                      log_out=str(tmp_path / "log.tsv"))
    _, log = train(cfg, NetworkConfig())
    first, last = log.records[0], log.records[-1]
    ratio = last.val / last.train
    dt = time.perf_counter() - t
    curve = " ".join(f"{r.train:.4g}/{r.val:.4g}" for r in log.records)
    criterion(7, last.train < first.train and ratio < 2,
              f"train {first.train:.4g} -> {last.train:.4g}, epoch-10 val/train {ratio:.2f}; "
              f"curve (train/val) {curve}; {dt / 60:.0f} min")


def test_criterion_8_documented_full_run(criterion):
    readme = (ROOT / "README.md").read_text()
    documented = bool(re.search(r"--count 32768", readme)) and bool(re.search(r"--epochs 2000", readme))
    criterion.note(8, "NOT REPRODUCIBLE at desk scale (full 32,768-sample / 2,000-epoch run and absolute "
                      "per-example loss values); full-run commands "
                      + ("documented in README" if documented else "MISSING from README"))
    assert documented


def test_criterion_9_report_fidelity(criterion, tmp_path):
    t = time.perf_counter()
    data = generate_dataset(9, 2, PARAMS, tmp_path / "d.bin")
    sample = data[0]
    gutter = 2
    img = render_report(sample, sample.r, tmp_path / "r.png", gutter=gutter)
    step = 64 + gutter
    same = np.array_equal(img[2 * step:2 * step + 64], img[3 * step:3 * step + 64])
    shape_ok = img.shape == (4 * 64 + 3 * gutter, 64)

    net = build_network()
    x, _ = data.batch([0, 1])
    net.train().forward(x)
    grid, rows = dump_activations(net, sample, tmp_path / "act.png")
    maps = sum(len(r) for r in rows)
    layout = [len(r) for r in rows] == [2] + [16] * 9 + [1]
    dt = time.perf_counter() - t
    criterion(9, same and shape_ok and maps == 147 and layout and dt < 60,
              f"prediction=R rows identical: {same}, composite {img.shape[0]}x{img.shape[1]}; "
              f"activation grid {len(rows)} rows, {maps} maps; {dt:.0f}s")
