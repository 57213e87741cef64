"""Smoke test for the Python extension.

Build and run from the repository root:

    cargo build --release -p trailblaze-py --features extension-module
    cp target/release/libtrailblaze_py.so python/trailblaze.so
    python3 python/smoke_test.py
"""

import math
import random

import trailblaze as tb

SCENE = """\
focal=60
baseline=0.4
width=64
height=48
frames=30
noise_sigma=1
seed=4
wall=8;texture=9
object=line:-0.4,0,3,0.04,0,0;size=0.7;texture=5;texels=8
"""


def main():
    left, right = tb.synth_scene(SCENE)
    assert len(left) == 30 and (left.width, left.height) == (64, 48)
    assert right.camera == "right"
    assert len(left.frame(0)) == 64 * 48 * left.channels

    trajs = tb.extract(left, algo="fb", length=9)
    assert trajs, "no trajectories"
    assert all(t.length == 9 and t.dim == 2 for t in trajs)

    t = tb.Trajectory([[i, 2.0 * i] for i in range(10)])
    d = tb.describe(t, 2)
    assert len(d) == tb.descriptor_dim(2, 9, 2) == 34

    rng = random.Random(0)
    data = [[rng.gauss(3.0 * (i % 2), 1.0) for _ in range(4)] for i in range(200)]
    cb = tb.fit_gmm(data, 2, seed=1)
    assert cb.k == 2
    fv = cb.fisher_vector(data[:20])
    assert len(fv) == 2 * 2 * 4
    assert abs(math.sqrt(sum(v * v for v in fv)) - 1.0) < 1e-9
    assert tb.Codebook.from_text(cb.to_text()).k == 2

    fvs = [[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9]]
    model = tb.train_svm(fvs, ["a", "a", "b", "b"], epochs=100)
    assert model.predict([1.0, 0.0]) == "a" and model.predict([0.0, 1.0]) == "b"

    def project(x, y, z, yaw, tx):
        c, s = math.cos(yaw), math.sin(yaw)
        xc, zc = c * x + s * z + tx, -s * x + c * z
        return (80.0 * xc / zc + 50.0, 80.0 * y / zc + 50.0)

    cloud = [(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(3, 6)) for _ in range(12)]
    matches = [(project(x, y, z, 0.0, 0.0), project(x, y, z, 0.1, -0.4)) for x, y, z in cloud]
    f = tb.estimate_fundamental(matches)
    for (xl, yl), (xr, yr) in matches:
        pl = [xl, yl, 1.0]
        pr = [xr, yr, 1.0]
        r = sum(pl[i] * f[i][j] * pr[j] for i in range(3) for j in range(3))
        assert abs(r) < 1e-6 * max(1.0, max(abs(v) for row in f for v in row))

    cfg = tb.Config(length=15, k=8)
    cfg.set("algo", "lk")
    assert "length=15" in cfg.to_text()

    try:
        tb.Trajectory([[0.0, 0.0]])
    except ValueError:
        pass
    else:
        raise AssertionError("short trajectory accepted")

    print("python smoke test ok")


if __name__ == "__main__":
    main()
