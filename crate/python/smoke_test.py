"""Smoke test for the pytopoflow extension module.

Build it first with `cargo build -p topoflow-py --release` (or without
`--release`), then run `python3 python/smoke_test.py`.
"""

import glob
import math
import os
import shutil
import sys
import tempfile

import numpy as np

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_module():
    candidates = [
        p
        for p in glob.glob(os.path.join(ROOT, "target", "*", "libpytopoflow.so"))
        if os.path.isfile(p)
    ]
    if not candidates:
        sys.exit("libpytopoflow.so not found; run `cargo build -p topoflow-py` first")
    newest = max(candidates, key=os.path.getmtime)
    tmp = tempfile.mkdtemp()
    shutil.copy(newest, os.path.join(tmp, "pytopoflow.so"))
    sys.path.insert(0, tmp)
    import pytopoflow

    return pytopoflow


def main():
    tf = load_module()

    x = tf.generate("circle", 60, noise=0.05, seed=1)
    assert len(x) == 60 and len(x[0]) == 2

    dgm = tf.diagram(np.asarray(x), dims=[0, 1])
    h1 = [p for p in dgm if p[0] == 1]
    assert sum(1 for p in dgm if p[0] == 0) == 60
    assert max(d - b for _, b, d in h1) > 1.0, h1
    assert math.isclose(tf.pers_k(dgm, 1), max(d - b for _, b, d in dgm if math.isfinite(d)))

    loss = tf.Loss("simplify", dims=[1])
    value, support, vectors = loss.gradient(x)
    assert value > 0 and len(support) == len(vectors) > 0
    assert math.isclose(loss(x), value)

    v = tf.Interpolant.from_gradient(loss, x, 0.1)
    assert v.dim == 2 and len(v) == len(support)
    moved = np.asarray(v(x))
    dense = np.asarray(loss.dense_gradient(x))
    for i, g in zip(support, vectors):
        assert np.allclose(moved[i], g, atol=1e-8)
        assert np.allclose(dense[i], g)
    assert v.empirical_lipschitz(x) <= v.lipschitz_upper() * (1 + 1e-9)

    run = tf.optimize(x, loss, epochs=5, record_clock=False)
    assert run.epochs == 5 and len(run.flow) == 5
    assert run.trace[-1][2] < run.initial_val_loss
    replay = run.flow.apply(x)
    assert replay == run.cloud

    flow = tf.Flow.from_json(run.flow.to_json())
    assert flow.apply(x) == run.cloud

    try:
        tf.optimize(x, loss, mode="sideways")
    except ValueError:
        pass
    else:
        raise AssertionError("bad mode accepted")

    print("pytopoflow smoke test passed:", run)


if __name__ == "__main__":
    main()
