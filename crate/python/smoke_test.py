"""Smoke test for the hssnb Python module.

Build first:  cd crates/py && maturin develop --release
"""

import os
import tempfile

import hssnb


def main():
    ds = hssnb.synth(width=16, height=16, bands=8, classes=3, noise=0.0, seed=3)
    assert (ds.width, ds.height, ds.bands, ds.classes) == (16, 16, 8, 3)
    assert len(ds.values()) == 16 * 16 * 8
    assert len(ds.labels()) == 16 * 16
    print(ds)

    with tempfile.TemporaryDirectory() as tmp:
        ds.save(tmp, "smoke")
        back = hssnb.Dataset.load(tmp)
        # the cube is stored as f32
        assert back.labels() == ds.labels()
        assert max(abs(a - b) for a, b in zip(back.values(), ds.values())) < 1e-5

    paper = hssnb.Model("paper", classes=16)
    counts = [c for _, c in paper.layer_parameter_counts() if c]
    assert counts == [512, 5776, 13856, 331840, 73856, 1016320, 98816, 2064], counts
    assert paper.parameter_count() == 1543040
    assert dict(paper.output_shapes())["conv2d_2"] == [15, 15, 128]

    reduced = ds.pca(8)
    model = hssnb.Model("reduced", classes=3, window=7, bands=8, seed=1)
    patches, labels = reduced.patches(7)
    probs = model.predict_proba(patches[0])
    assert len(probs) == 3 and abs(sum(probs) - 1.0) < 1e-9

    history, (kappa, aa, oa) = model.fit(reduced, epochs=5, train_fraction=0.5, seed=1)
    assert len(history) == 5
    assert all(0.0 <= v <= 1.0 for v in (aa, oa)) and -1.0 <= kappa <= 1.0
    print(f"after 5 epochs: kappa {kappa:.4f}  AA {aa:.4f}  OA {oa:.4f}")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.ckpt")
        model.save(path, epoch=5)
        again = hssnb.Model.load(path)
        assert again.predict_proba(patches[0]) == model.predict_proba(patches[0])

    cm = hssnb.ConfusionMatrix(2, [3, 2, 1, 4])
    assert abs(cm.overall_accuracy() - 0.7) < 1e-12
    assert abs(cm.kappa() - 0.4) < 1e-12

    try:
        hssnb.Dataset.load("/nonexistent/hssnb")
    except OSError:
        pass
    else:
        raise AssertionError("loading a missing dataset should raise")
    try:
        ds.pca(99)
    except ValueError:
        pass
    else:
        raise AssertionError("too many components should raise")

    passed, worst, tensors = hssnb.gradcheck(peepholes=False, seed=0)
    assert passed, (worst, tensors)
    print(f"gradcheck: {len(tensors)} tensors, max relative error {worst:.2e}")

    print("smoke test passed")


if __name__ == "__main__":
    main()
