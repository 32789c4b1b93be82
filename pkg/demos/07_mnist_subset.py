"""
MNIST subset
============

Place train-images-idx3-ubyte and train-labels-idx1-ubyte in data/mnist/ and
run this from the repository root. Without the files the script only shows
how the loader reports a problem.
"""

from pathlib import Path

from fedelicit import load_spec, run_scenario
from fedelicit.data import IDXError, load_mnist

root = Path(__file__).resolve().parent.parent
spec = load_spec(root / "configs" / "mnist_effort_sweep.spec")
try:
    X, y = load_mnist(spec.mnist_images, spec.mnist_labels)
except (OSError, IDXError) as exc:
    print("cannot load MNIST:", exc)
    raise SystemExit(0)

print(f"{len(y)} images with {X.shape[1]} features")
res = run_scenario(spec)
print("\n".join(res.summary))
