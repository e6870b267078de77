"""Compare the compiled and pure-Python kernel backends.

Two views:

* raw kernel ops, timed in-process against both backend modules;
* an end-to-end pretrain + fine-tune run, timed in subprocesses with
  DCM_KERNEL_BACKEND forcing each backend in turn.

Usage: python3 benchmarks/bench_kernels.py [--repeats N] [--skip-e2e]
"""

from __future__ import annotations

import argparse
import importlib
import os
import subprocess
import sys
import time

import numpy as np


def _load_backends():
    backends = {}
    import dcm._kernels_py as py_mod

    backends["python"] = py_mod
    try:
        ext = importlib.import_module("dcm._kernels")
    except ImportError:
        print("compiled backend not available; raw timings cover python only")
    else:
        backends["compiled"] = ext
    return backends


def _bench(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_raw(repeats: int) -> None:
    rng = np.random.default_rng(0)
    n, d, h, c = 512, 8, 64, 4
    x = rng.standard_normal((n, d))
    w1 = rng.standard_normal((h, d))
    b1 = rng.standard_normal(h)
    logits = rng.standard_normal((n, c))
    targets = np.zeros((n, c))
    targets[np.arange(n), rng.integers(0, c, n)] = 1.0
    act = rng.standard_normal((n, h))
    upstream = rng.standard_normal((n, h))

    backends = _load_backends()
    cases = {
        "affine_forward": lambda k: k.affine_forward(x, w1, b1),
        "act_forward(relu)": lambda k: k.act_forward(act, 0),
        "act_backward(relu)": lambda k: k.act_backward(upstream, np.maximum(act, 0.0), 0),
        "softmax": lambda k: k.softmax(logits),
        "softmax_xent": lambda k: k.softmax_xent(logits, targets),
        "affine_backward": lambda k: k.affine_backward(upstream, x, w1),
    }

    print(f"raw kernels, n={n}, d={d}, h={h}, C={c}, best of {repeats}")
    header = f"{'kernel':<20}" + "".join(f"{name:>14}" for name in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, call in cases.items():
        times = {name: _bench(lambda k=mod: call(k), repeats) for name, mod in backends.items()}
        row = f"{label:<20}" + "".join(f"{times[name] * 1e6:>12.1f}us" for name in backends)
        if len(times) == 2:
            row += f"{times['python'] / times['compiled']:>9.2f}x"
        print(row)


_E2E_SNIPPET = """
import time
import numpy as np
from dcm._backend import kernel_backend
from dcm.datagen import default_spec, gen_standard_ood
from dcm.netcore import Activation, init_model
from dcm.training import DcmConfig, finetune_ood, pretrain

spec = default_spec("standard", 0)
data = gen_standard_ood(spec)
cfg = DcmConfig(seed=0)
model = init_model([spec.dim, 32, spec.n_classes], Activation.RELU, seed=0)
t0 = time.perf_counter()
pre = pretrain(model, data["train"], cfg)
ft = finetune_ood(pre, data["train"], data["uncertainty"].features, cfg)
wall = time.perf_counter() - t0
print(f"{kernel_backend()} {wall:.3f} {float(np.abs(ft.weights[0]).sum()):.12e}")
"""


def bench_e2e() -> None:
    print("\nend-to-end pretrain + fine-tune (standard benchmark, seed 0)")
    results = {}
    for backend in ("python", "compiled"):
        env = dict(os.environ, DCM_KERNEL_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, "-c", _E2E_SNIPPET],
            capture_output=True,
            text=True,
            env=env,
        )
        if proc.returncode != 0:
            print(f"  {backend}: unavailable ({proc.stderr.strip().splitlines()[-1]})")
            continue
        name, wall, checksum = proc.stdout.split()
        results[backend] = (float(wall), checksum)
        print(f"  {name}: {float(wall):.3f} s")
    if len(results) == 2:
        print(f"  speedup: {results['python'][0] / results['compiled'][0]:.2f}x")
        match = "identical" if results["python"][1] == results["compiled"][1] else "DIFFERENT"
        print(f"  final-model checksum across backends: {match}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--skip-e2e", action="store_true")
    args = parser.parse_args()
    bench_raw(args.repeats)
    if not args.skip_e2e:
        bench_e2e()


if __name__ == "__main__":
    main()
