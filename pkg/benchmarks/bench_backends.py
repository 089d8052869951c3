"""Compare the compiled and numpy convolution backends.

Times forward and both gradient kernels on representative shapes from
the restoration pipeline, checks the two paths agree, then times one
full forward/backward of the tiny end-to-end model under each backend.

    python3 benchmarks/bench_backends.py
"""

import os
import time

import numpy as np

from dagf import backend


def _time(fn, repeats=5):
    fn()  # warmup
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


SHAPES = [
    ("sep 15x1 pass", (12, 1, 64, 128), (1, 1, 15, 1), 1, 1, (7, 0)),
    ("dilated 3ch d8", (4, 3, 64, 128), (1, 3, 3, 3), 1, 8, (8, 8)),
    ("branch 16->8 d2", (4, 16, 16, 32), (8, 16, 3, 3), 1, 2, (2, 2)),
    ("reduce 32->16 1x1", (4, 32, 16, 32), (16, 32, 1, 1), 1, 1, (0, 0)),
    ("solver 6->32 1x1", (4, 6, 32, 64), (32, 6, 1, 1), 1, 1, (0, 0)),
    ("stem 12->16 3x3", (4, 12, 32, 64), (16, 12, 3, 3), 1, 1, (1, 1)),
]


def bench_kernels():
    if not backend.has_native():
        print("native extension not built; run `python3 setup.py build_ext --inplace`")
        return
    nat = backend.get_backend("native")
    pyt = backend.get_backend("python")
    rng = np.random.default_rng(0)
    print(f"{'conv shape':<20} {'direction':<8} {'native':>10} {'numpy':>10}  agree")
    for label, xs, ks, stride, dil, (ph, pw) in SHAPES:
        x = rng.normal(size=xs).astype(np.float32)
        k = rng.normal(size=ks).astype(np.float32)
        y = nat.conv2d_forward(x, k, stride, dil, ph, pw)
        g = rng.normal(size=y.shape).astype(np.float32)
        cases = [
            ("forward", lambda impl: impl.conv2d_forward(x, k, stride, dil, ph, pw)),
            ("grad_in", lambda impl: impl.conv2d_grad_input(g, k, xs, stride, dil, ph, pw)),
            ("grad_k", lambda impl: impl.conv2d_grad_kernel(x, g, ks, stride, dil, ph, pw)),
        ]
        for direction, call in cases:
            tn = _time(lambda: call(nat))
            tp = _time(lambda: call(pyt))
            diff = float(np.abs(call(nat).astype(np.float64) - call(pyt).astype(np.float64)).max())
            ok = "yes" if diff <= 1e-6 else f"NO ({diff:.1e})"
            print(f"{label:<20} {direction:<8} {tn * 1e3:>8.2f}ms {tp * 1e3:>8.2f}ms  {ok}")


def bench_model():
    from dagf import Tensor
    from dagf.blocks import LRNetConfig
    from dagf.guided import DagfConfig, DagfNet
    from dagf.losses import l1_loss

    cfg = DagfConfig(
        lrnet=LRNetConfig(num_groups=1, blocks_per_group=2, channels=16),
        downsample_factor=2,
    )
    net = DagfNet(cfg, np.random.default_rng(0))
    rng = np.random.default_rng(1)
    x = Tensor(rng.uniform(-1, 1, (4, 3, 64, 128)).astype(np.float32))
    t = Tensor(rng.uniform(-1, 1, (4, 3, 64, 128)).astype(np.float32))

    def step():
        loss = l1_loss(net(x), t)
        net.zero_grad()
        loss.backward()

    dt = _time(step, repeats=3)
    print(f"tiny model fwd+bwd (batch 4 @ 64x128, backend={backend.active_backend()}): "
          f"{dt * 1e3:.0f} ms/step")


if __name__ == "__main__":
    print(f"selected backend: {backend.active_backend()} "
          f"(override with DAGF_BACKEND=native|python|auto)")
    bench_kernels()
    bench_model()
    if backend.has_native() and os.environ.get("DAGF_BACKEND") is None:
        print("\nre-run with DAGF_BACKEND=python to time the model on the numpy path")
