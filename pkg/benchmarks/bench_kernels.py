"""Compare the compiled GRU kernels against the numpy fallback.

Times each kernel on the same inputs with both backends, checks that they
agree, then runs an end-to-end training window and streaming inference
under each backend in a subprocess (the backend is fixed at import).

    python3 benchmarks/bench_kernels.py [--quick]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from oadet.numerics import _kernels_py

try:
    from oadet.numerics import _kernels_ext
except ImportError:
    _kernels_ext = None


def make_inputs(T, B, D, H, seed=0):
    rng = np.random.default_rng(seed)
    s = 1 / np.sqrt(H)
    w_in = rng.uniform(-s, s, (3 * H, D))
    w_rec = rng.uniform(-s, s, (3 * H, H))
    b = rng.uniform(-s, s, 3 * H)
    dec_w = rng.uniform(-s, s, (D, H))
    dec_b = rng.uniform(-s, s, D)
    x = rng.normal(size=(T, B, D))
    h0 = rng.normal(scale=0.5, size=(B, H))
    xp = x @ w_in.T + b
    return dict(w_in=w_in, w_rec=w_rec, b=b, dec_w=dec_w, dec_b=dec_b, xp=xp, h0=h0)


def kernel_cases(k, a, steps):
    hs, gates = k.gru_forward(a["xp"], a["h0"], a["w_rec"])
    dhs = np.ones_like(hs)
    ghs, gxs, ggates = k.gru_generate(a["h0"], a["w_in"], a["b"], a["w_rec"], a["dec_w"], a["dec_b"], steps)
    return {
        "gru_forward": lambda: k.gru_forward(a["xp"], a["h0"], a["w_rec"]),
        "gru_backward": lambda: k.gru_backward(dhs, a["h0"], hs, gates, a["w_rec"]),
        "gru_generate": lambda: k.gru_generate(a["h0"], a["w_in"], a["b"], a["w_rec"], a["dec_w"], a["dec_b"], steps),
        "gru_generate_backward": lambda: k.gru_generate_backward(
            np.ones_like(ghs), a["h0"], ghs, gxs, ggates, a["w_in"], a["w_rec"], a["dec_w"]
        ),
    }


def best_time(fn, repeat):
    n, _ = timeit.Timer(fn).autorange()
    return min(timeit.repeat(fn, number=n, repeat=repeat)) / n


def max_diff(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return max(float(np.max(np.abs(x - y))) for x, y in zip(a, b))


END_TO_END = r"""
import json, time, numpy as np
from oadet.numerics import BACKEND
from oadet.model import Model, ModelDims
from oadet.training import TrainConfig, Trainer
from oadet.streaming import StreamConfig, predict_sequence
cfg = TrainConfig(D=32, H=32, H_p=32, cls_hidden=32, wgen_hidden=16, batch_size=16, lr=1e-3)
tr = Trainer(cfg)
rng = np.random.default_rng(0)
x = rng.normal(size=(32, 16, 32)); y = rng.integers(0, 7, size=(32, 16))
t = time.perf_counter(); tr.train_window(x, y); train_s = time.perf_counter() - t
m = Model.init(ModelDims(64, 128, 128, 6), np.random.default_rng(0))
xs = rng.normal(size=(FRAMES, 64))
t = time.perf_counter(); predict_sequence(m, xs, StreamConfig(n=4, l_g=8)); fps = FRAMES / (time.perf_counter() - t)
print(json.dumps({"backend": BACKEND, "train_window_s": train_s, "infer_fps": fps}))
"""


def end_to_end(backend, frames):
    env = dict(os.environ, OADET_KERNELS=backend)
    code = END_TO_END.replace("FRAMES", str(frames))
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="fewer repeats and shapes")
    args = ap.parse_args()
    if _kernels_ext is None:
        print("compiled extension not built; only the numpy fallback is available")
        return 1
    repeat = 2 if args.quick else 5
    shapes = [(32, 16, 32, 32), (32, 4, 64, 128)] if args.quick else [(32, 1, 32, 32), (32, 16, 32, 32), (32, 4, 64, 128), (32, 32, 64, 256)]
    print(f"{'kernel':<22} {'T,B,D,H':<16} {'numpy ms':>9} {'native ms':>9} {'speedup':>8} {'max diff':>9}")
    for T, B, D, H in shapes:
        a = make_inputs(T, B, D, H)
        py, ext = kernel_cases(_kernels_py, a, T), kernel_cases(_kernels_ext, a, T)
        for name in py:
            diff = max_diff(py[name](), ext[name]())
            tp, te = best_time(py[name], repeat), best_time(ext[name], repeat)
            print(f"{name:<22} {f'{T},{B},{D},{H}':<16} {1e3 * tp:9.3f} {1e3 * te:9.3f} {tp / te:8.2f} {diff:9.1e}")
    frames = 200 if args.quick else 1000
    print()
    print(f"{'backend':<8} {'train window s':>15} {'infer fps':>10}")
    for backend in ("python", "native"):
        r = end_to_end(backend, frames)
        print(f"{r['backend']:<8} {r['train_window_s']:15.3f} {r['infer_fps']:10.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
