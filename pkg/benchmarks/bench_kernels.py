"""Compare the numba and numpy statevector kernels.

    python benchmarks/bench_kernels.py [--qubits 8 10 12] [--batch 40] [--repeat 5]
    python benchmarks/bench_kernels.py --end-to-end

The kernel table times each twin on the same inputs after a warm-up call (so
numba compile time is excluded) and checks that both return the same numbers.
``--end-to-end`` times 20 epochs of 8-qubit QCNN training in two subprocesses,
one per value of QCURL_NUMBA.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from qcurl import kernels

TRAIN_SNIPPET = """
import time, numpy as np
from qcurl.ansatz import build_qcnn
from qcurl.sim import haar_states
from qcurl.training import ClassifierObjective, train
rng = np.random.default_rng(0)
c = build_qcnn(8, "main")
x = haar_states(40, 8, rng)
obj = ClassifierObjective(x, rng.integers(0, 2, 40), c.readout)
p = rng.normal(0, 0.1, c.param_count)
train(c, p, obj, 1)  # warm-up and jit compile
t = time.perf_counter()
train(c, p, obj, 20)
print(time.perf_counter() - t)
"""


def cases(Q: int, n: int, rng: np.random.Generator):
    def state():
        s = rng.standard_normal((n, 1 << Q)) + 1j * rng.standard_normal((n, 1 << Q))
        return np.ascontiguousarray(s / np.linalg.norm(s, axis=1, keepdims=True))

    u2 = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))[0]
    u4 = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))[0]
    a, b = state(), state()
    terms = 3 * Q
    coeffs = rng.standard_normal(terms)
    xm = rng.integers(0, 1 << Q, terms).astype(np.int64)
    zm = rng.integers(0, 1 << Q, terms).astype(np.int64)
    psi = np.ascontiguousarray(a[0])
    q0, q1 = Q // 2, Q - 1

    def inplace(f, *args):
        # the apply kernels overwrite their input; work on a fresh copy each call
        s = a.copy()
        f(s, *args)
        return s

    return {
        "apply_1q": lambda f: inplace(f, q0, u2),
        "apply_2q": lambda f: inplace(f, q1, q0, u4),
        "cross_1q": lambda f: f(a, b, q0),
        "cross_2q": lambda f: f(a, b, q1, q0),
        "pauli_matvec": lambda f: f(psi, coeffs, xm, zm),
    }


def bench_kernels(qubits, batch, repeat):
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'Q':>4}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}{'max diff':>11}")
    for Q in qubits:
        for name, call in cases(Q, batch, rng).items():
            f_np = getattr(kernels, f"{name}_numpy")
            f_nb = getattr(kernels, f"{name}_numba")
            diff = float(np.abs(call(f_np) - call(f_nb)).max())
            t_np = min(timeit.repeat(lambda: call(f_np), number=1, repeat=repeat)) * 1e3
            t_nb = min(timeit.repeat(lambda: call(f_nb), number=1, repeat=repeat)) * 1e3
            print(f"{name:<14}{Q:>4}{t_np:>12.3f}{t_nb:>12.3f}{t_np / t_nb:>10.2f}{diff:>11.1e}")


def bench_end_to_end():
    for flag in ("0", "1"):
        env = dict(os.environ, QCURL_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET], env=env, capture_output=True,
                             text=True, check=True)
        label = "numba" if flag == "1" else "numpy"
        print(f"QCNN Q=8, 40 states, 20 epochs [{label}]: {float(res.stdout):.3f} s")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--qubits", type=int, nargs="+", default=[8, 10, 12])
    ap.add_argument("--batch", type=int, default=40)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args(argv)
    if args.end_to_end:
        bench_end_to_end()
    else:
        bench_kernels(args.qubits, args.batch, args.repeat)


if __name__ == "__main__":
    main()
