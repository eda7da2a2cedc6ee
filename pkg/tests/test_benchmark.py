import importlib.util
import pathlib

import numpy as np
import pytest

from plqopt import _kernels as K

PATH = pathlib.Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"


@pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")
def test_benchmark_cases_agree_across_paths():
    spec = importlib.util.spec_from_file_location("bench_kernels", PATH)
    bench = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(bench)
    for name, fn, args in bench.cases(np.random.default_rng(0)):
        fast, slow = fn(*args), fn.py_func(*args)
        if not isinstance(fast, tuple):
            fast, slow = (fast,), (slow,)
        for a, b in zip(fast[:2], slow[:2]):
            np.testing.assert_allclose(a, b, atol=1e-10, err_msg=name)
