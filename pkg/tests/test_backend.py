import numpy as np
import pytest

from telesched import _backend, _pycore, sim
from telesched import markov as mk

compiled = pytest.mark.skipif(not _backend.COMPILED, reason="extension not built")


@compiled
@pytest.mark.parametrize(
    "policy",
    [("lifo-po", "lifo-po"), ("fifo-po", "lifo-po"), ("fifo-block", "lifo-block"), ("lifo-po", "fifo-po")],
)
@pytest.mark.parametrize("load", [0.4, 1.0, 1.7])
def test_compiled_trace_equals_pure(policy, load):
    c = mk.DoubleQueueConfig(5.0, 5.0 * load, 7, 3)
    spec = sim.PolicySpec.from_names(*policy)
    a = sim.run(c, spec, 30_000, 17)
    b = sim.run(c, spec, 30_000, 17, pure=True)
    for col in ("departure", "outcome", "phase", "seen"):
        assert np.array_equal(getattr(a, col), getattr(b, col), equal_nan=True), col


@compiled
def test_compiled_unbounded_and_zero_buffers_equal_pure():
    spec = sim.PolicySpec.from_names("fifo", "lifo-po")
    a = sim.simulate(2.5, 5.0, None, 0, spec, 20_000, 3)
    b = sim.simulate(2.5, 5.0, None, 0, spec, 20_000, 3, pure=True)
    assert np.array_equal(a.departure, b.departure, equal_nan=True)


@compiled
def test_compiled_i1e_equals_pure():
    xs = np.concatenate([[0.0, -3.0], np.geomspace(1e-6, 1e5, 500)])
    comp = _backend.kernels.i1e_array(np.ascontiguousarray(xs))
    pure = np.array([_pycore.i1e(x) for x in xs])
    assert np.max(np.abs(comp - pure)) < 1e-15


@compiled
def test_compiled_rejects_hook():
    with pytest.raises(TypeError):
        _backend.kernels.simulate_events(np.zeros(1), np.zeros(1, np.int8), 1, 1, 0, 0, 1, 1, hook=len)


def test_selection_flag():
    assert _backend.get("simulate_events", pure=True) is _pycore.simulate_events
    if _backend.COMPILED:
        assert _backend.get("simulate_events") is not _pycore.simulate_events


def test_pure_fallback_in_fresh_interpreter():
    import subprocess
    import sys

    code = "import telesched._backend as b; print(b.COMPILED)"
    out = subprocess.run(
        [sys.executable, "-c", code], env={"TELESCHED_PURE": "1", "PATH": ""}, capture_output=True, text=True
    )
    assert out.stdout.strip() == "False"


@compiled
def test_benchmark_script_runs(capsys):
    import importlib.util
    import pathlib

    path = pathlib.Path(__file__).parents[1] / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    assert mod.main(["--events", "2000", "--points", "200", "--repeat", "1"]) == 0
    assert "speed-up" in capsys.readouterr().out
