"""Builds the extension with cargo and exercises it from Python.

    python3 python/smoke_test.py [--no-build]
"""

import argparse
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def build() -> Path:
    subprocess.run(
        ["cargo", "build", "--release", "-p", "adaptive-lq-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    return ROOT / "target" / "release" / "libadaptive_lq_py.so"


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--no-build", action="store_true")
    args = parser.parse_args()
    lib = ROOT / "target" / "release" / "libadaptive_lq_py.so" if args.no_build else build()

    with tempfile.TemporaryDirectory() as tmp:
        shutil.copy(lib, Path(tmp) / "adaptive_lq_py.so")
        sys.path.insert(0, tmp)
        import adaptive_lq_py as alq

        a, b, q, r = 0.5, 1.0, 1.0, 1.0
        p, k = alq.solve_dare([[a]], [[b]], [[q]], [[r]])
        lin = r - q * b * b - a * a * r
        root = math.sqrt(lin * lin + 4 * b * b * q * r)
        expected = 2 * q * r / (lin + root) if lin > 0 else (root - lin) / (2 * b * b)
        assert abs(p[0][0] - expected) < 1e-10, (p, expected)
        assert abs(k[0][0] + a * b * expected / (r + b * b * expected)) < 1e-10
        assert abs(alq.average_cost([[a]], [[b]], [[q]], [[r]]) - expected) < 1e-10

        assert set(alq.presets()) == {"paper-clean", "paper-naive-attacked", "paper-self-correcting"}

        overrides = ["horizon=200", "bounds.samples=50"]
        ep = alq.run_episode("paper-naive-attacked", seed=3, overrides=overrides)
        assert ep["mode"] == "naive"
        assert len(ep["costs"]) == 201 and ep["regret"][0] == 0.0
        assert ep["switches"][0] == 0
        again = alq.run_episode("paper-naive-attacked", seed=3, overrides=overrides)
        assert again["costs"] == ep["costs"]

        out = Path(tmp) / "out"
        res = alq.run_experiment("paper-self-correcting", str(out), compare=True, overrides=overrides + ["runs=2"])
        assert set(res) == {"naive", "self_correcting", "oracle_clean"}
        assert (out / "comparison.svg").is_file()

        try:
            alq.run_episode("paper-clean", overrides=["delta=3"])
        except ValueError as e:
            assert "delta" in str(e)
        else:
            raise AssertionError("expected ValueError")

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
