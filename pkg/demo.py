#!/usr/bin/env python3
"""
Demo script for delayguard functionality.

Simulates a bundled scenario, checks two certificates and sweeps the
nonlinearity scale.
"""

import sys
import tempfile
from pathlib import Path

# Add the delayguard package to the path
sys.path.insert(0, str(Path(__file__).parent))

from delayguard import Config, DelayGuard, StylishReporter
from delayguard.core import SAMPLES_DIR


def demo_simulation(guard: DelayGuard, out: Path):
    """Demonstrate simulation of the system and the comparison equation."""
    print("📈 delayguard Simulation Demo")
    print("=" * 50)

    result = guard.run_simulate(SAMPLES_DIR / "sharp_equality.json", out / "simulate")
    print(StylishReporter(color=True, verbose=True).report([result]))

    last = (out / "simulate" / "trajectory.csv").read_text().splitlines()[-1]
    print(f"Last row (t,g,h,env_t1,env_t2,nu,sigma): {last}")


def demo_certificates(guard: DelayGuard, out: Path):
    """Demonstrate a certificate that holds and one that fails."""
    print("\n📜 Certificate Demo")
    print("=" * 50)

    results = [
        guard.run_certify(SAMPLES_DIR / "theorem1_certified.json", out / "certified"),
        guard.run_certify(SAMPLES_DIR / "theorem1_alpha50.json", out / "alpha50"),
    ]
    print(StylishReporter(color=True, verbose=True).report(results))


def demo_sweep(guard: DelayGuard, out: Path):
    """Demonstrate a sweep over the nonlinearity scale."""
    print("\n🧮 Sweep Demo")
    print("=" * 50)

    guard.run_sweep(SAMPLES_DIR / "theorem1_certified.json", {"alpha_scale": [0.1, 10.0, 500.0]}, out / "sweep")
    print((out / "sweep" / "summary.csv").read_text())


def main():
    """Run all demos."""
    print("🎯 delayguard Demo")
    print("=" * 60)

    guard = DelayGuard(config=Config())
    try:
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp)
            demo_simulation(guard, out)
            demo_certificates(guard, out)
            demo_sweep(guard, out)

        print("\n✅ All demos completed successfully!")

    except Exception as e:
        print(f"\n❌ Demo failed: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
