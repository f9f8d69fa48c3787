#!/usr/bin/env python3
"""
Test Runner for DeepSpike

Runs the unit suite, then the slow end-to-end suite unless ``--fast`` is given.
"""

import subprocess
import sys
from pathlib import Path


def run_command(cmd, cwd=None):
    """Run a command and return the result"""
    try:
        result = subprocess.run(cmd, cwd=cwd, capture_output=True, text=True)
        return result.returncode == 0, result.stdout, result.stderr
    except Exception as e:
        return False, "", str(e)


def run_suite(title, args, cwd):
    print(f"\n🔬 {title}...")
    print("-" * 40)
    success, stdout, stderr = run_command([sys.executable, "-m", "pytest", *args], cwd=cwd)
    print(stdout)
    if success:
        print(f"✅ {title} passed!")
    else:
        print(f"❌ {title} failed!")
        print(stderr)
    return success


def run_tests(fast=False):
    """Run the DeepSpike test suites"""
    print("🧪 DeepSpike - Test Runner")
    print("=" * 60)

    project_root = Path(__file__).parent.parent
    tests_dir = project_root / "tests"
    if not tests_dir.exists():
        print(f"❌ Tests directory not found: {tests_dir}")
        return 1

    results = [run_suite("Unit Tests", [str(tests_dir / "unit"), "-v"], project_root)]
    if not fast:
        results.append(
            run_suite("End-to-end Tests", [str(tests_dir / "integration"), "-v", "--tb=short"], project_root)
        )

    print("\n" + "=" * 60)
    print("📊 TEST SUMMARY")
    print("=" * 60)
    if all(results):
        print("🎉 ALL TESTS PASSED!")
        print()
        print("Components tested:")
        print("  🔢 Fixed-point arithmetic")
        print("  🧠 CNN model and training")
        print("  ✂️  Compression flow")
        print("  ⏱️  Block pipeline simulator")
        print("  🧬 Spike sorting and CAcc")
        print("  📊 Run ledger and CLI")
        return 0
    print("❌ SOME TESTS FAILED!")
    print("Please check the output above for details.")
    return 1


def main():
    """Main entry point"""
    try:
        return run_tests(fast="--fast" in sys.argv[1:])
    except KeyboardInterrupt:
        print("\n⚠️  Tests interrupted by user")
        return 1


if __name__ == "__main__":
    sys.exit(main())
