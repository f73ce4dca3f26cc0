"""
Validation script to check that all modules import and a tiny run works end to end
"""

import sys
import tempfile


def test_imports():
    """Test that all modules can be imported"""
    try:
        print("Checking imports...")

        print("  ✓ config")
        import config

        print("  ✓ errors")
        import errors

        print("  ✓ model")
        import model

        print("  ✓ measures")
        import measures

        print("  ✓ integrator")
        import integrator

        print("  ✓ metrics")
        import metrics

        print("  ✓ analysis")
        import analysis

        print("  ✓ experiment_config")
        import experiment_config

        print("  ✓ storage")
        import storage

        print("  ✓ charts")
        import charts

        print("  ✓ experiment_pipeline")
        import experiment_pipeline

        print("  ✓ main")
        import main

        print("\n✅ All modules imported successfully!")
        return True

    except ImportError as e:
        print(f"\n❌ Import error: {e}")
        return False
    except Exception as e:
        print(f"\n❌ Error: {e}")
        return False


def check_structure():
    """Check that the core pieces fit together on a tiny problem"""
    try:
        print("\nChecking component structure...")

        from config import settings
        print(f"  ✓ Settings loaded (output: {settings.output_dir}, threads: {settings.threads})")

        from model import CurieWeissParams, aux_for_model, curie_weiss_model
        model = curie_weiss_model(CurieWeissParams(beta=1.0, K=0.2), truncation=8.0)
        aux = aux_for_model(model, grid_size=64)
        print(f"  ✓ Curie-Weiss model and auxiliary function (f'(0) = {aux.fprime0:.4f})")

        from integrator import SchemeConfig, simulate_self_interacting
        from measures import WeightFamily
        traj = simulate_self_interacting(model, WeightFamily.lebesgue(),
                                         SchemeConfig(dt=0.1, n_steps=50, n_paths=4, seed=1))
        print(f"  ✓ Self-interacting simulation ({traj.n_paths} paths x {traj.n_steps} steps)")

        from analysis import stationary_density_cw
        from metrics import mean_w1_curve
        reference = stationary_density_cw(CurieWeissParams(beta=1.0, K=0.2), table_size=1025)
        curve = mean_w1_curve(traj, WeightFamily.lebesgue(), reference, [10, 50])
        print(f"  ✓ Mean W1 curve (final {curve[-1].mean_w1:.4f})")

        from charts import emit_svg_loglog
        from storage import ResultStorage
        with tempfile.TemporaryDirectory() as tmpdir:
            storage = ResultStorage(tmpdir)
            storage.save_curve(curve, "curve_0.2.csv")
            emit_svg_loglog({"K=0.2": curve}, storage.path("figure.svg"))
        print("  ✓ Storage and charts available")

        print("\n✅ All components structured correctly!")
        return True

    except Exception as e:
        print(f"\n❌ Structure check error: {e}")
        return False


if __name__ == "__main__":
    print("=" * 60)
    print("mkv Validation")
    print("=" * 60)

    success = test_imports() and check_structure()

    print("\n" + "=" * 60)
    if success:
        print("🎉 mkv validation completed successfully!")
        print("\nNext steps:")
        print("1. Install dependencies: pip install -r requirements.txt")
        print("2. Run the tests: pytest -m \"not slow\"")
        print("3. Run the desk study: python main.py run --preset desk --out results")
        print("4. Open results/figure.svg")
        sys.exit(0)
    else:
        print("⚠️  Validation failed. Please check the errors above.")
        sys.exit(1)
