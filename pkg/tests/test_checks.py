from dinf.checks import run_checks


def test_small_check_suite_passes_and_covers_every_loss():
    results = run_checks(points=30, params=5, seed=3)
    assert all(r.passed for r in results), [r.line() for r in results if not r.passed]
    names = " ".join(r.name for r in results)
    for loss in ("signal_fit", "poisson_grad", "poisson_lapl", "helmholtz", "eikonal", "heat", "advection"):
        assert loss in names
    assert sum("derivatives" in r.name for r in results) == 6
    assert results[0].line().startswith("PASS")
