"""Acceptance gate: one test per numbered criterion, full profile.

Each test prints the criterion's verdict line (visible with -v -s or on
failure) and asserts both the verdict and the stated runtime budget.
"""

from arwlab import acceptance


def _check(fn):
    res = fn("full")
    print(res.line())
    assert res.passed, res.line()
    if res.budget is not None:
        assert res.elapsed < res.budget, res.line()
    return res


def test_criterion_01_abelian_stabilization():
    _check(acceptance.criterion_1_abelian)


def test_criterion_02_conservation_identities():
    res = _check(acceptance.criterion_2_conservation)
    assert "1008 runs" in res.detail


def test_criterion_03_structural_properties():
    _check(acceptance.criterion_3_properties)


def test_criterion_04_mass_balance_replay():
    res = _check(acceptance.criterion_4_replay)
    assert "100 runs" in res.detail


def test_criterion_05_excursion_max_law():
    _check(acceptance.criterion_5_excursions)


def test_criterion_06_drift_identities():
    _check(acceptance.criterion_6_drift)


def test_criterion_07_tail_bound_formula():
    _check(acceptance.criterion_7_tail_formula)


def test_criterion_08_left_emission_frequency():
    res = _check(acceptance.criterion_8_ruin)
    assert int(res.detail.split()[0]) >= 10**4


def test_criterion_09_parallel_determinism():
    _check(acceptance.criterion_9_determinism)


def test_criterion_10_freezing_decay_shape():
    _check(acceptance.criterion_10_decay)


def test_criterion_11_phase_sweep_monotonicity():
    _check(acceptance.criterion_11_sweep)
