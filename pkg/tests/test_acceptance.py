"""The twelve acceptance criteria, one test each.

Every criterion prints a single PASS/FAIL line with its measured values
(shown even without -s).
"""
import pytest

from denjoylab import acceptance
from denjoylab.acceptance import REGISTRY, run_criterion, select


@pytest.mark.parametrize("number", sorted(REGISTRY))
def test_criterion(number, capsys):
    r = run_criterion(number)
    with capsys.disabled():
        print("\n" + r.line())
    assert r.passed, r.line()


def test_registry_complete():
    assert sorted(REGISTRY) == list(range(1, 13))
    assert select("ergodic") == [7, 8, 9, 10, 11, 12]
    assert select("all") == list(range(1, 13))
    assert select("3") == [3]
    with pytest.raises(KeyError):
        select("nonsense")


def test_corrupted_builtin_is_named(monkeypatch):
    real = acceptance.yoccoz_transfer_deriv
    monkeypatch.setattr(acceptance, "yoccoz_transfer_deriv", lambda a, b, x: -real(a, b, x))
    r = run_criterion(2)
    assert not r.passed
    assert r.failed_checks() == ["tangency<1e-4"]
    assert "Yoccoz" in r.line() and "FAIL" in r.line()


def test_crash_is_a_failure(monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("broken")
    monkeypatch.setattr(acceptance, "tau_d", boom)
    r = run_criterion(6)
    assert not r.passed and "broken" in r.line()
