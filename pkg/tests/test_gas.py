from fractions import Fraction

import pytest

from baid import gas
from baid.fixtures import reference_lifecycle, unit_counts


@pytest.fixture(scope="module")
def run():
    return reference_lifecycle()


def test_sstore_costs():
    assert gas.FIXED_COSTS[gas.SSTORE_NEW] == 20_000
    assert gas.FIXED_COSTS[gas.SSTORE_MOD] == 5_000


def test_receipt_sum():
    r = gas.make_receipt("op", {gas.TX_BASE: 1, gas.CALLDATA_BYTE: 10, gas.SSTORE_NEW: 2})
    assert r.gas_used == 21_000 + 10 * 16 + 2 * 20_000
    assert gas.GasReceipt.from_json(r.to_json()) == r


def test_receipts_are_sums(run):
    for r in run.receipts.values():
        assert r.gas_used == sum(u * c for _, u, c in r.breakdown)


def test_calibration_reproduces_frozen_table(run):
    counts = {op: unit_counts(r) for op, r in run.receipts.items()}
    solved = gas.calibrate(counts)
    for item in gas.CALIBRATED_ITEMS:
        assert round(solved[item]) == gas.CALIBRATED_COSTS[item]
        assert solved[item] > 0


def test_calibrated_solution_hits_targets(run):
    """With the exact fractional solution, each op lands on its target exactly."""
    counts = {op: unit_counts(r) for op, r in run.receipts.items()}
    solved = gas.calibrate(counts)
    table = {**{k: Fraction(v) for k, v in gas.FIXED_COSTS.items()}, **solved}
    for op, target in gas.CALIBRATION_TARGETS.items():
        assert sum(Fraction(n) * table[i] for i, n in counts[op].items()) == target


def test_unit_structure(run):
    c = {op: unit_counts(r) for op, r in run.receipts.items()}
    assert c["register_user"][gas.KYC_VERIFY] == 1
    assert c["add_agent"][gas.SSTORE_NEW] > c["register_user"][gas.SSTORE_NEW]
    assert gas.SSTORE_NEW not in c["update_agent"]
    assert gas.SSTORE_NEW not in c["remove_agent"]
    for op in ("add_agent", "update_agent", "remove_agent"):
        assert c[op][gas.SIG_VERIFY] == 1 and c[op][gas.AUTHORIZE] == 1


def test_calibrate_singular():
    counts = {op: {gas.TX_BASE: 1} for op in gas.CALIBRATION_TARGETS}
    with pytest.raises(ValueError):
        gas.calibrate(counts)
