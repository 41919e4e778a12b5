from collections import Counter

import pytest

from pdflow.catalog import BY_KEY, CATALOG, TABLE_TITLES, entry, format_catalog, matching_entries
from pdflow.scenario import bundled_paths, load_scenario
from pdflow.schedule import ExponentialPowerScaling, PowerScaling, Schedule, classify


def test_one_entry_per_row():
    assert len(CATALOG) == 23 and len(BY_KEY) == 23
    assert Counter(e.table for e in CATALOG) == {"T1": 4, "T2": 6, "T3": 6, "T4": 7}
    assert len({(e.table, e.row) for e in CATALOG}) == 23


def test_every_entry_is_exercised_by_a_bundled_scenario():
    covered = set()
    for path in bundled_paths():
        sc = load_scenario(path)
        regime = classify(sc.schedule, sc.regime.tau)
        covered |= {e.key for e in matching_entries(sc.schedule, regime)}
    assert covered == set(BY_KEY)


def test_entry_lookup():
    assert entry("T4.r11_large").regime == "R11_LARGE"
    with pytest.raises(KeyError):
        entry("T9.none")


def test_format_lists_every_table_and_entry():
    text = format_catalog()
    for table in TABLE_TITLES:
        assert f"{table}: " in text
    for e in CATALOG:
        assert e.key in text


def test_tau_entries_need_tau():
    sch = Schedule(alpha=3.0, r=0.5, delta=0.7, s=1.0)
    assert not BY_KEY["T4.rmid_s1"].matches(sch)
    assert BY_KEY["T4.rmid_s1"].matches(sch, 1.4)
    # tau must stay inside (0, r + 1)
    assert not BY_KEY["T4.rmid_s1"].matches(sch, 1.5)


def test_exponential_entries_give_scaled_predictions():
    sch = Schedule(alpha=3.0, r=0.0, delta=0.5, s=0.0, beta=ExponentialPowerScaling(1.0, 2.0, 1.0, 0.0))
    preds = [p for e in CATALOG if e.matches(sch) for p in e.predictions(sch)]
    scaled = [p for p in preds if p.kind == "scaled"]
    assert scaled and all(p.weight(3.0) > 0 for p in scaled)


def test_power_entries_shift_by_beta_exponent():
    base = Schedule(alpha=3.0, r=0.0, delta=0.5, s=0.5, beta=PowerScaling(1.0, 0.2))
    assert BY_KEY["T1.r0"].summary(base) == {"lagrangian_gap": pytest.approx(-0.7)}


def test_to_dict_fields():
    d = BY_KEY["T3.r11_large"].to_dict()
    assert set(d) == {"key", "table", "row", "regime", "theorem", "beta", "rates"}
