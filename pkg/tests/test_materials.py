import pytest

from xtalbench.materials import (
    MaterialsError,
    MaterialSpec,
    element_data,
    load_elements,
    load_materials,
)


def test_loads_exactly_ten_materials():
    specs = load_materials()
    assert len(specs) == 10
    assert [s.name for s in specs] == sorted(s.name for s in specs)


def test_gold_parameters():
    au = {s.name: s for s in load_materials()}["Au"]
    assert au.a0 == au.b0 == au.c0 == 4.0782
    assert au.space_group == "Fm-3m"
    assert au.space_group_number == 225
    assert au.lattice_system == "cubic-FCC"


def test_zno_parameters():
    zno = {s.name: s for s in load_materials()}["ZnO"]
    assert zno.a0 == zno.b0 == 3.2495
    assert zno.c0 == 5.2069
    assert zno.space_group == "P6_3mc"
    assert zno.space_group_number == 186


def test_srtio3_parameters():
    sto = {s.name: s for s in load_materials()}["SrTiO3"]
    assert sto.a0 == 3.9053
    assert sto.lattice_system == "cubic"
    assert sto.space_group == "Pm-3m"
    assert sto.space_group_number == 221


def test_all_invariants_hold():
    for spec in load_materials():
        assert spec.a0 > 0 and spec.b0 > 0 and spec.c0 > 0
        for angle in (spec.alpha0, spec.beta0, spec.gamma0):
            assert 0 < angle < 180
        assert 1 <= spec.space_group_number <= 230
        for _, frac in spec.basis:
            assert all(0 <= f < 1 for f in frac)


def test_loading_is_deterministic():
    assert load_materials() == load_materials()


def test_element_closure():
    # Every element referenced by a basis has a constants entry.
    for spec in load_materials():
        for element in spec.elements:
            data = element_data(element)
            assert data.mass > 0
            assert data.covalent_radius > 0
            assert len(data.color) == 3


def test_gold_mass_matches_periodic_table():
    # CIAAW conventional value, 196.97 to two decimals.
    assert element_data("Au").mass == pytest.approx(196.97, abs=0.01)


def test_hydrogen_radius_positive():
    assert element_data("H").covalent_radius > 0


def test_unknown_element_raises():
    with pytest.raises(MaterialsError, match="Xx"):
        element_data("Xx")


def test_element_table_is_well_formed():
    table = load_elements()
    assert set(t.symbol for t in table.values()) == set(table)


def test_malformed_material_names_the_field():
    with pytest.raises(MaterialsError, match="a0"):
        MaterialSpec(
            name="Bogus",
            formula="X",
            a0=-1.0,
            b0=1.0,
            c0=1.0,
            alpha0=90.0,
            beta0=90.0,
            gamma0=90.0,
            space_group="P1",
            space_group_number=1,
            lattice_system="cubic",
            basis=(("H", (0.0, 0.0, 0.0)),),
        )
