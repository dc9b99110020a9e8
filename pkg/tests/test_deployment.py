import dataclasses

import pytest
from hypothesis import given, settings, strategies as st

from cbnet import deployment as dep
from builders import bss, deployment


def test_builtin_specs():
    specs = {s.name: s for s in dep.builtin_specs()}
    assert len(specs) == 10
    t = specs["training1a"]
    assert (t.width, t.height, t.ap_count, t.sta_min, t.sta_max, t.deployment_count) == (80, 60, 12, 10, 20, 100)
    t = specs["training2c"]
    assert (t.width, t.height, t.ap_count, t.sta_min, t.sta_max, t.deployment_count) == (40, 20, 8, 5, 10, 100)
    t = specs["test4"]
    assert (t.width, t.height, t.ap_count, t.sta_min, t.sta_max, t.deployment_count) == (80, 60, 10, 2, 10, 50)


def test_unknown_spec_lists_names():
    with pytest.raises(dep.DeploymentError, match="training1a"):
        dep.spec_by_name("nope")


def test_desk_scale_halves_sta_bounds():
    s = dep.desk_scale(dep.spec_by_name("training1a"))
    assert (s.sta_min, s.sta_max) == (5, 10)
    s = dep.desk_scale(dep.spec_by_name("test1"))
    assert (s.sta_min, s.sta_max) == (1, 5)


def test_generate_test1_shape():
    d = dep.generate(dep.spec_by_name("test1"), 3, 7)
    assert len(d.bsss) == 4
    assert all(2 <= len(b.stas) <= 10 for b in d.bsss)


def test_degenerate_sta_range():
    spec = dataclasses.replace(dep.spec_by_name("test2"), sta_min=5, sta_max=5)
    assert all(len(b.stas) == 5 for b in dep.generate(spec, 0, 1).bsss)


def test_generate_deterministic():
    spec = dep.spec_by_name("training1b")
    assert dep.to_csv_text(dep.generate(spec, 4, 11)) == dep.to_csv_text(dep.generate(spec, 4, 11))
    assert dep.to_csv_text(dep.generate(spec, 4, 11)) != dep.to_csv_text(dep.generate(spec, 5, 11))


def test_generate_index_bounds():
    with pytest.raises(dep.DeploymentError):
        dep.generate(dep.spec_by_name("test1"), 50, 0)


def test_map_too_small():
    spec = dep.ScenarioSpec("tiny", 2.0, 2.0, 16, 1, 1, 1)
    with pytest.raises(dep.DeploymentError):
        dep.generate(spec, 0, 0)


def test_bounds_hold_over_many_deployments():
    for spec in dep.builtin_specs():
        spec = dataclasses.replace(spec, deployment_count=1000)
        for i in range(0, 1000, 10):
            d = dep.generate(spec, i, 5)
            d.validate()
            assert len(d.bsss) == spec.ap_count
            for b in d.bsss:
                assert spec.sta_min <= len(b.stas) <= spec.sta_max
                assert b.ap.min_channel <= b.ap.primary <= b.ap.max_channel
                for n in (b.ap, *b.stas):
                    assert 0 <= n.position[0] <= spec.width and 0 <= n.position[1] <= spec.height


def test_range_classes_equiprobable():
    spec = dataclasses.replace(dep.spec_by_name("training1a"), deployment_count=400)
    widths = [b.ap.max_channel - b.ap.min_channel + 1
              for i in range(400) for b in dep.generate(spec, i, 0).bsss]
    for w in (1, 2, 4, 8):
        assert abs(widths.count(w) / len(widths) - 0.25) < 0.03


def test_csv_minimal():
    d = deployment(bss(0, (1.5, 2.0), [(3.0, 4.0)], 1, 0, 3))
    text = dep.to_csv_text(d)
    lines = text.splitlines()
    assert lines[0].startswith(dep.CSV_MAGIC)
    assert lines[1] == ",".join(dep.CSV_COLUMNS)
    assert len(lines) == 4
    assert dep.from_csv_text(text) == d


def test_csv_training1a_rows(tmp_path):
    d = dep.generate(dep.spec_by_name("training1a"), 0, 0)
    p = tmp_path / "d.csv"
    dep.write_csv(d, p)
    back = dep.read_csv(p)
    assert back == d
    assert len(back.aps) == 12 and 120 <= len(back.stas) <= 240


def test_csv_orphan_sta():
    text = dep.to_csv_text(deployment(bss(0, (1, 1), [(2, 2)])))
    text = text.replace("STA00_00,1,BSS00", "STA00_00,1,BSS09")
    with pytest.raises(dep.DeploymentError, match="line 4.*bss_id"):
        dep.from_csv_text(text)


def test_csv_errors_name_line_and_column():
    text = dep.to_csv_text(deployment(bss(0, (1, 1), [(2, 2)])))
    with pytest.raises(dep.DeploymentError, match="line 3, column x"):
        dep.from_csv_text(text.replace("AP00,0,BSS00,1.0000", "AP00,0,BSS00,abc"))
    with pytest.raises(dep.DeploymentError, match="line 2"):
        dep.from_csv_text(text.replace("cca_dbm", "cca"))
    with pytest.raises(dep.DeploymentError, match="line 1"):
        dep.from_csv_text(text.replace(dep.CSV_MAGIC, "# other"))
    with pytest.raises(dep.DeploymentError, match="line 4: expected 11"):
        dep.from_csv_text(text.rstrip("\n") + ",extra\n")


coord = st.floats(0, 50, allow_nan=False).map(lambda v: round(v, 4))


@st.composite
def deployments(draw):
    n = draw(st.integers(1, 4))
    out = []
    for i in range(n):
        lo, hi = draw(st.sampled_from([(0, 7), (0, 3), (4, 7), (2, 3), (6, 6)]))
        p = draw(st.integers(lo, hi))
        stas = draw(st.lists(st.tuples(coord, coord), min_size=1, max_size=4))
        out.append(bss(i, (draw(coord), draw(coord)), stas, p, lo, hi,
                       tx=draw(st.sampled_from([15.0, 20.0])), cca=draw(st.sampled_from([-82.0, -75.5]))))
    return deployment(*out, size=(50.0, 50.0))


@given(deployments())
@settings(max_examples=60)
def test_csv_roundtrip_property(d):
    assert dep.from_csv_text(dep.to_csv_text(d)) == d
