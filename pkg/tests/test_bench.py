import csv
import io
import json

import jsonschema
import pytest

from rbsr.bench import (
    BACKENDS,
    COLUMNS,
    REPORT_SCHEMA,
    GroundTruthMismatch,
    build_store,
    render,
    report,
    run,
)
from rbsr.cli import main
from rbsr.paged import PagedStore
from rbsr.protocol import reconcile
from rbsr.scenario import FAMILIES, SLICE_HI, SLICE_LO, ScenarioSpec, SplitMix64, generate_scenario


def test_splitmix64_reference_outputs():
    # published SplitMix64 sequence for seed 0
    rng = SplitMix64(0)
    assert [rng.next() for _ in range(2)] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4]


@pytest.mark.parametrize("family,i,want", [
    ("base_dense", 1, (64, 4, 1000, 200)),
    ("base_sparse", 2, (256, 12, 4000, 800)),
    ("scale_dense", 3, (2304, 24, 12000, 2400)),
    ("scale_sparse", 2, (1024, 32, 12000, 2400)),
    ("stress", 2, (4096, 128, 16000, 3200)),
    ("stress_dyn", 2, (16384, 4096, 16000, 3200)),
])
def test_family_counts(family, i, want):
    c = ScenarioSpec(family, i).counts
    assert (c.in_common, c.in_x_only, c.out_common, c.out_x_only) == want
    assert (c.in_y_only, c.out_y_only) == (c.in_x_only, c.out_x_only)


def test_spec_validation():
    with pytest.raises(ValueError):
        ScenarioSpec("nope", 1)
    with pytest.raises(ValueError):
        ScenarioSpec("stress", 9)


def in_slice(kb):
    return SLICE_LO <= int.from_bytes(kb[:8], "big") < SLICE_HI


def test_base_dense_1_shape():
    sc = generate_scenario(ScenarioSpec("base_dense", 1, 42))
    xs, ys = set(sc.items_x), set(sc.items_y)
    assert sum(map(in_slice, xs)) == 68 and sum(map(in_slice, ys)) == 68
    delta = {kb for kb in xs ^ ys if in_slice(kb)}
    assert len(delta) == 8
    assert {kb for kb in xs - ys if in_slice(kb)} == sc.planted_have
    assert {kb for kb in ys - xs if in_slice(kb)} == sc.planted_need
    assert len(sc.items_x) == len(xs) == 64 + 4 + 1000 + 200
    outside = [int.from_bytes(kb[:8], "big") for kb in xs | ys if not in_slice(kb)]
    below = sum(1 for ts in outside if ts < SLICE_LO)
    assert below == len(outside) - below
    assert all(ts < 3 * SLICE_LO for ts in outside)


def test_generation_deterministic():
    a = generate_scenario(ScenarioSpec("scale_sparse", 1, 7))
    b = generate_scenario(ScenarioSpec("scale_sparse", 1, 7))
    c = generate_scenario(ScenarioSpec("scale_sparse", 1, 8))
    assert (a.items_x, a.items_y) == (b.items_x, b.items_y)
    assert a.items_x != c.items_x


@pytest.mark.parametrize("backend", BACKENDS)
def test_run_base_dense_1(backend):
    spec = ScenarioSpec("base_dense", 1, 42)
    m = run(backend, spec, repeats=2)
    assert m.backend == backend and m.t_rec_ms >= 0 and len(m.transcript_hash) == 64
    assert (m.disk_bytes > 0) == backend.startswith("paged")


def test_have_need_sizes_base_dense_1(tmp_path):
    sc = generate_scenario(ScenarioSpec("base_dense", 1, 42))
    x = build_store("btree", sc.items_x)
    y = build_store("btree", sc.items_y)
    out = reconcile(x, y, sc.outer)
    assert (len(out.have), len(out.need)) == (4, 4)


def test_cross_backend_and_window():
    spec = ScenarioSpec("scale_sparse", 1, 3)
    sc = generate_scenario(spec)
    rows = {b: run(b, spec, repeats=1, scenario=sc) for b in BACKENDS}
    strip = lambda m: {k: v for k, v in m.stable().items() if k not in ("backend", "node_visits", "disk_bytes")}
    assert len({json.dumps(strip(m)) for m in rows.values()}) == 1
    assert rows["btree+window"].node_visits <= rows["btree"].node_visits
    assert rows["paged+window"].node_visits <= rows["paged"].node_visits


def test_ground_truth_mismatch_is_fatal():
    spec = ScenarioSpec("base_dense", 1, 42)
    sc = generate_scenario(spec)
    sc.planted_have = set(list(sc.planted_have)[1:])
    with pytest.raises(GroundTruthMismatch):
        run("ref", spec, repeats=1, scenario=sc)


def test_reports():
    spec = ScenarioSpec("base_dense", 1, 42)
    m = run("btree", spec, repeats=1)
    text = render([m], "csv")
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == list(COLUMNS) and len(rows) == 2
    data = json.loads(render([m], "json"))
    jsonschema.validate(data, REPORT_SCHEMA)
    assert list(data[0]) == list(COLUMNS)
    again = run("btree", spec, repeats=1)
    assert again.stable() == m.stable()
    with pytest.raises(ValueError):
        render([], "csv")


def test_bytes_and_q_grow_with_i():
    for family in FAMILIES:
        if family == "stress_dyn":
            continue
        prev = None
        for i in (1, 2, 3):
            m = run("ref", ScenarioSpec(family, i, 42), repeats=1)
            if prev is not None:
                assert m.bytes > prev.bytes and m.Q >= prev.Q
            prev = m


def test_cli_run_and_verify(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["run", "--family", "base_dense", "--i", "1", "--backend", "paged",
                 "--seed", "42", "--repeats", "1", "--format", "json", "--out", str(out)]) == 0
    jsonschema.validate(json.loads(out.read_text()), REPORT_SCHEMA)
    db = tmp_path / "v.db"
    with PagedStore.create(db, page_size=512) as s:
        s.bulk_load_raw(generate_scenario(ScenarioSpec("base_dense", 1)).items_x)
        s.commit()
    assert main(["verify", "--file", str(db)]) == 0
    raw = bytearray(db.read_bytes())
    raw[2 * 512 + 30] ^= 0xFF
    db.write_bytes(bytes(raw))
    capsys.readouterr()
    assert main(["verify", "--file", str(db)]) == 1
    assert "violation" in capsys.readouterr().out


def test_cli_all(capsys):
    assert main(["all", "--max-i", "1", "--repeats", "1", "--backends", "ref", "btree+window", "--jobs", "2"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 2 * len(FAMILIES)


def test_report_to_file(tmp_path):
    m = run("ref", ScenarioSpec("base_dense", 1), repeats=1)
    path = tmp_path / "o.csv"
    report([m], "csv", str(path))
    assert path.read_text().startswith(",".join(COLUMNS))
