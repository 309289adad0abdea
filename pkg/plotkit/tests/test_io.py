import json

import numpy as np
import pytest

from plotkit.io import PlotError, load_run

from conftest import write_run


class TestLoad:
    def test_shapes(self, synth_run):
        run = load_run(*synth_run)
        assert run.positions.shape == (40, 3, 2)
        assert run.times.shape == (40,)
        assert run.psi.shape == (40,)
        assert run.num_agents == 3 and run.dim == 2

    def test_values_roundtrip(self, tmp_path):
        csv_path, meta_path = write_run(tmp_path, num_agents=2, dim=3,
                                        num_samples=5, seed=3)
        run = load_run(csv_path, meta_path)
        # spot-check against the raw text
        first = csv_path.read_text().splitlines()[1].split(",")
        assert run.times[0] == float(first[0])
        assert run.positions[0, 0, 0] == float(first[1])
        assert run.positions[0, 1, 2] == float(first[6])
        assert run.psi[0] == float(first[7])

    def test_edges(self, synth_run):
        run = load_run(*synth_run)
        assert run.edges() == [(1, 2), (2, 3)]

    def test_edges_absent(self, tmp_path):
        csv_path, meta_path = write_run(tmp_path)
        meta = json.loads(meta_path.read_text())
        del meta["graph_edges"]
        meta_path.write_text(json.dumps(meta))
        assert load_run(csv_path, meta_path).edges() == []


class TestErrors:
    def test_missing_sidecar_key(self, tmp_path):
        csv_path, meta_path = write_run(tmp_path)
        meta = json.loads(meta_path.read_text())
        del meta["dim"]
        meta_path.write_text(json.dumps(meta))
        with pytest.raises(PlotError, match="dim"):
            load_run(csv_path, meta_path)

    def test_column_mismatch(self, tmp_path):
        csv_path, meta_path = write_run(tmp_path)
        meta = json.loads(meta_path.read_text())
        meta["num_agents"] = 4   # CSV was written for 3
        meta_path.write_text(json.dumps(meta))
        with pytest.raises(PlotError, match="columns"):
            load_run(csv_path, meta_path)

    def test_empty_file(self, tmp_path):
        csv_path, meta_path = write_run(tmp_path)
        csv_path.write_text("")
        with pytest.raises(PlotError, match="empty"):
            load_run(csv_path, meta_path)

    def test_header_only(self, tmp_path):
        csv_path, meta_path = write_run(tmp_path)
        csv_path.write_text(csv_path.read_text().splitlines()[0] + "\n")
        with pytest.raises(PlotError, match="no samples"):
            load_run(csv_path, meta_path)

    def test_non_numeric(self, tmp_path):
        csv_path, meta_path = write_run(tmp_path, num_samples=2)
        lines = csv_path.read_text().splitlines()
        lines[1] = lines[1].replace(lines[1].split(",")[1], "oops", 1)
        csv_path.write_text("\n".join(lines) + "\n")
        with pytest.raises(PlotError, match="non-numeric"):
            load_run(csv_path, meta_path)

    def test_bad_json(self, tmp_path):
        csv_path, meta_path = write_run(tmp_path)
        meta_path.write_text("{not json")
        with pytest.raises(PlotError, match="JSON"):
            load_run(csv_path, meta_path)

    def test_inputs_not_mutated(self, synth_run):
        csv_path, meta_path = synth_run
        before = (csv_path.read_bytes(), meta_path.read_bytes())
        load_run(csv_path, meta_path)
        assert (csv_path.read_bytes(), meta_path.read_bytes()) == before
