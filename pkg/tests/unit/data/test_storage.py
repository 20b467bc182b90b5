"""Unit tests for dataset, checkpoint and metrics persistence."""

import json

import numpy as np
import pytest

from lvat_lab.data.datasets import gen_two_moons
from lvat_lab.data.storage import (
    load_checkpoint,
    load_dataset,
    read_table,
    save_checkpoint,
    save_dataset,
    save_json,
    save_records,
)
from lvat_lab.exceptions import CheckpointError, DataError
from lvat_lab.training.trainer import METRICS_COLUMNS, MetricsRow


class TestDatasetCsv:
    """Test dataset CSV files."""

    def test_round_trip_is_exact(self, moons, tmp_path):
        """Features, labels and the labeled mask survive bit for bit."""
        path = save_dataset(moons, tmp_path / "train.csv")
        loaded = load_dataset(path, num_classes=2)
        np.testing.assert_array_equal(loaded.features, moons.features)
        np.testing.assert_array_equal(loaded.labeled_mask, moons.labeled_mask)
        np.testing.assert_array_equal(
            loaded.labels[loaded.labeled_mask], moons.labels[moons.labeled_mask]
        )

    def test_header_and_empty_labels(self, moons, tmp_path):
        """Point columns are x0.., unlabeled rows leave the label empty."""
        path = save_dataset(moons, tmp_path / "train.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "x0,x1,label"
        assert sum(line.endswith(",") for line in lines[1:]) == moons.n - moons.n_labeled

    def test_grid_shape_inferred(self, grid, tmp_path):
        """Pixel columns restore the image shape."""
        loaded = load_dataset(save_dataset(grid, tmp_path / "grid.csv"))
        assert loaded.image_shape == (6, 6)
        assert loaded.num_classes == 4

    def test_missing_file(self, tmp_path):
        """A missing file names its path."""
        path = tmp_path / "absent.csv"
        with pytest.raises(FileNotFoundError, match="absent.csv"):
            load_dataset(path)

    def test_missing_label_column(self, tmp_path):
        """The last column must be the label."""
        path = tmp_path / "bad.csv"
        path.write_text("x0,x1\n1,2\n")
        with pytest.raises(DataError):
            load_dataset(path)

    def test_header_only(self, tmp_path):
        """A file without rows loads as an empty dataset."""
        path = tmp_path / "empty.csv"
        path.write_text("x0,x1,label\n")
        assert load_dataset(path).n == 0


class TestCheckpoints:
    """Test checkpoint JSON documents."""

    def test_save_load_save_is_byte_identical(self, random_flow, tmp_path):
        """Reloading and saving again reproduces the file exactly."""
        first = save_checkpoint(tmp_path / "a.json", random_flow.header(), random_flow.params)
        header, params = load_checkpoint(first)
        second = save_checkpoint(tmp_path / "b.json", header, params)
        assert first.read_bytes() == second.read_bytes()
        assert params.equals(random_flow.params)

    def test_not_a_checkpoint(self, tmp_path):
        """Documents without header and params are rejected."""
        path = tmp_path / "doc.json"
        path.write_text(json.dumps({"weights": []}))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_header_without_kind(self, tmp_path):
        """The header must name its kind."""
        path = tmp_path / "doc.json"
        path.write_text(json.dumps({"header": {}, "params": {}}))
        with pytest.raises(CheckpointError, match="kind"):
            load_checkpoint(path)

    def test_invalid_json(self, tmp_path):
        """Unparseable text is a CheckpointError."""
        path = tmp_path / "doc.json"
        path.write_text("{not json")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_missing_checkpoint(self, tmp_path):
        """A missing checkpoint raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "none.json")


class TestRecords:
    """Test metrics CSVs and JSON summaries."""

    def test_metrics_columns_and_blanks(self, tmp_path):
        """Columns follow the given order; missing test errors stay empty."""
        rows = [
            MetricsRow(step=0, lr=0.1, loss_sl=0.5, loss_usl=0.25, loss_total=0.75),
            MetricsRow(step=1, lr=0.1, loss_sl=0.4, loss_usl=0.2, loss_total=0.6, test_error=0.3),
        ]
        path = save_records(tmp_path / "metrics.csv", rows, METRICS_COLUMNS)
        frame = read_table(path)
        assert tuple(frame.columns) == METRICS_COLUMNS
        assert np.isnan(frame["test_error"][0])
        assert frame["test_error"][1] == 0.3

    def test_json_is_sorted(self, tmp_path):
        """Keys are written sorted with a trailing newline."""
        path = save_json(tmp_path / "out" / "doc.json", {"b": 1, "a": 2})
        text = path.read_text()
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")

    def test_seeded_generation_writes_identical_files(self, tmp_path):
        """Same seed, same bytes."""
        a = save_dataset(gen_two_moons(30, seed=4), tmp_path / "a.csv")
        b = save_dataset(gen_two_moons(30, seed=4), tmp_path / "b.csv")
        assert a.read_bytes() == b.read_bytes()
