import numpy as np
import pytest

from hardcore.dataset import (
    DataError,
    MaterialDataset,
    compute_limits,
    load_material,
    stratified_kfold,
)

from conftest import M, make_record, sine_record


def write_toy_dir(path, n=3, b_rows=None, h=True, p=True, f_values=None):
    rng = np.random.default_rng(42)
    if b_rows is None:
        b_rows = [
            ", ".join(repr(float(v)) for v in 0.1 * np.sin(
                2 * np.pi * np.arange(M) / M + i
            ))
            for i in range(n)
        ]
    (path / "B_waveform.csv").write_text("\n".join(b_rows) + "\n")
    if h:
        h_rows = [
            ",".join(repr(float(v)) for v in rng.normal(scale=30.0, size=M))
            for _ in range(n)
        ]
        (path / "H_waveform.csv").write_text("\n".join(h_rows) + "\n")
    if f_values is None:
        f_values = [1e5 + 1e4 * i for i in range(n)]
    (path / "Frequency.csv").write_text(
        "\n".join(repr(v) for v in f_values) + "\n"
    )
    (path / "Temperature.csv").write_text(
        "\n".join(repr(25.0 + i) for i in range(n)) + "\n"
    )
    if p:
        (path / "Volumetric_losses.csv").write_text(
            "\n".join(repr(1e5 * (i + 1)) for i in range(n)) + "\n"
        )
    return path


class TestLoadMaterial:
    def test_three_valid_rows(self, tmp_path):
        write_toy_dir(tmp_path)
        dataset = load_material(tmp_path, material_id="TOY")
        assert len(dataset) == 3
        assert dataset.material_id == "TOY"
        assert all(r.b.shape == (M,) for r in dataset.records)
        assert all(r.h is not None and r.p is not None for r in dataset.records)

    def test_material_id_defaults_to_directory_name(self, tmp_path):
        d = tmp_path / "N87"
        d.mkdir()
        write_toy_dir(d)
        assert load_material(d).material_id == "N87"

    def test_short_row_names_row_index(self, tmp_path):
        good = ",".join(["0.1"] + ["0.0"] * (M - 1))
        short = ",".join(["0.1"] + ["0.0"] * (M - 2))  # 1023 values
        write_toy_dir(tmp_path, n=3, b_rows=[good, short, good])
        with pytest.raises(DataError, match=r"B_waveform\.csv row 1"):
            load_material(tmp_path)

    def test_row_count_mismatch_names_file(self, tmp_path):
        write_toy_dir(tmp_path)
        (tmp_path / "Frequency.csv").write_text("100000.0\n200000.0\n")
        with pytest.raises(DataError, match="Frequency.csv has 2 rows"):
            load_material(tmp_path)

    def test_non_finite_value_rejected(self, tmp_path):
        write_toy_dir(tmp_path)
        rows = (tmp_path / "Frequency.csv").read_text().splitlines()
        rows[1] = "nan"
        (tmp_path / "Frequency.csv").write_text("\n".join(rows) + "\n")
        with pytest.raises(DataError, match=r"Frequency\.csv row 1.*non-finite"):
            load_material(tmp_path)

    def test_non_positive_frequency_rejected(self, tmp_path):
        write_toy_dir(tmp_path, f_values=[1e5, -3.0, 1e5])
        with pytest.raises(DataError, match=r"Frequency\.csv row 1"):
            load_material(tmp_path)

    def test_non_numeric_cell_names_file_and_row(self, tmp_path):
        write_toy_dir(tmp_path)
        (tmp_path / "Temperature.csv").write_text("25.0\nbogus\n27.0\n")
        with pytest.raises(DataError, match=r"Temperature\.csv row 1"):
            load_material(tmp_path)

    def test_missing_required_file(self, tmp_path):
        write_toy_dir(tmp_path)
        (tmp_path / "B_waveform.csv").unlink()
        with pytest.raises(DataError, match="missing required file"):
            load_material(tmp_path)

    def test_optional_files_absent(self, tmp_path):
        write_toy_dir(tmp_path, h=False, p=False)
        dataset = load_material(tmp_path)
        assert all(r.h is None and r.p is None for r in dataset.records)
        assert dataset.h_lim is None

    def test_reload_is_byte_identical(self, tmp_path):
        write_toy_dir(tmp_path)
        first = load_material(tmp_path)
        second = load_material(tmp_path)
        assert first.b_lim == second.b_lim
        assert first.h_lim == second.h_lim
        for a, b in zip(first.records, second.records):
            assert a.record_id == b.record_id
            assert np.array_equal(a.b, b.b)
            assert np.array_equal(a.h, b.h)
            assert (a.f, a.T, a.p) == (b.f, b.T, b.p)


class TestComputeLimits:
    def test_single_record(self):
        b = np.linspace(-0.1, 0.1, M)
        h = np.linspace(-20.0, 35.0, M)
        b_lim, h_lim = compute_limits([make_record(b, h=h)])
        assert b_lim == 0.1
        assert h_lim == 35.0

    def test_max_of_maxima(self):
        r1 = sine_record(amplitude=0.05, h_scale=30.0, rid="a")
        r2 = sine_record(amplitude=0.04, h_scale=50.0, rid="b")
        _, h_lim = compute_limits([r1, r2])
        assert h_lim == max(np.abs(r2.h).max(), np.abs(r1.h).max())
        # the sampled sine peaks just below its 50 A/m envelope
        assert h_lim == pytest.approx(50.0, rel=1e-4)

    def test_randomized_against_exhaustive_scan(self):
        rng = np.random.default_rng(11)
        records = [
            make_record(
                rng.normal(scale=0.2, size=M),
                h=rng.normal(scale=80.0, size=M),
                rid=f"r{i}",
            )
            for i in range(100)
        ]
        b_lim, h_lim = compute_limits(records)
        # oracle: brute scan over all 102400 samples of each kind
        expect_b = max(abs(float(v)) for r in records for v in r.b)
        expect_h = max(abs(float(v)) for r in records for v in r.h)
        assert b_lim == expect_b
        assert h_lim == expect_h

    def test_permutation_invariant(self):
        rng = np.random.default_rng(3)
        records = [
            make_record(rng.normal(scale=0.1, size=M), rid=f"r{i}")
            for i in range(10)
        ]
        forward = compute_limits(records)
        shuffled = compute_limits(records[::-1])
        assert forward == shuffled

    def test_empty_dataset_rejected(self):
        with pytest.raises(DataError, match="empty"):
            compute_limits([])


class TestStratifiedKFold:
    def test_single_stratum_even_split(self):
        dataset = MaterialDataset.from_records(
            "T", [sine_record(rid=f"r{i}") for i in range(8)]
        )
        split = stratified_kfold(dataset, 4, seed=0, strata_fn=lambda r: 0)
        sizes = [len(split.fold_ids(f)) for f in range(4)]
        assert sizes == [2, 2, 2, 2]

    def test_deterministic_for_fixed_seed(self):
        dataset = MaterialDataset.from_records(
            "T", [sine_record(rid=f"r{i}") for i in range(10)]
        )
        a = stratified_kfold(dataset, 4, seed=5, strata_fn=lambda r: 0)
        b = stratified_kfold(dataset, 4, seed=5, strata_fn=lambda r: 0)
        assert a.assignments == b.assignments

    def test_two_strata_round_robin_counts(self):
        # strata of sizes 6 and 10 dealt round-robin onto 4 folds
        records = [
            sine_record(f=60e3, rid=f"lo{i}") for i in range(6)
        ] + [
            sine_record(f=300e3, rid=f"hi{i}") for i in range(10)
        ]
        dataset = MaterialDataset.from_records("T", records)
        split = stratified_kfold(
            dataset, 4, seed=1, strata_fn=lambda r: r.f > 100e3
        )
        low = [
            sum(1 for rid in split.fold_ids(f) if rid.startswith("lo"))
            for f in range(4)
        ]
        high = [
            sum(1 for rid in split.fold_ids(f) if rid.startswith("hi"))
            for f in range(4)
        ]
        # dealing starts at fold 0, so the leftover records land in the
        # leading folds
        assert low == [2, 2, 1, 1]
        assert high == [3, 3, 2, 2]

    def test_folds_partition_the_record_set(self):
        dataset = MaterialDataset.from_records(
            "T", [sine_record(rid=f"r{i}") for i in range(23)]
        )
        for seed in (0, 1, 2):
            split = stratified_kfold(
                dataset, 4, seed=seed, strata_fn=lambda r: r.T > 50
            )
            all_ids = [rid for f in range(4) for rid in split.fold_ids(f)]
            assert sorted(all_ids) == sorted(r.record_id for r in dataset.records)

    def test_small_stratum_warns(self):
        dataset = MaterialDataset.from_records(
            "T", [sine_record(rid=f"r{i}") for i in range(3)]
        )
        with pytest.warns(UserWarning, match="fewer than"):
            stratified_kfold(dataset, 4, seed=0, strata_fn=lambda r: 0)

    def test_k_below_two_rejected(self):
        dataset = MaterialDataset.from_records("T", [sine_record()])
        with pytest.raises(ValueError, match=">= 2"):
            stratified_kfold(dataset, 1, seed=0, strata_fn=lambda r: 0)
