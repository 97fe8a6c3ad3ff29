import json

import pytest

from buffetfs.bench import (
    BENCH_GID,
    BENCH_UID,
    BenchConfig,
    BenchReport,
    SimWorld,
    file_content,
    layout,
    populate,
    render_report,
    run_concurrent,
    run_single_file,
)
from buffetfs.types import AccessKind, Credentials, OpenFlags


def small_config(**kw):
    base = dict(
        scenario="concurrent",
        client_kind="buffetfs",
        file_count=60,
        file_size_bytes=256,
        files_per_worker=15,
        workers=4,
        dir_fanout=20,
        seed=3,
    )
    base.update(kw)
    return BenchConfig(**base)


class TestContentGenerator:
    def test_deterministic(self):
        assert file_content(1, 0, 4096) == file_content(1, 0, 4096)

    def test_exact_length(self):
        for size in (0, 1, 7, 8, 9, 4096):
            assert len(file_content(1, 0, size)) == size

    def test_varies_by_index_and_seed(self):
        assert file_content(1, 0, 64) != file_content(1, 1, 64)
        assert file_content(1, 0, 64) != file_content(2, 0, 64)


class TestLayout:
    def test_dir_count_is_ceiling(self):
        dirs, files = layout(small_config(file_count=60, files_per_worker=15, dir_fanout=20))
        assert len(dirs) == 3
        assert len(files) == 60

    def test_files_land_in_their_fanout_dir(self):
        dirs, files = layout(small_config(file_count=45, files_per_worker=15, dir_fanout=20))
        assert files[0].startswith(dirs[0] + "/")
        assert files[20].startswith(dirs[1] + "/")
        assert files[44].startswith(dirs[2] + "/")

    def test_deterministic(self):
        cfg = small_config()
        assert layout(cfg) == layout(cfg)


class TestConfig:
    def test_from_file(self, tmp_path):
        path = tmp_path / "bench.cfg"
        path.write_text(
            """
            # workload
            scenario = concurrent
            client_kind = baseline-dom
            file_count = 120
            files_per_worker = 10
            rtt_us = 150.5
            agent_per_worker = false
            """
        )
        cfg = BenchConfig.from_file(str(path))
        assert cfg.scenario == "concurrent"
        assert cfg.client_kind == "baseline-dom"
        assert cfg.file_count == 120
        assert cfg.rtt_us == 150.5
        assert cfg.agent_per_worker is False
        assert cfg.workers == 8  # untouched default

    def test_files_per_worker_bound(self):
        with pytest.raises(ValueError):
            BenchConfig(file_count=10, files_per_worker=20)


class TestPopulate:
    def test_namespace_matches_generator(self):
        cfg = small_config()
        world = SimWorld(cfg)
        paths = populate(world, cfg)
        assert len(paths) == cfg.file_count
        # counters start clean for the measured phase
        assert world.net.snapshot_counters().sync_rpcs == 0
        client = world.make_client("buffetfs")
        cred = Credentials(BENCH_UID, BENCH_GID)
        fd = client.open(paths[7], OpenFlags(AccessKind.RDONLY), cred)
        assert client.read(fd, cfg.file_size_bytes) == file_content(cfg.seed, 7, cfg.file_size_bytes)

    def test_refuses_dirty_world(self):
        cfg = small_config()
        world = SimWorld(cfg)
        populate(world, cfg)
        with pytest.raises(Exception):
            populate(world, cfg)


class TestSingleFile:
    def _cfg(self, kind):
        return small_config(
            scenario="single_file", client_kind=kind, file_count=10, files_per_worker=1
        )

    def test_buffetfs_counts(self):
        report = run_single_file(self._cfg("buffetfs"))
        assert report.sync_rpcs == 1
        assert report.async_msgs == 1
        assert set(report.per_op_us) == {"cold_open", "cold_read", "cold_close", "open", "read", "close"}
        assert report.per_op_us["open"] == 0.0  # warm open is fully local
        assert report.per_op_us["close"] == 0.0  # async close is off the latency path

    def test_baseline_counts(self):
        normal = run_single_file(self._cfg("baseline-normal"))
        dom = run_single_file(self._cfg("baseline-dom"))
        assert (normal.sync_rpcs, normal.async_msgs) == (2, 1)
        assert (dom.sync_rpcs, dom.async_msgs) == (1, 1)

    def test_reports_are_reproducible(self):
        a = run_single_file(self._cfg("buffetfs"))
        b = run_single_file(self._cfg("buffetfs"))
        assert a.to_json() == b.to_json()


class TestConcurrent:
    def test_rpc_totals(self):
        buf = run_concurrent(small_config())
        norm = run_concurrent(small_config(client_kind="baseline-normal"))
        accessed = 4 * 15
        assert buf.files_accessed == accessed
        assert buf.sync_rpcs == accessed  # one data RPC per access, no metadata
        assert norm.sync_rpcs == 2 * accessed
        assert buf.elapsed_us < norm.elapsed_us

    def test_cross_kind_hashes_match(self):
        kinds = ("buffetfs", "baseline-normal", "baseline-dom")
        hashes = {run_concurrent(small_config(client_kind=k)).content_hash for k in kinds}
        assert len(hashes) == 1

    def test_shared_agent_mode(self):
        report = run_concurrent(small_config(agent_per_worker=False, workers=2))
        assert report.files_accessed == 30
        assert report.sync_rpcs == 30


class TestReportFormats:
    def _report(self):
        return run_single_file(
            small_config(scenario="single_file", client_kind="buffetfs",
                         file_count=10, files_per_worker=1)
        )

    def test_json_roundtrip(self):
        report = self._report()
        assert BenchReport.from_json(report.to_json()) == report

    def test_csv_roundtrip(self):
        report = self._report()
        text = report.to_csv()
        assert text.splitlines()[0] == ",".join(BenchReport.CSV_COLUMNS)
        assert BenchReport.from_csv(text) == report

    def test_json_is_sorted_and_stable(self):
        report = self._report()
        keys = list(json.loads(report.to_json()))
        assert keys == sorted(keys)

    def test_text_mentions_headline_numbers(self):
        report = self._report()
        text = render_report(report, "text")
        assert "sync_rpcs:         1" in text
        assert "client_kind:       buffetfs" in text

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            render_report(self._report(), "xml")
