import struct

import numpy as np
import pytest

from phasecoh import traceio
from phasecoh.analysis import r_vs_m, read_surface_csv, window_stats, write_surface_csv
from phasecoh.circstats import WindowSpec, integrate_window, phase_of, phase_pdf
from phasecoh.errors import TraceFormatError
from phasecoh.simulate import SimConfig, TraceSet, simulate_ensemble

WINDOW = WindowSpec(36.0, 36.0)


@pytest.fixture(scope="module")
def small_set():
    return simulate_ensemble(SimConfig(shots=300, seed=11))


@pytest.fixture
def trace_file(tmp_path, small_set):
    path = tmp_path / "t.qph"
    traceio.write_traceset(path, small_set)
    return path


class TestTraceFile:
    def test_header_layout(self, trace_file, small_set):
        raw = trace_file.read_bytes()
        assert raw[:4] == b"QPHS"
        version, n, length = struct.unpack_from("<IQI", raw, 4)
        dt, start = struct.unpack_from("<dd", raw, 20)
        flags, = struct.unpack_from("<I", raw, 36)
        assert (version, n, length) == (1, 300, 180)
        assert (dt, start, flags) == (1.0, small_set.start_time, 1)
        assert raw[40:64] == b"\0" * 24

    def test_file_size(self, trace_file):
        assert trace_file.stat().st_size == 64 + 300 * 180 * 8 + 300

    def test_size_arithmetic_at_full_scale(self):
        # 5e5 shots of 180 samples: header + N*180*8 bytes, about 720 MB
        assert 64 + 5 * 10 ** 5 * 180 * 8 == 720_000_064

    def test_round_trip_bit_identical(self, trace_file, small_set):
        back = traceio.read_traceset(trace_file)
        assert back.traces.dtype == np.complex64
        np.testing.assert_array_equal(back.traces, small_set.traces)
        np.testing.assert_array_equal(back.emission_flags, small_set.emission_flags)
        assert (back.dt, back.start_time) == (small_set.dt, small_set.start_time)

    def test_round_trip_statistics_identical(self, trace_file, small_set):
        back = traceio.read_traceset(trace_file)
        assert window_stats(back, WINDOW) == window_stats(small_set, WINDOW)
        m = [1, 2, 4, 8]
        np.testing.assert_array_equal(r_vs_m(back, WINDOW, m), r_vs_m(small_set, WINDOW, m))
        a = phase_pdf(phase_of(integrate_window(back, WINDOW)))
        b = phase_pdf(phase_of(integrate_window(small_set, WINDOW)))
        np.testing.assert_array_equal(a.bin_masses, b.bin_masses)

    def test_without_flags(self, tmp_path):
        ts = TraceSet(np.ones((3, 5), dtype=np.complex64), 0.5, -2.0)
        path = tmp_path / "plain.qph"
        traceio.write_traceset(path, ts)
        assert path.stat().st_size == 64 + 3 * 5 * 8
        back = traceio.read_traceset(path)
        assert back.emission_flags is None and back.dt == 0.5 and back.start_time == -2.0


def corrupt(path, offset, data):
    raw = bytearray(path.read_bytes())
    raw[offset:offset + len(data)] = data
    path.write_bytes(bytes(raw))


class TestMalformed:
    def test_bad_magic(self, trace_file):
        corrupt(trace_file, 0, b"XXXX")
        with pytest.raises(TraceFormatError) as info:
            traceio.read_traceset(trace_file)
        assert info.value.offset == 0

    def test_bad_version(self, trace_file):
        corrupt(trace_file, 4, struct.pack("<I", 9))
        with pytest.raises(TraceFormatError) as info:
            traceio.read_traceset(trace_file)
        assert info.value.offset == 4

    def test_short_header(self, tmp_path):
        path = tmp_path / "short.qph"
        path.write_bytes(b"QPHS\1\0")
        with pytest.raises(TraceFormatError) as info:
            traceio.read_traceset(path)
        assert info.value.offset == 6

    def test_truncated_payload(self, trace_file):
        raw = trace_file.read_bytes()
        trace_file.write_bytes(raw[:-500])
        with pytest.raises(TraceFormatError, match="file size"):
            traceio.read_traceset(trace_file)

    def test_bad_dt(self, trace_file):
        corrupt(trace_file, 20, struct.pack("<d", -1.0))
        with pytest.raises(TraceFormatError) as info:
            traceio.read_traceset(trace_file)
        assert info.value.offset == 20

    def test_unknown_flag_bits(self, trace_file):
        corrupt(trace_file, 36, struct.pack("<I", 6))
        with pytest.raises(TraceFormatError) as info:
            traceio.read_traceset(trace_file)
        assert info.value.offset == 36

    def test_nan_sample(self, trace_file):
        corrupt(trace_file, 64 + 8 * 10, struct.pack("<f", float("nan")))
        with pytest.raises(TraceFormatError) as info:
            traceio.read_traceset(trace_file)
        assert info.value.offset == 64 + 8 * 10

    def test_bad_flag_byte(self, trace_file):
        corrupt(trace_file, 64 + 300 * 180 * 8 + 5, b"\x07")
        with pytest.raises(TraceFormatError) as info:
            traceio.read_traceset(trace_file)
        assert info.value.offset == 64 + 300 * 180 * 8 + 5

    def test_offset_in_message(self, trace_file):
        corrupt(trace_file, 0, b"ABCD")
        with pytest.raises(TraceFormatError, match="offset 0"):
            traceio.read_traceset(trace_file)


class TestTables:
    def test_csv_round_trip_exact(self, tmp_path):
        x = np.random.default_rng(0).standard_normal(50)
        cols = {"M": np.arange(50), "R": x, "resolved": x > 0}
        traceio.write_csv(tmp_path / "a.csv", cols)
        back = traceio.read_csv(tmp_path / "a.csv")
        np.testing.assert_array_equal(back["R"], x)
        np.testing.assert_array_equal(back["M"], np.arange(50))
        np.testing.assert_array_equal(back["resolved"], x > 0)
        assert (tmp_path / "a.csv").read_text().splitlines()[0] == "M,R,resolved"

    def test_csv_ragged_columns(self, tmp_path):
        with pytest.raises(ValueError):
            traceio.write_csv(tmp_path / "b.csv", {"a": [1, 2], "b": [1]})

    def test_surface_csv_round_trip(self, tmp_path):
        t = np.array([0.0, 4.0, 8.0])
        T = np.array([4.0, 8.0])
        grid = np.arange(6.0).reshape(3, 2) / 7
        write_surface_csv(tmp_path / "s.csv", t, T, grid)
        t2, T2, g2 = read_surface_csv(tmp_path / "s.csv")
        np.testing.assert_array_equal(t2, t)
        np.testing.assert_array_equal(T2, T)
        np.testing.assert_array_equal(g2, grid)

    def test_surface_csv_incomplete(self, tmp_path):
        traceio.write_csv(tmp_path / "s.csv", {"t_start": [0.0, 1.0], "T": [4.0, 8.0], "R": [0.1, 0.2]})
        with pytest.raises(ValueError):
            read_surface_csv(tmp_path / "s.csv")

    def test_json_round_trip(self, tmp_path):
        doc = {"a": 1.5, "b": [1, 2], "c": {"d": "x"}}
        traceio.write_json(tmp_path / "d.json", doc)
        assert traceio.read_json(tmp_path / "d.json") == doc
