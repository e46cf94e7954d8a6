"""Two-phase simulation tests: identities, round trips, noise, rates."""

import io

import numpy as np
import pytest

from ychannel import (
    ConfigurationError,
    SymbolFrame,
    SystemConfig,
    allocate_streams,
    assemble_scheme,
    bc_phase,
    build_bc_scheme,
    cancel_self_interference,
    decode_user,
    end_to_end,
    estimate_dof_slope,
    fit_slope,
    mac_phase,
    make_frame,
    relay_decode,
    sample_channels,
    stack_network_coded,
)
from ychannel.simulation import result_record, write_records_csv


def corner_setup(K, M, N, beta, seed):
    cfg = SystemConfig(K, M, N)
    ch = sample_channels(cfg, seed)
    alloc = allocate_streams(cfg, beta)
    scheme = assemble_scheme(ch, alloc, beta)
    return ch, scheme


def zero_frame(scheme):
    return SymbolFrame(
        streams={k: np.zeros(v, dtype=complex) for k, v in scheme.alloc.d.items()}
    )


class TestFrames:
    def test_deterministic(self):
        _, scheme = corner_setup(4, 3, 7, 2, 1)
        a = make_frame(scheme, 5)
        b = make_frame(scheme, 5)
        for key in scheme.alloc.d:
            assert np.array_equal(a.streams[key], b.streams[key])

    def test_qpsk_constellation(self):
        _, scheme = corner_setup(4, 3, 7, 2, 1)
        frame = make_frame(scheme, 3, kind="qpsk")
        points = {
            complex(re, im) / np.sqrt(2) for re in (-1, 1) for im in (-1, 1)
        }
        for sym in frame.streams.values():
            assert all(any(abs(s - p) < 1e-12 for p in points) for s in sym)

    def test_unknown_kind(self):
        _, scheme = corner_setup(4, 3, 7, 2, 1)
        with pytest.raises(ConfigurationError):
            make_frame(scheme, 0, kind="bpsk")

    def test_network_coded_stacking(self):
        _, scheme = corner_setup(4, 3, 7, 2, 1)
        frame = make_frame(scheme, 2)
        nc = stack_network_coded(scheme, frame)
        assert nc.entries.shape == (6,)
        for (pair, start, stop) in scheme.pair_blocks:
            i, j = pair
            expected = frame.streams[(i, j)] + frame.streams[(j, i)]
            assert np.allclose(nc.entries[start:stop], expected)
        assert nc.labels[0] == (0, 1, 0)


class TestMacPhase:
    def test_zero_symbols_zero_output(self):
        ch, scheme = corner_setup(4, 3, 7, 2, 1)
        y = mac_phase(scheme, ch, zero_frame(scheme), 0.0)
        assert np.all(y == 0)

    def test_single_stream_base_case(self):
        ch, scheme = corner_setup(4, 3, 7, 2, 1)
        frame = zero_frame(scheme)
        frame.streams[(0, 1)][0] = 1.0
        y = mac_phase(scheme, ch, frame, 0.0)
        expected = ch.uplink[0] @ scheme.precoders[(0, 1)][:, 0]
        assert np.allclose(y, expected)

    def test_superposition(self):
        ch, scheme = corner_setup(5, 5, 11, 2, 3)
        f1 = make_frame(scheme, 1)
        f2 = make_frame(scheme, 2)
        combo = SymbolFrame(
            streams={
                k: 2.0 * f1.streams[k] - 1j * f2.streams[k] for k in f1.streams
            }
        )
        y = mac_phase(scheme, ch, combo, 0.0)
        y1 = mac_phase(scheme, ch, f1, 0.0)
        y2 = mac_phase(scheme, ch, f2, 0.0)
        assert np.allclose(y, 2.0 * y1 - 1j * y2, atol=1e-10)

    def test_compression_identity(self):
        # Compressing the noiseless relay observation lands exactly on the
        # aligned basis times the network-coded vector.
        ch, scheme = corner_setup(4, 3, 7, 2, 1)
        frame = make_frame(scheme, 9)
        y = mac_phase(scheme, ch, frame, 0.0)
        nc = stack_network_coded(scheme, frame)
        lhs = scheme.compression.matrix @ y
        rhs = scheme.aligned_basis @ nc.entries
        scale = max(1.0, np.abs(rhs).max())
        assert np.abs(lhs - rhs).max() / scale <= 1e-8

    def test_noise_requires_rng(self):
        ch, scheme = corner_setup(4, 3, 7, 2, 1)
        with pytest.raises(ConfigurationError):
            mac_phase(scheme, ch, make_frame(scheme, 0), 0.1, rng=None)


class TestRelayDecode:
    @pytest.mark.parametrize("K,M,N,beta,seed", [(4, 3, 7, 2, 1), (5, 5, 11, 2, 3)])
    def test_noiseless_round_trip(self, K, M, N, beta, seed):
        ch, scheme = corner_setup(K, M, N, beta, seed)
        frame = make_frame(scheme, seed)
        truth = stack_network_coded(scheme, frame)
        decoded = relay_decode(scheme, mac_phase(scheme, ch, frame, 0.0))
        assert np.abs(decoded.entries - truth.entries).max() <= 1e-6

    def test_zero_in_zero_out(self):
        ch, scheme = corner_setup(4, 3, 7, 2, 1)
        decoded = relay_decode(scheme, np.zeros(7, dtype=complex))
        assert np.all(decoded.entries == 0)


class TestBroadcastPhase:
    def test_selector_certification(self):
        ch, scheme = corner_setup(4, 3, 7, 2, 1)
        bc = build_bc_scheme(scheme, ch)
        assert bc.selector_residual <= 1e-8
        rows = scheme.alloc.rows
        for user in range(4):
            for j in range(4):
                if j == user:
                    continue
                pair = (min(user, j), max(user, j))
                start, stop = next(
                    (s, e) for p, s, e in scheme.pair_blocks if p == pair
                )
                system = bc.filters[(user, j)] @ ch.downlink[user] @ bc.relay_precoder
                desired = system[:, start:stop]
                other = np.delete(system, np.s_[start:stop], axis=1)
                assert np.linalg.matrix_rank(desired) == stop - start
                assert np.abs(desired - np.eye(stop - start)).max() <= 1e-8
                assert np.abs(other).max() <= 1e-8

    def test_zero_vector_received_as_zero(self):
        ch, scheme = corner_setup(4, 3, 7, 2, 1)
        frame = zero_frame(scheme)
        nc = stack_network_coded(scheme, frame)
        received, bc = bc_phase(scheme, ch, nc, 0.0)
        for y in received:
            assert np.all(y == 0)

    def test_user_recovers_pair_blocks(self):
        ch, scheme = corner_setup(5, 4, 13, 3, 2)
        frame = make_frame(scheme, 4)
        nc = stack_network_coded(scheme, frame)
        received, bc = bc_phase(scheme, ch, nc, 0.0)
        for user in range(5):
            blocks = decode_user(scheme, bc, user, received[user])
            for (i, j), value in blocks.items():
                expected = frame.streams[(i, j)] + frame.streams[(j, i)]
                assert np.abs(value - expected).max() <= 1e-6

    def test_self_interference_cancellation(self):
        ch, scheme = corner_setup(4, 3, 7, 2, 1)
        frame = make_frame(scheme, 8)
        nc = stack_network_coded(scheme, frame)
        received, bc = bc_phase(scheme, ch, nc, 0.0)
        for user in range(4):
            blocks = decode_user(scheme, bc, user, received[user])
            partners = cancel_self_interference(frame, user, blocks)
            for partner, estimate in partners.items():
                truth = frame.streams[(partner, user)]
                assert np.abs(estimate - truth).max() <= 1e-6


class TestEndToEnd:
    @pytest.mark.parametrize(
        "K,M,N,beta,seed", [(4, 3, 7, 2, 1), (5, 4, 13, 3, 2), (5, 5, 11, 2, 3)]
    )
    def test_noiseless_corners(self, K, M, N, beta, seed):
        result = end_to_end(SystemConfig(K, M, N), beta, seed, 0.0)
        assert result.t == 1
        assert result.relay_recovery_error <= 1e-6
        assert result.bc_failure is None
        assert result.user_recovery_error <= 1e-6

    def test_extension_path(self):
        result = end_to_end(SystemConfig(5, 1, 3), 2, 4, 0.0)
        assert result.t == 5
        assert result.relay_recovery_error <= 1e-6
        assert result.user_recovery_error <= 1e-6

    def test_source_side_extension_path(self):
        # ratio below the corner: sources give up fractional antennas
        result = end_to_end(SystemConfig(4, 3, 2), 2, 0, 0.0, max_extension=8)
        assert result.t == 7
        assert result.relay_recovery_error <= 1e-6
        assert result.user_recovery_error <= 1e-6

    def test_qpsk_symbols(self):
        result = end_to_end(SystemConfig(4, 3, 7), 2, 6, 0.0, symbols="qpsk")
        assert result.relay_recovery_error <= 1e-6

    def test_noisy_run_reports_rates(self):
        result = end_to_end(SystemConfig(4, 3, 7), 2, 1, 1e-4)
        assert result.snr_db == pytest.approx(40.0)
        assert result.sum_rate is not None and result.sum_rate > 0
        assert len(result.rates) == 12
        assert result.relay_recovery_error > 0

    def test_errors_are_stage_tagged(self):
        from ychannel import StageError

        with pytest.raises(StageError) as err:
            end_to_end(SystemConfig(5, 4, 11), 3, 0, 0.0, max_extension=1)
        assert err.value.stage == "synthesis"

    def test_monotone_degradation(self):
        cfg = SystemConfig(4, 3, 7)
        levels = [1e-4, 1e-2, 1.0]
        means = []
        for noise in levels:
            errs = [
                end_to_end(cfg, 2, seed, noise).relay_recovery_error
                for seed in range(100)
            ]
            means.append(np.mean(errs))
        assert means[0] <= means[1] <= means[2]


class TestRates:
    def test_fit_slope_zero_rates(self):
        assert fit_slope([30, 40, 50, 60], np.zeros(4)) == 0.0

    def test_fit_slope_exact_line(self):
        # rate = 3 * log2(P) + 1 has slope 3 in DoF units
        grid = [20.0, 30.0, 40.0]
        rates = [3 * snr * np.log2(10) / 10 + 1 for snr in grid]
        assert fit_slope(grid, np.array(rates)) == pytest.approx(3.0, abs=1e-9)

    def test_fit_needs_two_points(self):
        with pytest.raises(ConfigurationError):
            fit_slope([30.0], np.array([1.0]))

    def test_slope_smoke(self):
        slope = estimate_dof_slope(
            SystemConfig(4, 3, 7), 2, list(range(10)), [30, 40, 50, 60]
        )
        assert 0.85 * 12 <= slope <= 1.1 * 12

    def test_slope_invariant_to_grid_offset(self):
        cfg = SystemConfig(4, 3, 7)
        seeds = list(range(10))
        base = estimate_dof_slope(cfg, 2, seeds, [30, 40, 50, 60])
        shifted = estimate_dof_slope(cfg, 2, seeds, [50, 60, 70, 80])
        assert abs(shifted - base) / base <= 0.05

    def test_thread_fanout_is_deterministic(self, monkeypatch):
        from ychannel import sum_rate_curve

        cfg = SystemConfig(4, 3, 7)
        seeds = list(range(6))
        grid = [30.0, 50.0]
        monkeypatch.delenv("GSA_DOF_THREADS", raising=False)
        serial = sum_rate_curve(cfg, 2, seeds, grid)
        monkeypatch.setenv("GSA_DOF_THREADS", "4")
        threaded = sum_rate_curve(cfg, 2, seeds, grid)
        assert np.array_equal(serial, threaded)


class TestRecords:
    def test_csv_columns_and_line_endings(self):
        result = end_to_end(SystemConfig(4, 3, 7), 2, 1, 1e-3)
        buf = io.StringIO()
        write_records_csv([result_record(result)], buf)
        text = buf.getvalue()
        lines = text.split("\n")
        assert lines[0] == "K,M,N,beta,t,seed,snr_db,relay_err,user_err,sum_rate"
        assert "\r" not in text
        assert lines[1].startswith("4,3,7,2,1,1,30.0,")

    def test_noiseless_record_blank_optionals(self):
        result = end_to_end(SystemConfig(4, 3, 7), 2, 1, 0.0)
        record = result_record(result)
        assert record["snr_db"] == ""
        assert record["sum_rate"] == ""
