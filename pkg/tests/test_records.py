import math
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dpzoo.records import METRICS_HEADER, Checkpoint, MetricsLog, MetricsRow


def _row(it, eps=1.0, clip=0.5, **kw):
    base = dict(stage=1, iteration=it, loss=0.25, beta=1e-3, eta=0.1, sigma=0.7, clip_fraction=clip,
                grad_norm_estimate=2.0, epsilon_spent_estimate=eps)
    base.update(kw)
    return MetricsRow(**base)


def test_header_exact():
    assert ",".join(METRICS_HEADER) == (
        "stage,iteration,loss,beta,eta,sigma,clip_fraction,grad_norm_estimate,epsilon_spent_estimate")


def test_csv_round_trip(tmp_path):
    log = MetricsLog()
    log.append(_row(1, eps=0.1, loss=1 / 3))
    log.append(_row(2, eps=0.2, beta=2.1544346900318835e-06))
    log.append(_row(3, eps=math.inf, sigma=0.0))
    path = tmp_path / "m.csv"
    log.write_csv(path)
    text = path.read_text()
    assert text.splitlines()[0] == ",".join(METRICS_HEADER)
    assert text.splitlines()[3].endswith(",inf")
    back = MetricsLog.read_csv(path)
    assert back.rows == log.rows
    assert back.to_csv() == text


def test_row_invariants():
    log = MetricsLog()
    with pytest.raises(ValueError):
        log.append(_row(1, clip=1.5))
    log.append(_row(1, eps=2.0))
    with pytest.raises(ValueError):
        log.append(_row(2, eps=1.0))
    assert len(log) == 1


def test_bad_header_rejected(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("stage,loss\n")
    with pytest.raises(ValueError):
        MetricsLog.read_csv(path)


finite = st.floats(allow_nan=False, allow_infinity=False)


@given(st.integers(1, 40).flatmap(lambda d: st.tuples(
    arrays(np.float64, d, elements=finite), arrays(bool, d),
    arrays(np.float64, d, elements=st.floats(0, 2)))))
def test_checkpoint_round_trip(parts):
    theta, mask, diag = parts
    ckpt = Checkpoint(theta, mask, diag)
    blob = ckpt.to_bytes()
    back = Checkpoint.from_bytes(blob)
    assert back.to_bytes() == blob
    assert np.array_equal(back.theta.view(np.uint64), theta.view(np.uint64))
    assert np.array_equal(back.mask, mask)


def test_checkpoint_layout(tmp_path):
    ckpt = Checkpoint(np.array([1.5, -2.0]), np.array([True, False]), np.array([1.0, 0.0]))
    blob = ckpt.to_bytes()
    assert blob[:8] == b"DPZOCKPT"
    assert struct.unpack_from("<Q", blob, 8) == (2,)
    assert struct.unpack_from("<2d", blob, 16) == (1.5, -2.0)
    assert blob[32:34] == b"\x01\x00"
    assert struct.unpack_from("<2d", blob, 34) == (1.0, 0.0)
    path = tmp_path / "c.bin"
    ckpt.write(path)
    assert Checkpoint.read(path).to_bytes() == blob


def test_checkpoint_corruption_detected():
    blob = Checkpoint(np.ones(3), np.ones(3, dtype=bool), np.ones(3)).to_bytes()
    with pytest.raises(ValueError, match="magic"):
        Checkpoint.from_bytes(b"X" + blob[1:])
    with pytest.raises(ValueError, match="length"):
        Checkpoint.from_bytes(blob[:-1])
    bad = bytearray(blob)
    bad[16 + 24] = 2
    with pytest.raises(ValueError, match="mask"):
        Checkpoint.from_bytes(bytes(bad))
    with pytest.raises(ValueError):
        Checkpoint(np.ones(3), np.ones(2, dtype=bool), np.ones(3)).to_bytes()
