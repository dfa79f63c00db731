import socket

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from copyforge.core import DimensionError
from copyforge.oracle import (
    Oracle,
    OracleResponseError,
    OracleTransportError,
    RemoteEndpoint,
    decode_points,
    encode_points,
    remote_predict,
    serve,
    server_url,
)

from conftest import Threshold


class Short:
    """Answers one label too few."""

    def predict(self, X):
        return np.zeros(len(X) - 1, dtype=int)


@pytest.fixture
def server():
    srv = serve(Threshold(0.0))
    yield srv
    srv.shutdown()


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_remote_matches_local(server):
    P = np.random.default_rng(0).normal(size=(300, 1))
    remote = Oracle(RemoteEndpoint(server_url(server), batch_size=64), dim=1, n_classes=2)
    assert np.array_equal(remote.query(P), Threshold(0.0).predict(P))
    assert remote.query_count == 300


def test_remote_arity_mismatch():
    srv = serve(Short())
    try:
        with pytest.raises(OracleResponseError):
            remote_predict(RemoteEndpoint(server_url(srv)), np.zeros((3, 1)))
    finally:
        srv.shutdown()


def test_remote_unreachable_after_retries():
    ep = RemoteEndpoint(f"http://127.0.0.1:{_free_port()}", timeout_ms=200)
    oracle = Oracle(ep, dim=1, retries=1)
    with pytest.raises(OracleTransportError):
        oracle.query([[0.0]])
    assert oracle.query_count == 0


def test_remote_batch_limits(server):
    ep = RemoteEndpoint(server_url(server), batch_size=2)
    with pytest.raises(ValueError):
        remote_predict(ep, np.zeros((3, 1)))
    with pytest.raises(ValueError):
        remote_predict(ep, np.zeros((0, 1)))


def test_server_rejects_wrong_path(server):
    ep = RemoteEndpoint(server_url(server) + "/nothing")
    with pytest.raises(OracleTransportError):
        remote_predict(ep, [[1.0]])


@settings(max_examples=50)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=12))
def test_point_encoding_is_exact(values):
    P = np.array(values).reshape(-1, 1)
    assert np.array_equal(decode_points(encode_points(P)), P)


def test_oracle_dimension_check():
    oracle = Oracle(Threshold(0.0), dim=2)
    with pytest.raises(DimensionError):
        oracle.query(np.zeros((3, 3)))


def test_oracle_rejects_out_of_range_labels():
    oracle = Oracle(lambda P: np.full(len(P), 5), dim=1, n_classes=2)
    with pytest.raises(OracleResponseError):
        oracle.query([[0.0]])


def test_oracle_is_order_equivariant():
    oracle = Oracle(Threshold(0.0), dim=1)
    P = np.random.default_rng(1).normal(size=(200, 1))
    perm = np.random.default_rng(2).permutation(200)
    assert np.array_equal(oracle.query(P)[perm], oracle.query(P[perm]))


def test_cache_counts_distinct_points_only():
    calls = []

    def backend(P):
        calls.append(len(P))
        return (P[:, 0] > 0).astype(int)

    oracle = Oracle(backend, dim=1, cache=True)
    P = np.array([[1.0], [-1.0], [1.0]])
    assert oracle.query(P).tolist() == [1, 0, 1]
    assert oracle.query_count == 2
    assert oracle.query(P[::-1]).tolist() == [1, 0, 1]
    assert oracle.query_count == 2
    assert calls == [2]


def test_counter_without_cache():
    oracle = Oracle(Threshold(0.0), dim=1)
    oracle.query(np.zeros((5, 1)))
    oracle.query(np.zeros((5, 1)))
    assert oracle.query_count == 10
