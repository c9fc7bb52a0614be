import itertools
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

import artifact.numcore as nc
from artifact.numcore import Tape, Tensor, gradcheck, io


def naive_matmul(a, b):
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def fd_check(fn, arrays, eps=1e-5):
    """Max |ad - fd| / max(1, |fd|) over every entry of every input."""
    ts = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    with Tape() as tape:
        grads = tape.backward(fn(*ts))
    worst = 0.0
    for t in ts:
        for idx in np.ndindex(t.shape):
            fd = gradcheck.numerical_grad(lambda: fn(*ts), t, idx, eps)
            ad = grads.grad(t)[idx]
            worst = max(worst, abs(ad - fd) / max(1.0, abs(fd)))
    return worst


def test_softmax_uniform():
    out = nc.softmax(Tensor(np.zeros(3)))
    np.testing.assert_allclose(out.data, np.full(3, 1 / 3), rtol=0, atol=1e-15)


def test_layer_norm_constant_is_zero():
    out = nc.layer_norm(Tensor(np.full((2, 7), 3.25)))
    assert np.array_equal(out.data, np.zeros((2, 7)))


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((2, 3)), rng.standard_normal((3, 4))
    np.testing.assert_allclose((Tensor(a) @ Tensor(b)).data, naive_matmul(a, b), rtol=0, atol=1e-12)


def test_matmul_shape_error_names_shapes():
    with pytest.raises(nc.ShapeError, match=r"\(2, 3\).*\(4, 4\)"):
        Tensor(np.zeros((2, 3))) @ Tensor(np.zeros((4, 4)))


def test_add_shape_error():
    with pytest.raises(nc.ShapeError, match="add"):
        Tensor(np.zeros((2, 3))) + Tensor(np.zeros((4,)))


def test_backward_square():
    x = Tensor(np.array(3.0), requires_grad=True)
    with Tape() as tape:
        grads = tape.backward(x * x)
    assert grads[x] == pytest.approx(6.0)


def test_backward_rejects_nonscalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = x * 2.0
        with pytest.raises(nc.ShapeError):
            tape.backward(y)


def test_backward_clears_tape():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        tape.backward((x * x).sum())
        assert tape.nodes == []


def test_layer_norm_chain_finite_difference():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((3, 5))
    w = rng.standard_normal((5, 4))
    target = rng.standard_normal((3, 4))

    def f(x, w):
        h = nc.layer_norm(x) @ w
        return ((nc.tanh(h) - target) ** 2).mean()

    assert fd_check(f, [x, w]) <= 1e-6


RNG = np.random.default_rng(7)
_A = RNG.standard_normal((2, 3, 4))
_B = RNG.standard_normal((2, 3, 4))
_P = RNG.uniform(0.5, 2.0, (2, 3, 4))
_W = RNG.standard_normal((4, 5))
_IMG = RNG.standard_normal((2, 4, 6))

UNARY_OPS = {
    "exp": nc.exp,
    "log": lambda t: nc.log(t),
    "sqrt": nc.sqrt,
    "tanh": nc.tanh,
    "sigmoid": nc.sigmoid,
    "silu": nc.silu,
    "gelu": nc.gelu,
    "softmax": lambda t: nc.softmax(t, axis=-1),
    "softmax0": lambda t: nc.softmax(t, axis=0),
    "layer_norm": nc.layer_norm,
    "transpose": lambda t: nc.transpose(t, (2, 0, 1)),
    "reshape": lambda t: t.reshape(4, 6),
    "mean": lambda t: t.mean(axis=1),
    "sum_axis": lambda t: t.sum(axis=(0, 2), keepdims=True),
    "cumsum": lambda t: nc.cumsum(t, axis=2),
    "getitem": lambda t: t[:, 1:, ::2],
    "take": lambda t: nc.take(t, [2, 0, 2], axis=1),
    "power": lambda t: t**3,
    "minimum": lambda t: nc.minimum(t, 1.5),
}


@pytest.mark.parametrize("name", sorted(UNARY_OPS))
def test_unary_ops_finite_difference(name):
    op = UNARY_OPS[name]
    x = _P if name in ("log", "sqrt", "minimum") else _A
    weights = np.random.default_rng(3).standard_normal(np.shape(op(Tensor(x)).data))
    assert fd_check(lambda t: (op(t) * weights).sum(), [x]) <= 1e-6


@pytest.mark.parametrize(
    "name,fn,arrays",
    [
        ("add", lambda a, b: a + b, [_A, _B[:, :1]]),
        ("sub", lambda a, b: a - b, [_A, _B]),
        ("mul", lambda a, b: a * b, [_A, _B[0]]),
        ("div", lambda a, b: a / b, [_A, _P]),
        ("matmul", lambda a, b: a @ b, [_A, _W]),
        ("concat", lambda a, b: nc.concat([a, b], axis=1), [_A, _B]),
        ("stack", lambda a, b: nc.stack([a, b], axis=0), [_A, _B]),
        ("max_pool2d", lambda a: nc.max_pool2d(a, 2), [_IMG]),
    ],
)
def test_binary_ops_finite_difference(name, fn, arrays):
    out_shape = fn(*[Tensor(a) for a in arrays]).shape
    weights = np.random.default_rng(4).standard_normal(out_shape)
    assert fd_check(lambda *ts: (fn(*ts) * weights).sum(), arrays) <= 1e-6


def test_randn_moments():
    x = nc.randn(nc.Rng(0), (10_000,)).data
    assert abs(x.mean()) <= 3 * (1 / 100)
    assert abs(x.var() - 1) <= 3 * np.sqrt(2 / 10_000)


def test_randn_determinism():
    a = nc.randn(nc.Rng(0), (4, 5)).data
    b = nc.randn(nc.Rng(0), (4, 5)).data
    assert np.array_equal(a, b)
    c = nc.randn(nc.Rng(1), (4, 5)).data
    assert not np.array_equal(a, c)


def test_rng_child_streams_independent():
    r = nc.Rng(5)
    assert r.child(1).seed != r.child(2).seed
    assert r.child(1).seed == nc.Rng(5).child(1).seed


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, (2, 4, 6), elements=st.floats(0, 10, allow_nan=False)))
def test_max_pool_dominates_mean_pool(x):
    mx = nc.max_pool2d(Tensor(x), 2).data
    mean = x.reshape(2, 2, 2, 3, 2).mean(axis=(2, 4))
    assert np.all(mx >= mean - 1e-12)


def test_max_pool_matches_loop():
    x = np.random.default_rng(2).random((6, 8))
    out = nc.max_pool2d(Tensor(x), 2).data
    for i, j in itertools.product(range(3), range(4)):
        assert out[i, j] == x[2 * i : 2 * i + 2, 2 * j : 2 * j + 2].max()


def test_ops_deterministic():
    x = Tensor(np.random.default_rng(0).standard_normal((5, 8)))
    a = nc.softmax(nc.layer_norm(x) @ x.transpose()).data
    b = nc.softmax(nc.layer_norm(x) @ x.transpose()).data
    assert a.tobytes() == b.tobytes()


def test_container_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    blob = {
        "w": rng.standard_normal((3, 4)).astype(np.float32),
        "b/ü": rng.standard_normal(5),
        "scalar": np.array(np.pi),
        "idx": np.arange(4, dtype=np.int64),
    }
    io.save(tmp_path / "c.bin", blob)
    back = io.load(tmp_path / "c.bin")
    assert list(back) == list(blob)
    for k in blob:
        assert back[k].dtype == blob[k].dtype
        assert back[k].tobytes() == blob[k].tobytes()


def test_container_header_layout():
    buf = io.dumps({"a": np.array([1.0, 2.0])})
    assert buf[:4] == b"SPFL"
    assert struct.unpack_from("<I", buf, 4)[0] == 1
    # name length, name, dtype tag f64 = 2, rank 1, extent 2
    assert struct.unpack_from("<I", buf, 12)[0] == 1
    assert buf[16:17] == b"a"
    assert struct.unpack_from("<BIQ", buf, 17) == (2, 1, 2)
    assert np.frombuffer(buf[-16:], "<f8").tolist() == [1.0, 2.0]


def test_container_rejects_bad_magic():
    with pytest.raises(io.ContainerError):
        io.loads(b"XXXX" + b"\0" * 8)


def test_adamw_moves_against_gradient():
    p = Tensor(np.array([1.0, -1.0]), requires_grad=True)
    opt = nc.AdamW({"p": p}, lr=0.1)
    with Tape() as tape:
        grads = tape.backward((p * p).sum())
    opt.step(grads)
    np.testing.assert_allclose(p.data, [0.9, -0.9])


def test_no_grad_records_nothing():
    x = nc.Tensor(np.arange(3.0), requires_grad=True)
    with nc.Tape() as tape:
        with nc.no_grad():
            y = (x * 2.0).sum()
        assert tape.nodes == []
        z = (x * 3.0).sum()
        assert len(tape.nodes) > 0
        g = tape.backward(z)
    assert not y.requires_grad
    np.testing.assert_array_equal(g.grad(x), np.full(3, 3.0))


def test_rng_state_round_trip():
    import json

    r = nc.Rng(11)
    r.uniform(5)
    r.normal(3)
    snap = json.loads(json.dumps(r.get_state()))
    a = r.normal(17)
    b = nc.Rng(0).set_state(snap).normal(17)
    np.testing.assert_array_equal(a, b)
