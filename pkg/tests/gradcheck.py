"""Central-difference gradient checks shared by the unit and acceptance tests.

Each case builds random inputs from a seed and a function mapping input
nodes to a scalar node. The checker compares the tape's gradient with
central differences at step ``h`` and reports the worst relative error.
"""

from __future__ import annotations

import numpy as np

from vdt import autodiff as ad
from vdt import losses as L
from vdt.model import Architecture, DomainPath, LatentStats, classify, decode, encode, gate_features, init_params, reparameterize

H = 1e-5


def weighted(node, tag: int):
    # contract a non-scalar output against fixed random weights, drawn from a
    # stream that never coincides with the input draws
    C = np.random.default_rng([tag, 991]).standard_normal(node.shape)
    return ad.sum(ad.mul(node, ad.constant(C)))


def analytic(fn, arrays):
    nodes = [ad.Node(a.copy()) for a in arrays]
    root = fn(nodes)
    ad.backward(root)
    return [n.grad.copy() for n in nodes]


def numeric(fn, arrays, h=H):
    out = []
    for k, a in enumerate(arrays):
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            vals = []
            for step in (h, -h):
                pert = [b.copy() for b in arrays]
                pert[k][idx] += step
                vals.append(float(fn([ad.Node(b) for b in pert]).value))
            g[idx] = (vals[0] - vals[1]) / (2 * h)
        out.append(g)
    return out


def rel_error(a, n) -> float:
    num = np.linalg.norm(a - n)
    den = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(num / den)


def check(case, seed: int) -> float:
    fn, arrays = case(np.random.default_rng(seed))
    return max(rel_error(a, n) for a, n in zip(analytic(fn, arrays), numeric(fn, arrays)))


# -------------------------------------------------------------------- cases
# each case: rng -> (fn(list[Node]) -> scalar Node, list of float64 arrays)


def _away_from(x, point, gap=0.1):
    # keep finite differences off a kink
    return np.where(np.abs(x - point) < gap, x + np.sign(x - point + 1e-9) * gap, x)


def case_matmul(rng):
    return (lambda v: weighted(ad.matmul(v[0], v[1]), 1)), [rng.standard_normal((3, 4)), rng.standard_normal((4, 2))]


def _unary(op, make):
    def case(rng):
        x = make(rng)
        return (lambda v: weighted(op(v[0]), 2)), [x]

    return case


def _binary(op, shape_a, shape_b):
    def case(rng):
        return (lambda v: weighted(op(v[0], v[1]), 3)), [
            rng.standard_normal(shape_a),
            rng.standard_normal(shape_b),
        ]

    return case


def case_take_rows(rng):
    idx = np.array([0, 2, 2, 1])
    return (lambda v: weighted(ad.take_rows(v[0], idx), 4)), [rng.standard_normal((3, 2))]


def case_logsumexp(rng):
    mask = np.eye(4, dtype=bool)
    return (lambda v: weighted(ad.logsumexp_rowwise(v[0], exclude=mask), 5)), [
        rng.standard_normal((4, 4))
    ]


def case_scalar_ops(rng):
    def fn(v):
        x = v[0]
        return ad.sum(((x * 3.0) - x / 2.0 + (-x)) @ x.T)

    return fn, [rng.standard_normal((2, 3))]


def case_diamond(rng):
    # y = x + x reuses x on two paths
    return (lambda v: weighted(ad.add(ad.square(v[0]), ad.mul(v[0], v[0])), 6)), [
        rng.standard_normal((2, 2))
    ]


def case_gate(rng):
    return (lambda v: weighted(gate_features(LatentStats(v[0], v[1])), 7)), [
        rng.standard_normal((3, 4)),
        rng.standard_normal((3, 4)),
    ]


def case_reparameterize(rng):
    return (
        lambda v: weighted(reparameterize(LatentStats(v[0], v[1]), np.random.default_rng(8)), 9)
    ), [rng.standard_normal((3, 4)), rng.standard_normal((3, 4))]


def case_diva(rng):
    tau = 0.5
    return (lambda v: L.diva_loss(v[0], v[1], tau)), [rng.standard_normal((4, 3)), rng.standard_normal((4, 3))]


def case_recon(rng):
    Xs, Xt = rng.standard_normal((3, 4)), rng.standard_normal((2, 4))
    return (lambda v: L.recon_loss(Xs, v[0], Xt, v[1])), [rng.standard_normal((3, 4)), rng.standard_normal((2, 4))]


def case_kl(rng):
    return (lambda v: L.kl_loss(LatentStats(v[0], v[1]), LatentStats(v[2], v[3]))), [
        rng.standard_normal((3, 4)) for _ in range(4)
    ]


def case_dcc(rng):
    X = rng.standard_normal((3, 4))

    def fn(v):
        st = LatentStats(v[1], v[2])
        return L.dcc_loss(L.recon_loss(X, v[0], X, v[0]), L.kl_loss(st, st), 1.5)

    return fn, [rng.standard_normal((3, 4)), rng.standard_normal((3, 2)), rng.standard_normal((3, 2))]


def case_cls(rng):
    y = rng.integers(0, 2, 5)
    return (lambda v: L.cls_loss(ad.softmax_rowwise(v[0]), y)), [rng.standard_normal((5, 2))]


def case_total(rng):
    y = rng.integers(0, 2, 4)
    X = rng.standard_normal((4, 3))
    w = L.LossWeights()

    def fn(v):
        cls = L.cls_loss(ad.softmax_rowwise(v[0]), y)
        diva = L.diva_loss(v[1], v[2], w.tau)
        st_s, st_t = LatentStats(v[1], v[3]), LatentStats(v[2], v[3])
        dcc = L.dcc_loss(L.recon_loss(X, v[4], X, v[4]), L.kl_loss(st_s, st_t), w.beta)
        return L.total_loss(cls, diva, dcc, w)

    return fn, [rng.standard_normal((4, 2)), rng.standard_normal((4, 3)), rng.standard_normal((4, 3)),
                rng.standard_normal((4, 3)), rng.standard_normal((4, 3))]


def case_ttt(rng):
    y = rng.integers(0, 2, 4)
    X = rng.standard_normal((4, 3))

    def fn(v):
        st = LatentStats(v[1], v[2])
        return L.ttt_loss(L.cls_loss(ad.softmax_rowwise(v[0]), y), L.dcc_loss(L.mse(X, v[3]), L.kl_term(st), 1.5))

    return fn, [rng.standard_normal((4, 2)), rng.standard_normal((4, 3)), rng.standard_normal((4, 3)), rng.standard_normal((4, 3))]


def case_network(rng):
    """Full training objective of a tiny model, differentiated w.r.t. every weight."""
    arch = Architecture(3, (4,), 2, 5)
    p = init_params(arch, int(rng.integers(1 << 30)))
    names = p.names()
    # move the target heads and biases off their symmetric initial values
    arrays = [p[n].value + 0.1 * rng.standard_normal(p[n].shape) for n in names]
    Xs, Xt = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    y = rng.integers(0, 2, 4)
    w = L.LossWeights()

    def fn(v):
        for n, node in zip(names, v):
            p.tensors[n] = node
        st_s, st_t = encode(p, Xs, DomainPath.SOURCE), encode(p, Xt, DomainPath.TARGET)
        cls = L.cls_loss(classify(p, gate_features(st_s)), y)
        diva = L.diva_loss(st_s.mu, st_t.mu, w.tau)
        r = np.random.default_rng(10)
        rec = L.recon_loss(Xs, decode(p, reparameterize(st_s, r)), Xt, decode(p, reparameterize(st_t, r)))
        return L.total_loss(cls, diva, L.dcc_loss(rec, L.kl_loss(st_s, st_t), w.beta), w)

    return fn, arrays


CASES = {
    "matmul": case_matmul,
    "transpose": _unary(ad.transpose, lambda r: r.standard_normal((2, 3))),
    "add": _binary(ad.add, (2, 3), (2, 3)),
    "sub": _binary(ad.sub, (2, 3), (2, 3)),
    "add_bias": _binary(ad.add_bias, (3, 2), (2,)),
    "mul": _binary(ad.mul, (2, 3), (2, 3)),
    "concat_rows": _binary(ad.concat_rows, (2, 3), (1, 3)),
    "scalar_ops": case_scalar_ops,
    "take_rows": case_take_rows,
    "sigmoid": _unary(ad.sigmoid, lambda r: 3 * r.standard_normal((2, 3))),
    "relu": _unary(ad.relu, lambda r: _away_from(r.standard_normal((2, 3)), 0.0)),
    "exp": _unary(ad.exp, lambda r: r.standard_normal((2, 3))),
    "log": _unary(ad.log, lambda r: r.uniform(0.5, 2.0, (2, 3))),
    "square": _unary(ad.square, lambda r: r.standard_normal((2, 3))),
    "clip": _unary(lambda x: ad.clip(x, -0.5, 0.5), lambda r: _away_from(_away_from(r.standard_normal((2, 3)), 0.5), -0.5)),
    "sum": _unary(lambda x: ad.scalar_mul(ad.sum(x), 1.0), lambda r: r.standard_normal((2, 3))),
    "mean": _unary(lambda x: ad.scalar_mul(ad.mean(x), 1.0), lambda r: r.standard_normal((2, 3))),
    "sum_rows": _unary(ad.sum_rows, lambda r: r.standard_normal((3, 4))),
    "softmax_rowwise": _unary(ad.softmax_rowwise, lambda r: r.standard_normal((3, 4))),
    "logsumexp_rowwise": case_logsumexp,
    "l2_normalize_rowwise": _unary(ad.l2_normalize_rowwise, lambda r: r.standard_normal((3, 4))),
    "diamond": case_diamond,
    "gate_features": case_gate,
    "reparameterize": case_reparameterize,
    "diva_loss": case_diva,
    "recon_loss": case_recon,
    "kl_loss": case_kl,
    "dcc_loss": case_dcc,
    "cls_loss": case_cls,
    "total_loss": case_total,
    "ttt_loss": case_ttt,
    "network": case_network,
}
