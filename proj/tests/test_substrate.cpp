#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "core/gradcheck.hpp"
#include "core/graph.hpp"
#include "core/params.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

using namespace sdr;
using core::Dims;
using core::Graph;
using core::NodeRef;
using core::ParamStore;
using core::Rng;
using core::Tensor;

namespace {

template <typename S>
Tensor<S> random_tensor(Dims dims, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<S> t(std::move(dims));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<S>(rng.uniform(lo, hi));
    return t;
}

// Flatten to rank-1 and take the self dot product: a generic scalarizer for
// gradcheck graphs.
template <typename S>
NodeRef self_dot(Graph<S>& g, NodeRef x) {
    const auto n = static_cast<int>(g.value(x).size());
    NodeRef flat = g.reshape(x, {n});
    return g.dot(flat, flat);
}

} // namespace

TEST_CASE("tensor rejects non-positive extents and length mismatches") {
    CHECK_THROWS_AS(Tensor<float>({3, 0}), ConfigError);
    CHECK_THROWS_AS(Tensor<float>::from({2, 2}, {1.0f, 2.0f}), ConfigError);
    Tensor<float> t({2, 3});
    CHECK(t.size() == 6);
}

TEST_CASE("rng forks are independent of derivation order") {
    Rng a(42);
    Rng f1 = a.fork(7);
    Rng f2 = a.fork(9);
    Rng f1_again = a.fork(7);
    CHECK(f1.next_u64() == f1_again.next_u64());
    CHECK(f1.state() != f2.state());
}

TEST_CASE("temporal_conv: Kt=1 identity kernel reproduces the input") {
    Rng rng(1);
    Graph<double> g;
    const int t = 6, s = 5, d = 3;
    Tensor<double> x = random_tensor<double>({t, s, d}, rng);
    Tensor<double> w({1, d, d});
    for (int i = 0; i < d; ++i) w.at({0, i, i}) = 1.0;
    NodeRef y = g.temporal_conv(g.input(x), g.input(w), g.input(Tensor<double>({d})), 1);
    const auto& yv = g.value(y);
    REQUIRE(yv.dims == Dims{t, s, d});
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(yv[i] == x[i]);
}

TEST_CASE("temporal_conv: zero input yields bias rows") {
    Graph<double> g;
    Tensor<double> b = Tensor<double>::from({4}, {0.5, -1.0, 2.0, 0.25});
    Rng rng(2);
    NodeRef y = g.temporal_conv(g.input(Tensor<double>({7, 3, 2})),
                                g.input(random_tensor<double>({3, 2, 4}, rng)), g.input(b), 1);
    const auto& yv = g.value(y);
    for (int t = 0; t < 7; ++t)
        for (int s = 0; s < 3; ++s)
            for (int o = 0; o < 4; ++o) CHECK(yv.at({t, s, o}) == b[o]);
}

TEST_CASE("temporal_conv matches a direct triple-loop evaluation") {
    Rng rng(3);
    const int t = 8, din = 3, dout = 4, kt = 3;
    Tensor<double> x = random_tensor<double>({t, 1, din}, rng);
    Tensor<double> w = random_tensor<double>({kt, din, dout}, rng);
    Tensor<double> b = random_tensor<double>({dout}, rng);

    for (const int stride : {1, 2}) {
        Graph<double> g;
        NodeRef y = g.temporal_conv(g.input(x), g.input(w), g.input(b), stride);
        const auto& yv = g.value(y);
        const int pad = (kt - 1) / 2;
        const int t_out = (t + 2 * pad - kt) / stride + 1;
        REQUIRE(yv.dims == Dims{t_out, 1, dout});
        for (int to = 0; to < t_out; ++to) {
            for (int o = 0; o < dout; ++o) {
                double want = b[o];
                for (int k = 0; k < kt; ++k) {
                    const int ti = to * stride + k - pad;
                    if (ti < 0 || ti >= t) continue;
                    for (int i = 0; i < din; ++i) want += x.at({ti, 0, i}) * w.at({k, i, o});
                }
                // same accumulation order, contraction disabled: exact match
                CHECK(yv.at({to, 0, o}) == want);
            }
        }
    }
}

TEST_CASE("temporal_conv is linear in its input (64-bit, 1e-12)") {
    Rng rng(4);
    const int t = 8, s = 2, d = 3;
    Tensor<double> x = random_tensor<double>({t, s, d}, rng);
    Tensor<double> y = random_tensor<double>({t, s, d}, rng);
    Tensor<double> w = random_tensor<double>({3, d, d}, rng);
    Tensor<double> zero_bias({d});
    const double a = 1.7, b = -0.3;

    Tensor<double> combo({t, s, d});
    for (std::int64_t i = 0; i < combo.size(); ++i) combo[i] = a * x[i] + b * y[i];

    // note: value() references are invalidated by later node creation, so
    // take copies
    Graph<double> g;
    const Tensor<double> both =
        g.value(g.temporal_conv(g.input(combo), g.input(w), g.input(zero_bias), 1));
    const Tensor<double> fx = g.value(g.temporal_conv(g.input(x), g.input(w), g.input(zero_bias), 1));
    const Tensor<double> fy = g.value(g.temporal_conv(g.input(y), g.input(w), g.input(zero_bias), 1));
    for (std::int64_t i = 0; i < both.size(); ++i) {
        CHECK(std::abs(both[i] - (a * fx[i] + b * fy[i])) <= 1e-12);
    }
}

TEST_CASE("temporal_conv configuration errors") {
    Graph<double> g;
    Rng rng(5);
    Tensor<double> x = random_tensor<double>({6, 2, 3}, rng);
    // even kernel, stride 1: padding ambiguous
    CHECK_THROWS_AS(g.temporal_conv(g.input(x), g.input(random_tensor<double>({2, 3, 3}, rng)),
                                    g.input(Tensor<double>({3})), 1),
                    ConfigError);
    // kernel input width mismatch
    CHECK_THROWS_AS(g.temporal_conv(g.input(x), g.input(random_tensor<double>({3, 4, 3}, rng)),
                                    g.input(Tensor<double>({3})), 1),
                    ConfigError);
    // input shorter than kernel
    Tensor<double> tiny = random_tensor<double>({2, 2, 3}, rng);
    CHECK_THROWS_AS(g.temporal_conv(g.input(tiny), g.input(random_tensor<double>({3, 3, 3}, rng)),
                                    g.input(Tensor<double>({3})), 1),
                    ConfigError);
}

TEST_CASE("clamped_softmax: fixed points and derived values") {
    Graph<double> g;
    auto run = [&](std::vector<double> logits) {
        const int k = static_cast<int>(logits.size());
        NodeRef y = g.clamped_softmax(g.input(Tensor<double>::from({k}, std::move(logits))));
        return g.value(y);
    };
    const auto& half = run({0.0, 0.0});
    CHECK(half[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(half[1] == doctest::Approx(0.5).epsilon(1e-12));

    const auto& thirds = run({3.25, 3.25, 3.25});
    for (int i = 0; i < 3; ++i) CHECK(thirds[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));

    // [ln 1, ln 3] -> [0.25, 0.75]
    const auto& quarters = run({std::log(1.0), std::log(3.0)});
    CHECK(quarters[0] == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(quarters[1] == doctest::Approx(0.75).epsilon(1e-9));
}

TEST_CASE("clamped_softmax: normalization and shift invariance over random logits") {
    Rng rng(6);
    for (int trial = 0; trial < 200; ++trial) {
        const int k = rng.uniform_int(2, 6);
        std::vector<double> logits(static_cast<std::size_t>(k));
        for (auto& v : logits) v = rng.uniform(-30.0, 30.0);
        const double shift = rng.uniform(-100.0, 100.0);

        Graph<double> g;
        const auto base = g.value(g.clamped_softmax(
            g.input(Tensor<double>::from({k}, std::vector<double>(logits)))));
        std::vector<double> shifted = logits;
        for (auto& v : shifted) v += shift;
        const auto moved = g.value(g.clamped_softmax(
            g.input(Tensor<double>::from({k}, std::move(shifted)))));

        double sum = 0;
        for (int i = 0; i < k; ++i) {
            CHECK(base[i] >= 0.0);
            sum += base[i];
            CHECK(std::abs(base[i] - moved[i]) <= 1e-6);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-6);
    }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    ParamStore<double> ps(1);
    Rng rng(7);
    ps.add("w", random_tensor<double>({3, 2}, rng));
    const Tensor<double> before = ps.value("w");
    ps.entry("w").grad_fresh = true; // populated with zeros
    ps.adam_step(0.1, 0.9, 0.999, 1e-8, 1);
    for (std::int64_t i = 0; i < before.size(); ++i) CHECK(ps.value("w")[i] == before[i]);
}

TEST_CASE("adam: update direction opposes the gradient") {
    for (const double grad : {3.0, -0.25}) {
        ParamStore<double> ps(1);
        ps.add("w", Tensor<double>::from({1}, {1.0}));
        ps.grad("w")[0] = grad;
        ps.entry("w").grad_fresh = true;
        ps.adam_step(0.05, 0.9, 0.999, 1e-8, 1);
        const double update = ps.value("w")[0] - 1.0;
        CHECK(update * grad < 0.0);
    }
}

TEST_CASE("adam: two-step hand-computed scalar trace (64-bit, 1e-12)") {
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8, g = 1.0;
    ParamStore<double> ps(1);
    ps.add("w", Tensor<double>::from({1}, {0.5}));

    double theta = 0.5, m = 0.0, v = 0.0;
    for (int step = 1; step <= 2; ++step) {
        ps.grad("w")[0] = g;
        ps.entry("w").grad_fresh = true;
        ps.adam_step(lr, b1, b2, eps, step);

        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mhat = m / (1 - std::pow(b1, step));
        const double vhat = v / (1 - std::pow(b2, step));
        theta -= lr * mhat / (std::sqrt(vhat) + eps);
        CHECK(std::abs(ps.value("w")[0] - theta) <= 1e-12);
    }
    // gradients zeroed afterward
    CHECK(ps.grad("w")[0] == 0.0);
    CHECK_THROWS_AS(ps.adam_step(lr, b1, b2, eps, 3), InvariantError);
}

TEST_CASE("adam is deterministic: identical stores produce identical updates") {
    auto run = [] {
        ParamStore<float> ps(9);
        Rng rng(8);
        ps.add("w", random_tensor<float>({4, 4}, rng));
        for (int step = 1; step <= 3; ++step) {
            for (std::int64_t i = 0; i < ps.grad("w").size(); ++i) {
                ps.grad("w")[i] = static_cast<float>(0.01 * static_cast<double>(step) *
                                                     static_cast<double>(i % 5));
            }
            ps.entry("w").grad_fresh = true;
            ps.adam_step(1e-3, 0.9, 0.999, 1e-8, step);
        }
        return ps.value("w");
    };
    const auto a = run();
    const auto b = run();
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("gradcheck: quadratic loss has near-exact gradients") {
    ParamStore<double> ps(11);
    Rng rng(11);
    ps.add("theta", random_tensor<double>({5}, rng));
    auto loss = [](ParamStore<double>& store, bool want_grad) -> double {
        double acc = 0;
        auto& e = store.entry("theta");
        for (std::int64_t i = 0; i < e.value.size(); ++i) {
            acc += e.value[i] * e.value[i];
            if (want_grad) e.grad[i] += 2.0 * e.value[i];
        }
        if (want_grad) e.grad_fresh = true;
        return acc;
    };
    const auto report = core::finite_diff_gradcheck<double>(loss, ps, 1e-5, 1e-4);
    CHECK(report.pass);
    CHECK(report.max_rel_err < 1e-9);
    CHECK(report.coords_checked == 5);
}

TEST_CASE("gradcheck: non-deterministic loss is reported before differencing") {
    ParamStore<double> ps(12);
    ps.add("theta", Tensor<double>::from({1}, {1.0}));
    int calls = 0;
    auto loss = [&calls](ParamStore<double>& store, bool want_grad) -> double {
        if (want_grad) store.entry("theta").grad_fresh = true;
        return store.value("theta")[0] + 0.001 * calls++;
    };
    CHECK_THROWS_AS(core::finite_diff_gradcheck<double>(loss, ps, 1e-5, 1e-4), DeterminismError);
}

TEST_CASE("gradcheck: a corrupted gradient fails and names the tensor") {
    ParamStore<double> ps(13);
    Rng rng(13);
    ps.add("good", random_tensor<double>({3}, rng));
    ps.add("bad", random_tensor<double>({2}, rng));
    auto loss = [](ParamStore<double>& store, bool want_grad) -> double {
        double acc = 0;
        for (auto& e : store.entries()) {
            for (std::int64_t i = 0; i < e.value.size(); ++i) {
                acc += e.value[i] * e.value[i];
                if (want_grad) e.grad[i] += 2.0 * e.value[i];
            }
            if (want_grad) e.grad_fresh = true;
        }
        if (want_grad) store.grad("bad")[1] += 0.5; // deliberate corruption
        return acc;
    };
    const auto report = core::finite_diff_gradcheck<double>(loss, ps, 1e-5, 1e-4);
    CHECK_FALSE(report.pass);
    CHECK(report.worst_tensor == "bad");
    CHECK(report.worst_coord == 1);
}

TEST_CASE("gradcheck rejects float mode and out-of-range step sizes") {
    ParamStore<float> psf(14);
    psf.add("w", Tensor<float>::from({1}, {1.0f}));
    auto loss_f = [](ParamStore<float>& store, bool want_grad) -> float {
        if (want_grad) store.entry("w").grad_fresh = true;
        return store.value("w")[0];
    };
    CHECK_THROWS_AS(core::finite_diff_gradcheck<float>(loss_f, psf, 1e-5, 1e-4), ConfigError);

    ParamStore<double> psd(15);
    psd.add("w", Tensor<double>::from({1}, {1.0}));
    auto loss_d = [](ParamStore<double>& store, bool want_grad) -> double {
        if (want_grad) store.entry("w").grad_fresh = true;
        return store.value("w")[0];
    };
    CHECK_THROWS_AS(core::finite_diff_gradcheck<double>(loss_d, psd, 1e-2, 1e-4), ConfigError);
}

TEST_CASE("gradcheck covers every dense primitive") {
    // backbone-style graph: affine -> layer_norm -> temporal_conv -> relu ->
    // subsample skip -> mean pools
    {
        ParamStore<double> ps(21);
        Rng rng(21);
        ps.add("x", random_tensor<double>({6, 3, 4}, rng));
        ps.add("w0", random_tensor<double>({4, 4}, rng, -0.5, 0.5));
        ps.add("b0", random_tensor<double>({4}, rng, -0.1, 0.1));
        ps.add("ln.g", random_tensor<double>({4}, rng, 0.5, 1.5));
        ps.add("ln.b", random_tensor<double>({4}, rng, -0.2, 0.2));
        ps.add("cw", random_tensor<double>({3, 4, 4}, rng, -0.5, 0.5));
        ps.add("cb", random_tensor<double>({4}, rng, -0.1, 0.1));
        auto loss = [](ParamStore<double>& store, bool want_grad) -> double {
            Graph<double> g(want_grad);
            NodeRef x = g.param(store, "x");
            NodeRef h = g.affine(x, g.param(store, "w0"), g.param(store, "b0"));
            h = g.layer_norm(h, g.param(store, "ln.g"), g.param(store, "ln.b"));
            h = g.temporal_conv(h, g.param(store, "cw"), g.param(store, "cb"), 2);
            h = g.relu(h);
            h = g.add(h, g.subsample_time(x, 2, g.value(h).dim(0)));
            NodeRef pooled = g.mean_rows(g.mean_sites(h));
            NodeRef loss_node = g.dot(pooled, pooled);
            if (want_grad) g.backward(loss_node);
            return g.value(loss_node)[0];
        };
        const auto report = core::finite_diff_gradcheck<double>(loss, ps, 1e-5, 1e-4);
        INFO("worst: ", report.worst_tensor, " rel ", report.max_rel_err);
        CHECK(report.pass);
    }

    // attention + heads: mhsa, prepend_row, row, concat/drop, softmax, kl,
    // cross-entropy, l2_normalize, scalar glue
    {
        ParamStore<double> ps(22);
        Rng rng(22);
        const int dm = 4;
        ps.add("seq_a", random_tensor<double>({5, 2}, rng));
        ps.add("seq_b", random_tensor<double>({5, 2}, rng));
        ps.add("cls", random_tensor<double>({dm}, rng));
        for (const char* n : {"wq", "wk", "wv", "wo"}) {
            ps.add(n, random_tensor<double>({dm, dm}, rng, -0.6, 0.6));
        }
        for (const char* n : {"bq", "bk", "bv", "bo"}) {
            ps.add(n, random_tensor<double>({dm}, rng, -0.1, 0.1));
        }
        ps.add("head.w", random_tensor<double>({dm, 2}, rng, -0.6, 0.6));
        ps.add("head.b", random_tensor<double>({2}, rng, -0.1, 0.1));
        ps.add("loo.w", random_tensor<double>({2, 2}, rng, -0.6, 0.6));
        ps.add("loo.b", random_tensor<double>({2}, rng, -0.1, 0.1));
        auto loss = [dm](ParamStore<double>& store, bool want_grad) -> double {
            Graph<double> g(want_grad);
            NodeRef z = g.concat_channels({g.param(store, "seq_a"), g.param(store, "seq_b")});
            NodeRef x = g.prepend_row(g.param(store, "cls"), z);
            x = g.mhsa(x, g.param(store, "wq"), g.param(store, "bq"), g.param(store, "wk"),
                       g.param(store, "bk"), g.param(store, "wv"), g.param(store, "bv"),
                       g.param(store, "wo"), g.param(store, "bo"), 2);
            NodeRef logits = g.affine(g.row(x, 0), g.param(store, "head.w"), g.param(store, "head.b"));
            NodeRef ce = g.cross_entropy_logits(logits, 1);
            NodeRef p = g.clamped_softmax(logits);
            NodeRef loo_logits = g.affine(g.mean_rows(g.drop_channels(z, 0, 2)),
                                          g.param(store, "loo.w"), g.param(store, "loo.b"));
            NodeRef q = g.clamped_softmax(loo_logits);
            NodeRef kl = g.kl_pair(p, q);
            NodeRef rep = g.l2_normalize(g.mean_rows(z));
            NodeRef con = g.exp1(g.scale(g.dot(rep, rep), 0.5));
            NodeRef total = g.weighted_sum({ce, kl, con}, {1.0, 0.7, 0.3});
            if (want_grad) g.backward(total);
            (void)dm;
            return g.value(total)[0];
        };
        const auto report = core::finite_diff_gradcheck<double>(loss, ps, 1e-5, 1e-4);
        INFO("worst: ", report.worst_tensor, " rel ", report.max_rel_err);
        CHECK(report.pass);
    }

    // spatial conv3d used by the baseline
    {
        ParamStore<double> ps(23);
        Rng rng(23);
        ps.add("x", random_tensor<double>({4, 3, 3, 2}, rng));
        ps.add("w", random_tensor<double>({3, 3, 3, 2, 2}, rng, -0.4, 0.4));
        ps.add("b", random_tensor<double>({2}, rng, -0.1, 0.1));
        auto loss = [](ParamStore<double>& store, bool want_grad) -> double {
            Graph<double> g(want_grad);
            NodeRef y = g.conv3d(g.param(store, "x"), g.param(store, "w"), g.param(store, "b"), 1);
            NodeRef l = g.dot(g.reshape(y, {static_cast<int>(g.value(y).size())}),
                              g.reshape(y, {static_cast<int>(g.value(y).size())}));
            if (want_grad) g.backward(l);
            return g.value(l)[0];
        };
        const auto report = core::finite_diff_gradcheck<double>(loss, ps, 1e-5, 1e-4);
        INFO("worst: ", report.worst_tensor, " rel ", report.max_rel_err);
        CHECK(report.pass);
    }
}

TEST_CASE("backward accumulates into parameter stores and marks freshness") {
    ParamStore<double> ps(31);
    ps.add("w", Tensor<double>::from({2}, {0.5, -0.25}));
    Graph<double> g;
    NodeRef w = g.param(ps, "w");
    NodeRef loss = g.dot(w, w);
    g.backward(loss);
    CHECK(ps.entry("w").grad_fresh);
    CHECK(ps.grad("w")[0] == doctest::Approx(1.0));
    CHECK(ps.grad("w")[1] == doctest::Approx(-0.5));
}

TEST_CASE("no-grad graphs refuse backward") {
    Graph<float> g(false);
    NodeRef x = g.input(Tensor<float>::from({1}, {2.0f}));
    CHECK_THROWS_AS(g.backward(x), InvariantError);
}

TEST_CASE("non-finite values are a hard error") {
    Graph<float> g;
    NodeRef x = g.input(Tensor<float>::from({2}, {1.0f, 2.0f}));
    NodeRef big = g.scale(x, 1e38);
    CHECK_THROWS_AS(g.scale(big, 1e5), NumericError);
}

TEST_CASE("reshape self_dot helper sees every element") {
    Graph<double> g;
    NodeRef x = g.input(Tensor<double>::from({2, 2}, {1.0, 2.0, 3.0, 4.0}));
    CHECK(g.value(self_dot(g, x))[0] == doctest::Approx(30.0));
}
