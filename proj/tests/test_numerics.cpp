#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <vector>

#include "calvid/autograd.hpp"
#include "calvid/blob.hpp"
#include "calvid/nn.hpp"
#include "calvid/optim.hpp"
#include "calvid/rng.hpp"
#include "calvid/tensor.hpp"
#include "test_util.hpp"

using namespace calvid;

TEST_CASE("tensor shape bookkeeping") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.rank() == 2);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0f}), ShapeError);
    Tensor r = t.reshaped({3, 2});
    CHECK(r.dim(0) == 3);
    CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
}

TEST_CASE("rng determinism and fork independence") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng c(42);
    Rng f1 = c.fork(7), f2 = c.fork(7), f3 = c.fork(8);
    CHECK(f1.next_u64() == f2.next_u64());
    CHECK(f1.next_u64() != f3.next_u64());

    // normal() draws are reproducible and roughly standard
    Rng g(9);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double v = g.normal();
        sum += v;
        sq += v * v;
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("blob round trip and format header") {
    Rng rng(3);
    Tensor t = rng.normal_tensor({2, 3, 4});
    const std::string path = (std::filesystem::temp_directory_path() / "calvid_blob_test.bin").string();
    blob::write_file(path, t);
    CHECK(std::filesystem::file_size(path) == static_cast<uintmax_t>(blob::byte_size(t.shape())));

    // header: CC3T magic, rank, extents
    FILE* fp = std::fopen(path.c_str(), "rb");
    unsigned char head[12];
    REQUIRE(std::fread(head, 1, 12, fp) == 12);
    std::fclose(fp);
    CHECK(head[0] == 'C');
    CHECK(head[1] == 'C');
    CHECK(head[2] == '3');
    CHECK(head[3] == 'T');
    CHECK(head[4] == 3);  // rank, little-endian u32
    CHECK(head[8] == 2);  // first extent

    Tensor back = blob::read_file(path);
    REQUIRE(back.same_shape(t));
    for (int64_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);
    std::filesystem::remove(path);
}

TEST_CASE("grad of quadratic: loss = sum(w*w), w=[1,2] -> [2,4]") {
    Tape tape;
    Var w = tape.leaf(Tensor({2}, {1.0f, 2.0f}));
    Var loss = sum_all(mul(w, w));
    auto grads = tape.grad(loss, {w});
    CHECK(grads[0][0] == doctest::Approx(2.0f));
    CHECK(grads[0][1] == doctest::Approx(4.0f));
}

TEST_CASE("grad of constant loss is exactly zero") {
    Tape tape;
    Var w = tape.leaf(Tensor({3}, {1.0f, 2.0f, 3.0f}));
    Var c = tape.leaf(Tensor::scalar(5.0f));
    Var loss = sum_all(c);
    auto grads = tape.grad(loss, {w});
    for (int64_t i = 0; i < 3; ++i) CHECK(grads[0][i] == 0.0f);
}

TEST_CASE("grad rejects non-scalar loss and double consumption") {
    Tape tape;
    Var w = tape.leaf(Tensor({2}, {1.0f, 2.0f}));
    Var y = mul(w, w);
    CHECK_THROWS_AS(tape.grad(y, {w}), ShapeError);

    Tape tape2;
    Var w2 = tape2.leaf(Tensor({2}, {1.0f, 2.0f}));
    Var loss = sum_all(mul(w2, w2));
    (void)tape2.grad(loss, {w2});
    CHECK_THROWS_AS(tape2.grad(loss, {w2}), std::logic_error);
}

TEST_CASE("grad raises on NaN during backward") {
    Tape tape;
    Var w = tape.leaf(Tensor({2}, {0.0f, 1.0f}));
    Var bad = scale(w, std::numeric_limits<float>::infinity());
    Var loss = sum_all(mul(bad, w));
    CHECK_THROWS_AS(tape.grad(loss, {w}), DivergenceError);
}

TEST_CASE("stop_gradient: value identity and hand chain rule") {
    // loss = sum(stop_gradient(w) * w), w=[3] -> dloss/dw = [3]
    Tape tape;
    Var w = tape.leaf(Tensor({1}, {3.0f}));
    Var sg = stop_gradient(w);
    CHECK(sg.value()[0] == 3.0f);
    Var loss = sum_all(mul(sg, w));
    auto grads = tape.grad(loss, {w});
    CHECK(grads[0][0] == doctest::Approx(3.0f));
}

TEST_CASE("stop_gradient: leaf reachable only through it gets exact zero") {
    Tape tape;
    Var w = tape.leaf(Tensor({2}, {1.0f, 2.0f}));
    Var u = tape.leaf(Tensor({2}, {5.0f, 6.0f}));
    Var loss = sum_all(add(mul(w, w), stop_gradient(mul(u, u))));
    auto grads = tape.grad(loss, {w, u});
    CHECK(grads[0][0] == 2.0f);
    CHECK(grads[1][0] == 0.0f);
    CHECK(grads[1][1] == 0.0f);
}

TEST_CASE("3-layer perceptron gradient matches central finite differences") {
    Rng rng(11);
    Linear l1, l2, l3;
    l1.init(rng, 6, 10);
    l2.init(rng, 10, 8);
    l3.init(rng, 8, 1);
    Tensor x = rng.normal_tensor({4, 6});

    auto params = std::vector<Tensor>{l1.w, l1.b, l2.w, l2.b, l3.w, l3.b};
    auto loss_fn = [&](const std::vector<Tensor>& p) -> double {
        Tape tape(false);
        Var in = tape.constant(x);
        Var h1 = tanh_act(add_row_bias(matmul(in, tape.constant(p[0])), tape.constant(p[1])));
        Var h2 = silu(add_row_bias(matmul(h1, tape.constant(p[2])), tape.constant(p[3])));
        Var out = add_row_bias(matmul(h2, tape.constant(p[4])), tape.constant(p[5]));
        return mean_all(out).value()[0];
    };

    Tape tape;
    Var in = tape.constant(x);
    std::vector<Var> leaves;
    for (auto& p : params) leaves.push_back(tape.leaf(p));
    Var h1 = tanh_act(add_row_bias(matmul(in, leaves[0]), leaves[1]));
    Var h2 = silu(add_row_bias(matmul(h1, leaves[2]), leaves[3]));
    Var out = add_row_bias(matmul(h2, leaves[4]), leaves[5]);
    auto analytic = tape.grad(mean_all(out), leaves);

    auto fd = testutil::finite_diff(loss_fn, params, 1e-3);
    CHECK(testutil::rel_error(analytic, fd) < 1e-3);
}

namespace {

/// Runs a gradient check for a layer expressed as (binder, x) -> Var, on
/// `instances` random instances. The loss contracts the output against a
/// fixed random tensor so every output element participates.
template <typename MakeLayer>
void layer_grad_check(uint64_t seed, int instances, double h, MakeLayer make) {
    for (int inst = 0; inst < instances; ++inst) {
        Rng rng(seed + static_cast<uint64_t>(inst));
        auto [forward, params, x] = make(rng);
        Tensor contract = rng.normal_tensor({0});  // filled lazily below

        auto loss_fn = [&](const std::vector<Tensor>& p) -> double {
            Tape tape(false);
            ParamBinder bind(tape, false);
            std::vector<Tensor> tmp = p;
            Var out = forward(tape, bind, tmp, tape.constant(x));
            if (contract.size() == 0) {
                Rng crng(seed + 500 + static_cast<uint64_t>(inst));
                contract = crng.normal_tensor(out.value().shape());
            }
            Tape t2(false);
            Var o2 = t2.constant(out.value());
            return sum_all(mul(o2, t2.constant(contract))).value()[0];
        };
        const double base = loss_fn(params);
        (void)base;

        Tape tape;
        ParamBinder bind(tape, true);
        std::vector<Tensor> live = params;
        Var out = forward(tape, bind, live, tape.constant(x));
        Var loss = sum_all(mul(out, tape.constant(contract)));
        auto analytic = tape.grad(loss, bind.vars());

        std::vector<Tensor> fd = testutil::finite_diff(
            [&](const std::vector<Tensor>& p) {
                Tape t(false);
                ParamBinder b(t, false);
                std::vector<Tensor> tmp = p;
                Var o = forward(t, b, tmp, t.constant(x));
                return sum_all(mul(o, t.constant(contract))).value()[0];
            },
            live, h);
        CHECK(testutil::rel_error(analytic, fd) < 1e-3);
    }
}

}  // namespace

TEST_CASE("layer gradients: linear") {
    layer_grad_check(100, 10, 1e-3, [](Rng& rng) {
        auto lin = std::make_shared<Linear>();
        lin->init(rng, 5, 7);
        std::vector<Tensor> params{lin->w, lin->b};
        Tensor x = rng.normal_tensor({3, 5});
        auto fwd = [](Tape&, ParamBinder& bind, std::vector<Tensor>& p, Var x_) {
            Var w = bind(p[0]);  // bind in parameter order; later binds dedup
            Var b = bind(p[1]);
            return add_row_bias(matmul(x_, w), b);
        };
        return std::tuple(fwd, params, x);
    });
}

TEST_CASE("layer gradients: sigmoid") {
    layer_grad_check(200, 10, 1e-3, [](Rng& rng) {
        std::vector<Tensor> params{rng.normal_tensor({4, 6})};
        Tensor x = rng.normal_tensor({4, 6});
        auto fwd = [](Tape&, ParamBinder& bind, std::vector<Tensor>& p, Var x_) {
            return sigmoid(add(x_, bind(p[0])));
        };
        return std::tuple(fwd, params, x);
    });
}

TEST_CASE("layer gradients: softmax") {
    layer_grad_check(300, 10, 1e-3, [](Rng& rng) {
        std::vector<Tensor> params{rng.normal_tensor({5, 9})};
        Tensor x = rng.normal_tensor({5, 9});
        auto fwd = [](Tape&, ParamBinder& bind, std::vector<Tensor>& p, Var x_) {
            return softmax_rows(add(x_, bind(p[0])));
        };
        return std::tuple(fwd, params, x);
    });
}

TEST_CASE("layer gradients: layer normalization") {
    layer_grad_check(400, 10, 1e-3, [](Rng& rng) {
        std::vector<Tensor> params{rng.normal_tensor({6, 8}), rng.normal_tensor({8}),
                                   rng.normal_tensor({8})};
        Tensor x = rng.normal_tensor({6, 8});
        auto fwd = [](Tape&, ParamBinder& bind, std::vector<Tensor>& p, Var x_) {
            Var shift = bind(p[0]);
            Var gamma = bind(p[1]);
            Var beta = bind(p[2]);
            return layer_norm_rows(add(x_, shift), gamma, beta);
        };
        return std::tuple(fwd, params, x);
    });
}

TEST_CASE("layer gradients: multi-head attention") {
    layer_grad_check(500, 10, 1e-3, [](Rng& rng) {
        auto attn = std::make_shared<MultiHeadAttention>();
        attn->init(rng, 8, 2);
        std::vector<Tensor> params{attn->wq.w, attn->wq.b, attn->wk.w, attn->wk.b,
                                   attn->wv.w, attn->wv.b, attn->wo.w, attn->wo.b};
        Tensor x = rng.normal_tensor({6, 8});
        auto fwd = [attn](Tape&, ParamBinder& bind, std::vector<Tensor>& p, Var x_) {
            attn->wq.w = p[0];
            attn->wq.b = p[1];
            attn->wk.w = p[2];
            attn->wk.b = p[3];
            attn->wv.w = p[4];
            attn->wv.b = p[5];
            attn->wo.w = p[6];
            attn->wo.b = p[7];
            // pre-bind in parameter order so grads align with the FD oracle
            bind(attn->wq.w);
            bind(attn->wq.b);
            bind(attn->wk.w);
            bind(attn->wk.b);
            bind(attn->wv.w);
            bind(attn->wv.b);
            bind(attn->wo.w);
            bind(attn->wo.b);
            return attn->apply(bind, x_, 0);
        };
        return std::tuple(fwd, params, x);
    });
}

TEST_CASE("grouped attention blocks do not attend across groups") {
    Rng rng(77);
    MultiHeadAttention attn;
    attn.init(rng, 8, 2);

    Tensor x = rng.normal_tensor({6, 8});
    Tensor x2 = x;
    // perturb a token in the second group; first-group outputs must not move
    for (int64_t j = 0; j < 8; ++j) x2[4 * 8 + j] += 1.0f;

    Tape t1(false), t2(false);
    ParamBinder b1(t1, false), b2(t2, false);
    Tensor o1 = attn.apply(b1, t1.constant(x), 3).value();
    Tensor o2 = attn.apply(b2, t2.constant(x2), 3).value();
    for (int64_t i = 0; i < 3 * 8; ++i) CHECK(o1[i] == o2[i]);
    bool second_differs = false;
    for (int64_t i = 3 * 8; i < 6 * 8; ++i) second_differs |= (o1[i] != o2[i]);
    CHECK(second_differs);
}

TEST_CASE("sgd step: w=1, g=2, lr=0.1 -> w=0.8") {
    Tensor w = Tensor::scalar(1.0f);
    std::vector<Tensor*> params{&w};
    std::vector<Tensor> grads{Tensor::scalar(2.0f)};
    sgd_step(params, grads, 0.1);
    CHECK(w[0] == doctest::Approx(0.8f));

    std::vector<Tensor> bad{Tensor({2}, {1.0f, 1.0f})};
    CHECK_THROWS_AS(sgd_step(params, bad, 0.1), ShapeError);
}

TEST_CASE("cosine schedule endpoints and midpoint") {
    CosineSchedule sched{0.3, 1000};
    CHECK(sched.lr(0) == doctest::Approx(0.3));
    CHECK(sched.lr(1000) == doctest::Approx(0.0));
    CHECK(sched.lr(500) == doctest::Approx(0.15));
}

TEST_CASE("loss ops match brute force") {
    Rng rng(8);
    Tensor a = rng.normal_tensor({7, 3});
    Tensor b = rng.normal_tensor({7, 3});

    Tape tape(false);
    const double got = mse_loss(tape.constant(a), tape.constant(b)).value()[0];
    double want = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        want += d * d;
    }
    want /= static_cast<double>(a.size());
    CHECK(got == doctest::Approx(want).epsilon(1e-5));
}

TEST_CASE("loss-path gradients: brier, bce, ce through sigmoid/softmax") {
    Rng rng(21);
    Tensor logits = rng.normal_tensor({6, 4});
    Tensor y({6, 4});
    for (int64_t i = 0; i < y.size(); ++i) y[i] = (rng.uniform() < 0.5) ? 0.0f : 1.0f;
    Tensor onehot({6, 4});
    for (int64_t r = 0; r < 6; ++r) onehot[r * 4 + rng.uniform_int(0, 3)] = 1.0f;

    auto check = [&](auto make_loss) {
        std::vector<Tensor> params{logits};
        auto loss_fn = [&](const std::vector<Tensor>& p) -> double {
            Tape t(false);
            return make_loss(t, t.constant(p[0])).value()[0];
        };
        Tape tape;
        Var lv = tape.leaf(logits);
        auto analytic = tape.grad(make_loss(tape, lv), {lv});
        auto fd = testutil::finite_diff(loss_fn, params, 1e-3);
        CHECK(testutil::rel_error(analytic, fd) < 1e-3);
    };

    check([&](Tape& t, Var l) { return brier_loss(sigmoid(l), t.constant(y)); });
    check([&](Tape& t, Var l) { return bce_loss(sigmoid(l), t.constant(y)); });
    check([&](Tape& t, Var l) { return ce_loss(softmax_rows(l), t.constant(onehot)); });
}

TEST_CASE("determinism: identical seeds give bit-identical pipelines") {
    auto run = [](uint64_t seed) {
        Rng rng(seed);
        Linear l;
        l.init(rng, 8, 8);
        Tensor x = rng.normal_tensor({4, 8});
        Tape tape;
        ParamBinder bind(tape);
        Var out = silu(l.apply(bind, tape.constant(x)));
        Var loss = mean_all(out);
        auto grads = tape.grad(loss, bind.vars());
        return std::pair(loss.value()[0], grads[0]);
    };
    auto [l1, g1] = run(31337);
    auto [l2, g2] = run(31337);
    CHECK(l1 == l2);
    for (int64_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}
