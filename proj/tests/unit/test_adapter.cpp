#include <cmath>

#include "cdra/adapter.hpp"
#include "cdra/error.hpp"
#include "cdra/losses.hpp"
#include "checks.hpp"
#include "doctest.h"
#include "temp_dir.hpp"

using namespace cdra;
using cdra::testing::random_matrix;
using cdra::testing::random_vector;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
    Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
    Eigen::Index i = 0;
    for (auto row : r) {
        Eigen::Index j = 0;
        for (double x : row) m(i, j++) = x;
        ++i;
    }
    return m;
}

// Independent forward pass: explicit loops, softplus written out.
Vector oracle_forward(const FeedForward& n, const Vector& x) {
    std::vector<double> h(n.hidden_dim());
    for (std::size_t j = 0; j < h.size(); ++j) {
        double a = n.b1(static_cast<Eigen::Index>(j));
        for (std::size_t k = 0; k < n.input_dim(); ++k)
            a += n.w1(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) * x(static_cast<Eigen::Index>(k));
        h[j] = n.activation == Activation::Softplus ? std::log(1.0 + std::exp(a)) : a;
    }
    Vector y(static_cast<Eigen::Index>(n.output_dim()));
    for (Eigen::Index o = 0; o < y.size(); ++o) {
        double a = n.b2(o);
        for (std::size_t j = 0; j < h.size(); ++j) a += n.w2(o, static_cast<Eigen::Index>(j)) * h[j];
        y(o) = a;
    }
    return y;
}

double oracle_cos(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
    double dot = 0, na = 0, nb = 0;
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
        dot += a(i, c) * b(j, c);
        na += a(i, c) * a(i, c);
        nb += b(j, c) * b(j, c);
    }
    return dot / std::sqrt(na * nb);
}

double oracle_infonce(const Matrix& x, const Matrix& y, double tau) {
    auto one_way = [&](const Matrix& a, const Matrix& b) {
        double total = 0;
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            double denom = 0;
            for (Eigen::Index j = 0; j < b.rows(); ++j) denom += std::exp(oracle_cos(a, i, b, j) / tau);
            total += -std::log(std::exp(oracle_cos(a, i, b, i) / tau) / denom);
        }
        return total / static_cast<double>(a.rows());
    };
    return 0.5 * (one_way(x, y) + one_way(y, x));
}

double oracle_norm(const Vector& v) {
    double s = 0;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += v(i) * v(i);
    return std::sqrt(s);
}

struct Toy {
    EmbeddingTable x;
    EmbeddingTable y;
    CdrSplit split;
};

// Frozen random tables; user i of X and user i of Y form a training pair.
Toy toy(std::size_t users, std::size_t dim, std::uint64_t seed, bool same_tables = false) {
    Rng rng(seed);
    Toy t;
    const Matrix ux = random_matrix(rng, users, dim);
    const Matrix uy = same_tables ? ux : random_matrix(rng, users, dim);
    t.x = EmbeddingTable("X", ux, random_matrix(rng, 20, dim), true);
    t.y = EmbeddingTable("Y", uy, random_matrix(rng, 20, dim), true);
    t.split.domain_x = "X";
    t.split.domain_y = "Y";
    for (std::size_t u = 0; u < users; ++u)
        t.split.overlap_users.push_back({static_cast<Index>(u), static_cast<Index>(u)});
    t.split.available_overlap = t.split.overlap_users;
    t.split.train_overlap_users = t.split.overlap_users;
    return t;
}

AdapterHyper quick_hyper(std::size_t epochs, std::uint64_t seed = 1) {
    AdapterHyper h;
    h.optim.max_epochs = epochs;
    h.optim.patience = 0;
    h.optim.batch_size = 16;
    h.optim.learning_rate = 1e-2;
    h.optim.seed = seed;
    return h;
}

}  // namespace

TEST_SUITE("adapter") {

TEST_CASE("zero weights map everything to zero") {
    AdapterParams p;
    p.prior_x = p.prior_y = p.decoder_x = p.decoder_y = FeedForward::zeros(3, 6, 3);
    p.f1 = p.f2 = AffineMap::identity(3);
    const Vector u = vec({1.5, -2.0, 0.25});
    CHECK(prior_forward(p, Domain::X, u).isZero(0.0));
    CHECK(prior_forward(p, Domain::Y, u).isZero(0.0));
    CHECK(decoder_forward(p, Domain::X, u).isZero(0.0));
    CHECK(decoder_forward(p, Domain::Y, u).isZero(0.0));
}

TEST_CASE("identity layers without activation reproduce the input") {
    const auto p = identity_adapter(4, 8);
    const Vector u = vec({0.3, -1.0, 2.0, 0.0});
    CHECK(prior_forward(p, Domain::X, u) == u);
    CHECK(prior_forward(p, Domain::Y, u) == u);
    CHECK(decoder_forward(p, Domain::X, u) == u);
    CHECK(decoder_forward(p, Domain::Y, u) == u);
}

TEST_CASE("seeded random networks match an explicit forward-pass oracle at e1") {
    const auto p = cdra::testing::random_adapter(5, 17);
    const Vector e1 = Vector::Unit(5, 0);
    for (auto d : {Domain::X, Domain::Y}) {
        CHECK((prior_forward(p, d, e1) - oracle_forward(p.prior(d), e1)).norm() < 1e-12);
        CHECK((decoder_forward(p, d, e1) - oracle_forward(p.decoder(d), e1)).norm() < 1e-12);
    }
}

TEST_CASE("forward passes reject wrong dimensions") {
    const auto p = identity_adapter(4, 8);
    CHECK_THROWS_AS(prior_forward(p, Domain::X, Vector::Zero(3)), Error);
    CHECK_THROWS_AS(decoder_forward(p, Domain::Y, Vector::Zero(5)), Error);
}

TEST_CASE("cosine similarity") {
    CHECK(cosine_similarity(vec({2, 3}), vec({2, 3})) == doctest::Approx(1.0));
    CHECK(cosine_similarity(vec({1, 0}), vec({0, 5})) == 0.0);
    CHECK(cosine_similarity(vec({1, 1}), vec({1, 0})) == doctest::Approx(0.7071067811865476).epsilon(1e-15));
    try {
        cosine_similarity(vec({0, 0}), vec({1, 0}));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UndefinedSimilarity);
    }
}

TEST_CASE("contrastive loss: orthogonal pair batch at tau 1 is log(1 + e^-1)") {
    const Matrix m = rows({{1, 0}, {0, 1}});
    CHECK(contrastive_loss(m, m, 1.0) == doctest::Approx(0.31326168751822286).epsilon(1e-14));
    CHECK(contrastive_loss(m, m, 1.0) == doctest::Approx(oracle_infonce(m, m, 1.0)).epsilon(1e-14));
}

TEST_CASE("contrastive loss: indistinguishable rows give log N") {
    const Matrix m = Matrix::Constant(5, 3, 0.7);
    CHECK(contrastive_loss(m, m, 0.2) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("contrastive loss matches a brute-force softmax oracle and is non-negative") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix x = random_matrix(rng, 6, 4), y = random_matrix(rng, 6, 4);
        const double tau = 0.1 + 0.1 * trial;
        const double l = contrastive_loss(x, y, tau);
        CHECK(l >= 0.0);
        CHECK(l == doctest::Approx(oracle_infonce(x, y, tau)).epsilon(1e-12));
    }
}

TEST_CASE("contrastive loss is invariant to positive row rescaling") {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix x = random_matrix(rng, 5, 4), y = random_matrix(rng, 5, 4);
        Matrix xs = x;
        xs.row(trial % 5) *= 0.01 + 10.0 * trial;
        CHECK(std::abs(contrastive_loss(x, y, 0.2) - contrastive_loss(xs, y, 0.2)) < 1e-10);
    }
}

TEST_CASE("contrastive loss drops when a positive pair becomes more similar") {
    Rng rng(6);
    const Matrix x = random_matrix(rng, 4, 3);
    Matrix y = random_matrix(rng, 4, 3);
    const double before = contrastive_loss(x, y, 0.5);
    y.row(0) = 0.5 * y.row(0) + 0.5 * x.row(0);  // moves y0 toward x0 only
    REQUIRE(oracle_cos(x, 0, y, 0) > 0.0);
    CHECK(contrastive_loss(x, y, 0.5) < before);
}

TEST_CASE("contrastive loss errors") {
    CHECK_THROWS_AS(contrastive_loss(rows({{1, 0}}), rows({{1, 0}}), 0.2), Error);
    CHECK_THROWS_AS(contrastive_loss(rows({{1, 0}, {0, 0}}), rows({{1, 0}, {0, 1}}), 0.2), Error);
    CHECK_THROWS_AS(contrastive_loss(rows({{1, 0}, {0, 1}}), rows({{1, 0, 0}, {0, 1, 0}}), 0.2), Error);
    CHECK_THROWS_AS(contrastive_loss(rows({{1, 0}, {0, 1}}), rows({{1, 0}, {0, 1}}), 0.0), Error);
}

TEST_CASE("scale alignment vanishes at identity maps and at an exact inverse pair") {
    Rng rng(1);
    const Matrix u = random_matrix(rng, 4, 3);
    CHECK(scale_alignment_loss(u, u, AffineMap::identity(3), AffineMap::identity(3)) == 0.0);
    AffineMap f1 = AffineMap::identity(2), f2 = AffineMap::identity(2);
    f1.alpha *= 2.0;
    f2.alpha *= 0.5;
    CHECK(scale_alignment_loss(rows({{1, 0}}), rows({{2, 0}}), f1, f2) == 0.0);
}

TEST_CASE("scale alignment matches direct norm arithmetic") {
    const auto p = cdra::testing::random_adapter(4, 8);
    Rng rng(2);
    const Matrix x = random_matrix(rng, 3, 4), y = random_matrix(rng, 3, 4);
    double expected = 0.0;
    for (Eigen::Index i = 0; i < 3; ++i) {
        const Vector xi = x.row(i).transpose(), yi = y.row(i).transpose();
        expected += oracle_norm(p.f1.alpha * xi + p.f1.beta - yi) + oracle_norm(p.f2.alpha * yi + p.f2.beta - xi);
    }
    CHECK(scale_alignment_loss(x, y, p.f1, p.f2) == doctest::Approx(expected / 3.0).epsilon(1e-13));
    CHECK_THROWS_AS(scale_alignment_loss(x, random_matrix(rng, 3, 5), p.f1, p.f2), Error);
}

TEST_CASE("reconstruction loss: identity round trip, unit displacement, oracle") {
    Rng rng(5);
    const Matrix x = random_matrix(rng, 4, 3), y = random_matrix(rng, 4, 3);
    CHECK(reconstruction_loss(x, x, y, y) == 0.0);
    Matrix xs = x, ys = y;
    xs.col(0).array() += 1.0;
    ys.col(0).array() += 1.0;
    CHECK(reconstruction_loss(x, xs, y, ys) == doctest::Approx(2.0).epsilon(1e-14));
    const Matrix xh = random_matrix(rng, 4, 3), yh = random_matrix(rng, 4, 3);
    double expected = 0.0;
    for (Eigen::Index i = 0; i < 4; ++i)
        expected += (oracle_norm((x.row(i) - xh.row(i)).transpose()) + oracle_norm((y.row(i) - yh.row(i)).transpose())) / 4.0;
    CHECK(reconstruction_loss(x, xh, y, yh) == doctest::Approx(expected).epsilon(1e-13));
    CHECK_THROWS_AS(reconstruction_loss(x, random_matrix(rng, 3, 3), y, yh), Error);
}

TEST_CASE("adapter round trip through identity networks has zero reconstruction loss") {
    const auto p = identity_adapter(3, 6, 0.2, {0.0, 0.0, 1.0});
    Rng rng(9);
    AdapterBatch b{random_matrix(rng, 4, 3), random_matrix(rng, 4, 3), {}, {}};
    CHECK(adapter_loss(p, b).l3 == 0.0);
}

TEST_CASE("total loss examples and linearity in each lambda") {
    auto t = total_loss(0.3, 0.2, 0.1, {1, 1, 1});
    CHECK(t.total == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(total_loss(0.3, 0.2, 0.1, {0, 0, 0}).total == 0.0);
    CHECK(total_loss(2.0, 1.0, 0.5, {0.5, 1.0, 2.0}).total == 3.0);
    const double l1 = 0.7, l2 = 1.3, l3 = 0.4;
    for (double a : {0.0, 0.5, 2.0, 7.0}) {
        const double base = total_loss(l1, l2, l3, {0, 1, 1}).total;
        CHECK(std::abs(total_loss(l1, l2, l3, {a, 1, 1}).total - (base + a * l1)) < 1e-12);
        CHECK(std::abs(total_loss(l1, l2, l3, {1, a, 1}).total - (total_loss(l1, l2, l3, {1, 0, 1}).total + a * l2)) < 1e-12);
        CHECK(std::abs(total_loss(l1, l2, l3, {1, 1, a}).total - (total_loss(l1, l2, l3, {1, 1, 0}).total + a * l3)) < 1e-12);
    }
}

TEST_CASE("analytic gradients match central differences") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        CAPTURE(seed);
        CHECK(cdra::testing::contrastive_gradient_error(seed) < 1e-4);
        CHECK(cdra::testing::scale_gradient_error(seed) < 1e-4);
        CHECK(cdra::testing::reconstruction_gradient_error(seed) < 1e-4);
        CHECK(cdra::testing::adapter_gradient_error(seed, {1, 0, 0}) < 1e-4);
        CHECK(cdra::testing::adapter_gradient_error(seed, {0, 1, 0}) < 1e-4);
        CHECK(cdra::testing::adapter_gradient_error(seed, {0, 0, 1}) < 1e-4);
        CHECK(cdra::testing::adapter_gradient_error(seed, {0.7, 1.3, 0.4}) < 1e-4);
    }
}

TEST_CASE("diagonal scale maps receive no off-diagonal gradient") {
    auto p = cdra::testing::random_adapter(4, 3, {0, 1, 0}, true);
    Rng rng(1);
    AdapterBatch b{random_matrix(rng, 3, 4), random_matrix(rng, 3, 4), {}, {}};
    auto g = zeros_like(p);
    adapter_loss(p, b, &g);
    Matrix off = g.f1.alpha;
    off.diagonal().setZero();
    CHECK(off.isZero(0.0));
    CHECK_FALSE(g.f1.alpha.diagonal().isZero(0.0));
}

TEST_CASE("adapter training leaves both frozen backbones bit-identical") {
    auto t = toy(64, 4, 2);
    const auto hx = content_hash(t.x), hy = content_hash(t.y);
    const auto sx = serialize(t.x);
    auto h = quick_hyper(25);  // 4 steps per epoch: 100 steps
    TrainingLog log;
    train_adapter(t.x, t.y, t.split, h, &log);
    CHECK(log.epochs.size() == 25);
    CHECK(content_hash(t.x) == hx);
    CHECK(content_hash(t.y) == hy);
    CHECK(serialize(t.x) == sx);
}

TEST_CASE("training needs frozen tables and overlapping users") {
    auto t = toy(20, 3, 1);
    EmbeddingTable loose("X", t.x.users(), t.x.items(), false);
    CHECK_THROWS_AS(train_adapter(loose, t.y, t.split, quick_hyper(1)), Error);
    auto empty = t.split;
    empty.train_overlap_users.clear();
    try {
        train_adapter(t.x, t.y, empty, quick_hyper(1));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TrainingInfeasible);
    }
}

TEST_CASE("training is deterministic under a fixed seed") {
    auto t = toy(40, 3, 5);
    const auto a = train_adapter(t.x, t.y, t.split, quick_hyper(5, 3));
    const auto b = train_adapter(t.x, t.y, t.split, quick_hyper(5, 3));
    const auto c = train_adapter(t.x, t.y, t.split, quick_hyper(5, 4));
    CHECK(a == b);
    CHECK(serialize(a) == serialize(b));
    CHECK_FALSE(a == c);
}

TEST_CASE("with only the reconstruction term, L3 falls over the first 10 epochs") {
    auto t = toy(128, 4, 6);
    auto h = quick_hyper(10);
    h.lambdas = {0.0, 0.0, 1.0};
    h.optim.learning_rate = 3e-3;
    TrainingLog log;
    train_adapter(t.x, t.y, t.split, h, &log);
    REQUIRE(log.epochs.size() == 10);
    for (std::size_t e = 1; e < 10; ++e) CHECK(log.epochs[e].loss.l3 <= log.epochs[e - 1].loss.l3 * 1.02);
    CHECK(log.epochs[9].loss.l3 < 0.7 * log.epochs[0].loss.l3);
    CHECK(log.epochs[0].loss.total == doctest::Approx(log.epochs[0].loss.l3));
}

TEST_CASE("identical backbones without the contrastive term reach the zero optimum") {
    auto t = toy(64, 2, 7, true);
    auto h = quick_hyper(400);
    h.lambdas = {0.0, 1.0, 1.0};
    h.optim.batch_size = 64;
    h.optim.min_steps_per_epoch = 100;
    h.optim.lr_decay = 0.99;
    h.reconstruct_domain_users = false;
    TrainingLog log;
    const auto p = train_adapter(t.x, t.y, t.split, h, &log);
    CHECK(log.epochs.back().loss.total < 1e-2);
    check_adapter(p);
}

TEST_CASE("single-user batches are dropped with a warning") {
    auto t = toy(17, 3, 8);
    auto h = quick_hyper(2);
    TrainingLog log;
    train_adapter(t.x, t.y, t.split, h, &log);
    REQUIRE_FALSE(log.warnings.empty());
    bool found = false;
    for (const auto& w : log.warnings) found = found || w.find("single-user") != std::string::npos;
    CHECK(found);
    auto lone = t.split;
    lone.train_overlap_users.resize(1);
    CHECK_THROWS_AS(train_adapter(t.x, t.y, lone, h), Error);
    h.lambdas.l1 = 0.0;
    CHECK_NOTHROW(train_adapter(t.x, t.y, lone, h));
}

TEST_CASE("transfer through identity networks returns the source embedding") {
    auto t = toy(5, 3, 9);
    const auto p = identity_adapter(3, 6);
    CHECK(transfer(p, t.x, t.y, 2, Domain::X, Domain::Y) == t.x.user(2));
    CHECK(transfer(p, t.x, t.y, 4, Domain::Y, Domain::X) == t.y.user(4));
}

TEST_CASE("transfer is decoder of target after prior of source") {
    auto t = toy(5, 4, 10);
    const auto p = cdra::testing::random_adapter(4, 21);
    const Vector u = t.x.user(1);
    const Vector expected = oracle_forward(p.decoder_y, oracle_forward(p.prior_x, u));
    CHECK((transfer(p, t.x, t.y, 1, Domain::X, Domain::Y) - expected).norm() < 1e-12);
}

TEST_CASE("transfer errors") {
    auto t = toy(5, 3, 11);
    const auto p = identity_adapter(3, 6);
    try {
        transfer(p, t.x, t.y, 7, Domain::X, Domain::Y);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownUser);
    }
    try {
        transfer(p, t.x, t.y, 1, Domain::X, Domain::X);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DirectionMismatch);
    }
}

TEST_CASE("cascade of identity adapters is the identity") {
    const Vector u = vec({1, -2, 3});
    CHECK(cascade(identity_adapter(3, 6), identity_adapter(3, 6), u) == u);
    CHECK(cascade(identity_adapter(3, 6), identity_adapter(3, 6), u, CascadeRoute::Backward) == u);
}

TEST_CASE("cascade equals manual composition of the two transfers") {
    const auto ab = cdra::testing::random_adapter(4, 31);
    const auto bc = cdra::testing::random_adapter(4, 32);
    const Vector u = vec({0.5, -1, 0.25, 2});
    CHECK(cascade(ab, bc, u) ==
          transfer_vector(bc, transfer_vector(ab, u, Direction::XtoY), Direction::XtoY));
    CHECK(cascade(ab, bc, u, CascadeRoute::Backward) ==
          transfer_vector(ab, transfer_vector(bc, u, Direction::YtoX), Direction::YtoX));
    CHECK_THROWS_AS(cascade(ab, identity_adapter(3, 6), u), Error);
}

TEST_CASE("adapter container round-trips and rejects corruption") {
    cdra::testing::TempDir dir;
    auto p = cdra::testing::random_adapter(4, 41, {0.5, 2.0, 1.5}, true);
    p.tau = 0.35;
    save_adapter(p, dir / "a.bin");
    CHECK(load_adapter(dir / "a.bin") == p);
    auto bytes = serialize(p);
    bytes[1] = '?';
    CHECK_THROWS_AS(deserialize_adapter(bytes), Error);
    auto short_bytes = serialize(p);
    short_bytes.resize(short_bytes.size() - 3);
    CHECK_THROWS_AS(deserialize_adapter(short_bytes), Error);
}

TEST_CASE("parameter checks") {
    auto p = identity_adapter(3, 6);
    CHECK_NOTHROW(check_adapter(p));
    p.tau = 0.0;
    CHECK_THROWS_AS(check_adapter(p), Error);
    p = identity_adapter(3, 6);
    p.lambdas.l2 = -1.0;
    CHECK_THROWS_AS(check_adapter(p), Error);
    p = identity_adapter(3, 6);
    p.prior_x.w1(0, 0) = std::nan("");
    CHECK_THROWS_AS(check_adapter(p), Error);
    AdapterHyper h;
    h.tau = -1.0;
    CHECK_THROWS_AS(h.validate(), Error);
    h = AdapterHyper{};
    h.optim.batch_size = 1;
    CHECK_THROWS_AS(h.validate(), Error);
}

}  // TEST_SUITE
