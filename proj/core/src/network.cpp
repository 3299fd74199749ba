#include "cdra/network.hpp"

#include <cmath>

#include "cdra/error.hpp"

namespace cdra {

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Matrix gaussian(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = stddev * rng.normal();
    return m;
}

}  // namespace

FeedForward FeedForward::zeros(std::size_t in, std::size_t hidden, std::size_t out, Activation act) {
    FeedForward net;
    net.w1 = Matrix::Zero(static_cast<Eigen::Index>(hidden), static_cast<Eigen::Index>(in));
    net.b1 = Vector::Zero(static_cast<Eigen::Index>(hidden));
    net.w2 = Matrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(hidden));
    net.b2 = Vector::Zero(static_cast<Eigen::Index>(out));
    net.activation = act;
    return net;
}

FeedForward FeedForward::glorot(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng, Activation act) {
    FeedForward net = zeros(in, hidden, out, act);
    net.w1 = gaussian(rng, hidden, in, std::sqrt(2.0 / static_cast<double>(in + hidden)));
    net.w2 = gaussian(rng, out, hidden, std::sqrt(2.0 / static_cast<double>(hidden + out)));
    return net;
}

FeedForward FeedForward::identity(std::size_t dim, std::size_t hidden, Activation act) {
    if (hidden < dim) throw Error(ErrorCode::DimensionMismatch, "identity network needs hidden >= dim");
    FeedForward net = zeros(dim, hidden, dim, act);
    const auto d = static_cast<Eigen::Index>(dim);
    net.w1.topRows(d).setIdentity();
    net.w2.leftCols(d).setIdentity();
    return net;
}

Matrix forward(const FeedForward& net, const Matrix& x, FeedForwardCache* cache) {
    if (static_cast<std::size_t>(x.cols()) != net.input_dim())
        throw Error(ErrorCode::DimensionMismatch, "network input expects dim " + std::to_string(net.input_dim()) +
                                                      ", got " + std::to_string(x.cols()));
    Matrix pre = x * net.w1.transpose();
    pre.rowwise() += net.b1.transpose();
    Matrix hidden = net.activation == Activation::Softplus ? Matrix(pre.unaryExpr(&softplus)) : pre;
    Matrix out = hidden * net.w2.transpose();
    out.rowwise() += net.b2.transpose();
    if (cache) {
        cache->input = x;
        cache->pre = std::move(pre);
        cache->hidden = std::move(hidden);
    }
    return out;
}

Vector forward(const FeedForward& net, const Vector& x) {
    Matrix row = x.transpose();
    return forward(net, row).row(0).transpose();
}

Matrix backward(const FeedForward& net, const FeedForwardCache& cache, const Matrix& d_out, FeedForward& grad) {
    grad.w2 += d_out.transpose() * cache.hidden;
    grad.b2 += d_out.colwise().sum().transpose();
    Matrix d_hidden = d_out * net.w2;
    Matrix d_pre = net.activation == Activation::Softplus
                       ? Matrix(d_hidden.cwiseProduct(cache.pre.unaryExpr(&logistic)))
                       : d_hidden;
    grad.w1 += d_pre.transpose() * cache.input;
    grad.b1 += d_pre.colwise().sum().transpose();
    return d_pre * net.w1;
}

FeedForward zeros_like(const FeedForward& net) {
    return FeedForward::zeros(net.input_dim(), net.hidden_dim(), net.output_dim(), net.activation);
}

AffineMap AffineMap::identity(std::size_t dim, bool diagonal) {
    const auto d = static_cast<Eigen::Index>(dim);
    return {Matrix::Identity(d, d), Vector::Zero(d), diagonal};
}

Matrix apply(const AffineMap& map, const Matrix& x) {
    if (x.cols() != map.alpha.cols())
        throw Error(ErrorCode::DimensionMismatch, "affine map expects dim " + std::to_string(map.alpha.cols()));
    Matrix out = x * map.alpha.transpose();
    out.rowwise() += map.beta.transpose();
    return out;
}

Vector apply(const AffineMap& map, const Vector& x) {
    Matrix row = x.transpose();
    return apply(map, row).row(0).transpose();
}

AffineMap zeros_like(const AffineMap& map) {
    return {Matrix::Zero(map.alpha.rows(), map.alpha.cols()), Vector::Zero(map.beta.size()), map.diagonal};
}

void append_blocks(FeedForward& net, std::vector<ParamBlock>& out) {
    out.push_back({net.w1.data(), static_cast<std::size_t>(net.w1.size())});
    out.push_back({net.b1.data(), static_cast<std::size_t>(net.b1.size())});
    out.push_back({net.w2.data(), static_cast<std::size_t>(net.w2.size())});
    out.push_back({net.b2.data(), static_cast<std::size_t>(net.b2.size())});
}

void append_blocks(AffineMap& map, std::vector<ParamBlock>& out) {
    out.push_back({map.alpha.data(), static_cast<std::size_t>(map.alpha.size())});
    out.push_back({map.beta.data(), static_cast<std::size_t>(map.beta.size())});
}

void Adam::step(std::span<const ParamBlock> params, std::span<const ParamBlock> grads) {
    if (params.size() != grads.size()) throw Error(ErrorCode::DimensionMismatch, "parameter/gradient block count");
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.push_back(Vector::Zero(static_cast<Eigen::Index>(p.size)));
            v_.push_back(Vector::Zero(static_cast<Eigen::Index>(p.size)));
        }
    }
    ++t_;
    const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (params[b].size != grads[b].size || params[b].size != static_cast<std::size_t>(m_[b].size()))
            throw Error(ErrorCode::DimensionMismatch, "parameter block size changed");
        Eigen::Map<Vector> p(params[b].data, static_cast<Eigen::Index>(params[b].size));
        Eigen::Map<const Vector> g(grads[b].data, static_cast<Eigen::Index>(grads[b].size));
        m_[b] = beta1_ * m_[b] + (1.0 - beta1_) * g;
        v_[b] = beta2_ * v_[b] + (1.0 - beta2_) * g.cwiseAbs2();
        p.array() -= lr_ * (m_[b].array() / bias1) / ((v_[b].array() / bias2).sqrt() + eps_);
    }
}

}  // namespace cdra

#include "cdra/binary_io.hpp"

namespace cdra {

namespace {

template <typename M>
void write_block(ByteWriter& w, const M& m) {
    w.put_u32(static_cast<std::uint32_t>(m.rows()));
    w.put_u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) w.put_f64(m(r, c));
}

Matrix read_matrix(ByteReader& r) {
    const auto rows = r.get_u32();
    const auto cols = r.get_u32();
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(i, c) = r.get_f64();
    return m;
}

Vector read_vector(ByteReader& r) {
    Matrix m = read_matrix(r);
    if (m.cols() != 1) throw Error(ErrorCode::Format, "expected a column vector block");
    return m.col(0);
}

}  // namespace

void write_network(ByteWriter& w, const FeedForward& net) {
    w.put_u8(static_cast<std::uint8_t>(net.activation));
    write_block(w, net.w1);
    write_block(w, net.b1);
    write_block(w, net.w2);
    write_block(w, net.b2);
}

FeedForward read_network(ByteReader& r) {
    FeedForward net;
    const auto act = r.get_u8();
    if (act > 1) throw Error(ErrorCode::Format, "unknown activation code " + std::to_string(act));
    net.activation = static_cast<Activation>(act);
    net.w1 = read_matrix(r);
    net.b1 = read_vector(r);
    net.w2 = read_matrix(r);
    net.b2 = read_vector(r);
    if (net.b1.size() != net.w1.rows() || net.w2.cols() != net.w1.rows() || net.b2.size() != net.w2.rows())
        throw Error(ErrorCode::Format, "inconsistent network block shapes");
    return net;
}

void write_affine(ByteWriter& w, const AffineMap& map) {
    w.put_u8(map.diagonal ? 1 : 0);
    write_block(w, map.alpha);
    write_block(w, map.beta);
}

AffineMap read_affine(ByteReader& r) {
    AffineMap map;
    map.diagonal = r.get_u8() != 0;
    map.alpha = read_matrix(r);
    map.beta = read_vector(r);
    if (map.alpha.rows() != map.alpha.cols() || map.beta.size() != map.alpha.rows())
        throw Error(ErrorCode::Format, "inconsistent affine block shapes");
    return map;
}

bool all_finite(const FeedForward& net) {
    return net.w1.allFinite() && net.b1.allFinite() && net.w2.allFinite() && net.b2.allFinite();
}

}  // namespace cdra
