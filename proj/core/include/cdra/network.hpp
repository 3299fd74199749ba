#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cdra/linalg.hpp"
#include "cdra/rng.hpp"

namespace cdra {

enum class Activation : std::uint8_t { Softplus = 0, None = 1 };

// Two-layer feed-forward map: y = W2 act(W1 x + b1) + b2. No activation on
// the output layer.
struct FeedForward {
    Matrix w1;  // hidden x in
    Vector b1;
    Matrix w2;  // out x hidden
    Vector b2;
    Activation activation = Activation::Softplus;

    std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }
    std::size_t hidden_dim() const { return static_cast<std::size_t>(w1.rows()); }
    std::size_t output_dim() const { return static_cast<std::size_t>(w2.rows()); }

    static FeedForward zeros(std::size_t in, std::size_t hidden, std::size_t out,
                             Activation act = Activation::Softplus);
    // Gaussian weights with Glorot scaling, zero biases.
    static FeedForward glorot(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng,
                              Activation act = Activation::Softplus);
    // W1 = [I; 0], W2 = [I 0]; the identity map when activation is None.
    static FeedForward identity(std::size_t dim, std::size_t hidden, Activation act = Activation::None);

    friend bool operator==(const FeedForward&, const FeedForward&) = default;
};

struct FeedForwardCache {
    Matrix input;
    Matrix pre;     // W1 x + b1
    Matrix hidden;  // act(pre)
};

// Row-batched forward pass; fills `cache` for a later backward call.
Matrix forward(const FeedForward& net, const Matrix& x, FeedForwardCache* cache = nullptr);
Vector forward(const FeedForward& net, const Vector& x);

// Accumulates parameter gradients into `grad` (same shapes as `net`) and
// returns the gradient with respect to the input rows.
Matrix backward(const FeedForward& net, const FeedForwardCache& cache, const Matrix& d_out, FeedForward& grad);

FeedForward zeros_like(const FeedForward& net);

// Affine map x -> alpha x + beta without activation. With `diagonal` set,
// alpha is constrained to a diagonal matrix.
struct AffineMap {
    Matrix alpha;
    Vector beta;
    bool diagonal = false;

    static AffineMap identity(std::size_t dim, bool diagonal = false);
    friend bool operator==(const AffineMap&, const AffineMap&) = default;
};

Matrix apply(const AffineMap& map, const Matrix& x);
Vector apply(const AffineMap& map, const Vector& x);
AffineMap zeros_like(const AffineMap& map);

// Contiguous view over one parameter block.
struct ParamBlock {
    double* data;
    std::size_t size;
};

void append_blocks(FeedForward& net, std::vector<ParamBlock>& out);
void append_blocks(AffineMap& map, std::vector<ParamBlock>& out);

// Adaptive moment estimation over a fixed list of parameter blocks.
class Adam {
public:
    explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
        : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

    void step(std::span<const ParamBlock> params, std::span<const ParamBlock> grads);
    std::size_t steps() const { return t_; }
    void set_learning_rate(double lr) { lr_ = lr; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<Vector> m_;
    std::vector<Vector> v_;
};

}  // namespace cdra

namespace cdra {

class ByteWriter;
class ByteReader;

// Block encoding used inside the model containers: shapes as u32 followed
// by row-major float64 values.
void write_network(ByteWriter& w, const FeedForward& net);
FeedForward read_network(ByteReader& r);
void write_affine(ByteWriter& w, const AffineMap& map);
AffineMap read_affine(ByteReader& r);

bool all_finite(const FeedForward& net);

}  // namespace cdra
