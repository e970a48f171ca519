#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

namespace anm::nn {

// Aligned so that Eigen splits reductions over parameters the same way on
// every run; with plain heap storage the last bits depend on the address.
template <class T>
using ParamVector = std::vector<T, Eigen::aligned_allocator<T>>;

enum class Activation { tanh, relu, identity };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

/// Fully connected net with a shared hidden activation and identity output.
/// Parameters live in one flat vector, layer by layer as W (row-major out x in)
/// followed by b. Batches are column-major matrices with one sample per column.
template <class T>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  using WeightMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstWeightMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Mlp() = default;
  explicit Mlp(std::vector<int> sizes, Activation hidden = Activation::tanh)
      : sizes_(std::move(sizes)), hidden_(hidden) {
    if (sizes_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output sizes");
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw std::invalid_argument("Mlp: layer sizes must be positive");
      offsets_.push_back(n);
      n += static_cast<std::size_t>(sizes_[l] + 1) * sizes_[l + 1];
    }
    params_.assign(n, T(0));
  }

  const std::vector<int>& sizes() const { return sizes_; }
  Activation hidden_activation() const { return hidden_; }
  int n_inputs() const { return sizes_.front(); }
  int n_outputs() const { return sizes_.back(); }
  int n_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  std::size_t n_params() const { return params_.size(); }
  ParamVector<T>& params() { return params_; }
  const ParamVector<T>& params() const { return params_; }

  WeightMap weight(int l) { return WeightMap(params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]); }
  ConstWeightMap weight(int l) const {
    return ConstWeightMap(params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
  }
  Eigen::Map<Vector> bias(int l) {
    return Eigen::Map<Vector>(params_.data() + offsets_[l] + sizes_[l] * sizes_[l + 1], sizes_[l + 1]);
  }
  Eigen::Map<const Vector> bias(int l) const {
    return Eigen::Map<const Vector>(params_.data() + offsets_[l] + sizes_[l] * sizes_[l + 1], sizes_[l + 1]);
  }

  /// Glorot-uniform weights, zero biases.
  void init_glorot(std::mt19937_64& rng) {
    for (int l = 0; l < n_layers(); ++l) {
      const double limit = std::sqrt(6.0 / (sizes_[l] + sizes_[l + 1]));
      std::uniform_real_distribution<double> u(-limit, limit);
      auto w = weight(l);
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = static_cast<T>(u(rng));
      bias(l).setZero();
    }
  }

  /// Activations of every layer; acts[0] is the input, acts.back() the output.
  struct Tape {
    std::vector<Matrix> acts;
  };

  Matrix forward(const Matrix& x) const {
    check_input(x);
    Matrix a = x;
    for (int l = 0; l < n_layers(); ++l) {
      Matrix z = weight(l) * a;
      z.colwise() += bias(l);
      if (l + 1 < n_layers()) activate(z);
      a = std::move(z);
    }
    return a;
  }

  Matrix forward(const Matrix& x, Tape& tape) const {
    check_input(x);
    tape.acts.resize(n_layers() + 1);
    tape.acts[0] = x;
    for (int l = 0; l < n_layers(); ++l) {
      Matrix z = weight(l) * tape.acts[l];
      z.colwise() += bias(l);
      if (l + 1 < n_layers()) activate(z);
      tape.acts[l + 1] = std::move(z);
    }
    return tape.acts.back();
  }

  /// Reverse pass. Adds dLoss/dparams into `grad` and returns dLoss/dinput.
  Matrix backward(const Tape& tape, const Matrix& d_out, ParamVector<T>& grad) const {
    if (grad.size() != params_.size()) grad.assign(params_.size(), T(0));
    if (d_out.rows() != n_outputs() || d_out.cols() != tape.acts.back().cols())
      throw std::invalid_argument("Mlp::backward: upstream gradient shape mismatch");
    Matrix delta = d_out;
    for (int l = n_layers() - 1; l >= 0; --l) {
      if (l + 1 < n_layers()) activation_grad(tape.acts[l + 1], delta);
      WeightMap gw(grad.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
      gw.noalias() += delta * tape.acts[l].transpose();
      Eigen::Map<Vector>(grad.data() + offsets_[l] + sizes_[l] * sizes_[l + 1], sizes_[l + 1]) +=
          delta.rowwise().sum();
      delta = weight(l).transpose() * delta;
    }
    return delta;
  }

  template <class U>
  Mlp<U> cast() const {
    Mlp<U> out(sizes_, hidden_);
    for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i] = static_cast<U>(params_[i]);
    return out;
  }

 private:
  void check_input(const Matrix& x) const {
    if (x.rows() != n_inputs())
      throw std::invalid_argument("Mlp::forward: expected " + std::to_string(n_inputs()) + " inputs, got " +
                                  std::to_string(x.rows()));
  }

  void activate(Matrix& z) const {
    switch (hidden_) {
      // 1 - 2/(e^{2z}+1) goes through Eigen's vectorised exp; tanh() is scalar for double.
      case Activation::tanh:
        if constexpr (std::is_same_v<T, float>)
          z = z.array().tanh().matrix();  // Eigen's float tanh is vectorised
        else
          z = (T(1) - T(2) / ((T(2) * z.array()).exp() + T(1))).matrix();
        break;
      case Activation::relu: z = z.cwiseMax(T(0)); break;
      case Activation::identity: break;
    }
  }

  // `a` is the post-activation output of the layer.
  void activation_grad(const Matrix& a, Matrix& delta) const {
    switch (hidden_) {
      case Activation::tanh: delta.array() *= (T(1) - a.array().square()); break;
      case Activation::relu: delta.array() *= (a.array() > T(0)).template cast<T>(); break;
      case Activation::identity: break;
    }
  }

  std::vector<int> sizes_;
  Activation hidden_ = Activation::tanh;
  std::vector<std::size_t> offsets_;
  ParamVector<T> params_;
};

}  // namespace anm::nn
