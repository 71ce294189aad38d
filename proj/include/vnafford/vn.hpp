#pragma once

// Vector-neuron building blocks. Activations are lists of 3-vectors per
// point; linear maps mix channels only and never the spatial coordinates,
// which is what makes every layer rotation-equivariant in exact arithmetic.
//
// Storage convention: a VNTensor holds a (c x 3n) matrix whose row j is
// channel j and whose column block [3p, 3p+3) is point p's vector for that
// channel, laid out as a row (v^T). A rotation R acts per block as
// block <- block * R^T. The layout makes channel mixing over all points a
// single GEMM.
//
// Every layer caches what its backward pass needs; forward then backward is
// the required call order. Gradients accumulate into Param::g until
// zero_grads().

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vnafford/errors.hpp"
#include "vnafford/geometry.hpp"
#include "vnafford/rng.hpp"

namespace vnaff {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// ---------------------------------------------------------------------------
// Tensors
// ---------------------------------------------------------------------------

template <typename S>
struct VNTensor {
  int n = 0;  // points
  int c = 0;  // channels
  MatX<S> m;  // c x 3n

  void resize(int n_, int c_) {
    n = n_;
    c = c_;
    m.setZero(c_, 3 * n_);
  }

  // Channel vectors of point p as a (c x 3) block, row i = vector i.
  Eigen::Block<MatX<S>> point_block(int p) { return m.block(0, 3 * p, c, 3); }
  Eigen::Block<const MatX<S>> point_block(int p) const { return m.block(0, 3 * p, c, 3); }
};

// Applies v -> R v to every channel vector.
template <typename S>
void rotate_feature(VNTensor<S>& f, const Mat3<S>& r) {
  Mat3<S> rt = r.transpose();
  for (int p = 0; p < f.n; ++p) f.point_block(p) = f.point_block(p) * rt;
}

// Per-point scalar features: (d x n), column p = point p.
template <typename S>
using ScalarField = MatX<S>;

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

template <typename S>
struct Param {
  std::string name;
  MatX<S> w;
  MatX<S> g;

  void setup(std::string n, int rows, int cols) {
    name = std::move(n);
    w.setZero(rows, cols);
    g.setZero(rows, cols);
  }

  void init_uniform(Rng& rng, double scale) {
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) w(i, j) = S(rng.uniform(-scale, scale));
  }
};

template <typename S>
using ParamList = std::vector<Param<S>*>;

template <typename S>
inline void zero_grads(const ParamList<S>& params) {
  for (Param<S>* p : params) p->g.setZero();
}

// Kaiming-style fan-in init for a channel-mixing matrix.
template <typename S>
inline void init_fan_in(Param<S>& p, Rng& rng) {
  p.init_uniform(rng, std::sqrt(1.0 / double(std::max<Eigen::Index>(1, p.w.cols()))));
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename S>
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const ParamList<S>& params) {
    if (m_.size() != params.size()) {
      m_.clear();
      v_.clear();
      for (Param<S>* p : params) {
        m_.push_back(MatX<S>::Zero(p->w.rows(), p->w.cols()));
        v_.push_back(MatX<S>::Zero(p->w.rows(), p->w.cols()));
      }
      t_ = 0;
    }
    ++t_;
    const S b1 = S(beta1_), b2 = S(beta2_);
    const S corr1 = S(1.0 / (1.0 - std::pow(beta1_, t_)));
    const S corr2 = S(1.0 / (1.0 - std::pow(beta2_, t_)));
    for (size_t i = 0; i < params.size(); ++i) {
      Param<S>& p = *params[i];
      m_[i] = b1 * m_[i] + (S(1) - b1) * p.g;
      v_[i] = b2 * v_[i] + (S(1) - b2) * p.g.cwiseProduct(p.g);
      p.w -= S(lr_) * (m_[i] * corr1).cwiseQuotient(((v_[i] * corr2).cwiseSqrt().array() + S(eps_)).matrix());
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<MatX<S>> m_, v_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// VN layers
// ---------------------------------------------------------------------------

// Channel mixing: out vector j = sum_i w(j,i) * in vector i. Never touches
// the three spatial coordinates.
template <typename S>
class VNLinear {
 public:
  void setup(const std::string& name, int c_out, int c_in, Rng& rng) {
    w_.setup(name, c_out, c_in);
    init_fan_in(w_, rng);
  }

  void collect(ParamList<S>& out) { out.push_back(&w_); }

  VNTensor<S> forward(const VNTensor<S>& in) {
    if (in.c != w_.w.cols())
      throw ShapeMismatchError(w_.name + ": expected " + std::to_string(w_.w.rows()) + "x" +
                               std::to_string(w_.w.cols()) + " applied to c=" + std::to_string(in.c));
    in_ = in;
    VNTensor<S> out;
    out.n = in.n;
    out.c = int(w_.w.rows());
    out.m.noalias() = w_.w * in.m;
    return out;
  }

  VNTensor<S> backward(const VNTensor<S>& gout) {
    w_.g.noalias() += gout.m * in_.m.transpose();
    VNTensor<S> gin;
    gin.n = in_.n;
    gin.c = in_.c;
    gin.m.noalias() = w_.w.transpose() * gout.m;
    return gin;
  }

  Param<S>& weights() { return w_; }

 private:
  Param<S> w_;
  VNTensor<S> in_;
};

// Direction-gated nonlinearity: per channel, a learned direction q (itself a
// channel mix of the input, so it co-rotates); vectors with v.q >= 0 pass,
// the rest are projected onto the plane orthogonal to q. ||q|| below 1e-8
// passes the vector through unchanged.
template <typename S>
class VNRelu {
 public:
  void setup(const std::string& name, int c, Rng& rng) {
    u_.setup(name, c, c);
    init_fan_in(u_, rng);
  }

  void collect(ParamList<S>& out) { out.push_back(&u_); }

  VNTensor<S> forward(const VNTensor<S>& in) {
    in_ = in;
    q_.n = in.n;
    q_.c = in.c;
    q_.m.noalias() = u_.w * in.m;
    VNTensor<S> out;
    out.n = in.n;
    out.c = in.c;
    out.m.resize(in.c, 3 * in.n);
    const S eps = S(1e-16);
    for (int p = 0; p < in.n; ++p) {
      auto v0 = in.m.col(3 * p).array(), v1 = in.m.col(3 * p + 1).array(), v2 = in.m.col(3 * p + 2).array();
      auto q0 = q_.m.col(3 * p).array(), q1 = q_.m.col(3 * p + 1).array(), q2 = q_.m.col(3 * p + 2).array();
      n2_ = q0 * q0 + q1 * q1 + q2 * q2;
      dot_ = v0 * q0 + v1 * q1 + v2 * q2;
      // a is the projection coefficient where the half-space test fails, zero
      // elsewhere; the max() keeps the pass-through lane's division finite.
      a_ = (dot_ < S(0) && n2_ >= eps).template cast<S>() * dot_ / n2_.max(eps);
      out.m.col(3 * p).array() = v0 - a_ * q0;
      out.m.col(3 * p + 1).array() = v1 - a_ * q1;
      out.m.col(3 * p + 2).array() = v2 - a_ * q2;
    }
    return out;
  }

  VNTensor<S> backward(const VNTensor<S>& gout) {
    VNTensor<S> gin;
    gin.n = in_.n;
    gin.c = in_.c;
    gin.m.resize(in_.c, 3 * in_.n);
    VNTensor<S> gq;
    gq.n = q_.n;
    gq.c = q_.c;
    gq.m.resize(q_.c, 3 * q_.n);
    const S eps = S(1e-16);
    for (int p = 0; p < in_.n; ++p) {
      auto v0 = in_.m.col(3 * p).array(), v1 = in_.m.col(3 * p + 1).array(), v2 = in_.m.col(3 * p + 2).array();
      auto q0 = q_.m.col(3 * p).array(), q1 = q_.m.col(3 * p + 1).array(), q2 = q_.m.col(3 * p + 2).array();
      auto g0 = gout.m.col(3 * p).array(), g1 = gout.m.col(3 * p + 1).array(), g2 = gout.m.col(3 * p + 2).array();
      n2_ = q0 * q0 + q1 * q1 + q2 * q2;
      dot_ = v0 * q0 + v1 * q1 + v2 * q2;
      mask_ = (dot_ < S(0) && n2_ >= eps).template cast<S>();
      n2_ = n2_.max(eps);
      // out = v - (v.q / |q|^2) q in the projected lanes; gqd_ carries the
      // mask, so every coefficient vanishes in the pass-through ones.
      gqd_ = mask_ * (g0 * q0 + g1 * q1 + g2 * q2);
      b_ = gqd_ / n2_;
      a_ = mask_ * dot_ / n2_;
      cq_ = S(2) * dot_ * gqd_ / (n2_ * n2_);
      gin.m.col(3 * p).array() = g0 - b_ * q0;
      gin.m.col(3 * p + 1).array() = g1 - b_ * q1;
      gin.m.col(3 * p + 2).array() = g2 - b_ * q2;
      gq.m.col(3 * p).array() = cq_ * q0 - b_ * v0 - a_ * g0;
      gq.m.col(3 * p + 1).array() = cq_ * q1 - b_ * v1 - a_ * g1;
      gq.m.col(3 * p + 2).array() = cq_ * q2 - b_ * v2 - a_ * g2;
    }
    u_.g.noalias() += gq.m * in_.m.transpose();
    gin.m.noalias() += u_.w.transpose() * gq.m;
    return gin;
  }

 private:
  using ArrC = Eigen::Array<S, Eigen::Dynamic, 1>;

  Param<S> u_;
  VNTensor<S> in_, q_;
  ArrC n2_, dot_, a_, mask_, gqd_, b_, cq_;  // per-point workspace, c rows
};

// Builds per-edge inputs from a per-point field: edge (p -> q) carries
// [f(q) - f(p); f(p)], 2c channels. Edge order is the knn row order, which
// is ascending-distance and therefore stable under point permutation.
template <typename S>
class VNEdgeGather {
 public:
  VNTensor<S> forward(const VNTensor<S>& f, const Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>& edges) {
    edges_ = edges;
    c_in_ = f.c;
    n_ = f.n;
    k_ = int(edges.cols());
    VNTensor<S> out;
    out.resize(n_ * k_, 2 * f.c);
    for (int p = 0; p < n_; ++p) {
      for (int i = 0; i < k_; ++i) {
        int q = edges(p, i);
        int e = p * k_ + i;
        out.m.block(0, 3 * e, f.c, 3) = f.m.block(0, 3 * q, f.c, 3) - f.m.block(0, 3 * p, f.c, 3);
        out.m.block(f.c, 3 * e, f.c, 3) = f.m.block(0, 3 * p, f.c, 3);
      }
    }
    return out;
  }

  VNTensor<S> backward(const VNTensor<S>& gout) {
    VNTensor<S> gin;
    gin.resize(n_, c_in_);
    for (int p = 0; p < n_; ++p) {
      for (int i = 0; i < k_; ++i) {
        int q = edges_(p, i);
        int e = p * k_ + i;
        gin.m.block(0, 3 * q, c_in_, 3) += gout.m.block(0, 3 * e, c_in_, 3);
        gin.m.block(0, 3 * p, c_in_, 3) -= gout.m.block(0, 3 * e, c_in_, 3);
        gin.m.block(0, 3 * p, c_in_, 3) += gout.m.block(c_in_, 3 * e, c_in_, 3);
      }
    }
    return gin;
  }

 private:
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> edges_;
  int c_in_ = 0, n_ = 0, k_ = 0;
};

// Aggregates edge features back to points: per channel, the mean over the k
// edges stacked with the max-by-norm edge vector (2c output channels). Norm
// ties resolve to the lowest edge index; both reductions are order-free
// given the gather's stable edge ordering.
template <typename S>
class VNPool {
 public:
  VNTensor<S> forward(const VNTensor<S>& edge_feat, int n_points, int k) {
    n_ = n_points;
    k_ = k;
    c_ = edge_feat.c;
    argmax_.assign(size_t(n_) * c_, 0);
    VNTensor<S> out;
    out.resize(n_, 2 * c_);
    const S inv_k = S(1) / S(k);
    for (int p = 0; p < n_; ++p) {
      for (int j = 0; j < c_; ++j) {
        S mx = 0, my = 0, mz = 0;
        S best = S(-1);
        int best_i = 0;
        for (int i = 0; i < k; ++i) {
          int e = p * k + i;
          S x = edge_feat.m(j, 3 * e), y = edge_feat.m(j, 3 * e + 1), z = edge_feat.m(j, 3 * e + 2);
          mx += x;
          my += y;
          mz += z;
          S n2 = x * x + y * y + z * z;
          if (n2 > best) {
            best = n2;
            best_i = i;
          }
        }
        out.m(j, 3 * p) = mx * inv_k;
        out.m(j, 3 * p + 1) = my * inv_k;
        out.m(j, 3 * p + 2) = mz * inv_k;
        int eb = p * k + best_i;
        out.m(c_ + j, 3 * p) = edge_feat.m(j, 3 * eb);
        out.m(c_ + j, 3 * p + 1) = edge_feat.m(j, 3 * eb + 1);
        out.m(c_ + j, 3 * p + 2) = edge_feat.m(j, 3 * eb + 2);
        argmax_[size_t(p) * c_ + j] = best_i;
      }
    }
    return out;
  }

  VNTensor<S> backward(const VNTensor<S>& gout) {
    VNTensor<S> gin;
    gin.resize(n_ * k_, c_);
    const S inv_k = S(1) / S(k_);
    for (int p = 0; p < n_; ++p) {
      for (int j = 0; j < c_; ++j) {
        for (int i = 0; i < k_; ++i) {
          int e = p * k_ + i;
          gin.m(j, 3 * e) += gout.m(j, 3 * p) * inv_k;
          gin.m(j, 3 * e + 1) += gout.m(j, 3 * p + 1) * inv_k;
          gin.m(j, 3 * e + 2) += gout.m(j, 3 * p + 2) * inv_k;
        }
        int eb = p * k_ + argmax_[size_t(p) * c_ + j];
        gin.m(j, 3 * eb) += gout.m(c_ + j, 3 * p);
        gin.m(j, 3 * eb + 1) += gout.m(c_ + j, 3 * p + 1);
        gin.m(j, 3 * eb + 2) += gout.m(c_ + j, 3 * p + 2);
      }
    }
    return gin;
  }

 private:
  int n_ = 0, k_ = 0, c_ = 0;
  std::vector<int> argmax_;
};

// Rotation-invariant readout: inner products of the d channel vectors
// against a learned 3-channel equivariant frame give d x 3 invariant
// scalars per point, then a learned mix (with bias) to d_i outputs.
template <typename S>
class Invariantize {
 public:
  void setup(const std::string& name, int c_in, int d_out, Rng& rng) {
    c_in_ = c_in;
    d_out_ = d_out;
    frame_.setup(name + ".frame", 3, c_in, rng);
    mix_.setup(name + ".mix", d_out, 3 * c_in);
    bias_.setup(name + ".bias", d_out, 1);
    init_fan_in(mix_, rng);
  }

  void collect(ParamList<S>& out) {
    frame_.collect(out);
    out.push_back(&mix_);
    out.push_back(&bias_);
  }

  ScalarField<S> forward(const VNTensor<S>& f) {
    in_ = f;
    frame_field_ = frame_.forward(f);
    y_.setZero(3 * f.c, f.n);
    for (int p = 0; p < f.n; ++p) {
      // M(i, j) = f_i . frame_j, flattened row-major down the column.
      Eigen::Matrix<S, Eigen::Dynamic, 3> prods =
          f.point_block(p) * frame_field_.point_block(p).transpose();
      for (int i = 0; i < f.c; ++i)
        for (int j = 0; j < 3; ++j) y_(3 * i + j, p) = prods(i, j);
    }
    ScalarField<S> out = mix_.w * y_;
    out.colwise() += VecX<S>(bias_.w.col(0));
    return out;
  }

  VNTensor<S> backward(const ScalarField<S>& gout) {
    mix_.g.noalias() += gout * y_.transpose();
    bias_.g.col(0).noalias() += gout.rowwise().sum();
    MatX<S> gy = mix_.w.transpose() * gout;  // 3c x n
    VNTensor<S> gframe;
    gframe.resize(in_.n, 3);
    VNTensor<S> gin;
    gin.resize(in_.n, in_.c);
    for (int p = 0; p < in_.n; ++p) {
      Eigen::Matrix<S, Eigen::Dynamic, 3> gm(in_.c, 3);
      for (int i = 0; i < in_.c; ++i)
        for (int j = 0; j < 3; ++j) gm(i, j) = gy(3 * i + j, p);
      gin.point_block(p).noalias() += gm * frame_field_.point_block(p);
      gframe.point_block(p).noalias() += gm.transpose() * in_.point_block(p);
    }
    VNTensor<S> g_from_frame = frame_.backward(gframe);
    gin.m += g_from_frame.m;
    return gin;
  }

 private:
  int c_in_ = 0, d_out_ = 0;
  VNLinear<S> frame_;
  Param<S> mix_, bias_;
  VNTensor<S> in_;
  VNTensor<S> frame_field_;
  MatX<S> y_;
};

// ---------------------------------------------------------------------------
// Scalar layers (head MLPs, baseline encoder)
// ---------------------------------------------------------------------------

template <typename S>
class ScalarLinear {
 public:
  void setup(const std::string& name, int out, int in, Rng& rng) {
    w_.setup(name + ".w", out, in);
    b_.setup(name + ".b", out, 1);
    init_fan_in(w_, rng);
  }

  void collect(ParamList<S>& out) {
    out.push_back(&w_);
    out.push_back(&b_);
  }

  ScalarField<S> forward(const ScalarField<S>& in) {
    if (in.rows() != w_.w.cols())
      throw ShapeMismatchError(w_.name + ": expected input rows " + std::to_string(w_.w.cols()));
    in_ = in;
    ScalarField<S> out = w_.w * in;
    out.colwise() += VecX<S>(b_.w.col(0));
    return out;
  }

  ScalarField<S> backward(const ScalarField<S>& gout) {
    w_.g.noalias() += gout * in_.transpose();
    b_.g.col(0).noalias() += gout.rowwise().sum();
    return w_.w.transpose() * gout;
  }

 private:
  Param<S> w_, b_;
  ScalarField<S> in_;
};

template <typename S>
class ScalarRelu {
 public:
  ScalarField<S> forward(const ScalarField<S>& in) {
    in_ = in;
    return in.cwiseMax(S(0));
  }
  ScalarField<S> backward(const ScalarField<S>& gout) {
    return (in_.array() > S(0)).select(gout, MatX<S>::Zero(gout.rows(), gout.cols()));
  }

 private:
  ScalarField<S> in_;
};

template <typename S>
class ScalarSigmoid {
 public:
  ScalarField<S> forward(const ScalarField<S>& in) {
    out_ = (S(1) / (S(1) + (-in.array()).exp())).matrix();
    return out_;
  }
  ScalarField<S> backward(const ScalarField<S>& gout) {
    return (gout.array() * out_.array() * (S(1) - out_.array())).matrix();
  }

 private:
  ScalarField<S> out_;
};

template <typename S>
class ScalarTanh {
 public:
  ScalarField<S> forward(const ScalarField<S>& in) {
    out_ = in.array().tanh().matrix();
    return out_;
  }
  ScalarField<S> backward(const ScalarField<S>& gout) {
    return (gout.array() * (S(1) - out_.array().square())).matrix();
  }

 private:
  ScalarField<S> out_;
};

// Two hidden ReLU layers, sigmoid output in [0,1].
template <typename S>
class SigmoidMlp {
 public:
  void setup(const std::string& name, int in, int hidden, Rng& rng) {
    l1_.setup(name + ".l1", hidden, in, rng);
    l2_.setup(name + ".l2", hidden, hidden, rng);
    l3_.setup(name + ".l3", 1, hidden, rng);
  }

  void collect(ParamList<S>& out) {
    l1_.collect(out);
    l2_.collect(out);
    l3_.collect(out);
  }

  ScalarField<S> forward(const ScalarField<S>& in) {
    return sig_.forward(l3_.forward(r2_.forward(l2_.forward(r1_.forward(l1_.forward(in))))));
  }

  ScalarField<S> backward(const ScalarField<S>& gout) {
    return l1_.backward(r1_.backward(l2_.backward(r2_.backward(l3_.backward(sig_.backward(gout))))));
  }

 private:
  ScalarLinear<S> l1_, l2_, l3_;
  ScalarRelu<S> r1_, r2_;
  ScalarSigmoid<S> sig_;
};

// One hidden ReLU layer, tanh output in [-1,1].
template <typename S>
class TanhMlp {
 public:
  void setup(const std::string& name, int out, int in, int hidden, Rng& rng) {
    l1_.setup(name + ".l1", hidden, in, rng);
    l2_.setup(name + ".l2", out, hidden, rng);
  }

  void collect(ParamList<S>& out) {
    l1_.collect(out);
    l2_.collect(out);
  }

  ScalarField<S> forward(const ScalarField<S>& in) {
    return tanh_.forward(l2_.forward(r1_.forward(l1_.forward(in))));
  }

  ScalarField<S> backward(const ScalarField<S>& gout) {
    return l1_.backward(r1_.backward(l2_.backward(tanh_.backward(gout))));
  }

 private:
  ScalarLinear<S> l1_, l2_;
  ScalarRelu<S> r1_;
  ScalarTanh<S> tanh_;
};

// ---------------------------------------------------------------------------
// Differentiable rotation construction and geodesic loss
// ---------------------------------------------------------------------------

// Gram-Schmidt frame with analytic gradients, for the proposal head.
template <typename S>
struct GramSchmidt {
  Vec3<S> u, v, e1, e2, e3;
  S nu = 0, nw = 0, s = 0;

  // Returns false (no frame) when either stage collapses below eps.
  bool forward(const Vec3<S>& u_in, const Vec3<S>& v_in, Mat3<S>& r_out, S eps = S(1e-6)) {
    u = u_in;
    v = v_in;
    nu = u.norm();
    if (!(nu > eps)) return false;
    e1 = u / nu;
    s = v.dot(e1);
    Vec3<S> w = v - s * e1;
    nw = w.norm();
    if (!(nw > eps)) return false;
    e2 = w / nw;
    e3 = e1.cross(e2);
    r_out.col(0) = e1;
    r_out.col(1) = e2;
    r_out.col(2) = e3;
    return true;
  }

  void backward(const Mat3<S>& gr, Vec3<S>& gu, Vec3<S>& gv) const {
    Vec3<S> g1 = gr.col(0), g2 = gr.col(1), g3 = gr.col(2);
    // e3 = e1 x e2 routes g3 into both columns:
    // <g3, de1 x e2> = <de1, e2 x g3>, <g3, e1 x de2> = <de2, g3 x e1>.
    Vec3<S> gw_pre = g2 + g3.cross(e1);
    Vec3<S> ghat_w = (gw_pre - e2 * e2.dot(gw_pre)) / nw;
    gv = ghat_w - e1 * e1.dot(ghat_w);
    Vec3<S> ge1 = g1 + e2.cross(g3) + (-ghat_w.dot(e1)) * v - s * ghat_w;
    gu = (ge1 - e1 * e1.dot(ge1)) / nu;
  }
};

// Geodesic angle between a predicted and a target rotation, differentiable
// in the prediction. The cosine is clamped slightly inside (-1, 1) for the
// gradient so the arccos derivative stays finite.
template <typename S>
struct GeodesicToTarget {
  Mat3<S> target;
  S cos_raw = 0;

  S forward(const Mat3<S>& predicted, const Mat3<S>& target_in) {
    target = target_in;
    cos_raw = S(((predicted.transpose() * target).trace() - S(1)) * S(0.5));
    S c = std::clamp(cos_raw, S(-1), S(1));
    return std::acos(c);
  }

  Mat3<S> backward(S gout) const {
    S c = std::clamp(cos_raw, S(-1) + S(1e-7), S(1) - S(1e-7));
    S dacos = S(-1) / std::sqrt(S(1) - c * c);
    return gout * dacos * S(0.5) * target;
  }
};

}  // namespace vnaff
