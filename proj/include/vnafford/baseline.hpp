#pragma once

// Contrast encoder: a standard scalar edge-convolution network on absolute
// point coordinates, emitting the same (eqv-shaped, inv-shaped) outputs as
// VNEncoder so the heads run unchanged. Nothing here is equivariant; that is
// the point of the comparison.

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "vnafford/encoder.hpp"
#include "vnafford/geometry.hpp"
#include "vnafford/vn.hpp"

namespace vnaff {

template <typename S>
class ScalarEdgeGather {
 public:
  ScalarField<S> forward(const ScalarField<S>& h, const Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>& edges) {
    edges_ = edges;
    c_ = int(h.rows());
    n_ = int(h.cols());
    k_ = int(edges.cols());
    ScalarField<S> out(2 * c_, n_ * k_);
    for (int p = 0; p < n_; ++p)
      for (int i = 0; i < k_; ++i) {
        int e = p * k_ + i;
        out.col(e).head(c_) = h.col(edges(p, i)) - h.col(p);
        out.col(e).tail(c_) = h.col(p);
      }
    return out;
  }

  ScalarField<S> backward(const ScalarField<S>& gout) {
    ScalarField<S> gin = ScalarField<S>::Zero(c_, n_);
    for (int p = 0; p < n_; ++p)
      for (int i = 0; i < k_; ++i) {
        int e = p * k_ + i;
        gin.col(edges_(p, i)) += gout.col(e).head(c_);
        gin.col(p) -= gout.col(e).head(c_);
        gin.col(p) += gout.col(e).tail(c_);
      }
    return gin;
  }

 private:
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> edges_;
  int c_ = 0, n_ = 0, k_ = 0;
};

// Mean and elementwise max over each point's k edges, stacked (2c outputs).
template <typename S>
class ScalarPool {
 public:
  ScalarField<S> forward(const ScalarField<S>& edge_feat, int n_points, int k) {
    n_ = n_points;
    k_ = k;
    c_ = int(edge_feat.rows());
    argmax_.assign(size_t(n_) * c_, 0);
    ScalarField<S> out(2 * c_, n_);
    const S inv_k = S(1) / S(k);
    for (int p = 0; p < n_; ++p) {
      for (int j = 0; j < c_; ++j) {
        S sum = 0;
        S best = edge_feat(j, p * k);
        int best_i = 0;
        for (int i = 0; i < k; ++i) {
          S v = edge_feat(j, p * k + i);
          sum += v;
          if (v > best) {
            best = v;
            best_i = i;
          }
        }
        out(j, p) = sum * inv_k;
        out(c_ + j, p) = best;
        argmax_[size_t(p) * c_ + j] = best_i;
      }
    }
    return out;
  }

  ScalarField<S> backward(const ScalarField<S>& gout) {
    ScalarField<S> gin = ScalarField<S>::Zero(c_, n_ * k_);
    const S inv_k = S(1) / S(k_);
    for (int p = 0; p < n_; ++p)
      for (int j = 0; j < c_; ++j) {
        for (int i = 0; i < k_; ++i) gin(j, p * k_ + i) += gout(j, p) * inv_k;
        gin(j, p * k_ + argmax_[size_t(p) * c_ + j]) += gout(c_ + j, p);
      }
    return gin;
  }

 private:
  int n_ = 0, k_ = 0, c_ = 0;
  std::vector<int> argmax_;
};

template <typename S>
class PointEncoder {
 public:
  void setup(const EncoderConfig& cfg, Rng& rng) {
    cfg_ = cfg;
    width_ = 64;
    blocks_.assign(size_t(cfg.depth), Block{});
    for (int b = 0; b < cfg.depth; ++b) {
      int c_in = (b == 0) ? 3 : width_;
      std::string base = "penc.b" + std::to_string(b);
      Block& blk = blocks_[b];
      blk.lin1.setup(base + ".lin1", width_, 2 * c_in, rng);
      blk.lin2.setup(base + ".lin2", width_, width_, rng);
      blk.reduce.setup(base + ".reduce", width_, 2 * width_, rng);
    }
    skip_.setup("penc.skip", 128, cfg.depth * width_, rng);
    head_inv_.setup("penc.head_inv", cfg.d_inv, 128, rng);
    head_eqv_.setup("penc.head_eqv", 3 * cfg.d, 128, rng);
  }

  void collect(ParamList<S>& out) {
    for (Block& b : blocks_) {
      b.lin1.collect(out);
      b.lin2.collect(out);
      b.reduce.collect(out);
    }
    skip_.collect(out);
    head_inv_.collect(out);
    head_eqv_.collect(out);
  }

  const EncoderConfig& config() const { return cfg_; }

  EncoderOutput<S> forward(const PointCloud& cloud) {
    const int n = cloud.n();
    edges_ = knn_graph(cloud, cfg_.k_nn);
    ScalarField<S> h(3, n);
    for (int p = 0; p < n; ++p) h.col(p) = cloud.point(p).template cast<S>();

    cat_.resize(cfg_.depth * width_, n);
    for (int b = 0; b < cfg_.depth; ++b) {
      Block& blk = blocks_[b];
      ScalarField<S> e = blk.relu1.forward(blk.lin1.forward(blk.gather.forward(h, edges_)));
      e = blk.relu2.forward(blk.lin2.forward(e));
      h = blk.relu3.forward(blk.reduce.forward(blk.pool.forward(e, n, cfg_.k_nn)));
      cat_.block(b * width_, 0, width_, n) = h;
    }
    trunk_ = skip_relu_.forward(skip_.forward(cat_));
    EncoderOutput<S> out;
    out.inv = head_inv_.forward(trunk_);
    ScalarField<S> ev = head_eqv_.forward(trunk_);  // 3d x n
    out.eqv.resize(n, cfg_.d);
    for (int p = 0; p < n; ++p)
      for (int i = 0; i < cfg_.d; ++i)
        for (int a = 0; a < 3; ++a) out.eqv.m(i, 3 * p + a) = ev(3 * i + a, p);
    return out;
  }

  void backward(const VNTensor<S>& g_eqv, const ScalarField<S>& g_inv) {
    const int n = int(edges_.rows());
    ScalarField<S> gt = ScalarField<S>::Zero(128, n);
    if (g_inv.size() > 0) gt += head_inv_.backward(g_inv);
    if (g_eqv.m.size() > 0) {
      ScalarField<S> gev(3 * cfg_.d, n);
      for (int p = 0; p < n; ++p)
        for (int i = 0; i < cfg_.d; ++i)
          for (int a = 0; a < 3; ++a) gev(3 * i + a, p) = g_eqv.m(i, 3 * p + a);
      gt += head_eqv_.backward(gev);
    }
    ScalarField<S> gcat = skip_.backward(skip_relu_.backward(gt));
    ScalarField<S> carry;
    for (int b = cfg_.depth - 1; b >= 0; --b) {
      Block& blk = blocks_[b];
      ScalarField<S> gh = gcat.block(b * width_, 0, width_, n);
      if (carry.size() > 0) gh += carry;
      ScalarField<S> ge = blk.pool.backward(blk.reduce.backward(blk.relu3.backward(gh)));
      ge = blk.lin2.backward(blk.relu2.backward(ge));
      ge = blk.gather.backward(blk.lin1.backward(blk.relu1.backward(ge)));
      carry = ge;
    }
  }

 private:
  struct Block {
    ScalarEdgeGather<S> gather;
    ScalarLinear<S> lin1, lin2, reduce;
    ScalarRelu<S> relu1, relu2, relu3;
    ScalarPool<S> pool;
  };

  EncoderConfig cfg_;
  int width_ = 64;
  std::vector<Block> blocks_;
  ScalarLinear<S> skip_;
  ScalarRelu<S> skip_relu_;
  ScalarLinear<S> head_inv_, head_eqv_;
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> edges_;
  ScalarField<S> cat_, trunk_;
};

}  // namespace vnaff
