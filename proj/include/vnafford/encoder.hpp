#pragma once

// Dual-output point-cloud encoder: per-point equivariant features (d vector
// channels) plus per-point invariant scalars (d_inv). Edge-convolution
// blocks over a static knn graph with skip concatenation, all built from the
// vector-neuron layers, so rotation equivariance holds by construction and
// centering makes translation drop out exactly.

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

#include "vnafford/geometry.hpp"
#include "vnafford/vn.hpp"

namespace vnaff {

struct EncoderConfig {
  int k_nn = 16;
  int d = 32;      // equivariant channels
  int d_inv = 64;  // invariant scalars
  int depth = 3;   // edge-conv blocks
};

// Order-independent centroid of an n x 3 coordinate matrix; sums each axis in
// sorted order (matches stable_centroid up to the scalar type).
template <typename S>
Vec3<S> stable_centroid_of(const Eigen::Matrix<S, Eigen::Dynamic, 3>& pts) {
  const int n = int(pts.rows());
  Vec3<S> out;
  std::vector<S> col(n);
  for (int a = 0; a < 3; ++a) {
    for (int i = 0; i < n; ++i) col[i] = pts(i, a);
    std::sort(col.begin(), col.end());
    double s = 0.0;
    for (S v : col) s += double(v);
    out[a] = S(s / n);
  }
  return out;
}

template <typename S>
struct EncoderOutput {
  VNTensor<S> eqv;    // d x 3n
  ScalarField<S> inv;  // d_inv x n
};

template <typename S>
class VNEncoder {
 public:
  void setup(const EncoderConfig& cfg, Rng& rng) {
    cfg_ = cfg;
    blocks_.assign(size_t(cfg.depth), Block{});
    for (int b = 0; b < cfg.depth; ++b) {
      int c_in = (b == 0) ? 1 : cfg.d;
      std::string base = "enc.b" + std::to_string(b);
      Block& blk = blocks_[b];
      blk.lin1.setup(base + ".lin1", cfg.d, 2 * c_in, rng);
      blk.relu1.setup(base + ".relu1", cfg.d, rng);
      blk.lin2.setup(base + ".lin2", cfg.d, cfg.d, rng);
      blk.relu2.setup(base + ".relu2", cfg.d, rng);
      blk.reduce.setup(base + ".reduce", cfg.d, 2 * cfg.d, rng);
      blk.relu3.setup(base + ".relu3", cfg.d, rng);
    }
    skip_.setup("enc.skip", cfg.d, cfg.depth * cfg.d, rng);
    skip_relu_.setup("enc.skip_relu", cfg.d, rng);
    inv_.setup("enc.inv", cfg.d, cfg.d_inv, rng);
  }

  void collect(ParamList<S>& out) {
    for (Block& b : blocks_) {
      b.lin1.collect(out);
      b.relu1.collect(out);
      b.lin2.collect(out);
      b.relu2.collect(out);
      b.reduce.collect(out);
      b.relu3.collect(out);
    }
    skip_.collect(out);
    skip_relu_.collect(out);
    inv_.collect(out);
  }

  const EncoderConfig& config() const { return cfg_; }

  EncoderOutput<S> forward(const PointCloud& cloud) {
    const int n = cloud.n();
    edges_ = knn_graph(cloud, cfg_.k_nn);
    Eigen::Matrix<S, Eigen::Dynamic, 3> pts = cloud.points.template cast<S>();
    Vec3<S> ctr = stable_centroid_of<S>(pts);
    VNTensor<S> f;
    f.resize(n, 1);
    for (int p = 0; p < n; ++p)
      f.m.block(0, 3 * p, 1, 3) = (pts.row(p).transpose() - ctr).transpose();

    block_outs_.assign(size_t(cfg_.depth), VNTensor<S>{});
    for (int b = 0; b < cfg_.depth; ++b) {
      Block& blk = blocks_[b];
      VNTensor<S> e = blk.gather.forward(f, edges_);
      e = blk.relu1.forward(blk.lin1.forward(e));
      e = blk.relu2.forward(blk.lin2.forward(e));
      VNTensor<S> pooled = blk.pool.forward(e, n, cfg_.k_nn);
      f = blk.relu3.forward(blk.reduce.forward(pooled));
      block_outs_[b] = f;
    }

    VNTensor<S> cat;
    cat.resize(n, cfg_.depth * cfg_.d);
    for (int b = 0; b < cfg_.depth; ++b)
      cat.m.block(b * cfg_.d, 0, cfg_.d, 3 * n) = block_outs_[b].m;
    EncoderOutput<S> out;
    out.eqv = skip_relu_.forward(skip_.forward(cat));
    out.inv = inv_.forward(out.eqv);
    return out;
  }

  // Accumulates parameter gradients from gradients on both outputs. Either
  // gradient may be empty (zero-size) when unused.
  void backward(const VNTensor<S>& g_eqv, const ScalarField<S>& g_inv) {
    const int n = int(edges_.rows());
    VNTensor<S> g;
    if (g_eqv.m.size() > 0) {
      g = g_eqv;
    } else {
      g.resize(n, cfg_.d);
    }
    if (g_inv.size() > 0) g.m += inv_.backward(g_inv).m;
    VNTensor<S> gcat = skip_.backward(skip_relu_.backward(g));
    VNTensor<S> carry;
    for (int b = cfg_.depth - 1; b >= 0; --b) {
      Block& blk = blocks_[b];
      VNTensor<S> gf;
      gf.resize(n, cfg_.d);
      gf.m = gcat.m.block(b * cfg_.d, 0, cfg_.d, 3 * n);
      if (carry.m.size() > 0) gf.m += carry.m;
      VNTensor<S> ge = blk.pool.backward(blk.reduce.backward(blk.relu3.backward(gf)));
      ge = blk.lin2.backward(blk.relu2.backward(ge));
      ge = blk.lin1.backward(blk.relu1.backward(ge));
      carry = blk.gather.backward(ge);
    }
  }

 private:
  struct Block {
    VNEdgeGather<S> gather;
    VNLinear<S> lin1, lin2, reduce;
    VNRelu<S> relu1, relu2, relu3;
    VNPool<S> pool;
  };

  EncoderConfig cfg_;
  std::vector<Block> blocks_;
  VNLinear<S> skip_;
  VNRelu<S> skip_relu_;
  Invariantize<S> inv_;
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> edges_;
  std::vector<VNTensor<S>> block_outs_;
};

}  // namespace vnaff
