#pragma once

// The three prediction heads and the assembled model.
//
// Affordance: invariant scalars -> sigmoid MLP -> per-point score.
// Proposal: noise gates (invariant scalars) scale the equivariant channel
//   vectors, a VN stack maps them to two vectors, Gram-Schmidt makes a
//   rotation; equivariant because noise enters only as channel scalars.
// Scoring: a candidate rotation is read invariantly as the d x 3 matrix of
//   inner products between the point's channel vectors and the rotation's
//   columns, concatenated with the invariant scalars, then a sigmoid MLP.

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <vector>

#include "vnafford/baseline.hpp"
#include "vnafford/encoder.hpp"
#include "vnafford/errors.hpp"
#include "vnafford/geometry.hpp"
#include "vnafford/primitive.hpp"
#include "vnafford/vn.hpp"

namespace vnaff {

template <typename S>
class AffordanceHead {
 public:
  void setup(int d_inv, int hidden, Rng& rng) { mlp_.setup("aff", d_inv, hidden, rng); }
  void collect(ParamList<S>& out) { mlp_.collect(out); }

  // inv: d_inv x n -> scores 1 x n in [0,1].
  ScalarField<S> forward(const ScalarField<S>& inv) { return mlp_.forward(inv); }
  ScalarField<S> backward(const ScalarField<S>& gout) { return mlp_.backward(gout); }

 private:
  SigmoidMlp<S> mlp_;
};

template <typename S>
class ScoringHead {
 public:
  void setup(int d, int d_inv, int hidden, Rng& rng) {
    d_ = d;
    d_inv_ = d_inv;
    mlp_.setup("score", d_inv + 3 * d, hidden, rng);
  }
  void collect(ParamList<S>& out) { mlp_.collect(out); }

  // One column per (point, rotation) record over a single encoded cloud.
  ScalarField<S> forward(const EncoderOutput<S>& enc, const std::vector<int>& pts,
                         const std::vector<Mat3<S>>& rots) {
    const int b = int(pts.size());
    pts_ = pts;
    rots_ = rots;
    fs_.resize(b);
    ScalarField<S> in(d_inv_ + 3 * d_, b);
    for (int j = 0; j < b; ++j) {
      fs_[j] = enc.eqv.point_block(pts[j]);
      in.col(j).head(d_inv_) = enc.inv.col(pts[j]);
      Eigen::Matrix<S, Eigen::Dynamic, 3> m = fs_[j] * rots[j];
      for (int i = 0; i < d_; ++i)
        for (int a = 0; a < 3; ++a) in(d_inv_ + 3 * i + a, j) = m(i, a);
    }
    return mlp_.forward(in);
  }

  // Scatters gradients into per-point accumulators shaped like the encoder
  // outputs; candidate rotations are data and receive none.
  void backward(const ScalarField<S>& gout, VNTensor<S>& g_eqv, ScalarField<S>& g_inv) {
    ScalarField<S> gin = mlp_.backward(gout);
    for (int j = 0; j < int(pts_.size()); ++j) {
      g_inv.col(pts_[j]) += gin.col(j).head(d_inv_);
      Eigen::Matrix<S, Eigen::Dynamic, 3> gm(d_, 3);
      for (int i = 0; i < d_; ++i)
        for (int a = 0; a < 3; ++a) gm(i, a) = gin(d_inv_ + 3 * i + a, j);
      g_eqv.point_block(pts_[j]) += gm * rots_[j].transpose();
    }
  }

 private:
  int d_ = 0, d_inv_ = 0;
  SigmoidMlp<S> mlp_;
  std::vector<int> pts_;
  std::vector<Mat3<S>> rots_;
  std::vector<Eigen::Matrix<S, Eigen::Dynamic, 3>> fs_;
};

template <typename S>
struct ProposalBatch {
  std::vector<Mat3<S>> rotations;
  std::vector<char> valid;

  int count_valid() const {
    int c = 0;
    for (char v : valid) c += v;
    return c;
  }
};

template <typename S>
class ProposalHead {
 public:
  void setup(int d, int d_z, int gate_hidden, Rng& rng) {
    d_ = d;
    d_z_ = d_z;
    gate_.setup("prop.gate", d, d_z, gate_hidden, rng);
    vn1_.setup("prop.vn1", d, d, rng);
    vnr_.setup("prop.vnr", d, rng);
    vn2_.setup("prop.vn2", 2, d, rng);
  }

  void collect(ParamList<S>& out) {
    gate_.collect(out);
    vn1_.collect(out);
    vnr_.collect(out);
    vn2_.collect(out);
  }

  int noise_dim() const { return d_z_; }

  // One instance per column of z; instance j proposes at point pts[j].
  ProposalBatch<S> forward(const EncoderOutput<S>& enc, const std::vector<int>& pts,
                           const ScalarField<S>& z) {
    const int m = int(pts.size());
    gates_ = gate_.forward(z);
    fs_.resize(m);
    VNTensor<S> x;
    x.resize(m, d_);
    for (int j = 0; j < m; ++j) {
      fs_[j] = enc.eqv.point_block(pts[j]);
      x.point_block(j) = gates_.col(j).asDiagonal() * fs_[j];
    }
    VNTensor<S> y = vn2_.forward(vnr_.forward(vn1_.forward(x)));
    ProposalBatch<S> out;
    out.rotations.resize(m);
    out.valid.assign(m, 0);
    gs_.assign(m, GramSchmidt<S>{});
    pts_ = pts;
    for (int j = 0; j < m; ++j) {
      Vec3<S> u = y.point_block(j).row(0).transpose();
      Vec3<S> v = y.point_block(j).row(1).transpose();
      Mat3<S> r;
      if (gs_[j].forward(u, v, r)) {
        out.rotations[j] = r;
        out.valid[j] = 1;
      } else {
        out.rotations[j].setIdentity();
      }
    }
    return out;
  }

  // g_rots[j] is consumed only where active[j]; inactive instances contribute
  // nothing (their construction was skipped or the loss ignored them).
  void backward(const std::vector<Mat3<S>>& g_rots, const std::vector<char>& active,
                VNTensor<S>& g_eqv) {
    const int m = int(pts_.size());
    VNTensor<S> gy;
    gy.resize(m, 2);
    for (int j = 0; j < m; ++j) {
      if (!active[j]) continue;
      Vec3<S> gu, gv;
      gs_[j].backward(g_rots[j], gu, gv);
      gy.point_block(j).row(0) = gu.transpose();
      gy.point_block(j).row(1) = gv.transpose();
    }
    VNTensor<S> gx = vn1_.backward(vnr_.backward(vn2_.backward(gy)));
    ScalarField<S> ggates = ScalarField<S>::Zero(d_, m);
    for (int j = 0; j < m; ++j) {
      if (!active[j]) continue;
      auto gxb = gx.point_block(j);
      g_eqv.point_block(pts_[j]) += gates_.col(j).asDiagonal() * gxb;
      ggates.col(j) = gxb.cwiseProduct(fs_[j]).rowwise().sum();
    }
    gate_.backward(ggates);
  }

 private:
  int d_ = 0, d_z_ = 0;
  TanhMlp<S> gate_;
  VNLinear<S> vn1_, vn2_;
  VNRelu<S> vnr_;
  ScalarField<S> gates_;
  std::vector<int> pts_;
  std::vector<Eigen::Matrix<S, Eigen::Dynamic, 3>> fs_;
  std::vector<GramSchmidt<S>> gs_;
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

enum class EncoderKind { kVectorNeuron, kPointBaseline };

inline const char* to_string(EncoderKind k) {
  return k == EncoderKind::kVectorNeuron ? "vn" : "point";
}

inline EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "vn") return EncoderKind::kVectorNeuron;
  if (s == "point") return EncoderKind::kPointBaseline;
  throw LoadError("unknown encoder kind: " + s);
}

struct ModelConfig {
  EncoderConfig enc;
  int d_z = 8;
  int hidden = 128;
  int gate_hidden = 64;
  EncoderKind kind = EncoderKind::kVectorNeuron;
  PrimitiveType primitive = PrimitiveType::kPull;
};

template <typename S>
struct InferResult {
  int point_index = -1;
  Rotation rotation;
  double score = 0.0;
  VecX<S> map;
};

// Not movable: params_ holds pointers into the head and encoder members.
template <typename S>
class Model {
 public:
  Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  void setup(const ModelConfig& cfg, std::uint64_t init_seed) {
    cfg_ = cfg;
    Rng rng(init_seed);
    Rng enc_rng = rng.fork(salt_of("encoder"));
    if (cfg.kind == EncoderKind::kVectorNeuron) {
      vn_enc_ = std::make_unique<VNEncoder<S>>();
      vn_enc_->setup(cfg.enc, enc_rng);
    } else {
      pt_enc_ = std::make_unique<PointEncoder<S>>();
      pt_enc_->setup(cfg.enc, enc_rng);
    }
    Rng head_rng = rng.fork(salt_of("heads"));
    aff_.setup(cfg.enc.d_inv, cfg.hidden, head_rng);
    score_.setup(cfg.enc.d, cfg.enc.d_inv, cfg.hidden, head_rng);
    prop_.setup(cfg.enc.d, cfg.d_z, cfg.gate_hidden, head_rng);
    params_.clear();
    if (vn_enc_) vn_enc_->collect(params_);
    if (pt_enc_) pt_enc_->collect(params_);
    aff_.collect(params_);
    score_.collect(params_);
    prop_.collect(params_);
  }

  const ModelConfig& config() const { return cfg_; }
  const ParamList<S>& params() const { return params_; }
  ParamList<S>& params() { return params_; }

  AffordanceHead<S>& affordance_head() { return aff_; }
  ScoringHead<S>& scoring_head() { return score_; }
  ProposalHead<S>& proposal_head() { return prop_; }

  EncoderOutput<S> encode(const PointCloud& cloud) {
    return vn_enc_ ? vn_enc_->forward(cloud) : pt_enc_->forward(cloud);
  }

  void encoder_backward(const VNTensor<S>& g_eqv, const ScalarField<S>& g_inv) {
    if (vn_enc_)
      vn_enc_->backward(g_eqv, g_inv);
    else
      pt_enc_->backward(g_eqv, g_inv);
  }

  VecX<S> affordance_map(const EncoderOutput<S>& enc) {
    return aff_.forward(enc.inv).row(0).transpose();
  }

  // Noise layout: column j holds proposal j's d_z draws, filled column by
  // column so seed-matched runs consume the stream identically.
  ScalarField<S> draw_noise(int count, Rng& rng) const {
    ScalarField<S> z(cfg_.d_z, count);
    for (int j = 0; j < count; ++j)
      for (int i = 0; i < cfg_.d_z; ++i) z(i, j) = S(rng.normal());
    return z;
  }

  // Best action on a cloud: affordance argmax point (ties to lowest index),
  // K noise-gated proposals there, scored and reduced to the best scorer.
  InferResult<S> infer_best_action(const PointCloud& cloud, int k_proposals, Rng& rng) {
    EncoderOutput<S> enc = encode(cloud);
    InferResult<S> out;
    out.map = affordance_map(enc);
    int best_p = 0;
    for (int p = 1; p < int(out.map.size()); ++p)
      if (out.map[p] > out.map[best_p]) best_p = p;
    out.point_index = best_p;

    std::vector<int> pts(size_t(k_proposals), best_p);
    ScalarField<S> z = draw_noise(k_proposals, rng);
    ProposalBatch<S> props = prop_.forward(enc, pts, z);
    std::vector<int> vpts;
    std::vector<Mat3<S>> vrots;
    for (int j = 0; j < k_proposals; ++j)
      if (props.valid[j]) {
        vpts.push_back(best_p);
        vrots.push_back(props.rotations[j]);
      }
    if (vrots.empty()) throw NoValidProposalError("all proposals degenerate at point " + std::to_string(best_p));
    ScalarField<S> scores = score_.forward(enc, vpts, vrots);
    int best_j = 0;
    for (int j = 1; j < int(vrots.size()); ++j)
      if (scores(0, j) > scores(0, best_j)) best_j = j;
    out.rotation.m = vrots[size_t(best_j)].template cast<float>();
    out.score = double(scores(0, best_j));
    return out;
  }

 private:
  ModelConfig cfg_;
  std::unique_ptr<VNEncoder<S>> vn_enc_;
  std::unique_ptr<PointEncoder<S>> pt_enc_;
  AffordanceHead<S> aff_;
  ScoringHead<S> score_;
  ProposalHead<S> prop_;
  ParamList<S> params_;
};

}  // namespace vnaff
