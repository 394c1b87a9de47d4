#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "afusion/ops.hpp"

namespace afusion {

enum class ModelKind { lfan, can };
enum class Modality { visual, audio, linguistic };

inline std::string to_string(ModelKind k) { return k == ModelKind::lfan ? "lfan" : "can"; }
inline std::string to_string(Modality m) {
  switch (m) {
    case Modality::visual: return "visual";
    case Modality::audio: return "audio";
    default: return "linguistic";
  }
}

struct TcnSpec {
  int levels = 6;
  int kernel = 3;
  Index channels = 64;
  double dropout = 0.1;

  // 1 + sum over levels of two dilated convs' lookback
  Index receptive_field() const {
    Index rf = 1;
    for (int i = 0; i < levels; ++i) rf += 2 * (kernel - 1) * (Index{1} << i);
    return rf;
  }
};

struct BackboneSpec {
  Index in_channels = 3;
  Index in_h = 40;
  Index in_w = 40;
  std::array<Index, 3> stage_channels{8, 16, 32};
  Index out_dim = 64;
};

struct ModelConfig {
  ModelKind kind = ModelKind::can;
  std::vector<Modality> modalities{Modality::visual, Modality::audio};
  int leader = 0;  // index into modalities (LFAN)
  BackboneSpec visual_backbone{3, 40, 40, {8, 16, 32}, 64};
  BackboneSpec audio_backbone{1, 64, 8, {8, 16, 32}, 64};
  TcnSpec tcn;
  Index branch_dim = 64;
  Index attn_dim = 32;
  Index fuse_dim = 64;
  Index linguistic_dim = 768;
  Index n_patch = 8;  // logmel context rows per step
};

// ---------------------------------------------------------------------------
// Parameter registry with layer-group tags.
// Group 0 is always trainable; backbone groups 1..3 are released
// progressively, group 1 being nearest the output.
// ---------------------------------------------------------------------------

template <typename S>
struct ParamEntry {
  std::string name;
  Var<S> var;
  int group = 0;
};

template <typename S>
class ParamStore {
 public:
  Var<S> add(std::string name, Tensor<S> init, int group) {
    for (const auto& e : entries_)
      if (e.name == name) throw ValidationError("duplicate parameter name: " + name);
    Var<S> v = Var<S>::leaf(std::move(init), false);
    entries_.push_back({std::move(name), v, group});
    return v;
  }

  std::vector<ParamEntry<S>>& entries() { return entries_; }
  const std::vector<ParamEntry<S>>& entries() const { return entries_; }

  const ParamEntry<S>* find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return &e;
    return nullptr;
  }

  void set_trainable_groups(int max_group) {
    for (auto& e : entries_)
      e.var.set_requires_grad(e.group == 0 || e.group <= max_group);
  }

  void zero_grads() {
    for (auto& e : entries_) e.var.zero_grad();
  }

  Index total_parameters() const {
    Index n = 0;
    for (const auto& e : entries_) n += e.var.value().numel();
    return n;
  }

  std::vector<Tensor<S>> snapshot_values() const {
    std::vector<Tensor<S>> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.var.value().clone());
    return out;
  }

  void restore_values(const std::vector<Tensor<S>>& values) {
    if (values.size() != entries_.size())
      throw ValidationError("restore: snapshot size mismatch");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      Tensor<S>& dst = entries_[i].var.mutable_value();
      if (!dst.same_shape(values[i]))
        throw ValidationError("restore: shape mismatch for " + entries_[i].name);
      std::copy(values[i].data(), values[i].data() + values[i].numel(), dst.data());
    }
  }

 private:
  std::vector<ParamEntry<S>> entries_;
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <typename S>
struct LinearLayer {
  Var<S> W, b;

  static LinearLayer create(ParamStore<S>& ps, const std::string& prefix, Index din,
                            Index dout, int group, Rng& rng, double init_scale = 1.0) {
    const double lim = init_scale * std::sqrt(6.0 / static_cast<double>(din + dout));
    return {ps.add(prefix + "/W", Tensor<S>::uniform({din, dout}, rng, -lim, lim), group),
            ps.add(prefix + "/b", Tensor<S>::zeros({dout}), group)};
  }

  Var<S> forward(const Var<S>& x) const { return linear(x, W, b); }
};

template <typename S>
struct Conv2dLayer {
  Var<S> K, b;
  Index stride = 1, pad = 0;

  static Conv2dLayer create(ParamStore<S>& ps, const std::string& prefix, Index cin,
                            Index cout, Index k, Index stride, Index pad, int group,
                            Rng& rng) {
    const double sigma = std::sqrt(2.0 / static_cast<double>(cin * k * k));
    Conv2dLayer l{ps.add(prefix + "/K", Tensor<S>::randn({cout, cin, k, k}, rng, sigma), group),
                  ps.add(prefix + "/b", Tensor<S>::zeros({cout}), group), stride, pad};
    return l;
  }

  Var<S> forward(const Var<S>& x) const { return conv2d(x, K, b, stride, pad); }
};

template <typename S>
struct Conv1dLayer {
  Var<S> K, b;
  Index dilation = 1;

  static Conv1dLayer create(ParamStore<S>& ps, const std::string& prefix, Index cin,
                            Index cout, Index k, Index dilation, int group, Rng& rng) {
    const double sigma = std::sqrt(1.0 / static_cast<double>(cin * k));
    Conv1dLayer l{ps.add(prefix + "/K", Tensor<S>::randn({k, cin, cout}, rng, sigma), group),
                  ps.add(prefix + "/b", Tensor<S>::zeros({cout}), group), dilation};
    return l;
  }

  Var<S> forward(const Var<S>& x) const { return conv1d_causal(x, K, b, dilation); }
};

// ---------------------------------------------------------------------------
// Spatial backbone: three stride-2 conv stages, global average pooling, and a
// projection. Stage nearest the input carries group tag 3, the middle stage 2,
// and the output stage plus projection 1.
// ---------------------------------------------------------------------------

template <typename S>
struct Backbone {
  BackboneSpec spec;
  Conv2dLayer<S> s1, s2, s3;
  LinearLayer<S> fc;

  static Backbone create(ParamStore<S>& ps, const std::string& prefix,
                         const BackboneSpec& spec, Rng& rng) {
    Backbone bb;
    bb.spec = spec;
    bb.s1 = Conv2dLayer<S>::create(ps, prefix + "/stage1", spec.in_channels,
                                   spec.stage_channels[0], 3, 2, 1, 3, rng);
    bb.s2 = Conv2dLayer<S>::create(ps, prefix + "/stage2", spec.stage_channels[0],
                                   spec.stage_channels[1], 3, 2, 1, 2, rng);
    bb.s3 = Conv2dLayer<S>::create(ps, prefix + "/stage3", spec.stage_channels[1],
                                   spec.stage_channels[2], 3, 2, 1, 1, rng);
    bb.fc = LinearLayer<S>::create(ps, prefix + "/fc", spec.stage_channels[2], spec.out_dim,
                                   1, rng);
    return bb;
  }

  // frames [F,C,H,W] -> [F,out_dim]
  Var<S> forward(const Var<S>& frames) const {
    const auto& v = frames.value();
    if (v.rank() != 4 || v.extent(1) != spec.in_channels || v.extent(2) != spec.in_h ||
        v.extent(3) != spec.in_w)
      throw ValidationError("backbone: expected [Fx" + std::to_string(spec.in_channels) +
                            "x" + std::to_string(spec.in_h) + "x" + std::to_string(spec.in_w) +
                            "], got " + v.shape_string());
    auto h = relu(s1.forward(frames));
    h = relu(s2.forward(h));
    h = relu(s3.forward(h));
    h = mean(h, 3);
    h = mean(h, 2);  // global average pool -> [F,C]
    return fc.forward(h);
  }
};

// ---------------------------------------------------------------------------
// Temporal convolutional network: residual stack of dilated causal conv pairs
// with dilation 2^i per level.
// ---------------------------------------------------------------------------

template <typename S>
struct TcnLevel {
  Conv1dLayer<S> c1, c2;
  std::optional<Conv1dLayer<S>> skip;  // 1x1 when channel counts differ
};

template <typename S>
struct Tcn {
  TcnSpec spec;
  Index in_dim = 0;
  std::vector<TcnLevel<S>> levels;

  static Tcn create(ParamStore<S>& ps, const std::string& prefix, Index in_dim,
                    const TcnSpec& spec, Rng& rng) {
    Tcn t;
    t.spec = spec;
    t.in_dim = in_dim;
    Index cin = in_dim;
    for (int i = 0; i < spec.levels; ++i) {
      const Index d = Index{1} << i;
      const std::string lp = prefix + "/level" + std::to_string(i);
      TcnLevel<S> lvl;
      lvl.c1 = Conv1dLayer<S>::create(ps, lp + "/c1", cin, spec.channels, spec.kernel, d, 0, rng);
      lvl.c2 = Conv1dLayer<S>::create(ps, lp + "/c2", spec.channels, spec.channels,
                                      spec.kernel, d, 0, rng);
      if (cin != spec.channels)
        lvl.skip = Conv1dLayer<S>::create(ps, lp + "/skip", cin, spec.channels, 1, 1, 0, rng);
      t.levels.push_back(std::move(lvl));
      cin = spec.channels;
    }
    return t;
  }

  // x [B,T,in_dim] -> [B,T,channels]
  Var<S> forward(const Var<S>& x, bool training, Rng& rng) const {
    const auto& v = x.value();
    if (v.rank() != 3 || v.extent(2) != in_dim)
      throw ValidationError("tcn: expected [BxTx" + std::to_string(in_dim) + "], got " +
                            v.shape_string());
    Var<S> h = x;
    for (const auto& lvl : levels) {
      auto z = dropout(relu(lvl.c1.forward(h)), spec.dropout, training, rng);
      z = dropout(relu(lvl.c2.forward(z)), spec.dropout, training, rng);
      auto s = lvl.skip ? lvl.skip->forward(h) : h;
      h = relu(add(z, s));
    }
    return h;
  }
};

// ---------------------------------------------------------------------------
// Fusion blocks
// ---------------------------------------------------------------------------

template <typename S>
struct FusionResult {
  Var<S> fused;
  Tensor<S> attention;  // CAN: [B,T,M]; LFAN: [B,T,M*T]
};

namespace detail {

template <typename S>
void check_branches(const std::vector<Var<S>>& branches) {
  require(branches.size() >= 2, "fusion: need at least 2 branches, got " +
                                    std::to_string(branches.size()));
  for (const auto& br : branches) {
    require(br.value().rank() == 3, "fusion: branches must be [BxTxD], got " +
                                        br.value().shape_string());
    require(br.value().same_shape(branches[0].value()),
            "fusion: branch shape mismatch " + br.value().shape_string() + " vs " +
                branches[0].value().shape_string());
  }
}

}  // namespace detail

// Leader-follower attention. The leader's query attends over each branch's
// keys with scaled dot-product softmax over timesteps; the per-branch attended
// values are concatenated along the feature axis into the cross-modal vector,
// which is concatenated with the leader feature and projected to fuse_dim.
template <typename S>
struct LfanFusion {
  int n_branches = 0;
  int leader = 0;
  Index branch_dim = 0, attn_dim = 0, fuse_dim = 0;
  LinearLayer<S> query;                   // leader branch only
  std::vector<LinearLayer<S>> keys, values;
  LinearLayer<S> out;

  static LfanFusion create(ParamStore<S>& ps, const std::string& prefix, int n_branches,
                           int leader, Index branch_dim, Index attn_dim, Index fuse_dim,
                           Rng& rng) {
    detail::require(leader >= 0 && leader < n_branches,
                    "lfan: leader index " + std::to_string(leader) + " out of range for " +
                        std::to_string(n_branches) + " branches");
    LfanFusion f;
    f.n_branches = n_branches;
    f.leader = leader;
    f.branch_dim = branch_dim;
    f.attn_dim = attn_dim;
    f.fuse_dim = fuse_dim;
    f.query = LinearLayer<S>::create(ps, prefix + "/query", branch_dim, attn_dim, 0, rng);
    for (int i = 0; i < n_branches; ++i) {
      f.keys.push_back(LinearLayer<S>::create(ps, prefix + "/key" + std::to_string(i),
                                              branch_dim, attn_dim, 0, rng));
      f.values.push_back(LinearLayer<S>::create(ps, prefix + "/value" + std::to_string(i),
                                                branch_dim, attn_dim, 0, rng));
    }
    f.out = LinearLayer<S>::create(ps, prefix + "/out",
                                   branch_dim + n_branches * attn_dim, fuse_dim, 0, rng);
    return f;
  }

  FusionResult<S> fuse(const std::vector<Var<S>>& branches) const {
    detail::check_branches(branches);
    detail::require(static_cast<int>(branches.size()) == n_branches,
                    "lfan: built for " + std::to_string(n_branches) + " branches, got " +
                        std::to_string(branches.size()));
    const Index B = branches[0].value().extent(0);
    const Index T = branches[0].value().extent(1);
    auto q = query.forward(branches[static_cast<std::size_t>(leader)]);  // [B,T,attn]
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(attn_dim));
    std::vector<Var<S>> attended;
    std::vector<Var<S>> rows;  // attention matrices for export
    for (int i = 0; i < n_branches; ++i) {
      auto k = keys[static_cast<std::size_t>(i)].forward(branches[static_cast<std::size_t>(i)]);
      auto v = values[static_cast<std::size_t>(i)].forward(branches[static_cast<std::size_t>(i)]);
      auto scores = scale(bmm_nt(q, k), inv_sqrt);   // [B,T,T]
      auto attn = softmax(scores, 2);
      attended.push_back(bmm_nn(attn, v));           // [B,T,attn_dim]
      rows.push_back(attn);
    }
    auto cross = concat(attended, 2);  // [B,T,M*attn]
    auto fin =
        concat(std::vector<Var<S>>{branches[static_cast<std::size_t>(leader)], cross}, 2);
    FusionResult<S> r;
    r.fused = out.forward(fin);                                          // [B,T,fuse_dim]
    Tensor<S> att({B, T, static_cast<Index>(n_branches) * T});
    for (Index b = 0; b < B; ++b)
      for (Index t = 0; t < T; ++t)
        for (int i = 0; i < n_branches; ++i)
          for (Index u = 0; u < T; ++u)
            att(b, t, static_cast<Index>(i) * T + u) = rows[static_cast<std::size_t>(i)].value()(b, t, u);
    r.attention = std::move(att);
    return r;
  }
};

// Channel attention: per timestep, concatenated branch features are mapped to
// one logit per modality; the softmax weights form a convex combination of the
// branch vectors.
template <typename S>
struct CanFusion {
  int n_branches = 0;
  Index branch_dim = 0;
  LinearLayer<S> attn;

  static CanFusion create(ParamStore<S>& ps, const std::string& prefix, int n_branches,
                          Index branch_dim, Rng& rng) {
    CanFusion f;
    f.n_branches = n_branches;
    f.branch_dim = branch_dim;
    f.attn = LinearLayer<S>::create(ps, prefix + "/attn", branch_dim * n_branches,
                                    n_branches, 0, rng);
    return f;
  }

  FusionResult<S> fuse(const std::vector<Var<S>>& branches) const {
    detail::check_branches(branches);
    detail::require(static_cast<int>(branches.size()) == n_branches,
                    "can: built for " + std::to_string(n_branches) + " branches, got " +
                        std::to_string(branches.size()));
    const Index B = branches[0].value().extent(0);
    const Index T = branches[0].value().extent(1);
    const Index D = branches[0].value().extent(2);
    auto cat = concat(branches, 2);              // [B,T,M*D]
    auto w = softmax(attn.forward(cat), 2);      // [B,T,M]
    auto w2 = reshape(w, {B * T, static_cast<Index>(n_branches)});
    Var<S> fused2d;
    for (int i = 0; i < n_branches; ++i) {
      auto term = rowwise_scale(reshape(branches[static_cast<std::size_t>(i)], {B * T, D}),
                                col(w2, i));
      fused2d = i == 0 ? term : add(fused2d, term);
    }
    FusionResult<S> r;
    r.fused = reshape(fused2d, {B, T, D});
    r.attention = w.value().clone();
    return r;
  }
};

// Values outside [-1,1] are clamped on the inference/export path only;
// training sees the raw head output.
template <typename S>
void clamp_unit(Tensor<S>& t) {
  S* d = t.data();
  for (Index i = 0, n = t.numel(); i < n; ++i)
    d[i] = std::min(S(1), std::max(S(-1), d[i]));
}

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

template <typename S>
struct ModelInput {
  Tensor<S> visual;      // [B*T,3,h,w], cropped + normalized
  Tensor<S> audio;       // [B*T,1,mel,n_patch]
  Tensor<S> linguistic;  // [B,T,768], normalized
  Index batch = 0;
  Index steps = 0;
};

template <typename S>
struct ModelOutput {
  Var<S> pred;          // [B,T,2], raw head output
  Tensor<S> attention;  // empty for unimodal models
};

template <typename S>
class AffectModel {
 public:
  AffectModel(ModelConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
    detail::require(!cfg_.modalities.empty(), "model: no modalities configured");
    detail::require(cfg_.leader >= 0 &&
                        cfg_.leader < static_cast<int>(cfg_.modalities.size()),
                    "model: leader index out of range");
    Rng rng(seed_stream(init_seed, "model-init"));
    for (const Modality m : cfg_.modalities) {
      switch (m) {
        case Modality::visual:
          visual_bb_ = Backbone<S>::create(params_, "visual_bb", cfg_.visual_backbone, rng);
          tcns_.push_back(Tcn<S>::create(params_, "tcn_visual", cfg_.visual_backbone.out_dim,
                                         branch_tcn_spec(), rng));
          break;
        case Modality::audio:
          audio_bb_ = Backbone<S>::create(params_, "audio_bb", cfg_.audio_backbone, rng);
          tcns_.push_back(Tcn<S>::create(params_, "tcn_audio", cfg_.audio_backbone.out_dim,
                                         branch_tcn_spec(), rng));
          break;
        case Modality::linguistic:
          tcns_.push_back(Tcn<S>::create(params_, "tcn_linguistic", cfg_.linguistic_dim,
                                         branch_tcn_spec(), rng));
          break;
      }
    }
    const int m = static_cast<int>(cfg_.modalities.size());
    Index head_in = cfg_.branch_dim;
    if (m >= 2) {
      if (cfg_.kind == ModelKind::lfan) {
        lfan_ = LfanFusion<S>::create(params_, "fusion", m, cfg_.leader, cfg_.branch_dim,
                                      cfg_.attn_dim, cfg_.fuse_dim, rng);
        head_in = cfg_.fuse_dim;
      } else {
        can_ = CanFusion<S>::create(params_, "fusion", m, cfg_.branch_dim, rng);
      }
    }
    head_ = LinearLayer<S>::create(params_, "head", head_in, 2, 0, rng, 0.1);
    params_.set_trainable_groups(1);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<S>& params() { return params_; }
  const ParamStore<S>& params() const { return params_; }
  void set_trainable_groups(int g) { params_.set_trainable_groups(g); }

  ModelOutput<S> forward(const ModelInput<S>& in, bool training, Rng& dropout_rng) const {
    detail::require(in.batch > 0 && in.steps > 0, "model: empty input batch");
    const Index B = in.batch, T = in.steps;
    std::vector<Var<S>> branches;
    std::size_t t_idx = 0;
    for (const Modality m : cfg_.modalities) {
      Var<S> feat;
      switch (m) {
        case Modality::visual: {
          detail::require(in.visual.defined() && in.visual.rank() == 4 &&
                              in.visual.extent(0) == B * T,
                          "model: visual input missing or mis-shaped");
          auto frames = Var<S>::constant(in.visual);
          feat = reshape(visual_bb_->forward(frames), {B, T, cfg_.visual_backbone.out_dim});
          break;
        }
        case Modality::audio: {
          detail::require(in.audio.defined() && in.audio.rank() == 4 &&
                              in.audio.extent(0) == B * T,
                          "model: audio input missing or mis-shaped");
          auto patches = Var<S>::constant(in.audio);
          feat = reshape(audio_bb_->forward(patches), {B, T, cfg_.audio_backbone.out_dim});
          break;
        }
        case Modality::linguistic: {
          detail::require(in.linguistic.defined() && in.linguistic.rank() == 3 &&
                              in.linguistic.extent(0) == B && in.linguistic.extent(1) == T &&
                              in.linguistic.extent(2) == cfg_.linguistic_dim,
                          "model: linguistic input missing or mis-shaped (want [BxTx" +
                              std::to_string(cfg_.linguistic_dim) + "])");
          feat = Var<S>::constant(in.linguistic);
          break;
        }
      }
      branches.push_back(tcns_[t_idx].forward(feat, training, dropout_rng));
      ++t_idx;
    }

    ModelOutput<S> out;
    if (branches.size() == 1) {
      out.pred = head_.forward(branches[0]);
      return out;
    }
    FusionResult<S> fr = cfg_.kind == ModelKind::lfan ? lfan_->fuse(branches)
                                                      : can_->fuse(branches);
    out.pred = head_.forward(fr.fused);
    out.attention = std::move(fr.attention);
    return out;
  }

 private:
  TcnSpec branch_tcn_spec() const {
    TcnSpec s = cfg_.tcn;
    s.channels = cfg_.branch_dim;
    return s;
  }

  ModelConfig cfg_;
  ParamStore<S> params_;
  std::optional<Backbone<S>> visual_bb_, audio_bb_;
  std::vector<Tcn<S>> tcns_;
  std::optional<LfanFusion<S>> lfan_;
  std::optional<CanFusion<S>> can_;
  LinearLayer<S> head_;
};

}  // namespace afusion
