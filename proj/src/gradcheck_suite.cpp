#include <chrono>
#include <iostream>

#include "afusion/ccc.hpp"
#include "afusion/commands.hpp"
#include "afusion/grad_check.hpp"

namespace afusion {

namespace {

using VarD = Var<double>;
using TenD = Tensor<double>;

VarD weighted(const VarD& y, const TenD& w) {
  return sum_all(mul(y, VarD::constant(w)));
}

TenD nonzero(Shape shape, Rng& rng) {
  TenD t(std::move(shape));
  for (Index i = 0; i < t.numel(); ++i) {
    const double mag = rng.uniform(0.2, 1.0);
    t.data()[i] = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

struct Suite {
  std::ostream& out;
  double max_op_err = 0.0;
  double h = 1e-4;
  std::vector<std::pair<std::string, double>> per_op;

  // accumulates the max error across instances under one operator label
  void op(const std::string& name, double err) {
    max_op_err = std::max(max_op_err, err);
    for (auto& [n, e] : per_op)
      if (n == name) {
        e = std::max(e, err);
        return;
      }
    per_op.emplace_back(name, err);
  }

  void print_ops() {
    for (const auto& [n, e] : per_op) out << "  [op] " << n << ": max rel err " << e << "\n";
  }
};

void check_operators(Suite& s) {
  for (std::uint64_t inst = 0; inst < 5; ++inst) {
    Rng rng(4000 + inst);
    const Index n = 3 + static_cast<Index>(rng.below(5));
    const Index m = 2 + static_cast<Index>(rng.below(4));
    TenD w = TenD::randn({n, m}, rng);
    TenD x = TenD::randn({n, m}, rng);

    s.op("relu", grad_check([&](const VarD& v) { return weighted(relu(v), w); },
                            nonzero({n, m}, rng), s.h));
    s.op("tanh", grad_check([&](const VarD& v) { return weighted(tanh(v), w); }, x, s.h));
    {
      auto o = VarD::constant(nonzero({n, m}, rng));
      double e = grad_check([&](const VarD& v) { return weighted(add(v, o), w); }, x, s.h);
      e = std::max(e, grad_check([&](const VarD& v) { return weighted(sub(o, v), w); }, x, s.h));
      e = std::max(e, grad_check([&](const VarD& v) { return weighted(mul(v, o), w); }, x, s.h));
      e = std::max(e, grad_check([&](const VarD& v) { return weighted(div(v, o), w); }, x, s.h));
      e = std::max(e, grad_check([&](const VarD& v) { return weighted(scale(v, 1.3), w); }, x, s.h));
      auto sc = VarD::constant(TenD::scalar(0.4));
      e = std::max(e, grad_check([&](const VarD& v) { return weighted(sub_scalar(v, sc), w); }, x, s.h));
      s.op("elementwise add/sub/mul/div/scale", e);
    }
    {
      double e = 0.0;
      for (Index ax = 0; ax < 2; ++ax) {
        TenD wr = TenD::randn({ax == 0 ? m : n}, rng);
        e = std::max(e, grad_check([&](const VarD& v) { return weighted(mean(v, ax), wr); }, x, s.h));
        e = std::max(e, grad_check([&](const VarD& v) { return weighted(variance(v, ax), wr); }, x, s.h));
        e = std::max(e, grad_check([&](const VarD& v) { return weighted(softmax(v, ax), w); }, x, s.h));
      }
      s.op("mean/variance/softmax", e);
    }
    {
      auto o = VarD::constant(TenD::randn({n, 2}, rng));
      TenD wc = TenD::randn({n, m + 2}, rng);
      double e = grad_check(
          [&](const VarD& v) { return weighted(concat<double>({v, o}, 1), wc); }, x, s.h);
      TenD wr = TenD::randn({n}, rng);
      e = std::max(e, grad_check([&](const VarD& v) { return weighted(col(v, 0), wr); }, x, s.h));
      std::vector<Index> idx = {0, n - 1, 0};
      TenD wg = TenD::randn({3, m}, rng);
      e = std::max(e, grad_check(
                          [&](const VarD& v) { return weighted(gather_rows(v, idx), wg); }, x, s.h));
      auto sv = VarD::constant(TenD::randn({n}, rng));
      e = std::max(e, grad_check(
                          [&](const VarD& v) { return weighted(rowwise_scale(v, sv), w); }, x, s.h));
      s.op("concat/col/gather/rowwise_scale", e);
    }
    {
      const Index din = 3, dout = 2;
      TenD xl = TenD::randn({n, din}, rng);
      TenD w0 = TenD::randn({din, dout}, rng);
      TenD b0 = TenD::randn({dout}, rng);
      TenD wl = TenD::randn({n, dout}, rng);
      auto xc = VarD::constant(xl);
      auto wc = VarD::constant(w0);
      auto bc = VarD::constant(b0);
      double e = grad_check([&](const VarD& v) { return weighted(linear(v, wc, bc), wl); }, xl, s.h);
      e = std::max(e, grad_check([&](const VarD& v) { return weighted(linear(xc, v, bc), wl); }, w0, s.h));
      e = std::max(e, grad_check([&](const VarD& v) { return weighted(linear(xc, wc, v), wl); }, b0, s.h));
      s.op("linear", e);
    }
    {
      const Index B = 2, T = 3, U = 4, D = 2;
      TenD a = TenD::randn({B, T, D}, rng);
      TenD b = TenD::randn({B, U, D}, rng);
      TenD wt = TenD::randn({B, T, U}, rng);
      auto ac = VarD::constant(a);
      auto bc = VarD::constant(b);
      double e = grad_check([&](const VarD& v) { return weighted(bmm_nt(v, bc), wt); }, a, s.h);
      e = std::max(e, grad_check([&](const VarD& v) { return weighted(bmm_nt(ac, v), wt); }, b, s.h));
      TenD p = TenD::randn({B, T, U}, rng);
      TenD q = TenD::randn({B, U, D}, rng);
      TenD wn = TenD::randn({B, T, D}, rng);
      auto pc = VarD::constant(p);
      auto qc = VarD::constant(q);
      e = std::max(e, grad_check([&](const VarD& v) { return weighted(bmm_nn(v, qc), wn); }, p, s.h));
      e = std::max(e, grad_check([&](const VarD& v) { return weighted(bmm_nn(pc, v), wn); }, q, s.h));
      s.op("bmm_nt/bmm_nn", e);
    }
    {
      const Index B = 1 + static_cast<Index>(rng.below(2));
      const Index T = 4 + static_cast<Index>(rng.below(3));
      const Index Ci = 1 + static_cast<Index>(rng.below(3));
      const Index Co = 1 + static_cast<Index>(rng.below(3));
      const Index k = 1 + static_cast<Index>(rng.below(3));
      const Index d = 1 + static_cast<Index>(rng.below(3));
      TenD xc1 = TenD::randn({B, T, Ci}, rng);
      TenD kk = TenD::randn({k, Ci, Co}, rng);
      TenD bb = TenD::randn({Co}, rng);
      TenD wv = TenD::randn({B, T, Co}, rng);
      auto xcc = VarD::constant(xc1);
      auto kc = VarD::constant(kk);
      auto bc = VarD::constant(bb);
      double e = grad_check(
          [&](const VarD& v) { return weighted(conv1d_causal(v, kc, bc, d), wv); }, xc1, s.h);
      e = std::max(e, grad_check(
                          [&](const VarD& v) { return weighted(conv1d_causal(xcc, v, bc, d), wv); },
                          kk, s.h));
      e = std::max(e, grad_check(
                          [&](const VarD& v) { return weighted(conv1d_causal(xcc, kc, v, d), wv); },
                          bb, s.h));
      s.op("conv1d_dilated_causal", e);
    }
    {
      const Index F = 1 + static_cast<Index>(rng.below(2));
      const Index C = 1 + static_cast<Index>(rng.below(2));
      const Index H = 4 + static_cast<Index>(rng.below(3));
      const Index W = 4 + static_cast<Index>(rng.below(3));
      const Index kh = 1 + static_cast<Index>(rng.below(3));
      const Index kw = 1 + static_cast<Index>(rng.below(3));
      const Index Co = 1 + static_cast<Index>(rng.below(2));
      const Index st = 1 + static_cast<Index>(rng.below(2));
      const Index pad = static_cast<Index>(rng.below(2));
      TenD x2 = TenD::randn({F, C, H, W}, rng);
      TenD kk = TenD::randn({Co, C, kh, kw}, rng);
      TenD bb = TenD::randn({Co}, rng);
      const Index Ho = (H + 2 * pad - kh) / st + 1;
      const Index Wo = (W + 2 * pad - kw) / st + 1;
      TenD wv = TenD::randn({F, Co, Ho, Wo}, rng);
      auto xcc = VarD::constant(x2);
      auto kc = VarD::constant(kk);
      auto bc = VarD::constant(bb);
      double e = grad_check(
          [&](const VarD& v) { return weighted(conv2d(v, kc, bc, st, pad), wv); }, x2, s.h);
      e = std::max(e, grad_check(
                          [&](const VarD& v) { return weighted(conv2d(xcc, v, bc, st, pad), wv); },
                          kk, s.h));
      e = std::max(e, grad_check(
                          [&](const VarD& v) { return weighted(conv2d(xcc, kc, v, st, pad), wv); },
                          bb, s.h));
      s.op("conv2d", e);
    }
    {
      double e = grad_check(
          [&](const VarD& v) {
            Rng fixed(555);
            return weighted(dropout(v, 0.4, true, fixed), w);
          },
          x, s.h);
      s.op("dropout (frozen mask)", e);
    }
    {
      TenD pred = TenD::randn({20, 2}, rng);
      TenD target = TenD::randn({20, 2}, rng);
      auto tc = VarD::constant(target);
      double e = grad_check([&](const VarD& v) { return ccc_loss(v, tc); }, pred, s.h);
      s.op("ccc_loss", e);
    }
  }
}

ModelConfig tiny_config(ModelKind kind, bool linguistic) {
  ModelConfig c;
  c.kind = kind;
  c.modalities = {Modality::visual, Modality::audio};
  if (linguistic) c.modalities.push_back(Modality::linguistic);
  c.leader = 0;
  c.visual_backbone = {3, 12, 12, {4, 8, 8}, 8};
  c.audio_backbone = {1, 8, 4, {4, 8, 8}, 8};
  c.tcn.levels = 2;
  c.tcn.kernel = 3;
  c.tcn.channels = 8;
  c.tcn.dropout = 0.0;
  c.branch_dim = 8;
  c.attn_dim = 4;
  c.fuse_dim = 8;
  c.n_patch = 4;
  return c;
}

double check_composed(Suite& s, ModelKind kind, bool linguistic, const char* label) {
  double worst = 0.0;
  for (std::uint64_t inst = 0; inst < 5; ++inst) {
    AffectModel<double> model(tiny_config(kind, linguistic), 9000 + inst);
    model.set_trainable_groups(3);  // exercise every parameter
    Rng drng(7100 + inst);
    const Index B = 1, T = 6;
    ModelInput<double> in;
    in.batch = B;
    in.steps = T;
    in.visual = TenD::randn({B * T, 3, 12, 12}, drng);
    in.audio = TenD::randn({B * T, 1, 8, 4}, drng);
    if (linguistic) in.linguistic = TenD::randn({B, T, 768}, drng);
    TenD target = TenD::uniform({B, T, 2}, drng, -0.8, 0.8);

    auto loss_value = [&]() {
      Rng no_drop(0);
      auto out = model.forward(in, false, no_drop);
      return ccc_loss(out.pred, Var<double>::constant(target));
    };
    model.params().zero_grads();
    loss_value().backward();

    for (auto& e : model.params().entries()) {
      TenD analytic =
          e.var.has_grad() ? e.var.grad().clone() : TenD::zeros(e.var.value().shape());
      auto eval = [&]() { return loss_value().value().item(); };
      const double err = central_diff_max_rel_err(
          eval, e.var.mutable_value(), analytic, s.h, /*max_elems=*/24,
          seed_stream(inst, e.name));
      worst = std::max(worst, err);
    }
  }
  s.out << "  [composed] " << label << ": max rel err " << worst << "\n";
  return worst;
}

}  // namespace

GradcheckOutcome run_gradcheck_suite(std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  out << "gradient verification (64-bit, h=1e-4, 5 instances per check)\n";
  Suite s{out};
  check_operators(s);
  s.print_ops();
  GradcheckOutcome r;
  r.max_operator_err = s.max_op_err;
  r.max_composed_err = std::max(check_composed(s, ModelKind::can, false, "CAN + ccc_loss"),
                                check_composed(s, ModelKind::lfan, true, "LFAN + ccc_loss"));
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.pass = r.max_operator_err < 1e-4 && r.max_composed_err < 1e-3;
  out << "operators: max rel err " << r.max_operator_err << " (tolerance 1e-4)\n";
  out << "composed models: max rel err " << r.max_composed_err << " (tolerance 1e-3)\n";
  out << "elapsed: " << r.seconds << " s\n";
  out << (r.pass ? "PASS" : "FAIL") << "\n";
  return r;
}

}  // namespace afusion
