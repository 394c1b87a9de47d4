#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "afusion/adam.hpp"
#include "afusion/ccc.hpp"
#include "afusion/checkpoint.hpp"
#include "afusion/io_util.hpp"
#include "afusion/model.hpp"
#include "afusion/scheduler.hpp"

using namespace afusion;

namespace {

ModelConfig tiny_can_config() {
  ModelConfig c;
  c.kind = ModelKind::can;
  c.modalities = {Modality::visual, Modality::audio};
  c.visual_backbone = {3, 12, 12, {4, 8, 8}, 16};
  c.audio_backbone = {1, 8, 4, {4, 8, 8}, 16};
  c.tcn.levels = 2;
  c.tcn.channels = 16;
  c.tcn.dropout = 0.0;
  c.branch_dim = 16;
  c.attn_dim = 8;
  c.fuse_dim = 16;
  return c;
}

SchedulerConfig paper_sched() { return SchedulerConfig{}; }

}  // namespace

TEST_CASE("adam: zero gradient and zero weight decay leave parameters unchanged") {
  ParamStore<float> ps;
  Rng rng(1);
  auto layer = LinearLayer<float>::create(ps, "l", 4, 3, 0, rng);
  ps.set_trainable_groups(1);
  TensorF before = layer.W.value().clone();
  for (auto& e : ps.entries()) e.var.grad();  // allocate zeros
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  Adam<float> opt(cfg);
  opt.step(ps, 1e-3);
  for (Index i = 0; i < before.numel(); ++i)
    CHECK(layer.W.value().data()[i] == before.data()[i]);
}

TEST_CASE("adam: first step magnitude is roughly lr") {
  ParamStore<float> ps;
  auto theta = ps.add("theta", TensorF::scalar(1.0f), 0);
  ps.set_trainable_groups(1);
  theta.grad().data()[0] = 1.0f;  // d(theta^2/2)/dtheta at theta=1
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  Adam<float> opt(cfg);
  const double lr = 1e-3;
  opt.step(ps, lr);
  const double delta = 1.0 - theta.value().item();
  CHECK(delta > 0.0);  // moved toward 0
  CHECK(std::abs(delta - lr) < 1e-3 * lr + 1e-9);
}

TEST_CASE("adam: frozen groups stay bit-identical over 10 steps") {
  AffectModel<float> model(tiny_can_config(), 11);
  model.set_trainable_groups(1);
  Adam<float> opt;
  Rng drng(5);
  const Index B = 1, T = 6;
  ModelInput<float> in;
  in.batch = B;
  in.steps = T;
  in.visual = TensorF::randn({B * T, 3, 12, 12}, drng);
  in.audio = TensorF::randn({B * T, 1, 8, 4}, drng);
  auto target = Var<float>::constant(TensorF::randn({B, T, 2}, drng));

  std::vector<TensorF> before;
  for (auto& e : model.params().entries()) before.push_back(e.var.value().clone());

  for (int step = 0; step < 10; ++step) {
    Rng drop(100 + step);
    auto out = model.forward(in, true, drop);
    auto loss = ccc_loss(out.pred, target);
    model.params().zero_grads();
    loss.backward();
    opt.step(model.params(), 1e-3);
  }

  auto& entries = model.params().entries();
  bool group0_changed = false;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const TensorF& now = e.var.value();
    if (e.group >= 2) {
      for (Index k = 0; k < now.numel(); ++k) CHECK(now.data()[k] == before[i].data()[k]);
      CHECK(opt.slots()[i].t == 0);  // no moment state for frozen parameters
    } else {
      for (Index k = 0; k < now.numel(); ++k)
        if (now.data()[k] != before[i].data()[k]) group0_changed = true;
    }
  }
  CHECK(group0_changed);
}

TEST_CASE("adam: non-finite gradient aborts with the parameter name") {
  ParamStore<float> ps;
  auto p = ps.add("layer/W", TensorF::zeros({3}), 0);
  ps.set_trainable_groups(1);
  p.grad().data()[1] = std::numeric_limits<float>::quiet_NaN();
  Adam<float> opt;
  bool threw = false;
  try {
    opt.step(ps, 1e-3);
  } catch (const std::runtime_error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("layer/W") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("scheduler: strictly rising validation never decays or unfreezes") {
  PlateauScheduler sched(paper_sched());
  for (int epoch = 0; epoch < 40; ++epoch) {
    auto r = sched.tick(0.1 + 0.01 * epoch);
    CHECK(r.improved);
    CHECK_FALSE(r.decayed);
    CHECK(r.unfroze_group == 0);
    CHECK_FALSE(r.stop);
    CHECK(sched.lr() == 1e-5);
  }
  CHECK(sched.current_group() == 1);
}

TEST_CASE("scheduler: plateau trace decays at 11/17/23 and unfreezes at 28") {
  PlateauScheduler sched(paper_sched());
  std::vector<int> decay_epochs;
  std::vector<std::pair<int, int>> unfreezes;
  for (int epoch = 0; epoch <= 28; ++epoch) {
    const double val = epoch <= 5 ? 0.05 * (epoch + 1) : 0.3;
    auto r = sched.tick(val);
    if (r.decayed) decay_epochs.push_back(epoch);
    if (r.unfroze_group) unfreezes.emplace_back(epoch, r.unfroze_group);
  }
  REQUIRE(decay_epochs.size() == 3);
  CHECK(decay_epochs[0] == 11);
  CHECK(decay_epochs[1] == 17);
  CHECK(decay_epochs[2] == 23);
  REQUIRE(unfreezes.size() == 1);
  CHECK(unfreezes[0].first == 28);
  CHECK(unfreezes[0].second == 2);
  CHECK(sched.lr() == 1e-5);            // reset by the unfreeze
  CHECK(sched.next_epoch_is_warmup());  // one warmup epoch follows
}

TEST_CASE("scheduler: flat validation exhausts all groups then early-stops") {
  PlateauScheduler sched(paper_sched());
  std::vector<int> decay_epochs, unfreeze_epochs;
  int exhausted_epoch = -1, stop_epoch = -1;
  for (int epoch = 0; epoch < 200; ++epoch) {
    auto r = sched.tick(0.3);
    if (r.decayed) decay_epochs.push_back(epoch);
    if (r.unfroze_group) unfreeze_epochs.push_back(epoch);
    if (r.exhausted_now) exhausted_epoch = epoch;
    if (r.stop) {
      stop_epoch = epoch;
      break;
    }
  }
  CHECK(decay_epochs == std::vector<int>{10, 16, 22, 34, 40, 46, 58, 64, 70});
  CHECK(unfreeze_epochs == std::vector<int>{27, 51});
  CHECK(exhausted_epoch == 75);
  CHECK(stop_epoch == 95);
  CHECK(sched.state().early_stop_counter == 20);
  CHECK_THROWS_AS(sched.tick(0.3), ValidationError);
}

TEST_CASE("scheduler: improvement after a decay holds the decayed rate") {
  PlateauScheduler sched(paper_sched());
  for (int epoch = 0; epoch <= 11; ++epoch) {
    const double val = epoch <= 5 ? 0.05 * (epoch + 1) : 0.3;
    sched.tick(val);
  }
  CHECK(sched.lr() == doctest::Approx(1e-6).epsilon(1e-12));
  auto r = sched.tick(0.4);  // jump
  CHECK(r.improved);
  CHECK(sched.lr() == doctest::Approx(1e-6).epsilon(1e-12));  // no rate reset
  CHECK(sched.state().epochs_since_best == 0);
}

TEST_CASE("scheduler: warmup batch ramp hits the target exactly") {
  PlateauScheduler sched(paper_sched());
  CHECK(sched.next_epoch_is_warmup());
  const Index n_batches = 4;
  for (Index b = 0; b < n_batches; ++b) {
    const double expect = 1e-8 + (1e-5 - 1e-8) * static_cast<double>(b + 1) / 4.0;
    CHECK(sched.batch_lr(b, n_batches) == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(sched.batch_lr(n_batches - 1, n_batches) == doctest::Approx(1e-5).epsilon(1e-15));
  for (int e = 0; e < 5; ++e) sched.tick(0.1 + 0.01 * e);
  CHECK_FALSE(sched.next_epoch_is_warmup());
  CHECK(sched.batch_lr(0, 4) == 1e-5);  // plateau epochs hold the current rate
}

TEST_CASE("scheduler: lr only takes decade-ladder values outside warmup") {
  PlateauScheduler sched(paper_sched());
  Rng rng(3);
  for (int epoch = 0; epoch < 120 && !sched.stopped(); ++epoch) {
    const double lr_before = sched.lr();
    if (!sched.next_epoch_is_warmup()) {
      bool ok = false;
      for (double v : {1e-5, 1e-6, 1e-7, 1e-8})
        if (std::abs(lr_before - v) < 1e-15) ok = true;
      CHECK(ok);
    }
    auto r = sched.tick(rng.uniform() < 0.2 ? rng.uniform() : 0.1);
    if (!r.unfroze_group) CHECK(sched.lr() <= lr_before * (1 + 1e-12));
  }
}

TEST_CASE("checkpoint: save -> load -> save is byte-identical") {
  Rng rng(77);
  CheckpointData c;
  c.config_text = "model=can\nlr=1e-05\n";
  c.param_names = {"a/W", "a/b"};
  c.param_groups = {0, 2};
  c.param_values = {TensorF::randn({3, 4}, rng), TensorF::randn({4}, rng)};
  c.adam_t = {5, 0};
  c.adam_m = {TensorF::randn({3, 4}, rng), TensorF()};
  c.adam_v = {TensorF::randn({3, 4}, rng), TensorF()};
  c.sched.lr = 1e-6;
  c.sched.epoch = 17;
  c.sched.best_val = 0.4321;
  c.run_seed = 99;
  c.fold = 3;
  c.has_report = true;
  c.best = {0.5, 0.6, 0.55};
  c.has_ling_norm = true;
  c.ling_mean = TensorF::randn({8}, rng);
  c.ling_std = TensorF::randn({8}, rng);

  auto bytes = serialize_checkpoint(c);
  CheckpointData back = parse_checkpoint(bytes, "test");
  auto bytes2 = serialize_checkpoint(back);
  REQUIRE(bytes.size() == bytes2.size());
  CHECK(bytes == bytes2);
  CHECK(back.sched.epoch == 17);
  CHECK(back.param_names[1] == "a/b");
  CHECK(back.adam_t[0] == 5);
  CHECK(back.best.arousal == 0.6);
}

TEST_CASE("checkpoint: truncation reported with section and offset") {
  Rng rng(78);
  CheckpointData c;
  c.config_text = "model=can\n";
  c.param_names = {"w"};
  c.param_groups = {0};
  c.param_values = {TensorF::randn({16}, rng)};
  c.adam_t = {0};
  c.adam_m = {TensorF()};
  c.adam_v = {TensorF()};
  auto bytes = serialize_checkpoint(c);
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 40);  // inside PARM
  bool threw = false;
  try {
    parse_checkpoint(cut, "test");
  } catch (const ValidationError& e) {
    threw = true;
    const std::string msg = e.what();
    CHECK(msg.find("PARM") != std::string::npos);
    CHECK(msg.find("offset") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("checkpoint: bad magic and unknown version rejected") {
  std::vector<std::uint8_t> junk = {'N', 'O', 'P', 'E', 1, 0, 0, 0};
  CHECK_THROWS_AS(parse_checkpoint(junk, "test"), ValidationError);

  CheckpointData c;
  c.adam_t = {};
  auto bytes = serialize_checkpoint(c);
  bytes[4] = 9;  // version field
  CHECK_THROWS_AS(parse_checkpoint(bytes, "test"), ValidationError);
}
