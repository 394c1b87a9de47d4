#include "afusion/checkpoint.hpp"

#include "afusion/io_util.hpp"

namespace afusion {

namespace {

void write_tensor(ByteWriter& w, const TensorF& t) {
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (Index i = 0; i < t.rank(); ++i) w.i64(t.extent(i));
  w.f32_array(t.data(), static_cast<std::size_t>(t.numel()));
}

TensorF read_tensor(ByteReader& r) {
  const int rank = r.u8();
  Shape shape;
  for (int i = 0; i < rank; ++i) {
    const std::int64_t e = r.i64();
    if (e <= 0 || e > (Index{1} << 40)) r.fail("bad tensor extent " + std::to_string(e));
    shape.push_back(e);
  }
  TensorF t(shape);
  r.f32_array(t.data(), static_cast<std::size_t>(t.numel()));
  return t;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const CheckpointData& c) {
  ByteWriter w;
  w.tag("ACKP");
  w.u32(kCheckpointVersion);

  w.tag("CONF");
  w.str(c.config_text);

  w.tag("PARM");
  w.u32(static_cast<std::uint32_t>(c.param_names.size()));
  for (std::size_t i = 0; i < c.param_names.size(); ++i) {
    w.str(c.param_names[i]);
    w.i32(c.param_groups[i]);
    write_tensor(w, c.param_values[i]);
  }

  w.tag("ADAM");
  w.u32(static_cast<std::uint32_t>(c.adam_t.size()));
  for (std::size_t i = 0; i < c.adam_t.size(); ++i) {
    w.i64(c.adam_t[i]);
    if (c.adam_t[i] > 0) {
      write_tensor(w, c.adam_m[i]);
      write_tensor(w, c.adam_v[i]);
    }
  }

  w.tag("SCHD");
  w.f64(c.sched.lr);
  w.f64(c.sched.best_val);
  w.i32(c.sched.epoch);
  w.i32(c.sched.warmup_left);
  w.i32(c.sched.current_group);
  w.i32(c.sched.epochs_since_best);
  w.i32(c.sched.early_stop_counter);
  w.u8(c.sched.groups_exhausted ? 1 : 0);
  w.u8(c.sched.stopped ? 1 : 0);

  w.tag("META");
  w.u64(c.run_seed);
  w.i32(c.fold);
  w.i32(c.best_epoch);
  w.u8(c.has_report ? 1 : 0);
  w.f64(c.best.valence);
  w.f64(c.best.arousal);
  w.f64(c.best.mean);

  w.tag("NORM");
  w.u8(c.has_ling_norm ? 1 : 0);
  if (c.has_ling_norm) {
    write_tensor(w, c.ling_mean);
    write_tensor(w, c.ling_std);
  }

  w.tag("DONE");
  return w.bytes();
}

CheckpointData parse_checkpoint(const std::vector<std::uint8_t>& bytes,
                                const std::string& origin) {
  ByteReader r(bytes, origin);
  r.set_section("header");
  r.expect_tag("ACKP");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    r.fail("unknown checkpoint format version " + std::to_string(version));

  CheckpointData c;
  r.set_section("CONF");
  r.expect_tag("CONF");
  c.config_text = r.str(1 << 22);

  r.set_section("PARM");
  r.expect_tag("PARM");
  const std::uint32_t np = r.u32();
  for (std::uint32_t i = 0; i < np; ++i) {
    c.param_names.push_back(r.str());
    c.param_groups.push_back(r.i32());
    c.param_values.push_back(read_tensor(r));
  }

  r.set_section("ADAM");
  r.expect_tag("ADAM");
  const std::uint32_t na = r.u32();
  if (na != np) r.fail("optimizer slot count does not match parameter count");
  for (std::uint32_t i = 0; i < na; ++i) {
    c.adam_t.push_back(r.i64());
    if (c.adam_t.back() > 0) {
      c.adam_m.push_back(read_tensor(r));
      c.adam_v.push_back(read_tensor(r));
    } else {
      c.adam_m.emplace_back();
      c.adam_v.emplace_back();
    }
  }

  r.set_section("SCHD");
  r.expect_tag("SCHD");
  c.sched.lr = r.f64();
  c.sched.best_val = r.f64();
  c.sched.epoch = r.i32();
  c.sched.warmup_left = r.i32();
  c.sched.current_group = r.i32();
  c.sched.epochs_since_best = r.i32();
  c.sched.early_stop_counter = r.i32();
  c.sched.groups_exhausted = r.u8() != 0;
  c.sched.stopped = r.u8() != 0;

  r.set_section("META");
  r.expect_tag("META");
  c.run_seed = r.u64();
  c.fold = r.i32();
  c.best_epoch = r.i32();
  c.has_report = r.u8() != 0;
  c.best.valence = r.f64();
  c.best.arousal = r.f64();
  c.best.mean = r.f64();

  r.set_section("NORM");
  r.expect_tag("NORM");
  c.has_ling_norm = r.u8() != 0;
  if (c.has_ling_norm) {
    c.ling_mean = read_tensor(r);
    c.ling_std = read_tensor(r);
  }

  r.set_section("trailer");
  r.expect_tag("DONE");
  r.done();
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointData& ckpt) {
  atomic_write_bytes(path, serialize_checkpoint(ckpt));
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file_bytes(path), "checkpoint " + path.string());
}

}  // namespace afusion
