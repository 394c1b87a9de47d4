#include "afusion/config.hpp"

#include <charconv>
#include <sstream>

namespace afusion {

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

double to_real(const std::string& v, const std::string& key) {
  double x = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ValidationError("config: field '" + key + "' wants a number, got '" + v + "'");
  return x;
}

std::int64_t to_int(const std::string& v, const std::string& key) {
  std::int64_t x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ValidationError("config: field '" + key + "' wants an integer, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ValidationError("config: field '" + key + "' wants a boolean, got '" + v + "'");
}

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "model") {
    if (value != "lfan" && value != "can")
      throw ValidationError("config: model must be lfan or can, got '" + value + "'");
    cfg.model = value;
  } else if (key == "modalities") {
    cfg.modalities = value;
  } else if (key == "leader") {
    cfg.leader = value;
  } else if (key == "fold") {
    cfg.fold = value;
  } else if (key == "seeds") {
    cfg.seeds = value;
  } else if (key == "fold_seed") {
    cfg.fold_seed = static_cast<std::uint64_t>(to_int(value, key));
  } else if (key == "window") {
    cfg.window = to_int(value, key);
  } else if (key == "hop") {
    cfg.hop = to_int(value, key);
  } else if (key == "batch") {
    cfg.batch = to_int(value, key);
  } else if (key == "lr") {
    cfg.lr = to_real(value, key);
  } else if (key == "min_lr") {
    cfg.min_lr = to_real(value, key);
  } else if (key == "weight_decay") {
    cfg.weight_decay = to_real(value, key);
  } else if (key == "factor") {
    cfg.factor = to_real(value, key);
  } else if (key == "patience") {
    cfg.patience = static_cast<int>(to_int(value, key));
  } else if (key == "warmup_epochs") {
    cfg.warmup_epochs = static_cast<int>(to_int(value, key));
  } else if (key == "max_epoch") {
    cfg.max_epoch = static_cast<int>(to_int(value, key));
  } else if (key == "early_stop") {
    cfg.early_stop = static_cast<int>(to_int(value, key));
  } else if (key == "dropout") {
    cfg.dropout = to_real(value, key);
  } else if (key == "tcn_levels") {
    cfg.tcn_levels = static_cast<int>(to_int(value, key));
  } else if (key == "branch_dim") {
    cfg.branch_dim = to_int(value, key);
  } else if (key == "attn_dim") {
    cfg.attn_dim = to_int(value, key);
  } else if (key == "fuse_dim") {
    cfg.fuse_dim = to_int(value, key);
  } else if (key == "n_patch") {
    cfg.n_patch = to_int(value, key);
  } else if (key == "backbone_channels") {
    cfg.backbone_channels = value;
  } else if (key == "overfit") {
    cfg.overfit = to_bool(value, key);
  } else if (key == "store") {
    cfg.store = value;
  } else if (key == "out_dir") {
    cfg.out_dir = value;
  } else {
    throw ValidationError("config: unknown field '" + key + "'");
  }
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream os;
  os << "attn_dim=" << c.attn_dim << "\n";
  os << "backbone_channels=" << c.backbone_channels << "\n";
  os << "batch=" << c.batch << "\n";
  os << "branch_dim=" << c.branch_dim << "\n";
  os << "dropout=" << fmt_real(c.dropout) << "\n";
  os << "early_stop=" << c.early_stop << "\n";
  os << "factor=" << fmt_real(c.factor) << "\n";
  os << "fold=" << c.fold << "\n";
  os << "fold_seed=" << c.fold_seed << "\n";
  os << "fuse_dim=" << c.fuse_dim << "\n";
  os << "hop=" << c.hop << "\n";
  os << "leader=" << c.leader << "\n";
  os << "lr=" << fmt_real(c.lr) << "\n";
  os << "max_epoch=" << c.max_epoch << "\n";
  os << "min_lr=" << fmt_real(c.min_lr) << "\n";
  os << "modalities=" << c.modalities << "\n";
  os << "model=" << c.model << "\n";
  os << "n_patch=" << c.n_patch << "\n";
  os << "out_dir=" << c.out_dir << "\n";
  os << "overfit=" << (c.overfit ? 1 : 0) << "\n";
  os << "patience=" << c.patience << "\n";
  os << "seeds=" << c.seeds << "\n";
  os << "store=" << c.store << "\n";
  os << "tcn_levels=" << c.tcn_levels << "\n";
  os << "warmup_epochs=" << c.warmup_epochs << "\n";
  os << "weight_decay=" << fmt_real(c.weight_decay) << "\n";
  os << "window=" << c.window << "\n";
  return os.str();
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) +
                            ": expected key=value, got '" + line + "'");
    apply_config_kv(cfg, line.substr(0, eq), line.substr(eq + 1));
  }
  return cfg;
}

std::vector<std::string> config_modalities(const RunConfig& cfg) {
  std::vector<std::string> names = split_list(cfg.modalities);
  if (names.empty())
    names = cfg.model == "lfan" ? std::vector<std::string>{"visual", "audio", "linguistic"}
                                : std::vector<std::string>{"visual", "audio"};
  for (const auto& n : names)
    if (n != "visual" && n != "audio" && n != "linguistic")
      throw ValidationError("config: unknown modality '" + n + "'");
  return names;
}

std::vector<std::uint64_t> config_seeds(const RunConfig& cfg) {
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(cfg.seeds))
    seeds.push_back(static_cast<std::uint64_t>(to_int(s, "seeds")));
  if (seeds.empty()) throw ValidationError("config: seeds list is empty");
  return seeds;
}

ModelConfig make_model_config(const RunConfig& cfg) {
  ModelConfig m;
  m.kind = cfg.model == "lfan" ? ModelKind::lfan : ModelKind::can;
  m.modalities.clear();
  int leader = -1;
  const auto names = config_modalities(cfg);
  for (const auto& n : names) {
    if (n == "visual") m.modalities.push_back(Modality::visual);
    if (n == "audio") m.modalities.push_back(Modality::audio);
    if (n == "linguistic") m.modalities.push_back(Modality::linguistic);
    if (n == cfg.leader) leader = static_cast<int>(m.modalities.size()) - 1;
  }
  if (m.kind == ModelKind::lfan && m.modalities.size() >= 2) {
    if (leader < 0)
      throw ValidationError("config: leader '" + cfg.leader +
                            "' is not among the configured modalities");
    m.leader = leader;
  }
  const auto ch = split_list(cfg.backbone_channels);
  if (ch.size() != 3)
    throw ValidationError("config: backbone_channels wants three comma-separated values");
  std::array<Index, 3> stages{};
  for (int i = 0; i < 3; ++i) stages[static_cast<std::size_t>(i)] = to_int(ch[static_cast<std::size_t>(i)], "backbone_channels");
  m.visual_backbone = BackboneSpec{3, 40, 40, stages, cfg.branch_dim};
  m.audio_backbone = BackboneSpec{1, 64, cfg.n_patch, stages, cfg.branch_dim};
  m.tcn.levels = cfg.tcn_levels;
  m.tcn.kernel = 3;
  m.tcn.channels = cfg.branch_dim;
  m.tcn.dropout = cfg.dropout;
  m.branch_dim = cfg.branch_dim;
  m.attn_dim = cfg.attn_dim;
  m.fuse_dim = cfg.fuse_dim;
  m.n_patch = cfg.n_patch;
  return m;
}

SchedulerConfig make_scheduler_config(const RunConfig& cfg) {
  SchedulerConfig s;
  s.lr = cfg.lr;
  s.min_lr = cfg.min_lr;
  s.factor = cfg.factor;
  s.patience = cfg.patience;
  s.warmup_epochs = cfg.warmup_epochs;
  s.max_group = 3;
  s.early_stop = cfg.early_stop;
  return s;
}

AdamConfig make_adam_config(const RunConfig& cfg) {
  AdamConfig a;
  a.weight_decay = cfg.weight_decay;
  return a;
}

}  // namespace afusion
