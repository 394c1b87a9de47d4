#include "afusion/trial.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "afusion/io_util.hpp"
#include "afusion/logmel.hpp"
#include "afusion/ppm.hpp"
#include "afusion/wav.hpp"

namespace afusion {

namespace {

using nlohmann::json;

double parse_real(std::string_view field, const std::string& where) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw ValidationError(where + ": malformed number '" + std::string(field) + "'");
  return v;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path fp(p);
  return fp.is_absolute() ? fp : base / fp;
}

std::filesystem::path frame_path(const std::filesystem::path& dir, Index i) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%06lld.ppm", static_cast<long long>(i));
  return dir / name;
}

}  // namespace

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  const std::filesystem::path base = path.parent_path();
  std::vector<ManifestEntry> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    json j;
    try {
      j = json::parse(lines[i]);
    } catch (const json::exception& e) {
      throw ValidationError("manifest " + path.string() + " line " + std::to_string(i + 1) +
                            ": " + e.what());
    }
    try {
      ManifestEntry e;
      e.trial_id = j.at("trial_id").get<std::string>();
      e.subject_id = j.at("subject_id").get<std::string>();
      e.split = j.at("split").get<std::string>();
      e.fps = j.at("fps").get<double>();
      const json& p = j.at("paths");
      e.frames_dir = resolve(base, p.at("frames_dir").get<std::string>());
      e.wav = resolve(base, p.at("wav").get<std::string>());
      e.words_csv = resolve(base, p.value("words_csv", std::string()));
      e.linguistic_bin = resolve(base, p.value("linguistic_bin", std::string()));
      e.annotation_csv = resolve(base, p.value("annotation_csv", std::string()));
      if (e.split != "train" && e.split != "val" && e.split != "test")
        throw ValidationError("split must be train|val|test, got '" + e.split + "'");
      if (!(e.fps > 0)) throw ValidationError("fps must be positive");
      out.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw ValidationError("manifest " + path.string() + " line " + std::to_string(i + 1) +
                            ": " + ex.what());
    }
  }
  if (out.empty()) throw ValidationError("manifest " + path.string() + " has no entries");
  return out;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestEntry>& entries) {
  const std::filesystem::path base = path.parent_path();
  std::ostringstream os;
  for (const auto& e : entries) {
    json p;
    auto rel = [&](const std::filesystem::path& fp) {
      if (fp.empty()) return std::string();
      return fp.lexically_relative(base).generic_string();
    };
    p["frames_dir"] = rel(e.frames_dir);
    p["wav"] = rel(e.wav);
    p["words_csv"] = rel(e.words_csv);
    p["linguistic_bin"] = rel(e.linguistic_bin);
    p["annotation_csv"] = rel(e.annotation_csv);
    json j;
    j["trial_id"] = e.trial_id;
    j["subject_id"] = e.subject_id;
    j["split"] = e.split;
    j["fps"] = e.fps;
    j["paths"] = p;
    os << j.dump() << "\n";
  }
  atomic_write_text(path, os.str());
}

AnnotationData parse_annotations(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "valence,arousal")
    throw ValidationError("annotations " + path.string() +
                          ": missing 'valence,arousal' header");
  AnnotationData out;
  const Index n = static_cast<Index>(lines.size()) - 1;
  if (n < 1) throw ValidationError("annotations " + path.string() + ": no rows");
  out.labels = Tensor<float>({n, 2});
  out.valid.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const std::string& line = lines[static_cast<std::size_t>(i) + 1];
    const std::string where =
        "annotations " + path.string() + " line " + std::to_string(i + 2);
    const auto fields = split_csv_line(line);
    if (fields.size() != 2) throw ValidationError(where + ": expected 2 columns");
    const double v = parse_real(fields[0], where);
    const double a = parse_real(fields[1], where);
    for (double x : {v, a})
      if (x != -5.0 && (x < -1.0 || x > 1.0))
        throw ValidationError(where + ": label " + std::to_string(x) +
                              " outside [-1,1] and not the -5 sentinel");
    out.labels(i, 0) = static_cast<float>(v);
    out.labels(i, 1) = static_cast<float>(a);
    out.valid[static_cast<std::size_t>(i)] = (v != -5.0 && a != -5.0) ? 1 : 0;
  }
  return out;
}

std::vector<WordSpan> parse_words_csv(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "word,start_sec,end_sec")
    throw ValidationError("words " + path.string() +
                          ": missing 'word,start_sec,end_sec' header");
  std::vector<WordSpan> spans;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = "words " + path.string() + " line " + std::to_string(i + 1);
    const auto fields = split_csv_line(lines[i]);
    if (fields.size() != 3) throw ValidationError(where + ": expected 3 columns");
    WordSpan s;
    s.word = std::string(fields[0]);
    s.start_sec = parse_real(fields[1], where);
    s.end_sec = parse_real(fields[2], where);
    if (!(s.start_sec < s.end_sec))
      throw ValidationError(where + ": span start must precede end");
    spans.push_back(std::move(s));
  }
  return spans;
}

Tensor<float> read_linguistic_bin(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes, "linguistic " + path.string());
  r.expect_tag("LFEA");
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  if (cols != kLinguisticDim)
    r.fail("feature width " + std::to_string(cols) + ", expected " +
           std::to_string(kLinguisticDim));
  if (rows == 0) return Tensor<float>();
  Tensor<float> t({static_cast<Index>(rows), static_cast<Index>(cols)});
  r.f32_array(t.data(), static_cast<std::size_t>(t.numel()));
  r.done();
  return t;
}

void write_linguistic_bin(const std::filesystem::path& path, const Tensor<float>& rows) {
  ByteWriter w;
  w.tag("LFEA");
  const Index r = rows.defined() ? rows.extent(0) : 0;
  w.u32(static_cast<std::uint32_t>(r));
  w.u32(static_cast<std::uint32_t>(kLinguisticDim));
  if (r > 0) w.f32_array(rows.data(), static_cast<std::size_t>(rows.numel()));
  atomic_write_bytes(path, w.bytes());
}

Tensor<float> align_words_to_frames(const std::vector<WordSpan>& spans,
                                    const Tensor<float>& word_features, Index n,
                                    double fps) {
  if (!spans.empty()) {
    if (!word_features.defined() ||
        word_features.extent(0) != static_cast<Index>(spans.size()))
      throw ValidationError("align: " + std::to_string(spans.size()) + " spans but " +
                            std::to_string(word_features.defined() ? word_features.extent(0) : 0) +
                            " feature rows");
    for (std::size_t i = 1; i < spans.size(); ++i)
      if (spans[i].start_sec < spans[i - 1].end_sec)
        throw ValidationError("align: overlapping spans '" + spans[i - 1].word + "' and '" +
                              spans[i].word + "'");
  }
  Tensor<float> out({n, kLinguisticDim});
  std::size_t span_idx = 0;
  for (Index i = 0; i < n; ++i) {
    const double t0 = static_cast<double>(i) / fps;
    while (span_idx < spans.size() && spans[span_idx].end_sec <= t0) ++span_idx;
    if (span_idx < spans.size() && spans[span_idx].start_sec <= t0 &&
        t0 < spans[span_idx].end_sec) {
      std::copy(word_features.data() + static_cast<Index>(span_idx) * kLinguisticDim,
                word_features.data() + (static_cast<Index>(span_idx) + 1) * kLinguisticDim,
                out.data() + i * kLinguisticDim);
    }
  }
  return out;
}

Tensor<float> fit_length(const Tensor<float>& m, Index n) {
  if (!m.defined() || m.extent(0) < 1)
    throw ValidationError("fit_length: source has no rows");
  if (n < 1) throw ValidationError("fit_length: target length must be positive");
  const Index rows = m.extent(0);
  if (rows == n) return m;
  const Index width = m.numel() / rows;
  Shape shape = m.shape();
  shape[0] = n;
  Tensor<float> out(shape);
  const Index keep = std::min(rows, n);
  std::copy(m.data(), m.data() + keep * width, out.data());
  for (Index i = keep; i < n; ++i)  // repeat the last source row
    std::copy(m.data() + (rows - 1) * width, m.data() + rows * width,
              out.data() + i * width);
  return out;
}

TrialRecord preprocess_trial(const ManifestEntry& entry) {
  TrialRecord rec;
  rec.trial_id = entry.trial_id;
  rec.subject_id = entry.subject_id;
  rec.split = entry.split;
  rec.fps = entry.fps;

  // Trial length: annotation rows when labels exist, otherwise the highest
  // frame index present plus one.
  if (!entry.annotation_csv.empty() && std::filesystem::exists(entry.annotation_csv)) {
    AnnotationData ann = parse_annotations(entry.annotation_csv);
    rec.labels = std::move(ann.labels);
    rec.valid = std::move(ann.valid);
    rec.has_labels = true;
    rec.n = rec.labels.extent(0);
  } else {
    Index max_index = -1;
    if (!std::filesystem::is_directory(entry.frames_dir))
      throw ValidationError("trial " + entry.trial_id + ": frames dir " +
                            entry.frames_dir.string() + " does not exist");
    for (const auto& de : std::filesystem::directory_iterator(entry.frames_dir)) {
      const std::string name = de.path().filename().string();
      if (name.size() == 16 && name.starts_with("frame_") && name.ends_with(".ppm"))
        max_index = std::max(max_index, static_cast<Index>(std::stoll(name.substr(6, 6))));
    }
    if (max_index < 0)
      throw ValidationError("trial " + entry.trial_id +
                            ": no annotations and no frames to determine length");
    rec.n = max_index + 1;
    rec.labels = Tensor<float>({rec.n, 2});
    rec.valid.assign(static_cast<std::size_t>(rec.n), 0);
    rec.has_labels = false;
  }

  // Visual: zero-initialized buffer, frame files dropped in where they exist.
  rec.visual.assign(static_cast<std::size_t>(rec.n) * 3 * kImageSize * kImageSize, 0);
  for (Index i = 0; i < rec.n; ++i) {
    const auto fp = frame_path(entry.frames_dir, i);
    if (!std::filesystem::exists(fp)) continue;
    PpmImage img = read_ppm(fp);
    if (img.width != kImageSize || img.height != kImageSize)
      throw ValidationError("trial " + entry.trial_id + ": frame " + fp.string() + " is " +
                            std::to_string(img.width) + "x" + std::to_string(img.height) +
                            ", expected 48x48");
    std::copy(img.chw.begin(), img.chw.end(),
              rec.visual.begin() + static_cast<std::size_t>(i) * 3 * kImageSize * kImageSize);
  }

  // Audio: hop-locked log-mel rows, then forced to exactly N rows.
  WavData wav = read_wav(entry.wav, 16000);
  rec.logmel = fit_length(extract_logmel(wav.samples, wav.sample_rate, entry.fps), rec.n);

  // Linguistic: word spans spread over the frames they cover.
  if (!entry.words_csv.empty() && !entry.linguistic_bin.empty()) {
    const auto spans = parse_words_csv(entry.words_csv);
    const auto feats = read_linguistic_bin(entry.linguistic_bin);
    rec.linguistic = align_words_to_frames(spans, feats, rec.n, entry.fps);
    rec.has_linguistic = true;
  }
  return rec;
}

void save_record(const std::filesystem::path& path, const TrialRecord& rec) {
  ByteWriter w;
  w.tag("AFTR");
  w.u32(1);
  w.str(rec.trial_id);
  w.str(rec.subject_id);
  w.str(rec.split);
  w.f64(rec.fps);
  w.i64(rec.n);
  w.tag("VISB");
  w.u8_array(rec.visual.data(), rec.visual.size());
  w.tag("MELS");
  w.f32_array(rec.logmel.data(), static_cast<std::size_t>(rec.logmel.numel()));
  w.tag("LING");
  w.u8(rec.has_linguistic ? 1 : 0);
  if (rec.has_linguistic)
    w.f32_array(rec.linguistic.data(), static_cast<std::size_t>(rec.linguistic.numel()));
  w.tag("LABL");
  w.u8(rec.has_labels ? 1 : 0);
  w.f32_array(rec.labels.data(), static_cast<std::size_t>(rec.labels.numel()));
  w.u8_array(rec.valid.data(), rec.valid.size());
  w.tag("DONE");
  atomic_write_bytes(path, w.bytes());
}

TrialRecord load_record(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes, "record " + path.string());
  r.set_section("header");
  r.expect_tag("AFTR");
  const std::uint32_t version = r.u32();
  if (version != 1) r.fail("unknown record version " + std::to_string(version));
  TrialRecord rec;
  rec.trial_id = r.str();
  rec.subject_id = r.str();
  rec.split = r.str();
  rec.fps = r.f64();
  rec.n = r.i64();
  if (rec.n <= 0 || rec.n > (Index{1} << 32)) r.fail("bad frame count");
  r.set_section("VISB");
  r.expect_tag("VISB");
  rec.visual.resize(static_cast<std::size_t>(rec.n) * 3 * kImageSize * kImageSize);
  r.u8_array(rec.visual.data(), rec.visual.size());
  r.set_section("MELS");
  r.expect_tag("MELS");
  rec.logmel = Tensor<float>({rec.n, kMelBands});
  r.f32_array(rec.logmel.data(), static_cast<std::size_t>(rec.logmel.numel()));
  r.set_section("LING");
  r.expect_tag("LING");
  rec.has_linguistic = r.u8() != 0;
  if (rec.has_linguistic) {
    rec.linguistic = Tensor<float>({rec.n, kLinguisticDim});
    r.f32_array(rec.linguistic.data(), static_cast<std::size_t>(rec.linguistic.numel()));
  }
  r.set_section("LABL");
  r.expect_tag("LABL");
  rec.has_labels = r.u8() != 0;
  rec.labels = Tensor<float>({rec.n, 2});
  r.f32_array(rec.labels.data(), static_cast<std::size_t>(rec.labels.numel()));
  rec.valid.resize(static_cast<std::size_t>(rec.n));
  r.u8_array(rec.valid.data(), rec.valid.size());
  r.set_section("trailer");
  r.expect_tag("DONE");
  r.done();
  return rec;
}

}  // namespace afusion
