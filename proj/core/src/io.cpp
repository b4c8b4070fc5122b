#include "agb/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "agb/rng.hpp"

namespace agb {

using nlohmann::json;

namespace {

enum : std::uint64_t { kTagPhantom = 1, kTagMaps = 2, kTagMask = 3 };

class Writer {
 public:
  void f32(double v) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int b = 0; b < 4; ++b) out_.push_back(static_cast<char>((bits >> (8 * b)) & 0xffU));
  }
  void byte(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void interleaved(const ComplexImage& m) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      f32(m.re()[i]);
      f32(m.im()[i]);
    }
  }
  [[nodiscard]] std::size_t size() const { return out_.size(); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}

  float f32() {
    need(4);
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(b)]))
              << (8 * b);
    pos_ += 4;
    return std::bit_cast<float>(bits);
  }
  std::uint8_t byte() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  ComplexImage interleaved(std::size_t h, std::size_t w) {
    std::vector<double> re(h * w), im(h * w);
    for (std::size_t i = 0; i < h * w; ++i) {
      re[i] = f32();
      im[i] = f32();
    }
    try {
      return {h, w, std::move(re), std::move(im)};
    } catch (const NumericError&) {
      throw DataError("file contains non-finite image values");
    }
  }
  [[nodiscard]] std::size_t pos() const { return pos_; }
  [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("file is truncated");
  }
  const std::string& bytes_;
  std::size_t pos_;
};

ComplexImage to_f32(const ComplexImage& m) {
  std::vector<double> re(m.size()), im(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    re[i] = static_cast<float>(m.re()[i]);
    im[i] = static_cast<float>(m.im()[i]);
  }
  return {m.height(), m.width(), std::move(re), std::move(im)};
}

std::pair<json, std::size_t> split_header(const std::string& bytes, const char* format) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw DataError(std::string(format) + ": missing header line");
  json h;
  try {
    h = json::parse(bytes.substr(0, nl));
  } catch (const json::exception& e) {
    throw DataError(std::string(format) + ": malformed header: " + e.what());
  }
  if (!h.is_object() || h.value("format", "") != format)
    throw DataError(std::string("not a ") + format + " file");
  return {h, nl + 1};
}

template <typename V>
V field(const json& h, const char* key) {
  if (!h.contains(key)) throw DataError(std::string("header lacks '") + key + "'");
  try {
    return h.at(key).get<V>();
  } catch (const json::exception& e) {
    throw DataError(std::string("header field '") + key + "': " + e.what());
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path);
}

Dataset generate_dataset(const DataConfig& cfg) {
  cfg.validate();
  Dataset d;
  d.header = {kDatasetVersion, cfg.height, cfg.width, cfg.n_coils, cfg.acceleration, cfg.center_lines, cfg.count,
              cfg.seed};
  for (std::size_t i = 0; i < cfg.count; ++i) {
    const auto m_f = to_f32(gen_phantom(derive_seed(cfg.seed, {i, kTagPhantom}), cfg.height, cfg.width, cfg.n_ellipses));
    auto maps = gen_sensitivity_maps(derive_seed(cfg.seed, {i, kTagMaps}), cfg.n_coils, cfg.height, cfg.width);
    for (auto& c : maps.coils) c = to_f32(c);
    const auto mask = make_vds_mask(cfg.height, cfg.width, cfg.center_lines, cfg.acceleration,
                                    derive_seed(cfg.seed, {i, kTagMask}));
    auto s = make_sample(m_f, maps, mask);
    for (auto& c : s.k_u.coils) c = to_f32(c);
    s.m_z = reconstruct(s.k_u, s.maps);
    d.samples.push_back(std::move(s));
  }
  return d;
}

std::string encode_dataset(const Dataset& d) {
  const auto& h = d.header;
  if (d.samples.size() != h.count) throw DataError("dataset header count does not match the samples");
  json j = {{"format", "agb-dataset"},   {"version", h.version}, {"height", h.height},
            {"width", h.width},          {"n_coils", h.n_coils}, {"acceleration", h.acceleration},
            {"center_lines", h.center_lines}, {"count", h.count}, {"seed", h.seed}};
  Writer w;
  for (const auto& s : d.samples) {
    if (s.m_f.height() != h.height || s.m_f.width() != h.width || s.maps.n_coils() != h.n_coils ||
        s.k_u.n_coils() != h.n_coils || s.mask.lines.size() != h.width)
      throw DataError("dataset sample does not match its header");
    w.interleaved(s.m_f);
    for (const auto& c : s.maps.coils) w.interleaved(c);
    for (auto v : s.mask.lines) w.byte(v ? 1 : 0);
    for (const auto& c : s.k_u.coils) w.interleaved(c);
  }
  return j.dump() + "\n" + w.take();
}

Dataset decode_dataset(const std::string& bytes) {
  const auto [h, start] = split_header(bytes, "agb-dataset");
  Dataset d;
  auto& hd = d.header;
  hd.version = field<int>(h, "version");
  if (hd.version != kDatasetVersion) throw DataError("unsupported dataset version " + std::to_string(hd.version));
  hd.height = field<std::size_t>(h, "height");
  hd.width = field<std::size_t>(h, "width");
  hd.n_coils = field<std::size_t>(h, "n_coils");
  hd.acceleration = field<double>(h, "acceleration");
  hd.center_lines = field<std::size_t>(h, "center_lines");
  hd.count = field<std::size_t>(h, "count");
  hd.seed = field<std::uint64_t>(h, "seed");
  if (hd.height == 0 || hd.width == 0 || hd.n_coils == 0) throw DataError("dataset header has empty dims");

  const std::size_t plane = hd.height * hd.width;
  const std::size_t per_sample = 8 * plane * (1 + 2 * hd.n_coils) + hd.width;
  if (bytes.size() - start != per_sample * hd.count)
    throw DataError("dataset payload has " + std::to_string(bytes.size() - start) + " bytes, expected " +
                    std::to_string(per_sample * hd.count));
  Reader r(bytes, start);
  for (std::size_t i = 0; i < hd.count; ++i) {
    TrainingSample s;
    s.m_f = r.interleaved(hd.height, hd.width);
    for (std::size_t c = 0; c < hd.n_coils; ++c) s.maps.coils.push_back(r.interleaved(hd.height, hd.width));
    s.mask.height = hd.height;
    s.mask.width = hd.width;
    s.mask.acceleration = hd.acceleration;
    s.mask.center_lines = hd.center_lines;
    s.mask.seed = derive_seed(hd.seed, {i, kTagMask});
    for (std::size_t x = 0; x < hd.width; ++x) {
      const auto v = r.byte();
      if (v > 1) throw DataError("dataset mask byte is neither 0 nor 1");
      s.mask.lines.push_back(v);
    }
    for (std::size_t c = 0; c < hd.n_coils; ++c) s.k_u.coils.push_back(r.interleaved(hd.height, hd.width));
    s.m_z = reconstruct(s.k_u, s.maps);
    d.samples.push_back(std::move(s));
  }
  return d;
}

void write_dataset(const Dataset& d, const std::string& path) { write_file(path, encode_dataset(d)); }

Dataset read_dataset(const std::string& path) { return decode_dataset(read_file(path)); }

namespace {

class BlobWriter {
 public:
  template <typename T>
  void add(const std::string& name, const Shape& shape, const std::vector<T>& values) {
    if (shape.numel() != values.size()) throw Error("checkpoint tensor " + name + " does not match its shape");
    tensors_.push_back({{"name", name}, {"shape", shape.dims()}, {"offset", w_.size()}});
    for (auto v : values) w_.f32(static_cast<double>(v));
  }
  json manifest() const { return tensors_; }
  std::string take() { return w_.take(); }

 private:
  Writer w_;
  json tensors_ = json::array();
};

struct TensorEntry {
  Shape shape;
  std::vector<float> values;
};

json record_json(const EpochRecord& r) {
  return {{"epoch", r.epoch}, {"nmse", r.nmse},   {"fid", r.fid},
          {"beta", r.beta},   {"g_ma", r.g_ma},   {"p_ma", r.p_ma},
          {"critic_loss", r.critic_loss}, {"gen_loss", r.gen_loss}};
}

EpochRecord record_from_json(const json& j) {
  EpochRecord r;
  r.epoch = field<std::size_t>(j, "epoch");
  r.nmse = field<double>(j, "nmse");
  r.fid = field<double>(j, "fid");
  r.beta = field<double>(j, "beta");
  r.g_ma = field<double>(j, "g_ma");
  r.p_ma = field<double>(j, "p_ma");
  r.critic_loss = field<double>(j, "critic_loss");
  r.gen_loss = field<double>(j, "gen_loss");
  return r;
}

void add_set(BlobWriter& b, const std::string& prefix, const ad::ParamSet<float>& set) {
  for (const auto& p : set) b.add(prefix + p.name, p.shape, p.value);
}

void add_moments(BlobWriter& b, const std::string& prefix, const ad::ParamSet<float>& set,
                 const ad::AdamState<float>& opt) {
  std::size_t i = 0;
  for (const auto& p : set) {
    const bool have = i < opt.m.size();
    b.add(prefix + "m/" + p.name, p.shape, have ? opt.m[i] : std::vector<float>(p.value.size(), 0.0f));
    b.add(prefix + "v/" + p.name, p.shape, have ? opt.v[i] : std::vector<float>(p.value.size(), 0.0f));
    ++i;
  }
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
  const auto& st = c.state;
  BlobWriter b;
  add_set(b, "generator/", st.params.generator);
  json history = json::array();
  if (c.kind == CheckpointKind::train) {
    add_set(b, "critic/", st.params.critic);
    for (std::size_t l = 0; l < st.params.critic_bn.size(); ++l) {
      const auto& s = st.params.critic_bn[l];
      b.add("critic_bn/" + std::to_string(l) + "/mean", Shape{s.mean.size()}, s.mean);
      b.add("critic_bn/" + std::to_string(l) + "/var", Shape{s.var.size()}, s.var);
    }
    add_moments(b, "adam/generator/", st.params.generator, st.gen_opt);
    add_moments(b, "adam/critic/", st.params.critic, st.critic_opt);
    for (const auto& snap : st.history) {
      history.push_back(snap.epoch);
      add_set(b, "history/" + std::to_string(snap.epoch) + "/", snap.params);
    }
  }
  json metrics = json::array();
  for (const auto& r : st.series.records) metrics.push_back(record_json(r));
  json m = {{"format", "agb-checkpoint"},
            {"version", kCheckpointVersion},
            {"kind", c.kind == CheckpointKind::train ? "train" : "inference"},
            {"config", to_json(c.config)},
            {"agb", {{"beta", st.agb.beta}, {"g_ma", st.agb.g_ma}, {"p_ma", st.agb.p_ma}}},
            {"epoch", st.epoch},
            {"step", st.step},
            {"selected_epoch", c.selected_epoch},
            {"adam_steps", {{"generator", st.gen_opt.step}, {"critic", st.critic_opt.step}}},
            {"metrics", metrics},
            {"history", history},
            {"tensors", b.manifest()}};
  return m.dump() + "\n" + b.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  const auto [m, start] = split_header(bytes, "agb-checkpoint");
  if (field<int>(m, "version") != kCheckpointVersion) throw DataError("unsupported checkpoint version");
  Checkpoint c;
  const auto kind = field<std::string>(m, "kind");
  if (kind == "train")
    c.kind = CheckpointKind::train;
  else if (kind == "inference")
    c.kind = CheckpointKind::inference;
  else
    throw DataError("unknown checkpoint kind " + kind);
  c.config = config_from_json(field<json>(m, "config"));
  c.selected_epoch = field<std::size_t>(m, "selected_epoch");

  auto& st = c.state;
  const auto agb = field<json>(m, "agb");
  st.agb = {c.config.train.agb, field<double>(agb, "beta"), field<double>(agb, "g_ma"), field<double>(agb, "p_ma")};
  st.epoch = field<std::size_t>(m, "epoch");
  st.step = field<std::uint64_t>(m, "step");
  for (const auto& r : field<json>(m, "metrics")) st.series.append(record_from_json(r));

  const std::size_t blob = bytes.size() - start;
  std::vector<std::pair<std::string, TensorEntry>> tensors;
  std::size_t expected = 0;
  for (const auto& t : field<json>(m, "tensors")) {
    TensorEntry e;
    e.shape = Shape(field<std::vector<std::size_t>>(t, "shape"));
    const auto offset = field<std::size_t>(t, "offset");
    if (offset != expected || offset + 4 * e.shape.numel() > blob)
      throw DataError("checkpoint tensor " + field<std::string>(t, "name") + " has an inconsistent offset");
    Reader r(bytes, start + offset);
    e.values.resize(e.shape.numel());
    for (auto& v : e.values) v = r.f32();
    expected = offset + 4 * e.shape.numel();
    tensors.emplace_back(field<std::string>(t, "name"), std::move(e));
  }
  if (expected != blob) throw DataError("checkpoint blob has trailing or missing bytes");

  std::map<std::size_t, std::size_t> history_index;
  for (const auto& e : field<json>(m, "history")) {
    history_index.emplace(e.get<std::size_t>(), st.history.size());
    st.history.push_back({e.get<std::size_t>(), {}});
  }
  std::map<std::string, std::size_t> bn_index;
  for (auto& [name, e] : tensors) {
    if (starts_with(name, "generator/")) {
      st.params.generator.add(name.substr(10), e.shape, std::move(e.values));
    } else if (starts_with(name, "critic/")) {
      st.params.critic.add(name.substr(7), e.shape, std::move(e.values));
    } else if (starts_with(name, "critic_bn/")) {
      const auto rest = name.substr(10);
      const auto slash = rest.find('/');
      const auto layer = static_cast<std::size_t>(std::stoul(rest.substr(0, slash)));
      if (layer >= st.params.critic_bn.size()) st.params.critic_bn.resize(layer + 1);
      (rest.substr(slash + 1) == "mean" ? st.params.critic_bn[layer].mean : st.params.critic_bn[layer].var) =
          std::move(e.values);
    } else if (starts_with(name, "adam/")) {
      const bool gen = starts_with(name, "adam/generator/");
      auto& opt = gen ? st.gen_opt : st.critic_opt;
      const auto rest = name.substr(gen ? 15 : 12);
      (starts_with(rest, "m/") ? opt.m : opt.v).push_back(std::move(e.values));
    } else if (starts_with(name, "history/")) {
      const auto rest = name.substr(8);
      const auto slash = rest.find('/');
      const auto epoch = static_cast<std::size_t>(std::stoul(rest.substr(0, slash)));
      const auto it = history_index.find(epoch);
      if (it == history_index.end()) throw DataError("checkpoint history tensor for unlisted epoch");
      st.history[it->second].params.add(rest.substr(slash + 1), e.shape, std::move(e.values));
    } else {
      throw DataError("unknown checkpoint tensor " + name);
    }
  }
  const auto steps = field<json>(m, "adam_steps");
  st.gen_opt.step = field<std::uint64_t>(steps, "generator");
  st.critic_opt.step = field<std::uint64_t>(steps, "critic");
  if (c.kind == CheckpointKind::train &&
      (st.gen_opt.m.size() != st.params.generator.size() || st.critic_opt.m.size() != st.params.critic.size()))
    throw DataError("checkpoint optimizer state does not cover every parameter");
  return c;
}

void write_checkpoint(const Checkpoint& c, const std::string& path) { write_file(path, encode_checkpoint(c)); }

Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

Checkpoint best_checkpoint(const ExperimentConfig& cfg, const TrainState<float>& state) {
  const auto& snap = best_snapshot(state, cfg.train);
  Checkpoint c;
  c.kind = CheckpointKind::inference;
  c.config = cfg;
  c.selected_epoch = snap.epoch;
  c.state.params.generator = snap.params;
  c.state.agb = state.agb;
  c.state.epoch = state.epoch;
  c.state.step = state.step;
  c.state.series = state.series;
  return c;
}

std::string metrics_csv(const MetricSeries& series) {
  std::string out = std::string(kMetricsCsvHeader) + "\n";
  for (const auto& r : series.records) {
    out += std::to_string(r.epoch);
    for (double v : {r.nmse, r.fid, r.beta, r.g_ma, r.p_ma, r.critic_loss, r.gen_loss}) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

std::string panel_pgm(const std::vector<ComplexImage>& panels, double scale) {
  if (panels.empty()) throw ShapeError("panel_pgm: no panels");
  if (!(scale > 0.0)) throw DataError("panel_pgm: scale must be positive");
  const std::size_t h = panels.front().height(), w = panels.front().width();
  for (const auto& p : panels)
    if (p.height() != h || p.width() != w) throw ShapeError("panel_pgm: panels differ in size");
  std::string out = "P2\n" + std::to_string(w * panels.size()) + " " + std::to_string(h) + "\n255\n";
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t k = 0; k < panels.size(); ++k)
      for (std::size_t x = 0; x < w; ++x) {
        const double v = std::clamp(std::abs(panels[k].at(y, x)) / scale, 0.0, 1.0);
        if (k || x) out += ' ';
        out += std::to_string(static_cast<int>(std::lround(v * 255.0)));
      }
    out += '\n';
  }
  return out;
}

}  // namespace agb
