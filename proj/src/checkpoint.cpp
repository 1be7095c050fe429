#include "smt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace smt {
namespace {

constexpr char kMagic[4] = {'S', 'M', 'T', '1'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void real(Real v, ValueBits bits) {
    if (bits == ValueBits::f32) {
      f32(static_cast<float>(v));
    } else {
      f64(static_cast<double>(v));
    }
  }
  void string(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  const std::uint8_t* take(std::size_t n) {
    if (n > in_.size() - pos_) {
      throw CheckpointError(CheckpointErrorKind::truncated, "checkpoint is truncated");
    }
    const std::uint8_t* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint8_t u8() { return *take(1); }
  std::uint32_t u32() {
    const auto* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  float f32() { return std::bit_cast<float>(u32()); }
  Real real(ValueBits bits) {
    return bits == ValueBits::f32 ? static_cast<Real>(f32()) : static_cast<Real>(f64());
  }
  std::string string() {
    const std::uint64_t n = u64();
    if (n > in_.size() - pos_) {
      throw CheckpointError(CheckpointErrorKind::truncated, "checkpoint is truncated");
    }
    const auto* p = take(static_cast<std::size_t>(n));
    return std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(n));
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

Real round_to(Real v, ValueBits bits) {
  return bits == ValueBits::f32 ? static_cast<Real>(static_cast<float>(v)) : v;
}

std::vector<Real> type_constants(const SmtConfig& cfg) {
  std::vector<Real> out;
  for (std::size_t f = 0; f < cfg.frames_used(); ++f) out.push_back(image_type_value(cfg, f));
  if (cfg.uses_series()) out.push_back(series_type_value(cfg));
  return out;
}

std::set<std::string> reserved_keys() {
  KeyValues kv;
  SmtConfig{}.write(kv);
  TrainConfig{}.write(kv);
  std::set<std::string> out;
  for (const auto& [k, v] : kv.entries()) out.insert(k);
  return out;
}

[[noreturn]] void malformed(const std::string& what) {
  throw CheckpointError(CheckpointErrorKind::malformed, "malformed checkpoint: " + what);
}

}  // namespace

Checkpoint make_checkpoint(const SmtConfig& model_config, const TrainConfig& train_config,
                           const KeyValues& run_settings, const std::vector<Parameter>& params,
                           ValueBits bits, const OptimizerState* optimizer) {
  Checkpoint c;
  c.model_config = model_config;
  c.train_config = train_config;
  const auto reserved = reserved_keys();
  for (const auto& [k, v] : run_settings.entries()) {
    if (!reserved.count(k)) c.run_settings.set(k, v);
  }
  c.bits = bits;
  c.params = params;
  for (auto& p : c.params) {
    p.value.clear_grad();
    for (auto& v : p.value.values) v = round_to(v, bits);
  }
  if (optimizer) {
    OptimizerState s = *optimizer;
    for (auto* moments : {&s.first_moment, &s.second_moment}) {
      for (auto& arr : *moments)
        for (auto& v : arr) v = round_to(v, bits);
    }
    c.optimizer = std::move(s);
  }
  return c;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.bits));

  KeyValues kv;
  ckpt.model_config.write(kv);
  ckpt.train_config.write(kv);
  const auto reserved = reserved_keys();
  for (const auto& [k, v] : ckpt.run_settings.entries()) {
    if (!reserved.count(k)) kv.set(k, v);
  }
  w.string(kv.to_text());

  const auto types = type_constants(ckpt.model_config);
  w.u32(static_cast<std::uint32_t>(types.size()));
  for (auto t : types) w.f64(t);

  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    w.string(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape) w.u64(d);
    for (auto v : p.value.values) w.real(v, ckpt.bits);
  }

  w.u8(ckpt.optimizer ? 1 : 0);
  if (ckpt.optimizer) {
    const OptimizerState& s = *ckpt.optimizer;
    if (s.first_moment.size() != ckpt.params.size() || s.second_moment.size() != ckpt.params.size()) {
      throw DimensionError("checkpoint optimizer state does not match parameters");
    }
    w.u64(s.step);
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
      if (s.first_moment[i].size() != ckpt.params[i].value.size() ||
          s.second_moment[i].size() != ckpt.params[i].value.size()) {
        throw DimensionError("checkpoint optimizer moments for " + ckpt.params[i].name + " have the wrong size");
      }
      for (auto v : s.first_moment[i]) w.real(v, ckpt.bits);
      for (auto v : s.second_moment[i]) w.real(v, ckpt.bits);
    }
  }

  w.f64(ckpt.best_val_loss);
  w.u32(ckpt.epoch);
  w.u32(ckpt.best_epoch);
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError(CheckpointErrorKind::bad_magic, "not an SMT checkpoint (bad magic)");
  }
  r.take(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrorKind::version_skew,
                          "checkpoint format version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
  }
  Checkpoint c;
  const std::uint32_t bits = r.u32();
  if (bits != 32 && bits != 64) malformed("value width " + std::to_string(bits));
  c.bits = static_cast<ValueBits>(bits);

  KeyValues kv;
  try {
    kv = KeyValues::parse(r.string());
    c.model_config = SmtConfig::read(kv);
    c.train_config = TrainConfig::read(kv);
    c.model_config.validate();
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    malformed(std::string("settings: ") + e.what());
  }
  const auto reserved = reserved_keys();
  for (const auto& [k, v] : kv.entries()) {
    if (!reserved.count(k)) c.run_settings.set(k, v);
  }

  const auto expected_types = type_constants(c.model_config);
  const std::uint32_t n_types = r.u32();
  if (n_types != expected_types.size()) malformed("modality type constant count");
  for (std::uint32_t i = 0; i < n_types; ++i) {
    if (r.f64() != expected_types[i]) malformed("modality type constants differ from this build");
  }

  const auto layout = SmtModel::layout(c.model_config);
  const std::uint32_t n_params = r.u32();
  if (n_params != layout.size()) malformed("parameter count does not match the model settings");
  for (std::uint32_t i = 0; i < n_params; ++i) {
    Parameter p;
    p.name = r.string();
    const std::uint32_t rank = r.u32();
    if (rank > 8) malformed("parameter rank");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
    if (p.name != layout[i].name || shape != layout[i].value.shape) {
      malformed("parameter " + p.name + " " + shape_to_string(shape) + " where " + layout[i].name + " " +
                shape_to_string(layout[i].value.shape) + " was expected");
    }
    p.value = Tensor(shape);
    for (auto& v : p.value.values) v = r.real(c.bits);
    p.decay = layout[i].decay;
    c.params.push_back(std::move(p));
  }

  const std::uint8_t has_opt = r.u8();
  if (has_opt > 1) malformed("optimizer flag");
  if (has_opt) {
    OptimizerState s;
    s.step = r.u64();
    for (const auto& p : c.params) {
      std::vector<Real> m(p.value.size()), v(p.value.size());
      for (auto& x : m) x = r.real(c.bits);
      for (auto& x : v) x = r.real(c.bits);
      s.first_moment.push_back(std::move(m));
      s.second_moment.push_back(std::move(v));
    }
    c.optimizer = std::move(s);
  }

  c.best_val_loss = r.f64();
  c.epoch = r.u32();
  c.best_epoch = r.u32();
  if (!r.at_end()) malformed("trailing bytes");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
  return deserialize_checkpoint(bytes);
}

}  // namespace smt
