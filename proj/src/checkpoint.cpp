#include "dmr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "dmr/digest.hpp"
#include "dmr/errors.hpp"

namespace dmr {

namespace {

constexpr char kMagic[8] = {'D', 'M', 'R', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void raw(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= std::uint32_t{b[static_cast<std::size_t>(k)]} << (8 * k);
    return v;
  }
  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= std::uint64_t{b[static_cast<std::size_t>(k)]} << (8 * k);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    auto b = take(n);
    return std::string(b.begin(), b.end());
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw IntegrityError("checkpoint truncated");
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct Array {
  std::uint32_t rows = 0, cols = 0;
  std::vector<double> data;
};

template <class View>
void write_arrays(Writer& w, const std::vector<View>& views, const std::string& prefix) {
  for (const auto& v : views) {
    w.str(prefix + v.name);
    w.u32(static_cast<std::uint32_t>(v.rows));
    w.u32(static_cast<std::uint32_t>(v.cols));
    for (std::size_t i = 0; i < v.size(); ++i) w.f64(v.data[i]);
  }
}

void fill(std::vector<ParameterView> views, std::map<std::string, Array>& arrays, const std::string& prefix) {
  for (auto& v : views) {
    const auto it = arrays.find(prefix + v.name);
    if (it == arrays.end()) throw IncompatibleCheckpoint("checkpoint lacks array '" + prefix + v.name + "'");
    if (it->second.rows != v.rows || it->second.cols != v.cols)
      throw IncompatibleCheckpoint("array '" + prefix + v.name + "' has shape " + std::to_string(it->second.rows) +
                                   "x" + std::to_string(it->second.cols) + ", expected " + std::to_string(v.rows) +
                                   "x" + std::to_string(v.cols));
    std::copy(it->second.data.begin(), it->second.data.end(), v.data);
    arrays.erase(it);
  }
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ExperimentConfig& config, const TrainingState& state) {
  Writer p;
  p.str(config_hash(config));
  p.str(config_to_json(config).dump());
  p.u32(static_cast<std::uint32_t>(state.next_epoch));
  p.u64(state.optimizer.step);
  p.u8(state.hard ? 1 : 0);
  if (state.hard) {
    p.u32(static_cast<std::uint32_t>(state.hard->epoch_of_selection));
    p.u32(static_cast<std::uint32_t>(state.hard->indices.size()));
    for (auto j : state.hard->indices) p.u32(j);
  }
  p.u32(3);
  p.str("masks");
  p.str(state.mask_rng.state());
  p.str("noise");
  p.str(state.noise_rng.state());
  p.str("shuffle");
  p.str(state.shuffle_rng.state());

  const auto params = parameter_views(state.params);
  const auto buffers = buffer_views(state.params);
  const auto velocity = parameter_views(state.optimizer.velocity);
  p.u32(static_cast<std::uint32_t>(params.size() + buffers.size() + velocity.size()));
  write_arrays(p, params, "");
  write_arrays(p, buffers, "");
  write_arrays(p, velocity, "velocity/");

  Writer out;
  out.raw(std::span(reinterpret_cast<const std::uint8_t*>(kMagic), sizeof kMagic));
  out.u32(kCheckpointVersion);
  out.u64(p.bytes().size());
  out.raw(p.bytes());
  out.raw(sha256(p.bytes()));
  return std::move(out.bytes());
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader frame(bytes);
  const auto magic = frame.take(sizeof kMagic);
  if (std::memcmp(magic.data(), kMagic, sizeof kMagic) != 0) throw IntegrityError("not a checkpoint archive");
  if (frame.u32() != kCheckpointVersion) throw IntegrityError("unsupported checkpoint version");
  const auto length = frame.u64();
  if (length > bytes.size()) throw IntegrityError("checkpoint truncated");
  const auto payload = frame.take(static_cast<std::size_t>(length));
  const auto stored = frame.take(32);
  if (!frame.done()) throw IntegrityError("trailing bytes after checkpoint");
  const auto digest = sha256(payload);
  if (!std::equal(digest.begin(), digest.end(), stored.begin())) throw IntegrityError("checkpoint checksum mismatch");

  Reader r(payload);
  Checkpoint ck;
  ck.config_hash = r.str();
  const auto config_json = r.str();
  try {
    ck.config = config_from_json(nlohmann::json::parse(config_json));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  if (config_hash(ck.config) != ck.config_hash) throw IntegrityError("checkpoint config hash mismatch");

  ck.state = initial_state(ck.config);
  ck.state.next_epoch = static_cast<int>(r.u32());
  ck.state.optimizer.step = r.u64();
  if (r.u8()) {
    HardSet h;
    h.epoch_of_selection = static_cast<int>(r.u32());
    const auto n = r.u32();
    for (std::uint32_t k = 0; k < n; ++k) h.indices.push_back(r.u32());
    ck.state.hard = std::move(h);
  }
  const auto n_rng = r.u32();
  for (std::uint32_t k = 0; k < n_rng; ++k) {
    const auto name = r.str();
    const auto st = r.str();
    if (name == "masks")
      ck.state.mask_rng.restore(st);
    else if (name == "noise")
      ck.state.noise_rng.restore(st);
    else if (name == "shuffle")
      ck.state.shuffle_rng.restore(st);
    else
      throw IntegrityError("unknown random stream '" + name + "'");
  }

  std::map<std::string, Array> arrays;
  const auto n_arrays = r.u32();
  for (std::uint32_t k = 0; k < n_arrays; ++k) {
    const auto name = r.str();
    Array a;
    a.rows = r.u32();
    a.cols = r.u32();
    const auto count = std::uint64_t{a.rows} * a.cols;
    if (count * 8 > payload.size()) throw IntegrityError("array '" + name + "' larger than the archive");
    a.data.resize(static_cast<std::size_t>(count));
    for (auto& x : a.data) x = r.f64();
    arrays.emplace(name, std::move(a));
  }
  if (!r.done()) throw IntegrityError("unexpected bytes at end of checkpoint payload");

  fill(parameter_views(ck.state.params), arrays, "");
  fill(buffer_views(ck.state.params), arrays, "");
  fill(parameter_views(ck.state.optimizer.velocity), arrays, "velocity/");
  if (!arrays.empty()) throw IncompatibleCheckpoint("checkpoint has unexpected array '" + arrays.begin()->first + "'");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ExperimentConfig& config, const TrainingState& state) {
  const auto bytes = serialize_checkpoint(config, state);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

void require_same_config(const Checkpoint& checkpoint, const ExperimentConfig& expected) {
  const auto h = config_hash(expected);
  if (h != checkpoint.config_hash)
    throw IncompatibleCheckpoint("config hash " + h + " does not match checkpoint " + checkpoint.config_hash);
}

void require_same_architecture(const Checkpoint& checkpoint, const ExperimentConfig& expected) {
  check_compatible(checkpoint.state.params, expected.model_config());
}

}  // namespace dmr
