#include "divco/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "divco/error.hpp"

namespace divco::models {
namespace {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) {
    u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(std::span<const double> v) {
    for (double x : v) f64(x);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  std::uint8_t u8() {
    const int c = in_.get();
    if (c == std::char_traits<char>::eof()) throw IoError(fmt::format("{}: truncated checkpoint", path_));
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes() {
    const std::uint64_t n = bounded(u64());
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) throw IoError(fmt::format("{}: truncated checkpoint", path_));
    return s;
  }
  std::vector<double> doubles(std::uint64_t n) {
    std::vector<double> v(bounded(n));
    for (double& x : v) x = f64();
    return v;
  }

 private:
  std::uint64_t bounded(std::uint64_t n) const {
    if (n > (std::uint64_t{1} << 32)) throw IoError(fmt::format("{}: corrupt length field", path_));
    return n;
  }

  std::istream& in_;
  std::string path_;
};

}  // namespace

nlohmann::json describe_tensors(std::span<const ad::Tensor> params) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& p : params) {
    list.push_back({{"name", p.name()}, {"rows", p.rows()}, {"cols", p.cols()}});
  }
  return list;
}

void write_checkpoint(const std::string& path, const nlohmann::json& header,
                      std::span<const ad::Tensor> params, const TrainerState* state) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path));
  Writer w(out);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(kCheckpointVersion);
  w.bytes(header.dump());
  w.u64(params.size());
  for (const auto& p : params) {
    w.u64(p.rows());
    w.u64(p.cols());
    w.doubles(p.values());
  }
  w.u8(state != nullptr ? 1 : 0);
  if (state != nullptr) {
    w.u64(state->iteration);
    w.bytes(state->rng_state);
    w.u64(state->optimizers.size());
    for (const auto& opt : state->optimizers) {
      w.i64(opt.steps);
      w.u64(opt.first.size());
      for (std::size_t i = 0; i < opt.first.size(); ++i) {
        w.u64(opt.first[i].size());
        w.doubles(opt.first[i]);
        w.doubles(opt.second[i]);
      }
    }
  }
  out.flush();
  if (!out) throw IoError(fmt::format("failed writing checkpoint '{}'", path));
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open checkpoint '{}'", path));
  char magic[sizeof(kCheckpointMagic)] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw IoError(fmt::format("'{}' is not a checkpoint (bad magic)", path));
  }
  Reader r(in, path);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError(fmt::format("'{}': unsupported checkpoint version {} (expected {})", path, version,
                              kCheckpointVersion));
  }
  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(r.bytes());
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(fmt::format("'{}': corrupt header: {}", path, e.what()));
  }
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.shape.rows = r.u64();
    t.shape.cols = r.u64();
    t.values = r.doubles(t.shape.rows * t.shape.cols);
    ckpt.tensors.push_back(std::move(t));
  }
  if (r.u8() != 0) {
    TrainerState state;
    state.iteration = r.u64();
    state.rng_state = r.bytes();
    const std::uint64_t opts = r.u64();
    for (std::uint64_t o = 0; o < opts; ++o) {
      OptimizerState opt;
      opt.steps = r.i64();
      const std::uint64_t buffers = r.u64();
      for (std::uint64_t b = 0; b < buffers; ++b) {
        const std::uint64_t len = r.u64();
        opt.first.push_back(r.doubles(len));
        opt.second.push_back(r.doubles(len));
      }
      state.optimizers.push_back(std::move(opt));
    }
    ckpt.state = std::move(state);
  }
  return ckpt;
}

void load_parameters(const Checkpoint& ckpt, std::span<ad::Tensor> params) {
  std::vector<std::string> problems;
  if (ckpt.tensors.size() != params.size()) {
    problems.push_back(fmt::format("checkpoint holds {} tensors, model declares {}",
                                   ckpt.tensors.size(), params.size()));
  }
  const auto& names = ckpt.header.contains("tensors") ? ckpt.header["tensors"] : nlohmann::json::array();
  const std::size_t n = std::min(ckpt.tensors.size(), params.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& stored = ckpt.tensors[i];
    std::string stored_name = i < names.size() ? names[i].value("name", "") : "";
    if (stored.shape != params[i].shape()) {
      problems.push_back(fmt::format("{}: checkpoint {} vs model {}", params[i].name(),
                                     stored.shape.str(), params[i].shape().str()));
    } else if (!stored_name.empty() && stored_name != params[i].name()) {
      problems.push_back(fmt::format("tensor {}: checkpoint name '{}' vs model '{}'", i, stored_name,
                                     params[i].name()));
    }
  }
  if (!problems.empty()) {
    std::string msg = "checkpoint does not match the model:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw DimensionError(msg);
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = params[i].mutable_values();
    std::copy(ckpt.tensors[i].values.begin(), ckpt.tensors[i].values.end(), dst.begin());
  }
}

}  // namespace divco::models
