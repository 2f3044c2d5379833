#include "ceiling/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

namespace ceiling::policy {
namespace {

constexpr std::string_view kMagic = "CEIL";

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::string_view bytes(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(bytes(1, what)[0]); }
  std::uint32_t u32(const char* what) {
    const auto s = bytes(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

void write_tensors(Writer& w, const std::vector<Matrix<float>>& tensors, const std::vector<TensorShape>& shapes) {
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& m = tensors[i];
    w.u8(static_cast<std::uint8_t>(shapes[i].rank));
    w.u32(static_cast<std::uint32_t>(m.rows()));
    if (shapes[i].rank == 2) w.u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) w.f32(m(r, c));
  }
}

std::vector<Matrix<float>> read_tensors(Reader& r, const std::vector<TensorShape>& shapes) {
  const auto count = r.u32("tensor count");
  if (count != shapes.size())
    throw CheckpointError("checkpoint has " + std::to_string(count) + " tensors, config expects " +
                          std::to_string(shapes.size()));
  std::vector<Matrix<float>> out;
  for (const auto& s : shapes) {
    const auto rank = r.u8("tensor rank");
    if (rank != s.rank) throw CheckpointError("checkpoint tensor " + s.name + " has rank " + std::to_string(rank));
    const auto rows = r.u32("tensor dims");
    const std::uint32_t cols = rank == 2 ? r.u32("tensor dims") : 1;
    if (rows != s.rows || cols != s.cols)
      throw CheckpointError("checkpoint tensor " + s.name + " has shape " + std::to_string(rows) + "x" +
                            std::to_string(cols) + ", expected " + std::to_string(s.rows) + "x" +
                            std::to_string(s.cols));
    Matrix<float> m(rows, cols);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.f32("tensor data");
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

std::string encode_checkpoint(const PolicyParams& params, const PolicyConfig& config, const SaveOptions& options) {
  check_shapes(params, config);
  const auto shapes = parameter_layout(config);
  nlohmann::json meta = {{"policy", to_json(config)},
                         {"param_version", params.version},
                         {"adam_step", params.adam_step}};
  if (options.task) meta["task"] = std::string(to_string(*options.task));
  const std::string text = meta.dump();

  Writer w;
  w.bytes(kMagic);
  w.u32(kCheckpointFormatVersion);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  write_tensors(w, params.tensors, shapes);
  const bool moments = options.include_moments && !params.adam_m.empty();
  w.u8(moments ? 1 : 0);
  if (moments) {
    write_tensors(w, params.adam_m, shapes);
    write_tensors(w, params.adam_v, shapes);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(4, "magic") != kMagic) throw CheckpointError("not a checkpoint: bad magic bytes");
  const auto version = r.u32("format version");
  if (version != kCheckpointFormatVersion)
    throw CheckpointError("unsupported checkpoint format version " + std::to_string(version));
  const auto len = r.u32("config length");
  const auto text = r.bytes(len, "config");

  Checkpoint ck;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text);
    ck.config = config_from_json(meta.at("policy"));
    ck.params.version = meta.value("param_version", std::uint64_t{0});
    ck.params.adam_step = meta.value("adam_step", std::uint64_t{0});
    if (meta.contains("task")) ck.task = parse_task(meta.at("task").get<std::string>());
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint config block is invalid: ") + e.what());
  }

  const auto shapes = parameter_layout(ck.config);
  ck.params.tensors = read_tensors(r, shapes);
  const auto flag = r.u8("moments flag");
  if (flag > 1) throw CheckpointError("checkpoint moments flag is invalid");
  if (flag == 1) {
    ck.params.adam_m = read_tensors(r, shapes);
    ck.params.adam_v = read_tensors(r, shapes);
  }
  if (!r.done()) throw CheckpointError("checkpoint has trailing bytes");
  return ck;
}

void save_checkpoint(const PolicyParams& params, const PolicyConfig& config, const std::filesystem::path& path,
                     const SaveOptions& options) {
  const auto bytes = encode_checkpoint(params, config, options);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace ceiling::policy
