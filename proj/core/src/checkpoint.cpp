#include "pcdiag/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "pcdiag/error.hpp"

namespace pcdiag::nets {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'D', 'G'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > size_ - pos_) fail(ErrorKind::corruption, "checkpoint truncated at byte " + std::to_string(pos_));
    const auto* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == size_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(0L, data, static_cast<uInt>(n)));
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Classifier& model, const CheckpointMeta& meta) {
  auto header = nlohmann::json::parse(to_json(model.spec()));
  header["seed"] = meta.seed;
  try {
    header["training"] = nlohmann::json::parse(meta.training);
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::value, "training echo is not valid JSON");
  }
  const std::string text = header.dump();

  Writer w;
  w.put_bytes(kMagic, 4);
  w.put(kVersion);
  w.put(static_cast<std::uint32_t>(text.size()));
  w.put_bytes(text.data(), text.size());
  const auto& params = model.parameters();
  w.put(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.put(static_cast<std::uint16_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) w.put(static_cast<std::uint32_t>(d));
    w.put_bytes(t.values().data(), t.size() * sizeof(double));
  }
  w.put(crc_of(w.bytes.data(), w.bytes.size()));
  return std::move(w.bytes);
}

LoadedModel deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail(ErrorKind::format, "not a checkpoint (bad magic)");
  }
  Reader r(bytes.data(), bytes.size());
  r.take(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    fail(ErrorKind::format, "unsupported checkpoint version " + std::to_string(version));
  }
  if (bytes.size() < 12) fail(ErrorKind::corruption, "checkpoint truncated");
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  if (crc_of(bytes.data(), bytes.size() - 4) != stored_crc) {
    fail(ErrorKind::corruption, "checkpoint CRC mismatch (truncated or damaged file)");
  }
  Reader body(bytes.data() + 8, bytes.size() - 12);
  const auto text_len = body.get<std::uint32_t>();
  const auto* text = body.take(text_len);
  const std::string header_text(reinterpret_cast<const char*>(text), text_len);

  CheckpointMeta meta;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
    meta.seed = header.value("seed", std::uint64_t{0});
    meta.training = header.contains("training") ? header["training"].dump() : "{}";
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::corruption, std::string("checkpoint header: ") + e.what());
  }
  NetworkSpec spec = spec_from_json(header_text);

  ag::ParameterSet params;
  const auto count = body.get<std::uint32_t>();
  for (std::uint32_t a = 0; a < count; ++a) {
    const auto name_len = body.get<std::uint16_t>();
    const auto* name = body.take(name_len);
    const auto rank = body.get<std::uint8_t>();
    ag::Shape shape(rank);
    for (auto& d : shape) d = body.get<std::uint32_t>();
    std::vector<double> values(ag::numel(shape));
    std::memcpy(values.data(), body.take(values.size() * sizeof(double)), values.size() * sizeof(double));
    params.add(std::string(reinterpret_cast<const char*>(name), name_len), std::move(shape), std::move(values));
  }
  if (!body.done()) fail(ErrorKind::corruption, "trailing bytes after the last array");
  return {Classifier(std::move(spec), std::move(params)), std::move(meta)};
}

void save_checkpoint(const Classifier& model, const std::filesystem::path& path, const CheckpointMeta& meta) {
  const auto bytes = serialize_checkpoint(model, meta);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

LoadedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace pcdiag::nets
