#include "consensus/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace consensus {

namespace {

constexpr char kMagic[4] = {'C', 'F', 'U', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    }
    return v;
  }

  std::string text(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated file");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw CheckpointError(std::string("checkpoint: ") + what + " exceeds u32");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::string encode_checkpoint(const ParameterStore& store) {
  std::string out(kMagic, sizeof(kMagic));
  for (const auto& name : store.names()) {
    const Tensor& t = store.get(name);
    put_u32(out, checked_u32(name.size(), "name length"));
    out += name;
    put_u32(out, checked_u32(t.rank(), "rank"));
    for (std::size_t d : t.shape()) put_u32(out, checked_u32(d, "axis length"));
    for (double v : t.data()) put_f64(out, v);
  }
  return out;
}

ParameterStore decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("checkpoint: bad magic");
  }
  Reader in(bytes);
  in.text(sizeof(kMagic));
  ParameterStore store;
  while (!in.done()) {
    const auto name_len = static_cast<std::size_t>(in.uint(4));
    std::string name = in.text(name_len);
    const auto rank = static_cast<std::size_t>(in.uint(4));
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.uint(4));
    Tensor t(shape);
    for (double& v : t.data()) v = std::bit_cast<double>(in.uint(8));
    if (store.contains(name)) throw CheckpointError("checkpoint: duplicate tensor '" + name + "'");
    store.add(std::move(name), std::move(t));
  }
  return store;
}

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot open '" + path.string() + "' for writing");
  const std::string bytes = encode_checkpoint(store);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("checkpoint: write failed for '" + path.string() + "'");
}

ParameterStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void assign_checked(ParameterStore& target, const ParameterStore& loaded) {
  if (target.names().size() != loaded.names().size()) {
    throw CheckpointError("checkpoint: holds " + std::to_string(loaded.size()) + " tensors, model expects " +
                          std::to_string(target.size()));
  }
  for (const auto& name : target.names()) {
    if (!loaded.contains(name)) throw CheckpointError("checkpoint: missing tensor '" + name + "'");
    const Tensor& src = loaded.get(name);
    Tensor& dst = target.get(name);
    if (src.shape() != dst.shape()) {
      throw CheckpointError("checkpoint: tensor '" + name + "' has shape " + shape_str(src.shape()) +
                            ", model expects " + shape_str(dst.shape()));
    }
    dst = src;
  }
}

}  // namespace consensus
