#include "acseq/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "acseq/errors.hpp"

namespace acseq::core {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f64(std::string& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte(pos_ + i)) << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte(pos_ + i)) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::string line() {
    const auto nl = s_.find('\n', pos_);
    if (nl == std::string::npos) throw InvalidArgument("checkpoint: truncated header");
    std::string out = s_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    return out;
  }

  bool done() const { return pos_ == s_.size(); }

 private:
  unsigned char byte(std::size_t i) const { return static_cast<unsigned char>(s_[i]); }
  void need(std::size_t n) const {
    if (pos_ + n > s_.size()) throw InvalidArgument("checkpoint: truncated payload");
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const nlohmann::json& meta, std::span<const ParamStore* const> stores) {
  std::map<std::string, const Param*> all;
  for (const ParamStore* s : stores) {
    for (const auto& [name, id] : s->names()) {
      if (!all.emplace(name, &(*s)[id]).second) {
        throw InvalidArgument("checkpoint: duplicate parameter " + name);
      }
    }
  }
  std::string out = kCheckpointMagic;
  out += meta.dump();
  out.push_back('\n');
  for (const auto& [name, p] : all) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(p->shape.size()));
    for (auto d : p->shape) put_u32(out, d);
    for (double v : p->value) put_f64(out, v);
  }
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                      std::span<const ParamStore* const> stores) {
  write_file_atomic(path, encode_checkpoint(meta, stores));
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.line() + "\n" != kCheckpointMagic) throw InvalidArgument("checkpoint: bad magic header");
  Checkpoint ck;
  try {
    ck.meta = nlohmann::json::parse(r.line());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("checkpoint: bad metadata: ") + e.what());
  }
  while (!r.done()) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.bytes(name_len);
    const std::uint32_t rank = r.u32();
    std::vector<std::uint32_t> shape(rank);
    for (auto& d : shape) d = r.u32();
    const ParamId id = ck.params.add(name, shape, Init::Zeros);
    for (double& v : ck.params[id].value) v = r.f64();
  }
  return ck;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

void load_params(const ParamStore& src, ParamStore& dst, const std::string& prefix) {
  for (const auto& [name, id] : dst.names()) {
    if (name.rfind(prefix, 0) != 0) continue;
    if (!src.contains(name)) throw InvalidArgument("checkpoint lacks parameter " + name);
    const Param& s = src[src.id(name)];
    Param& d = dst[id];
    if (s.shape != d.shape) throw InvalidArgument("checkpoint shape mismatch for " + name);
    d.value = s.value;
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw InvalidArgument("cannot write " + tmp.string());
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!f) throw InvalidArgument("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace acseq::core
