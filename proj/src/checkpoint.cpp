#include "inve/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "inve/errors.hpp"

namespace inve {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void floats(const std::vector<float>& v) { raw(v.data(), v.size() * sizeof(float)); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  void raw(void* p, std::size_t n) {
    if (pos_ + n > in_.size()) throw LoadError("checkpoint truncated at byte " + std::to_string(pos_));
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    raw(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  float f32() {
    float v;
    raw(&v, 4);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (pos_ + n > in_.size()) throw LoadError("checkpoint truncated in a name");
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<float> floats(std::size_t n) {
    if (n > (in_.size() - pos_) / sizeof(float)) throw LoadError("checkpoint truncated in a payload");
    std::vector<float> v(n);
    raw(v.data(), n * sizeof(float));
    return v;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::optional<std::uint32_t> Checkpoint::u32(const std::string& name) const {
  for (const auto& f : fields)
    if (f.name == name && std::holds_alternative<std::uint32_t>(f.value))
      return std::get<std::uint32_t>(f.value);
  return std::nullopt;
}

std::optional<float> Checkpoint::f32(const std::string& name) const {
  for (const auto& f : fields)
    if (f.name == name && std::holds_alternative<float>(f.value)) return std::get<float>(f.value);
  return std::nullopt;
}

std::uint32_t Checkpoint::require_u32(const std::string& name) const {
  auto v = u32(name);
  if (!v) throw LoadError("checkpoint header lacks u32 field '" + name + "'");
  return *v;
}

const CheckpointRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw("INVE", 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.fields.size()));
  for (const auto& f : ckpt.fields) {
    w.str(f.name);
    if (std::holds_alternative<std::uint32_t>(f.value)) {
      w.u8(0);
      w.u32(std::get<std::uint32_t>(f.value));
    } else {
      w.u8(1);
      w.f32(std::get<float>(f.value));
    }
  }
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& p : ckpt.params) {
    if (ad::shape_size(p.shape) != p.values.size())
      throw ContractViolation("checkpoint record '" + p.name + "' has inconsistent shape");
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (auto e : p.shape) w.u32(static_cast<std::uint32_t>(e));
    w.floats(p.values);
    const bool moments = !p.first.empty();
    w.u32(moments ? static_cast<std::uint32_t>(p.values.size()) : 0u);
    if (moments) {
      w.floats(p.first);
      w.floats(p.second);
    }
    w.u64(p.step);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "INVE", 4) != 0) throw LoadError("not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw LoadError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const std::uint32_t nfields = r.u32();
  for (std::uint32_t i = 0; i < nfields; ++i) {
    CheckpointField f;
    f.name = r.str();
    const std::uint8_t type = r.u8();
    if (type == 0)
      f.value = r.u32();
    else if (type == 1)
      f.value = r.f32();
    else
      throw LoadError("checkpoint field '" + f.name + "' has unknown type " + std::to_string(type));
    ckpt.fields.push_back(std::move(f));
  }
  const std::uint32_t nparams = r.u32();
  for (std::uint32_t i = 0; i < nparams; ++i) {
    CheckpointRecord p;
    p.name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw LoadError("checkpoint record '" + p.name + "' has rank " + std::to_string(rank));
    for (std::uint32_t k = 0; k < rank; ++k) p.shape.push_back(r.u32());
    p.values = r.floats(ad::shape_size(p.shape));
    const std::uint32_t nm = r.u32();
    if (nm != 0 && nm != p.values.size())
      throw LoadError("checkpoint record '" + p.name + "' has mismatched optimizer state");
    p.first = r.floats(nm);
    p.second = r.floats(nm);
    p.step = r.u64();
    ckpt.params.push_back(std::move(p));
  }
  if (!r.done()) throw LoadError("checkpoint has trailing bytes");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

CheckpointRecord to_record(const ad::Parameter<float>& p) {
  CheckpointRecord r;
  r.name = p.name;
  r.shape = p.tensor.shape();
  r.values.assign(p.tensor.values().begin(), p.tensor.values().end());
  r.first = p.adam.first;
  r.second = p.adam.second;
  r.step = p.adam.step;
  return r;
}

void from_record(const CheckpointRecord& rec, ad::Parameter<float>& p) {
  if (rec.shape != p.tensor.shape()) {
    throw LoadError("checkpoint parameter '" + rec.name + "' has shape " + ad::shape_string(rec.shape) +
                    ", model expects " + ad::shape_string(p.tensor.shape()));
  }
  std::copy(rec.values.begin(), rec.values.end(), p.tensor.values().begin());
  p.adam.first = rec.first;
  p.adam.second = rec.second;
  p.adam.step = rec.step;
}

}  // namespace inve
