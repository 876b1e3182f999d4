#include "tunet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace tunet::io {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {
constexpr char kMagic[4] = {'T', 'U', 'N', 'W'};

std::size_t dtype_size(DType d) { return d == DType::F32 ? 4 : 8; }

class Writer {
 public:
  template <typename U>
  void pod(U v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    out.insert(out.end(), p, p + sizeof(U));
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    out.insert(out.end(), p, p + n);
  }
  std::vector<unsigned char> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& b) : bytes(b) {}
  template <typename U>
  U pod(const char* what) {
    U v;
    raw(&v, sizeof(U), what);
    return v;
  }
  void raw(void* dst, std::size_t n, const char* what) {
    if (n > bytes.size() - pos) throw std::runtime_error(std::string("checkpoint truncated while reading ") + what);
    std::memcpy(dst, bytes.data() + pos, n);
    pos += n;
  }
  const std::vector<unsigned char>& bytes;
  std::size_t pos = 0;
};

std::uint64_t numel(const std::vector<std::uint64_t>& shape) {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}
}  // namespace

const Record* Checkpoint::find(const std::string& name) const {
  for (const auto& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

template <typename T>
void Checkpoint::add(const std::string& name, const ad::Tensor<T>& t) {
  if (find(name)) throw std::invalid_argument("checkpoint: duplicate record '" + name + "'");
  Record r;
  r.name = name;
  r.dtype = dtype_of<T>();
  r.shape.assign(t.shape().begin(), t.shape().end());
  const auto d = t.data();
  r.bytes.resize(d.size() * sizeof(T));
  if (!d.empty()) std::memcpy(r.bytes.data(), d.data(), r.bytes.size());
  records.push_back(std::move(r));
}

template <typename T>
void Checkpoint::add(const std::string& name, const std::vector<T>& values) {
  add(name, ad::Tensor<T>({values.size()}, values));
}

template <typename T>
void Checkpoint::read_into(const std::string& name, ad::Tensor<T>& t) const {
  const Record* r = find(name);
  if (!r) throw std::runtime_error("checkpoint: missing record '" + name + "'");
  if (r->dtype != dtype_of<T>()) throw std::runtime_error("checkpoint: record '" + name + "' has a different dtype");
  const std::vector<std::uint64_t> want(t.shape().begin(), t.shape().end());
  if (r->shape != want) {
    ad::Shape got(r->shape.begin(), r->shape.end());
    throw std::runtime_error("checkpoint: record '" + name + "' has shape " + ad::shape_str(got) + ", expected " +
                             ad::shape_str(t.shape()));
  }
  auto d = t.mutable_data();
  if (!d.empty()) std::memcpy(d.data(), r->bytes.data(), r->bytes.size());
}

template <typename T>
std::vector<T> Checkpoint::read_vector(const std::string& name) const {
  const Record* r = find(name);
  if (!r) throw std::runtime_error("checkpoint: missing record '" + name + "'");
  if (r->dtype != dtype_of<T>() || r->shape.size() != 1) {
    throw std::runtime_error("checkpoint: record '" + name + "' is not a flat vector of the requested dtype");
  }
  std::vector<T> out(r->shape[0]);
  if (!out.empty()) std::memcpy(out.data(), r->bytes.data(), r->bytes.size());
  return out;
}

std::vector<unsigned char> Checkpoint::serialize() const {
  Writer w;
  w.raw(kMagic, 4);
  w.pod<std::uint32_t>(version);
  const std::string cfg = config.format();
  w.pod<std::uint64_t>(cfg.size());
  w.raw(cfg.data(), cfg.size());
  w.pod<std::uint64_t>(records.size());
  for (const auto& r : records) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(r.name.size()));
    w.raw(r.name.data(), r.name.size());
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(r.dtype));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) w.pod<std::uint64_t>(d);
    w.raw(r.bytes.data(), r.bytes.size());
  }
  return std::move(w.out);
}

Checkpoint Checkpoint::deserialize(const std::vector<unsigned char>& bytes) {
  Reader rd(bytes);
  char magic[4];
  rd.raw(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("checkpoint: bad magic (expected TUNW)");
  Checkpoint c;
  c.version = rd.pod<std::uint32_t>("version");
  if (c.version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(c.version));
  }
  const auto cfg_len = rd.pod<std::uint64_t>("config length");
  if (cfg_len > bytes.size()) throw std::runtime_error("checkpoint truncated while reading config");
  std::string cfg(cfg_len, '\0');
  rd.raw(cfg.data(), cfg_len, "config");
  c.config = KeyValues::parse(cfg);
  const auto count = rd.pod<std::uint64_t>("record count");
  for (std::uint64_t i = 0; i < count; ++i) {
    Record r;
    const auto name_len = rd.pod<std::uint32_t>("record name length");
    if (name_len > bytes.size()) throw std::runtime_error("checkpoint truncated while reading record name");
    r.name.resize(name_len);
    rd.raw(r.name.data(), name_len, "record name");
    const auto dt = rd.pod<std::uint8_t>("dtype");
    if (dt > 1) throw std::runtime_error("checkpoint: record '" + r.name + "' has unknown dtype");
    r.dtype = static_cast<DType>(dt);
    const auto rank = rd.pod<std::uint32_t>("rank");
    if (rank > 16) throw std::runtime_error("checkpoint: record '" + r.name + "' has implausible rank");
    r.shape.resize(rank);
    for (auto& d : r.shape) d = rd.pod<std::uint64_t>("dims");
    const std::uint64_t n = numel(r.shape) * dtype_size(r.dtype);
    if (n > bytes.size()) throw std::runtime_error("checkpoint truncated while reading '" + r.name + "'");
    r.bytes.resize(n);
    rd.raw(r.bytes.data(), n, "record data");
    c.records.push_back(std::move(r));
  }
  if (rd.pos != bytes.size()) throw std::runtime_error("checkpoint: trailing bytes after last record");
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot write " + tmp);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

template <typename T>
Checkpoint model_checkpoint(const model::TUNet<T>& net, const KeyValues& extra_config) {
  Checkpoint c;
  c.config = net.config().to_key_values();
  for (const auto& [k, v] : extra_config.entries) c.config.set(k, v);
  for (const auto& p : net.parameters()) c.add("param." + p.name, p.tensor);
  for (const auto& b : net.buffers()) c.add("buffer." + b.name, b.tensor);
  return c;
}

template <typename T>
void load_model_state(const Checkpoint& ckpt, model::TUNet<T>& net) {
  for (auto& p : net.parameters()) ckpt.read_into("param." + p.name, p.tensor);
  for (auto& b : net.buffers()) ckpt.read_into("buffer." + b.name, b.tensor);
}

model::TUNetConfig model_config(const Checkpoint& ckpt) {
  model::TUNetConfig c;
  for (const auto& [k, v] : ckpt.config.entries) c.apply(k, v);
  c.validate();
  return c;
}

#define TUNET_INSTANTIATE(T)                                                                \
  template void Checkpoint::add<T>(const std::string&, const ad::Tensor<T>&);                \
  template void Checkpoint::add<T>(const std::string&, const std::vector<T>&);               \
  template void Checkpoint::read_into<T>(const std::string&, ad::Tensor<T>&) const;          \
  template std::vector<T> Checkpoint::read_vector<T>(const std::string&) const;              \
  template Checkpoint model_checkpoint<T>(const model::TUNet<T>&, const KeyValues&);         \
  template void load_model_state<T>(const Checkpoint&, model::TUNet<T>&);

TUNET_INSTANTIATE(float)
TUNET_INSTANTIATE(double)
#undef TUNET_INSTANTIATE

}  // namespace tunet::io
