#include "freqfield/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace freqfield {

namespace {

constexpr char kMagic[8] = {'F', 'Q', 'F', 'I', 'E', 'L', 'D', '\0'};

template <typename U>
void append_le(std::vector<std::uint8_t>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<std::uint8_t>(value & 0xffu));
    value = static_cast<U>(value >> 8);
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U read_le(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("truncated container while reading ") +
                        what + " at byte " + std::to_string(pos_));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// Element <-> little-endian byte conversion through the same-width unsigned.
template <typename T>
void encode_elements(std::span<const T> values, std::vector<std::uint8_t>& out) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::uint8_t>>;
  out.reserve(out.size() + values.size() * sizeof(T));
  for (const T& v : values) append_le<U>(out, std::bit_cast<U>(v));
}

template <typename T>
T decode_element(const std::uint8_t* p) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::uint8_t>>;
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    v |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
  return std::bit_cast<T>(v);
}

}  // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::i64: return 8;
    case DType::u8: return 1;
  }
  throw FormatError("unknown dtype tag " + std::to_string(static_cast<int>(t)));
}

const char* dtype_name(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::i64: return "i64";
    case DType::u8: return "u8";
  }
  return "?";
}

std::size_t ContainerEntry::element_count() const {
  std::size_t n = 1;
  for (auto e : extents) n *= static_cast<std::size_t>(e);
  return n;
}

bool Container::contains(const std::string& name) const {
  return entries_.count(name) != 0;
}

const ContainerEntry& Container::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw FormatError("missing entry '" + name + "'");
  return it->second;
}

template <typename T>
void Container::put_array(const std::string& name, std::span<const T> values,
                          std::vector<std::uint64_t> extents) {
  if (extents.size() > 3) throw FormatError("entry rank above 3: " + name);
  ContainerEntry e;
  e.dtype = dtype_of<T>();
  e.extents = std::move(extents);
  if (e.element_count() != values.size()) {
    throw FormatError("entry '" + name + "': extents do not match " +
                      std::to_string(values.size()) + " values");
  }
  encode_elements<T>(values, e.payload);
  entries_[name] = std::move(e);
}

template <typename T>
std::vector<T> Container::get_array(const std::string& name) const {
  const auto& e = entry(name);
  const std::size_t n = e.element_count();
  std::vector<T> out(n);
  const std::uint8_t* p = e.payload.data();
  auto convert = [&](auto tag) {
    using S = decltype(tag);
    for (std::size_t i = 0; i < n; ++i)
      out[i] = static_cast<T>(decode_element<S>(p + i * sizeof(S)));
  };
  switch (e.dtype) {
    case DType::f32: convert(float{}); break;
    case DType::f64: convert(double{}); break;
    case DType::i64: convert(std::int64_t{}); break;
    case DType::u8: convert(std::uint8_t{}); break;
  }
  return out;
}

template void Container::put_array<float>(const std::string&, std::span<const float>,
                                          std::vector<std::uint64_t>);
template void Container::put_array<double>(const std::string&, std::span<const double>,
                                           std::vector<std::uint64_t>);
template void Container::put_array<std::int64_t>(const std::string&,
                                                 std::span<const std::int64_t>,
                                                 std::vector<std::uint64_t>);
template void Container::put_array<std::uint8_t>(const std::string&,
                                                 std::span<const std::uint8_t>,
                                                 std::vector<std::uint64_t>);
template std::vector<float> Container::get_array<float>(const std::string&) const;
template std::vector<double> Container::get_array<double>(const std::string&) const;
template std::vector<std::int64_t> Container::get_array<std::int64_t>(
    const std::string&) const;
template std::vector<std::uint8_t> Container::get_array<std::uint8_t>(
    const std::string&) const;

void Container::put_scalar(const std::string& name, double value) {
  put_array<double>(name, std::span<const double>(&value, 1), {});
}

void Container::put_int(const std::string& name, std::int64_t value) {
  put_array<std::int64_t>(name, std::span<const std::int64_t>(&value, 1), {});
}

void Container::put_string(const std::string& name, const std::string& value) {
  std::vector<std::uint8_t> bytes(value.begin(), value.end());
  put_array<std::uint8_t>(name, bytes, {bytes.size()});
}

double Container::get_scalar(const std::string& name) const {
  auto v = get_array<double>(name);
  if (v.size() != 1) throw FormatError("entry '" + name + "' is not a scalar");
  return v[0];
}

std::int64_t Container::get_int(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != DType::i64 || e.element_count() != 1)
    throw FormatError("entry '" + name + "' is not an integer scalar");
  return get_array<std::int64_t>(name)[0];
}

std::string Container::get_string(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dtype != DType::u8) throw FormatError("entry '" + name + "' is not a string");
  return std::string(e.payload.begin(), e.payload.end());
}

std::vector<std::uint8_t> Container::to_bytes() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  append_le<std::uint32_t>(out, kVersion);
  append_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, e] : entries_) {
    append_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(e.dtype));
    out.push_back(static_cast<std::uint8_t>(e.extents.size()));
    for (auto x : e.extents) append_le<std::uint64_t>(out, x);
    append_le<std::uint64_t>(out, e.payload.size());
    out.insert(out.end(), e.payload.begin(), e.payload.end());
  }
  return out;
}

Container Container::from_bytes(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(sizeof(kMagic), "magic");
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0)
    throw FormatError("not a checkpoint container (bad magic)");
  const auto version = r.read_le<std::uint32_t>("version");
  if (version != kVersion) {
    throw FormatError("unsupported container version " + std::to_string(version) +
                      " (this build reads version " + std::to_string(kVersion) + ")");
  }
  const auto count = r.read_le<std::uint32_t>("entry count");
  Container c;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.read_le<std::uint32_t>("name length");
    auto name_bytes = r.take(name_len, "name");
    std::string name(name_bytes.begin(), name_bytes.end());
    ContainerEntry e;
    const auto tag = r.read_le<std::uint8_t>("dtype");
    if (tag < 1 || tag > 4)
      throw FormatError("entry '" + name + "' has unknown dtype tag " + std::to_string(tag));
    e.dtype = static_cast<DType>(tag);
    const auto rank = r.read_le<std::uint8_t>("rank");
    if (rank > 3) throw FormatError("entry '" + name + "' has rank " + std::to_string(rank));
    for (std::uint8_t k = 0; k < rank; ++k) e.extents.push_back(r.read_le<std::uint64_t>("extent"));
    const auto nbytes = r.read_le<std::uint64_t>("payload size");
    if (nbytes != e.element_count() * dtype_size(e.dtype))
      throw FormatError("entry '" + name + "' payload size does not match extents");
    auto payload = r.take(nbytes, "payload");
    e.payload.assign(payload.begin(), payload.end());
    if (!c.entries_.emplace(name, std::move(e)).second)
      throw FormatError("duplicate entry '" + name + "'");
  }
  if (!r.done())
    throw FormatError("trailing bytes after entry " + std::to_string(count) + " at byte " +
                      std::to_string(r.pos()));
  return c;
}

void Container::write(const std::filesystem::path& path) const {
  const auto bytes = to_bytes();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

Container Container::read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return from_bytes(bytes);
}

bool operator==(const Container& a, const Container& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (const auto& [name, e] : a.entries_) {
    auto it = b.entries_.find(name);
    if (it == b.entries_.end()) return false;
    const auto& o = it->second;
    if (e.dtype != o.dtype || e.extents != o.extents || e.payload != o.payload) return false;
  }
  return true;
}

}  // namespace freqfield
