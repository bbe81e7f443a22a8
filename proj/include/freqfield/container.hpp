#pragma once

// Self-describing binary container used for checkpoints.
//
// File layout (all integers little-endian):
//   magic    8 bytes  "FQFIELD\0"
//   version  u32
//   count    u32      number of entries
//   entries  count x {
//     name_len u32, name bytes (UTF-8),
//     dtype    u8   (1=f32, 2=f64, 3=i64, 4=u8),
//     rank     u8   (0..3; rank 0 is a scalar),
//     extents  rank x u64,
//     nbytes   u64, payload (little-endian elements, row-major)
//   }

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "freqfield/ndgrid.hpp"

namespace freqfield {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { f32 = 1, f64 = 2, i64 = 3, u8 = 4 };

std::size_t dtype_size(DType t);
const char* dtype_name(DType t);

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }
template <>
constexpr DType dtype_of<std::int64_t>() { return DType::i64; }
template <>
constexpr DType dtype_of<std::uint8_t>() { return DType::u8; }

struct ContainerEntry {
  DType dtype = DType::f64;
  std::vector<std::uint64_t> extents;  // empty for scalars
  std::vector<std::uint8_t> payload;   // little-endian bytes

  std::size_t element_count() const;
};

class Container {
 public:
  static constexpr std::uint32_t kVersion = 1;

  Container() = default;

  bool contains(const std::string& name) const;
  const ContainerEntry& entry(const std::string& name) const;
  const std::map<std::string, ContainerEntry>& entries() const { return entries_; }

  template <typename T>
  void put_array(const std::string& name, std::span<const T> values,
                 std::vector<std::uint64_t> extents);

  template <typename T, std::size_t Rank>
  void put_grid(const std::string& name, const Grid<T, Rank>& g) {
    std::vector<std::uint64_t> ext(g.shape().begin(), g.shape().end());
    put_array<T>(name, g.data(), std::move(ext));
  }

  void put_scalar(const std::string& name, double value);
  void put_int(const std::string& name, std::int64_t value);
  void put_string(const std::string& name, const std::string& value);

  /// Reads an array entry converting between floating dtypes when needed.
  template <typename T>
  std::vector<T> get_array(const std::string& name) const;

  template <typename T, std::size_t Rank>
  Grid<T, Rank> get_grid(const std::string& name) const {
    const auto& e = entry(name);
    if (e.extents.size() != Rank) {
      throw FormatError("entry '" + name + "' has rank " +
                        std::to_string(e.extents.size()) + ", expected " +
                        std::to_string(Rank));
    }
    Extents<Rank> shape{};
    for (std::size_t i = 0; i < Rank; ++i) shape[i] = e.extents[i];
    return Grid<T, Rank>(shape, get_array<T>(name));
  }

  double get_scalar(const std::string& name) const;
  std::int64_t get_int(const std::string& name) const;
  std::string get_string(const std::string& name) const;

  std::vector<std::uint8_t> to_bytes() const;
  static Container from_bytes(std::span<const std::uint8_t> bytes);

  void write(const std::filesystem::path& path) const;
  static Container read(const std::filesystem::path& path);

  friend bool operator==(const Container& a, const Container& b);

 private:
  std::map<std::string, ContainerEntry> entries_;
};

}  // namespace freqfield
