#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace gaitbridge {

/// 64-bit FNV-1a. Used for checkpoint checksums and config/manifest fingerprints.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

/// Little-endian append-only byte sink. Doubles are stored as raw IEEE-754 bits.
class BinaryWriter {
 public:
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v);
  void f64(double v);
  void str(std::string_view s);
  void f64s(std::span<const double> values);
  void vec(const Eigen::VectorXd& v) { f64s({v.data(), static_cast<std::size_t>(v.size())}); }

  const std::string& bytes() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  void raw(const void* p, std::size_t n);
  std::string buf_;
};

/// Bounds-checked reader over a byte buffer; every short read throws ParseError naming `what`.
class BinaryReader {
 public:
  explicit BinaryReader(std::string_view bytes) : data_(bytes) {}

  std::uint8_t u8(const char* what);
  std::uint32_t u32(const char* what);
  std::uint64_t u64(const char* what);
  std::int64_t i64(const char* what);
  double f64(const char* what);
  std::string str(const char* what);
  std::vector<double> f64s(const char* what);
  Eigen::VectorXd vec(const char* what);

  bool at_end() const { return pos_ == data_.size(); }
  std::size_t position() const { return pos_; }

 private:
  void raw(void* p, std::size_t n, const char* what);
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace gaitbridge
