#include "gaitbridge/binary_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>

#include "gaitbridge/error.hpp"

namespace gaitbridge {

static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

void BinaryWriter::raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
void BinaryWriter::u8(std::uint8_t v) { raw(&v, 1); }
void BinaryWriter::u32(std::uint32_t v) { raw(&v, 4); }
void BinaryWriter::u64(std::uint64_t v) { raw(&v, 8); }
void BinaryWriter::i64(std::int64_t v) { raw(&v, 8); }
void BinaryWriter::f64(double v) { raw(&v, 8); }

void BinaryWriter::str(std::string_view s) {
  u64(s.size());
  raw(s.data(), s.size());
}

void BinaryWriter::f64s(std::span<const double> values) {
  u64(values.size());
  raw(values.data(), values.size() * sizeof(double));
}

void BinaryReader::raw(void* p, std::size_t n, const char* what) {
  if (n > data_.size() - pos_) throw ParseError(std::string("truncated data while reading ") + what);
  std::memcpy(p, data_.data() + pos_, n);
  pos_ += n;
}

std::uint8_t BinaryReader::u8(const char* what) {
  std::uint8_t v;
  raw(&v, 1, what);
  return v;
}
std::uint32_t BinaryReader::u32(const char* what) {
  std::uint32_t v;
  raw(&v, 4, what);
  return v;
}
std::uint64_t BinaryReader::u64(const char* what) {
  std::uint64_t v;
  raw(&v, 8, what);
  return v;
}
std::int64_t BinaryReader::i64(const char* what) {
  std::int64_t v;
  raw(&v, 8, what);
  return v;
}
double BinaryReader::f64(const char* what) {
  double v;
  raw(&v, 8, what);
  return v;
}

std::string BinaryReader::str(const char* what) {
  const auto n = u64(what);
  if (n > data_.size() - pos_) throw ParseError(std::string("truncated data while reading ") + what);
  std::string s(data_.substr(pos_, n));
  pos_ += n;
  return s;
}

std::vector<double> BinaryReader::f64s(const char* what) {
  const auto n = u64(what);
  if (n > (data_.size() - pos_) / sizeof(double))
    throw ParseError(std::string("truncated data while reading ") + what);
  std::vector<double> v(n);
  raw(v.data(), n * sizeof(double), what);
  return v;
}

Eigen::VectorXd BinaryReader::vec(const char* what) {
  const auto v = f64s(what);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace gaitbridge
