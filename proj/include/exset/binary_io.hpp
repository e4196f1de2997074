#pragma once

#include "exset/errors.hpp"

#include <Eigen/Core>

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>

// Little-endian primitives for the model files.
namespace exset::binio {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline void write_magic(std::ostream& os, const char (&magic)[8]) { os.write(magic, 8); }

inline void expect_magic(std::istream& is, const char (&magic)[8], const char* what)
{
  char buf[8];
  is.read(buf, 8);
  if (!is || std::memcmp(buf, magic, 8) != 0) throw Error(std::string("bad magic: not a ") + what + " block");
}

template <class T>
inline void write_raw(std::ostream& os, T v)
{
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
inline T read_raw(std::istream& is)
{
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw Error("binary read: unexpected end of stream");
  return v;
}

inline void write_u32(std::ostream& os, std::uint32_t v) { write_raw(os, v); }
inline void write_u64(std::ostream& os, std::uint64_t v) { write_raw(os, v); }
inline void write_f64(std::ostream& os, double v) { write_raw(os, v); }
inline std::uint32_t read_u32(std::istream& is) { return read_raw<std::uint32_t>(is); }
inline std::uint64_t read_u64(std::istream& is) { return read_raw<std::uint64_t>(is); }
inline double read_f64(std::istream& is) { return read_raw<double>(is); }

inline void write_f64s(std::ostream& os, std::span<const double> v)
{
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void write_f64s(std::ostream& os, const Eigen::VectorXd& v)
{
  write_f64s(os, std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

inline void read_f64s(std::istream& is, std::span<double> out)
{
  is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size() * sizeof(double)));
  if (!is) throw Error("binary read: unexpected end of stream");
}

inline Eigen::VectorXd read_vector(std::istream& is, Eigen::Index n)
{
  Eigen::VectorXd v(n);
  read_f64s(is, std::span<double>(v.data(), static_cast<std::size_t>(n)));
  return v;
}

} // namespace exset::binio
