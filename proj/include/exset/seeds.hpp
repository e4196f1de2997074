#pragma once

#include <cstdint>
#include <initializer_list>

namespace exset {

/// splitmix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent child seed from a parent seed and a path of stream indices.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> path) noexcept
{
  std::uint64_t s = mix64(parent);
  for (std::uint64_t p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

} // namespace exset
