#pragma once

#include "exset/exset.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace exset::test {

inline MeshPtr line_mesh(int n, double lo = 0.0, double hi = 1.0) { return make_mesh(Mesh::uniform_line(lo, hi, n)); }

inline Field field_of(const MeshPtr& m, std::initializer_list<double> v)
{
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) x[i++] = d;
  return Field(m, x);
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name)
{
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  std::string tag = name;
  if (info) tag += std::string("-") + info->test_suite_name() + "-" + info->name();
  const auto p = std::filesystem::temp_directory_path() / ("exset-test-" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string first_lines(const std::string& s, int n)
{
  std::istringstream is(s);
  std::string line, out;
  for (int i = 0; i < n && std::getline(is, line); ++i) out += line + "\n";
  return out;
}

} // namespace exset::test
