#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string_view>

namespace copulaflow {

//! splitmix64 finalizer.
inline std::uint64_t
mix64(std::uint64_t z)
{
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

//! Derives an independent seed for a named stage (and optional index) from a
//! master seed, so every stage owns its own random stream.
inline std::uint64_t
derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(mix64(seed ^ h) + index);
}

//! Seeded generator used by every stochastic routine of the library.
class Rng
{
public:
  explicit Rng(std::uint64_t seed)
    : engine_(seed)
  {}

  std::uint64_t next() { return engine_(); }

  //! Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  //! Uniform on the open interval (0, 1).
  double uniform_open()
  {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() { return normal_(engine_); }

  //! Uniform integer in {0, ..., n - 1}.
  Eigen::Index index(Eigen::Index n)
  {
    return static_cast<Eigen::Index>(uniform() * static_cast<double>(n));
  }

  Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols)
  {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j)
        m(i, j) = uniform_open();
    return m;
  }

  std::mt19937_64& engine() { return engine_; }

private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{ 0.0, 1.0 };
};

} // namespace copulaflow
