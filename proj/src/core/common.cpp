#include "swnet/common.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace swnet {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kDomainViolation: return "domain violation";
    case ErrorCode::kPositivity: return "positivity loss";
    case ErrorCode::kInstability: return "instability";
    case ErrorCode::kNumeric: return "numeric error";
    case ErrorCode::kShape: return "shape mismatch";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kFormat: return "format error";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kDetached: return "detached tensor";
    case ErrorCode::kGeometry: return "geometry error";
  }
  return "unknown error";
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "Rng::index: empty range");
  // Lemire's multiply-shift with rejection; unbiased.
  const unsigned __int128 range = n;
  while (true) {
    const unsigned __int128 product = static_cast<unsigned __int128>(engine_()) * range;
    const auto low = static_cast<std::uint64_t>(product);
    const std::uint64_t threshold = (0 - static_cast<std::uint64_t>(n)) % n;
    if (low >= threshold) return static_cast<std::size_t>(product >> 64);
  }
}

double Rng::normal() {
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::save_state() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::load_state(const std::string& state) {
  std::istringstream in(state);
  in >> engine_;
  if (!in) throw Error(ErrorCode::kFormat, "corrupt random-source state");
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace swnet
