#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "casss/types.hpp"

namespace casss {

/// Arithmetic in GF(2^8) with the primitive polynomial x^8+x^4+x^3+x^2+1.
namespace gf256 {
std::uint8_t mul(std::uint8_t a, std::uint8_t b);
std::uint8_t inv(std::uint8_t a);
std::uint8_t pow(std::uint8_t a, unsigned e);
}  // namespace gf256

inline constexpr std::uint32_t kMaxCodeLength = 32;

struct CodedElement {
  std::uint32_t index = 0;
  Bytes bytes;
  std::uint64_t object_len = 0;

  bool operator==(const CodedElement&) const = default;
};

std::size_t element_size(std::size_t object_len, std::uint32_t k);

/// Systematic (n, k) Reed-Solomon code. Rows 0..k-1 of the generator are the
/// identity; rows k..n-1 form a Cauchy matrix, so every k x k submatrix of the
/// generator is invertible.
class ReedSolomon {
 public:
  ReedSolomon(std::uint32_t n, std::uint32_t k);

  std::uint32_t n() const { return n_; }
  std::uint32_t k() const { return k_; }

  std::vector<CodedElement> encode(std::span<const std::uint8_t> data) const;
  Bytes decode(std::span<const CodedElement> elements) const;

  std::uint8_t generator(std::uint32_t row, std::uint32_t col) const { return gen_[row * k_ + col]; }

 private:
  std::uint32_t n_;
  std::uint32_t k_;
  std::vector<std::uint8_t> gen_;
};

std::vector<CodedElement> encode(std::span<const std::uint8_t> data, const QuorumConfig& cfg);
Bytes decode(std::span<const CodedElement> elements, const QuorumConfig& cfg);

}  // namespace casss
