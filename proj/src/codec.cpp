#include "casss/codec.hpp"

#include <algorithm>
#include <array>
#include <cstring>

#include "casss/error.hpp"

namespace casss {
namespace gf256 {
namespace {

struct Tables {
  std::array<std::uint8_t, 512> exp{};
  std::array<std::uint8_t, 256> log{};
  std::array<std::array<std::uint8_t, 256>, 256> mul{};

  Tables() {
    unsigned x = 1;
    for (unsigned i = 0; i < 255; ++i) {
      exp[i] = static_cast<std::uint8_t>(x);
      log[x] = static_cast<std::uint8_t>(i);
      x <<= 1;
      if (x & 0x100) x ^= 0x11d;
    }
    for (unsigned i = 255; i < 512; ++i) exp[i] = exp[i - 255];
    for (unsigned a = 1; a < 256; ++a)
      for (unsigned b = 1; b < 256; ++b) mul[a][b] = exp[log[a] + log[b]];
  }
};

const Tables& tables() {
  static const Tables t;
  return t;
}

}  // namespace

std::uint8_t mul(std::uint8_t a, std::uint8_t b) { return tables().mul[a][b]; }

std::uint8_t inv(std::uint8_t a) {
  if (a == 0) throw std::domain_error("gf256: inverse of zero");
  return tables().exp[255 - tables().log[a]];
}

std::uint8_t pow(std::uint8_t a, unsigned e) {
  std::uint8_t r = 1;
  while (e--) r = mul(r, a);
  return r;
}

}  // namespace gf256

namespace {

// dst ^= c * src
void mul_add(std::uint8_t* dst, const std::uint8_t* src, std::size_t len, std::uint8_t c) {
  if (c == 0) return;
  if (c == 1) {
    for (std::size_t i = 0; i < len; ++i) dst[i] ^= src[i];
    return;
  }
  const auto& row = gf256::tables().mul[c];
  for (std::size_t i = 0; i < len; ++i) dst[i] ^= row[src[i]];
}

// Gauss-Jordan inversion of a k x k row-major matrix over GF(2^8).
std::vector<std::uint8_t> invert(std::vector<std::uint8_t> m, std::uint32_t k) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(k) * k, 0);
  for (std::uint32_t i = 0; i < k; ++i) out[i * k + i] = 1;
  for (std::uint32_t col = 0; col < k; ++col) {
    std::uint32_t pivot = col;
    while (pivot < k && m[pivot * k + col] == 0) ++pivot;
    if (pivot == k) throw Error(ErrorCode::InconsistentElements, "singular decoding matrix");
    if (pivot != col) {
      for (std::uint32_t j = 0; j < k; ++j) {
        std::swap(m[pivot * k + j], m[col * k + j]);
        std::swap(out[pivot * k + j], out[col * k + j]);
      }
    }
    const auto scale = gf256::inv(m[col * k + col]);
    for (std::uint32_t j = 0; j < k; ++j) {
      m[col * k + j] = gf256::mul(m[col * k + j], scale);
      out[col * k + j] = gf256::mul(out[col * k + j], scale);
    }
    for (std::uint32_t r = 0; r < k; ++r) {
      if (r == col || m[r * k + col] == 0) continue;
      const auto factor = m[r * k + col];
      mul_add(&m[r * k], &m[col * k], k, factor);
      mul_add(&out[r * k], &out[col * k], k, factor);
    }
  }
  return out;
}

}  // namespace

std::size_t element_size(std::size_t object_len, std::uint32_t k) { return (object_len + k - 1) / k; }

ReedSolomon::ReedSolomon(std::uint32_t n, std::uint32_t k) : n_(n), k_(k) {
  if (k == 0 || n < k) throw Error(ErrorCode::CodecParamError, "need 1 <= k <= n");
  if (n > kMaxCodeLength) {
    throw Error(ErrorCode::CodecParamError, "n=" + std::to_string(n) + " exceeds the 32-element limit");
  }
  gen_.assign(static_cast<std::size_t>(n) * k, 0);
  for (std::uint32_t i = 0; i < k; ++i) gen_[i * k + i] = 1;
  // Cauchy rows: 1 / (x_r + y_c) with x_r = r in [k, n) and y_c = c in [0, k).
  for (std::uint32_t r = k; r < n; ++r)
    for (std::uint32_t c = 0; c < k; ++c) gen_[r * k + c] = gf256::inv(static_cast<std::uint8_t>(r ^ c));
}

std::vector<CodedElement> ReedSolomon::encode(std::span<const std::uint8_t> data) const {
  if (data.empty()) throw Error(ErrorCode::CodecParamError, "cannot encode an empty object");
  const auto shard = element_size(data.size(), k_);
  std::vector<CodedElement> out(n_);
  for (std::uint32_t i = 0; i < n_; ++i) {
    out[i].index = i;
    out[i].object_len = data.size();
    out[i].bytes.assign(shard, 0);
  }
  for (std::uint32_t i = 0; i < k_; ++i) {
    const auto begin = static_cast<std::size_t>(i) * shard;
    if (begin < data.size()) {
      const auto len = std::min(shard, data.size() - begin);
      std::memcpy(out[i].bytes.data(), data.data() + begin, len);
    }
  }
  for (std::uint32_t r = k_; r < n_; ++r)
    for (std::uint32_t c = 0; c < k_; ++c) mul_add(out[r].bytes.data(), out[c].bytes.data(), shard, generator(r, c));
  return out;
}

Bytes ReedSolomon::decode(std::span<const CodedElement> elements) const {
  // Pick k distinct indices, preferring systematic rows.
  std::array<const CodedElement*, kMaxCodeLength> by_index{};
  for (const auto& e : elements) {
    if (e.index >= n_) throw Error(ErrorCode::InconsistentElements, "element index out of range");
    if (!by_index[e.index]) by_index[e.index] = &e;
  }
  std::vector<const CodedElement*> chosen;
  for (std::uint32_t i = 0; i < n_ && chosen.size() < k_; ++i)
    if (by_index[i]) chosen.push_back(by_index[i]);
  if (chosen.size() < k_) {
    throw Error(ErrorCode::InsufficientElements,
                "have " + std::to_string(chosen.size()) + " distinct elements, need " + std::to_string(k_));
  }
  const auto object_len = chosen.front()->object_len;
  const auto shard = element_size(object_len, k_);
  for (const auto* e : chosen) {
    if (e->object_len != object_len || e->bytes.size() != shard) {
      throw Error(ErrorCode::InconsistentElements, "element lengths disagree");
    }
  }

  Bytes out(static_cast<std::size_t>(shard) * k_, 0);
  const bool systematic = chosen.back()->index < k_;
  if (systematic) {
    for (std::uint32_t i = 0; i < k_; ++i) std::memcpy(out.data() + i * shard, chosen[i]->bytes.data(), shard);
  } else {
    std::vector<std::uint8_t> sub(static_cast<std::size_t>(k_) * k_);
    for (std::uint32_t r = 0; r < k_; ++r)
      for (std::uint32_t c = 0; c < k_; ++c) sub[r * k_ + c] = generator(chosen[r]->index, c);
    const auto dec = invert(std::move(sub), k_);
    for (std::uint32_t r = 0; r < k_; ++r)
      for (std::uint32_t c = 0; c < k_; ++c) mul_add(out.data() + r * shard, chosen[c]->bytes.data(), shard, dec[r * k_ + c]);
  }
  out.resize(object_len);
  return out;
}

std::vector<CodedElement> encode(std::span<const std::uint8_t> data, const QuorumConfig& cfg) {
  return ReedSolomon(cfg.n(), cfg.k).encode(data);
}

Bytes decode(std::span<const CodedElement> elements, const QuorumConfig& cfg) {
  return ReedSolomon(cfg.n(), cfg.k).decode(elements);
}

}  // namespace casss
