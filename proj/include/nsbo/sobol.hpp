#pragma once

#include "nsbo/common.hpp"
#include "nsbo/detail/sobol_tables.hpp"

#include <vector>

namespace nsbo {

/// Sobol low-discrepancy sequence from the Joe-Kuo direction numbers, with
/// optional Owen-style nested scrambling realized by seeded hash-based digit
/// permutation. Points are indexed directly (natural ordering), so the i-th
/// point is reproducible without generating its predecessors.
class SobolSequence {
 public:
  static constexpr int kBits = 32;

  explicit SobolSequence(int dim, std::uint64_t scramble_seed = 0,
                         bool scramble = false)
      : dim_(dim), scramble_(scramble) {
    if (dim < 1 || dim > static_cast<int>(detail::kSobolMaxDim))
      throw ConfigError("SobolSequence: unsupported dimension");
    build_directions();
    if (scramble_) {
      dim_keys_.resize(dim_);
      std::uint64_t s = scramble_seed;
      for (int d = 0; d < dim_; ++d) {
        std::uint64_t t = s ^ (0xD1B54A32D192ED03ull * (d + 1));
        dim_keys_[d] = splitmix64(t);
      }
    }
  }

  int dim() const { return dim_; }

  /// Point with the given index, coordinates in [0, 1).
  Vector point(std::uint64_t index) const {
    Vector x(dim_);
    for (int d = 0; d < dim_; ++d) {
      std::uint32_t v = raw(index, d);
      if (scramble_) v = owen_scramble(v, dim_keys_[d]);
      x[d] = static_cast<double>(v) * 0x1.0p-32;
    }
    return x;
  }

  Matrix points(std::uint64_t count, std::uint64_t start = 0) const {
    Matrix out(count, dim_);
    for (std::uint64_t i = 0; i < count; ++i)
      out.row(i) = point(start + i).transpose();
    return out;
  }

 private:
  std::uint32_t raw(std::uint64_t index, int d) const {
    std::uint32_t x = 0;
    const std::uint32_t* v = &directions_[static_cast<std::size_t>(d) * kBits];
    int k = 0;
    while (index) {
      if (index & 1ull) x ^= v[k];
      index >>= 1;
      ++k;
    }
    return x;
  }

  /// Nested uniform scramble: the flip of digit k is a hash of the k more
  /// significant digits, so every dyadic interval is permuted independently.
  static std::uint32_t owen_scramble(std::uint32_t x, std::uint64_t key) {
    std::uint32_t out = 0;
    for (int k = 0; k < kBits; ++k) {
      std::uint32_t prefix = k == 0 ? 0u : (x >> (kBits - k));
      std::uint64_t h =
          key ^ (static_cast<std::uint64_t>(prefix) |
                 (static_cast<std::uint64_t>(k + 1) << kBits));
      std::uint32_t bit = (x >> (kBits - 1 - k)) & 1u;
      out |= (bit ^ static_cast<std::uint32_t>(splitmix64(h) & 1u))
             << (kBits - 1 - k);
    }
    return out;
  }

  void build_directions() {
    directions_.resize(static_cast<std::size_t>(dim_) * kBits);
    // first dimension: van der Corput, m_k = 1
    for (int k = 0; k < kBits; ++k)
      directions_[k] = 1u << (kBits - 1 - k);
    for (int d = 1; d < dim_; ++d) {
      const detail::SobolDim& row = detail::kSobolDims[d - 1];
      const int s = static_cast<int>(row.degree);
      std::vector<std::uint32_t> m(kBits);
      for (int k = 0; k < s; ++k) m[k] = row.m[k];
      for (int k = s; k < kBits; ++k) {
        std::uint32_t val = m[k - s] ^ (m[k - s] << s);
        for (int i = 1; i < s; ++i)
          if ((row.poly >> (s - 1 - i)) & 1u) val ^= m[k - i] << i;
        m[k] = val;
      }
      for (int k = 0; k < kBits; ++k)
        directions_[static_cast<std::size_t>(d) * kBits + k] =
            m[k] << (kBits - 1 - k);
    }
  }

  int dim_;
  bool scramble_;
  std::vector<std::uint32_t> directions_;
  std::vector<std::uint64_t> dim_keys_;
};

}  // namespace nsbo
