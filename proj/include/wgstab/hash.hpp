#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>

namespace wgstab {

// FNV-1a, used for content-addressed cache keys.
class Hasher {
 public:
  Hasher& bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 1099511628211ULL;
    }
    return *this;
  }
  template <typename T>
  Hasher& value(const T& v) {
    return bytes(&v, sizeof(T));
  }
  template <typename T>
  Hasher& values(std::span<const T> v) {
    return bytes(v.data(), v.size_bytes());
  }
  Hasher& text(std::string_view s) { return bytes(s.data(), s.size()); }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 14695981039346656037ULL;
};

}  // namespace wgstab
