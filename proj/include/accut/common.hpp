#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace accut {

// Segmentation label layout shared by every module.
inline constexpr int kNumClasses = 5;

enum class SegClass : int {
  kVitreous = 0,
  kRetina = 1,
  kChoroid = 2,
  kSrf = 3,
  kPed = 4,
};

inline const char* seg_class_name(int c) {
  switch (c) {
    case 0: return "vitreous";
    case 1: return "retina";
    case 2: return "choroid";
    case 3: return "srf";
    case 4: return "ped";
    default: return "unknown";
  }
}

enum class Domain : int { kSource = 0, kTarget = 1 };

inline const char* domain_name(Domain d) {
  return d == Domain::kSource ? "source" : "target";
}

// Error taxonomy. The CLI maps these onto exit codes 2/3/4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Stable 64-bit FNV-1a, used for config hashes embedded in artifacts.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

// splitmix64; used to derive independent sub-seeds from one master seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace accut
