#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace sgtlab {

// Deterministic xoshiro256** stream. std::mt19937 plus the standard
// distributions are not bit-stable across standard libraries, so every draw
// here uses a fixed algorithm. Streams are keyed by (root_seed, label);
// distinct labels give independently seeded states.
class Rng {
 public:
  Rng() : Rng(0, "") {}
  Rng(uint64_t root_seed, std::string_view stream_label);

  uint64_t next_u64();
  double uniform();                 // [0, 1), 53-bit
  double uniform(double lo, double hi);
  int uniform_int(int lo, int hi);  // inclusive bounds
  double normal();

  struct State {
    std::array<uint64_t, 4> s;
    bool has_spare;
    uint64_t spare_bits;
  };
  State state() const;
  void restore(const State& st);

 private:
  std::array<uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Rng seeded_rng(uint64_t root_seed, std::string_view stream_label);

// FNV-1a, used for stream labels and content digests.
uint64_t fnv1a64(std::string_view bytes, uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace sgtlab
