#pragma once

#include <cstdint>

namespace lit {

// Multiply-accumulates executed by forward ops while a MacCountScope is
// active on the current thread. Only matmul and depthwise convolution are
// tallied; activations, elementwise products, reductions and divides are not.
struct MacTally {
  std::int64_t matmul = 0;
  std::int64_t conv = 0;

  std::int64_t total() const { return matmul + conv; }
};

// Process-wide switch for the instrumentation hooks (on by default).
void set_mac_instrumentation(bool enabled);
bool mac_instrumentation_enabled();

class MacCountScope {
 public:
  MacCountScope();
  ~MacCountScope();
  MacCountScope(const MacCountScope&) = delete;
  MacCountScope& operator=(const MacCountScope&) = delete;

  const MacTally& tally() const { return tally_; }

 private:
  MacTally tally_;
  MacTally* previous_;
};

namespace detail {
void record_matmul_macs(std::int64_t macs);
void record_conv_macs(std::int64_t macs);
}  // namespace detail

}  // namespace lit
