#include "lit/mac_counter.hpp"

#include <atomic>

#include "lit/error.hpp"

namespace lit {

namespace {
std::atomic<bool> g_instrumentation{true};
thread_local MacTally* g_active = nullptr;
}  // namespace

void set_mac_instrumentation(bool enabled) { g_instrumentation.store(enabled); }
bool mac_instrumentation_enabled() { return g_instrumentation.load(); }

MacCountScope::MacCountScope() : previous_(g_active) {
  if (!mac_instrumentation_enabled()) {
    throw ContractError("MAC counting requested while instrumentation is disabled");
  }
  g_active = &tally_;
}

MacCountScope::~MacCountScope() {
  g_active = previous_;
  if (previous_) {
    previous_->matmul += tally_.matmul;
    previous_->conv += tally_.conv;
  }
}

namespace detail {

void record_matmul_macs(std::int64_t macs) {
  if (g_active) g_active->matmul += macs;
}

void record_conv_macs(std::int64_t macs) {
  if (g_active) g_active->conv += macs;
}

}  // namespace detail

}  // namespace lit
