#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lit/attention.hpp"
#include "lit/mac_counter.hpp"

namespace lit {

// 4ND^2 + 2N^2D; takes no head count because it does not depend on one.
std::int64_t gmacs_mhsa(std::int64_t tokens, std::int64_t dim);
// 4ND^2 + ND + 3ND^2/h + k^2ND. Throws ConfigError unless h divides D.
std::int64_t gmacs_mhla(std::int64_t tokens, std::int64_t dim, std::int64_t heads,
                        std::int64_t kernel);
double to_giga(std::int64_t macs);

// Closed-form MACs of one attention-module forward for a config (per image).
std::int64_t analytic_macs(const AttentionConfig& config, std::int64_t tokens);

// MACs executed by `fn`. Throws ContractError when instrumentation is off.
MacTally count_macs(const std::function<void()>& fn);

// MACs counted for one forward of the attention module on random inputs.
std::int64_t count_attention_macs(const AttentionConfig& config, std::int64_t tokens,
                                  std::int64_t batch = 1, std::uint64_t seed = 0);

struct WallStats {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over the timed trials
  double min = 0.0;
  std::int64_t trials = 0;
};

WallStats summarize(const std::vector<double>& seconds);

struct CostReport {
  AttentionVariant variant = AttentionVariant::kLinearReluDwc;
  std::int64_t tokens = 0;
  std::int64_t dim = 0;
  std::int64_t heads = 0;
  std::int64_t kernel = 0;
  std::int64_t batch = 1;
  std::int64_t analytic_macs = 0;  // per batch
  std::int64_t counted_macs = 0;   // per batch
  WallStats wall;
};

// Times `trials` attention forwards after `warmup` discarded ones, on a
// single thread, in 32-bit.
CostReport bench_latency(const AttentionConfig& config, std::int64_t batch, std::int64_t tokens,
                         int trials, int warmup, std::uint64_t seed = 0);

std::vector<CostReport> sweep_heads(const AttentionConfig& base, std::int64_t tokens,
                                    const std::vector<std::int64_t>& heads, std::int64_t batch,
                                    int trials, int warmup, std::uint64_t seed = 0);

// variant,N,D,h,k,analytic_macs,counted_macs,latency_mean_s,latency_std_s,trials
std::string sweep_csv_header();
std::string sweep_csv_row(const CostReport& row);

// Largest N at which linear attention is not yet cheaper than softmax
// attention, found by scanning N = 1, 2, ...; -1 if none within max_tokens.
std::int64_t crossover_tokens(std::int64_t dim, std::int64_t heads, std::int64_t kernel,
                              std::int64_t max_tokens = 1 << 20);

}  // namespace lit
