#include "lit/complexity.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "lit/error.hpp"
#include "lit/kernels.hpp"
#include "lit/ops.hpp"
#include "lit/random.hpp"

namespace lit {

std::int64_t gmacs_mhsa(std::int64_t n, std::int64_t d) {
  if (n < 1 || d < 1) throw ConfigError("N and D must be positive");
  return 4 * n * d * d + 2 * n * n * d;
}

std::int64_t gmacs_mhla(std::int64_t n, std::int64_t d, std::int64_t h, std::int64_t k) {
  if (n < 1 || d < 1 || h < 1 || k < 1) throw ConfigError("N, D, h and k must be positive");
  if (d % h != 0) {
    throw ConfigError("h = " + std::to_string(h) + " does not divide D = " + std::to_string(d));
  }
  return 4 * n * d * d + n * d + 3 * n * d * (d / h) + k * k * n * d;
}

double to_giga(std::int64_t macs) { return static_cast<double>(macs) / 1e9; }

std::int64_t analytic_macs(const AttentionConfig& config, std::int64_t tokens) {
  config.validate();
  const std::int64_t d = config.hidden_dim;
  if (config.variant == AttentionVariant::kSoftmax) return gmacs_mhsa(tokens, d);
  const std::int64_t k = config.dwc_kernel;
  const std::int64_t macs = gmacs_mhla(tokens, d, config.num_heads, k);
  return uses_dwc(config.variant) ? macs : macs - k * k * tokens * d;
}

MacTally count_macs(const std::function<void()>& fn) {
  MacCountScope scope;
  fn();
  return scope.tally();
}

namespace {

struct AttentionFixture {
  ParamStoreF store;
  AttentionParams<float> params;
  TensorF x;
  TokenGrid grid;
};

AttentionFixture make_fixture(const AttentionConfig& config, std::int64_t tokens,
                              std::int64_t batch, std::uint64_t seed) {
  AttentionFixture f;
  Rng rng(seed);
  add_attention_params(f.store, "", config, rng);
  f.params = AttentionParams<float>::from_store(f.store, "", config);
  f.x = rng.normal_tensor<float>({batch, tokens, config.hidden_dim});
  if (uses_dwc(config.variant)) {
    f.grid = TokenGrid::square(tokens);
  } else {
    f.grid = {1, tokens};
  }
  return f;
}

}  // namespace

std::int64_t count_attention_macs(const AttentionConfig& config, std::int64_t tokens,
                                  std::int64_t batch, std::uint64_t seed) {
  const AttentionFixture f = make_fixture(config, tokens, batch, seed);
  NoGradGuard no_grad;
  return count_macs([&] { attention_forward(f.x, f.params, config, f.grid); }).total();
}

WallStats summarize(const std::vector<double>& seconds) {
  WallStats s;
  s.trials = static_cast<std::int64_t>(seconds.size());
  if (seconds.empty()) return s;
  double sum = 0.0;
  for (double v : seconds) sum += v;
  s.mean = sum / static_cast<double>(seconds.size());
  double var = 0.0;
  for (double v : seconds) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(seconds.size()));
  s.min = *std::min_element(seconds.begin(), seconds.end());
  return s;
}

CostReport bench_latency(const AttentionConfig& config, std::int64_t batch, std::int64_t tokens,
                         int trials, int warmup, std::uint64_t seed) {
  if (trials < 1) throw ConfigError("need at least one timed trial");
  if (warmup < 0) throw ConfigError("warmup must be non-negative");
  const AttentionFixture f = make_fixture(config, tokens, batch, seed);
  CostReport r;
  r.variant = config.variant;
  r.tokens = tokens;
  r.dim = config.hidden_dim;
  r.heads = config.num_heads;
  r.kernel = config.dwc_kernel;
  r.batch = batch;
  r.analytic_macs = batch * analytic_macs(config, tokens);

  const int threads = kernels::max_threads();
  kernels::set_num_threads(1);
  NoGradGuard no_grad;
  r.counted_macs = count_macs([&] { attention_forward(f.x, f.params, config, f.grid); }).total();
  for (int i = 0; i < warmup; ++i) attention_forward(f.x, f.params, config, f.grid);
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(trials));
  for (int i = 0; i < trials; ++i) {
    const auto start = std::chrono::steady_clock::now();
    attention_forward(f.x, f.params, config, f.grid);
    const auto stop = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(stop - start).count());
  }
  kernels::set_num_threads(threads);
  r.wall = summarize(times);
  return r;
}

std::vector<CostReport> sweep_heads(const AttentionConfig& base, std::int64_t tokens,
                                    const std::vector<std::int64_t>& heads, std::int64_t batch,
                                    int trials, int warmup, std::uint64_t seed) {
  std::vector<CostReport> rows;
  for (const auto h : heads) {
    AttentionConfig c = base;
    c.num_heads = h;
    rows.push_back(bench_latency(c, batch, tokens, trials, warmup, seed));
  }
  return rows;
}

std::string sweep_csv_header() {
  return "variant,N,D,h,k,analytic_macs,counted_macs,latency_mean_s,latency_std_s,trials";
}

std::string sweep_csv_row(const CostReport& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.9g,%.9g,%lld", r.wall.mean, r.wall.std,
                static_cast<long long>(r.wall.trials));
  return to_string(r.variant) + "," + std::to_string(r.tokens) + "," + std::to_string(r.dim) +
         "," + std::to_string(r.heads) + "," + std::to_string(r.kernel) + "," +
         std::to_string(r.analytic_macs) + "," + std::to_string(r.counted_macs) + "," + buf;
}

std::int64_t crossover_tokens(std::int64_t dim, std::int64_t heads, std::int64_t kernel,
                              std::int64_t max_tokens) {
  for (std::int64_t n = 1; n <= max_tokens; ++n) {
    if (gmacs_mhla(n, dim, heads, kernel) < gmacs_mhsa(n, dim)) return n - 1;
  }
  return -1;
}

}  // namespace lit
