#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace panelmmle {

double mean(const std::vector<double>& v);
double sample_variance(const std::vector<double>& v);  // divisor n-1
double sample_sd(const std::vector<double>& v);

// Runs body(i) for i in [0, n) across `n_threads` workers (0 = hardware
// concurrency).  Work is statically partitioned; the caller indexes results
// by i, so the outcome does not depend on the thread count.
void parallel_for(std::int64_t n, int n_threads,
                  const std::function<void(std::int64_t)>& body);

int resolve_thread_count(int requested);

}  // namespace panelmmle
