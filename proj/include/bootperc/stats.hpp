#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace bootperc {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
};

/// Wilson score interval for a binomial proportion; z = 1.96 gives 95%.
Interval wilson_interval(std::int64_t successes, std::int64_t trials, double z = 1.96);

/// Runs fn(i) for i in [0, count) on `workers` threads. Results come back in
/// index order, so reductions over them do not depend on the worker count.
template <class T>
std::vector<T> run_indexed(std::int64_t count, int workers, const std::function<T(std::int64_t)>& fn);

void parallel_for(std::int64_t count, int workers, const std::function<void(std::int64_t)>& fn);

template <class T>
std::vector<T> run_indexed(std::int64_t count, int workers, const std::function<T(std::int64_t)>& fn) {
  std::vector<T> out(static_cast<std::size_t>(count));
  parallel_for(count, workers, [&](std::int64_t i) { out[static_cast<std::size_t>(i)] = fn(i); });
  return out;
}

}  // namespace bootperc
