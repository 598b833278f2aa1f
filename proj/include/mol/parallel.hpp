#pragma once

#include <cstddef>
#include <functional>

namespace mol {

// Calls f(i) for i in [0, n) on up to `threads` workers. The first exception
// thrown by any call is rethrown after all workers stop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& f);

}  // namespace mol
