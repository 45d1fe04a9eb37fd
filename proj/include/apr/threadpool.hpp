#pragma once

#include <functional>

namespace apr {

/** Worker count: APR_THREADS env var if set, else hardware concurrency. */
int thread_count();

/** Run fn(i) for i in [0, n). Serial when n is small or one worker is
 *  configured; otherwise work is pulled from a shared atomic counter.
 *  Exceptions from workers are rethrown on the caller's thread. */
void parallel_for(int n, const std::function<void(int)>& fn, int n_threads = 0);

} // namespace apr
