#include "apr/threadpool.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace apr {

int thread_count() {
    if (const char* env = std::getenv("APR_THREADS")) {
        int k = std::atoi(env);
        if (k > 0) return k;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? int(hc) : 1;
}

void parallel_for(int n, const std::function<void(int)>& fn, int n_threads) {
    if (n_threads <= 0) n_threads = thread_count();
    n_threads = std::min(n_threads, n);
    if (n_threads <= 1 || n < 2) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr err;
    std::vector<std::thread> pool;
    auto work = [&] {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            try {
                fn(i);
            } catch (...) {
                if (!failed.exchange(true)) err = std::current_exception();
                return;
            }
        }
    };
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

} // namespace apr
