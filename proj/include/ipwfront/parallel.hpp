#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ipwfront {

// Run fn(i) for i in [0, count) across up to n_threads threads.  Each index
// is processed exactly once and callers write results into pre-assigned
// slots, so output is identical for any thread count.  The first exception
// thrown by any worker is rethrown on the calling thread.
template <typename Fn>
void parallel_for(int n_threads, int count, Fn&& fn) {
    n_threads = std::min(n_threads, count);
    if (n_threads <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    workers.reserve(n_threads);
    for (int w = 0; w < n_threads; ++w) {
        workers.emplace_back([&, w] {
            // Static block partition: worker w owns a contiguous index range.
            const int lo = static_cast<int>(static_cast<long long>(count) * w / n_threads);
            const int hi = static_cast<int>(static_cast<long long>(count) * (w + 1) / n_threads);
            try {
                for (int i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace ipwfront
