#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace fwm {

// Worker-count resolution: explicit request > FWM_SIM_THREADS > hardware.
// Thread count never changes results; parallel maps below gather by index
// and all reductions run in fixed index order.
struct ExecPolicy {
    int threads = 0;  // 0 = resolve from environment / hardware

    int resolve() const {
        if (threads > 0) return threads;
        if (const char* env = std::getenv("FWM_SIM_THREADS")) {
            char* end = nullptr;
            long n = std::strtol(env, &end, 10);
            if (end != env && n > 0) return static_cast<int>(n);
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw > 0 ? static_cast<int>(hw) : 1;
    }
};

// Runs fn(i) for i in [0, n), spreading indices over workers. The first
// exception thrown (lowest index wins is not guaranteed, but some exception
// is) gets rethrown on the calling thread after all workers join.
template <typename Fn>
void parallel_for(std::size_t n, const ExecPolicy& exec, Fn&& fn) {
    const int nw = std::min<std::size_t>(std::max(1, exec.resolve()), std::max<std::size_t>(n, 1));
    if (nw <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(nw);
    for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace fwm
