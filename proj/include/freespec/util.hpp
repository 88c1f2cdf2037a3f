#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace freespec {

// Bad input: malformed scenario, non-selfadjoint polynomial, shape mismatch.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A dense kernel failed (eigensolver did not converge, singular solve, ...).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A solver-level failure: precondition violated or convergence lost.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Runs f(i) for i in [0, n). Work is split in contiguous chunks; results must
// be written to disjoint slots so the outcome does not depend on scheduling.
template <class F>
void parallel_for(int n, int threads, F&& f) {
    if (n <= 0) return;
    if (threads < 1) threads = 1;
    threads = std::min<int>(threads, n);
    if (threads == 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

inline int default_threads() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace freespec
