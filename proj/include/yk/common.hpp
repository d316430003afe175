#pragma once

#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace yk {

// All recoverable failures surface as yk::Error; the CLI maps these to
// exit code 1 (validation) or 2 (runtime) depending on where they occur.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void check(bool ok, const std::string& msg) {
    if (!ok) fail(msg);
}

// Thread cap: YK_THREADS env var, default = available cores.
inline int max_threads() {
    static int cached = [] {
        if (const char* s = std::getenv("YK_THREADS")) {
            int v = std::atoi(s);
            if (v >= 1) return v;
        }
        unsigned hc = std::thread::hardware_concurrency();
        return hc ? static_cast<int>(hc) : 1;
    }();
    return cached;
}

// Static partition of [0, n) across worker threads. Each index is processed
// by exactly one thread, so this never changes per-element reduction order.
template <class Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
    const int nt = static_cast<int>(std::min<std::int64_t>(max_threads(), n));
    if (nt <= 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(static_cast<size_t>(nt));
    const std::int64_t chunk = (n + nt - 1) / nt;
    for (int t = 0; t < nt; ++t) {
        const std::int64_t lo = t * chunk;
        const std::int64_t hi = std::min<std::int64_t>(lo + chunk, n);
        workers.emplace_back([lo, hi, &fn] {
            for (std::int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& w : workers) w.join();
}

}  // namespace yk
