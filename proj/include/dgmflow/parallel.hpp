#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace dgmflow {

// Calls f(k) for k in [0, count) on up to `threads` workers (strided split). Each index should
// write only its own output slot, so results do not depend on the thread count.
template <class F>
void parallel_for(std::size_t count, unsigned threads, F&& f) {
    const std::size_t t = std::max<std::size_t>(1, std::min<std::size_t>(threads, count));
    if (t <= 1) {
        for (std::size_t k = 0; k < count; ++k) f(k);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(t);
    for (std::size_t w = 0; w < t; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t k = w; k < count; k += t) f(k);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace dgmflow
