#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mpv {

template <typename T, typename Job>
std::vector<T> run_indexed(int count, int workers, Job&& job) {
    std::vector<T> out(static_cast<std::size_t>(count));
    if (workers <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) out[i] = job(i);
        return out;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= count) return;
            try {
                out[i] = job(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(count);
            }
        }
    };
    std::vector<std::thread> threads;
    const int n = workers < count ? workers : count;
    for (int t = 0; t < n; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
    return out;
}

}  // namespace mpv
