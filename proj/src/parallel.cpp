#include "procspace/parallel.hpp"

#include <atomic>
#include <cstdlib>

namespace procspace {

namespace {

int initial_threads() {
    if (const char* env = std::getenv("PROCSPACE_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

std::atomic<int>& threads_slot() {
    static std::atomic<int> n{initial_threads()};
    return n;
}

}  // namespace

int thread_count() { return threads_slot().load(); }

void set_thread_count(int n) { threads_slot().store(n > 0 ? n : 1); }

double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

}  // namespace procspace
