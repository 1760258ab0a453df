#pragma once

#include <cstddef>
#include <exception>
#include <mutex>
#include <span>
#include <vector>

namespace procspace {

// Thread count used by parallel kernels. Defaults to PROCSPACE_THREADS or 1.
int thread_count();
void set_thread_count(int n);

// Runs f(i) for i in [0, n). Each index must write only to its own outputs so the
// result does not depend on scheduling. The first exception (lowest index) is rethrown.
template <class F>
void parallel_for(int n, F&& f) {
#if defined(PROCSPACE_HAVE_OPENMP)
    const int threads = thread_count();
    if (threads > 1 && n > 1) {
        std::exception_ptr error;
        int error_index = n;
        std::mutex guard;
#pragma omp parallel for schedule(static) num_threads(threads)
        for (int i = 0; i < n; ++i) {
            try {
                f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(guard);
                if (i < error_index) {
                    error_index = i;
                    error = std::current_exception();
                }
            }
        }
        if (error) std::rethrow_exception(error);
        return;
    }
#endif
    for (int i = 0; i < n; ++i) f(i);
}

// Pairwise (tree) summation with a fixed reduction order.
double pairwise_sum(std::span<const double> v);

inline double pairwise_sum(const std::vector<double>& v) {
    return pairwise_sum(std::span<const double>(v.data(), v.size()));
}

}  // namespace procspace
