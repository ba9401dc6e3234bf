#pragma once

#include <cstddef>

namespace ngfreg {

// Kernel thread count. Results never depend on it: every reduction is
// accumulated per row and the row partials are summed serially.
void set_thread_count(int threads);
int thread_count();

// Reads NGFREG_THREADS; returns 0 when unset or malformed.
int thread_count_from_env();

}  // namespace ngfreg
