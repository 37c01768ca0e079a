#pragma once

namespace spinshuffle {

// Reads SPINSHUFFLE_THREADS (0 or unset = runtime default) and applies it to
// the OpenMP runtime. Returns the worker count in effect afterwards; a value
// that is not a nonnegative integer throws.
int configure_threads();

// Explicit override; n <= 0 restores the runtime default.
void set_threads(int n);

int max_threads();

} // namespace spinshuffle
