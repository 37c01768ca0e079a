#include "spinshuffle/parallel.hpp"

#include <charconv>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include <omp.h>

namespace spinshuffle {

namespace {
int g_default_threads = -1;
}

void set_threads(int n)
{
  if (g_default_threads < 0) {
    g_default_threads = omp_get_max_threads();
  }
  omp_set_num_threads(n > 0 ? n : g_default_threads);
}

int configure_threads()
{
  if (char const *env = std::getenv("SPINSHUFFLE_THREADS")) {
    std::string const text(env);
    int n = 0;
    auto const [end, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
    if (ec != std::errc{} || end != text.data() + text.size() || n < 0) {
      throw std::invalid_argument("SPINSHUFFLE_THREADS must be a nonnegative integer, got '" + text + "'");
    }
    set_threads(n);
  }
  return omp_get_max_threads();
}

int max_threads() { return omp_get_max_threads(); }

} // namespace spinshuffle
