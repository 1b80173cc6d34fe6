#include "bsde/parallel.hpp"

#include <atomic>

namespace bsde {

namespace {
std::atomic<int> g_max_threads{1};  // serial unless a caller opts in
}

void set_max_threads(int k) { g_max_threads.store(k < 0 ? 0 : k); }

int max_threads() { return g_max_threads.load(); }

bool parallel_enabled() {
  const int k = g_max_threads.load();
  return k == 0 || k > 1;
}

}  // namespace bsde
