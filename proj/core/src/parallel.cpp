#include "adopt/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace adopt {
namespace {
std::atomic<int> g_threads{0};
}

int default_thread_count() {
  if (const char* env = std::getenv("ADOPT_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (...) {
    }
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void set_thread_count(int threads) { g_threads = std::max(1, threads); }

int thread_count() {
  int n = g_threads.load();
  if (n <= 0) {
    n = default_thread_count();
    g_threads = n;
  }
  return n;
}

}  // namespace adopt
