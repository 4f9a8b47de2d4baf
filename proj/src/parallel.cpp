#include "gcalc/parallel.hpp"

#include <atomic>

namespace gcalc {
namespace {
std::atomic<std::size_t> g_limit{0};
}

void set_thread_limit(std::size_t n) noexcept { g_limit.store(n); }

std::size_t thread_limit() noexcept {
  const std::size_t n = g_limit.load();
  if (n > 0) return n;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

}  // namespace gcalc
