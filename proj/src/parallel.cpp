#include "copulaflow/parallel.hpp"

#include <cstdlib>
#include <mutex>
#include <string>

namespace copulaflow {

int
worker_count()
{
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0)
    hw = 1;
  if (const char* env = std::getenv("COPULAFLOW_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1)
        return std::min(cap, hw);
    } catch (const std::exception&) {
    }
  }
  return hw;
}

namespace {

//! Set on worker threads; nested calls then run inline.
thread_local bool in_worker = false;

} // namespace

void
parallel_chunks(Eigen::Index n_chunks,
                const std::function<void(Eigen::Index)>& body)
{
  const Eigen::Index workers =
    in_worker ? 1 : std::min<Eigen::Index>(worker_count(), n_chunks);
  if (workers <= 1) {
    for (Eigen::Index c = 0; c < n_chunks; ++c)
      body(c);
    return;
  }
  std::exception_ptr first;
  Eigen::Index first_chunk = n_chunks;
  std::mutex mutex;
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (Eigen::Index t = 0; t < workers; ++t) {
    threads.emplace_back([&, t] {
      in_worker = true;
      for (Eigen::Index c = t; c < n_chunks; c += workers) {
        try {
          body(c);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mutex);
          if (c < first_chunk) {
            first_chunk = c;
            first = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& th : threads)
    th.join();
  if (first)
    std::rethrow_exception(first);
}

} // namespace copulaflow
