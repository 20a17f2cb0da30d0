#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace copulaflow {

//! Worker cap: COPULAFLOW_THREADS if set, else the hardware concurrency.
int
worker_count();

//! Runs body(chunk) for chunk in [0, n_chunks) on up to worker_count()
//! threads. Chunks are assigned statically; the first exception is rethrown.
void
parallel_chunks(Eigen::Index n_chunks,
                const std::function<void(Eigen::Index)>& body);

} // namespace copulaflow
