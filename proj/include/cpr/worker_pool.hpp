/* Copyright 2026 The CPR Engine Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "cpr/tensor.hpp"

namespace cpr {

// Fixed-size pool of persistent workers. The calling thread takes part in
// every parallel_for, so a pool of size 1 owns no extra threads.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t threads);
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  std::size_t size() const noexcept { return workers_.size() + 1; }

  // Splits [0, n) into contiguous chunks and runs fn(begin, end) on them.
  // Blocks until all chunks finish; rethrows the first exception raised.
  void parallel_for(Index n, const std::function<void(Index, Index)>& fn);

 private:
  void worker_loop();
  void run_chunks();

  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  std::uint64_t generation_ = 0;
  bool stopping_ = false;

  // Current job; guarded by mutex_ except for the chunk cursor.
  const std::function<void(Index, Index)>* job_ = nullptr;
  Index job_size_ = 0;
  Index chunk_ = 1;
  Index next_chunk_ = 0;
  std::size_t active_ = 0;
  std::exception_ptr error_;
};

// Serial fallback when no pool is supplied.
inline void parallel_for(WorkerPool* pool, Index n, const std::function<void(Index, Index)>& fn) {
  if (n <= 0) return;
  if (pool == nullptr || pool->size() <= 1 || n == 1) {
    fn(0, n);
    return;
  }
  pool->parallel_for(n, fn);
}

}  // namespace cpr
