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

#include "cpr/worker_pool.hpp"

#include <algorithm>

namespace cpr {

WorkerPool::WorkerPool(std::size_t threads) {
  const std::size_t extra = threads > 1 ? threads - 1 : 0;
  workers_.reserve(extra);
  for (std::size_t i = 0; i < extra; ++i) workers_.emplace_back([this] { worker_loop(); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  wake_.notify_all();
  for (auto& t : workers_) t.join();
}

void WorkerPool::run_chunks() {
  for (;;) {
    Index begin = 0;
    Index end = 0;
    const std::function<void(Index, Index)>* job = nullptr;
    {
      std::lock_guard lock(mutex_);
      if (job_ == nullptr || next_chunk_ >= job_size_) return;
      begin = next_chunk_;
      end = std::min(job_size_, begin + chunk_);
      next_chunk_ = end;
      job = job_;
    }
    try {
      (*job)(begin, end);
    } catch (...) {
      std::lock_guard lock(mutex_);
      if (!error_) error_ = std::current_exception();
    }
  }
}

void WorkerPool::worker_loop() {
  std::uint64_t seen = 0;
  for (;;) {
    {
      std::unique_lock lock(mutex_);
      wake_.wait(lock, [&] { return stopping_ || generation_ != seen; });
      if (stopping_) return;
      seen = generation_;
      ++active_;
    }
    run_chunks();
    {
      std::lock_guard lock(mutex_);
      --active_;
    }
    done_.notify_all();
  }
}

void WorkerPool::parallel_for(Index n, const std::function<void(Index, Index)>& fn) {
  if (n <= 0) return;
  {
    std::lock_guard lock(mutex_);
    job_ = &fn;
    job_size_ = n;
    // A few chunks per thread balances uneven rows without much locking.
    const Index pieces = static_cast<Index>(size()) * 4;
    chunk_ = std::max<Index>(1, (n + pieces - 1) / pieces);
    next_chunk_ = 0;
    error_ = nullptr;
    ++generation_;
  }
  wake_.notify_all();
  run_chunks();
  std::exception_ptr error;
  {
    std::unique_lock lock(mutex_);
    done_.wait(lock, [&] { return active_ == 0 && next_chunk_ >= job_size_; });
    job_ = nullptr;
    error = error_;
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace cpr
