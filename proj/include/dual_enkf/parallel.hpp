/*
 Copyright 2026 The dual-enkf Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#pragma once

#include <memory>

#include <tbb/blocked_range.h>
#include <tbb/global_control.h>
#include <tbb/parallel_for.h>
#include <tbb/partitioner.h>
#include <tbb/task_arena.h>

#include "dual_enkf/model.hpp"

namespace dual_enkf::detail {

/// Fixed-size worker pool for per-particle loops. Bodies must do
/// independent work per index; reductions stay with the caller so they
/// execute in a fixed order.
class Workers {
 public:
  explicit Workers(int threads) : threads_(threads < 1 ? 1 : threads) {
    if (threads_ > 1) {
      // Lets the pool exceed the hardware thread count when asked to.
      limit_ = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism,
                                                     static_cast<std::size_t>(threads_));
      arena_ = std::make_unique<tbb::task_arena>(threads_);
    }
  }

  int threads() const { return threads_; }

  /// Runs body(begin, end) over a partition of [0, n).
  template <class Body>
  void for_range(Index n, const Body& body) const {
    if (!arena_ || n < 2) {
      body(Index{0}, n);
      return;
    }
    arena_->execute([&] {
      tbb::parallel_for(
          tbb::blocked_range<Index>(0, n),
          [&](const tbb::blocked_range<Index>& r) { body(r.begin(), r.end()); },
          tbb::static_partitioner());
    });
  }

 private:
  int threads_;
  std::unique_ptr<tbb::global_control> limit_;
  std::unique_ptr<tbb::task_arena> arena_;
};

}  // namespace dual_enkf::detail
