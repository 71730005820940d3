// Copyright 2026 The pdconv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>

namespace pdconv {

/// Thread cap for internal kernels. Initialized from PDCONV_THREADS, else the
/// hardware concurrency.
int thread_count();
void set_thread_count(int threads);

/// Runs fn(i) for i in [0, n). Each index is handled by exactly one thread, so
/// kernels that write disjoint outputs per index stay deterministic.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
#if defined(_OPENMP)
#pragma omp parallel for schedule(static) num_threads(thread_count()) if (n > 1 && thread_count() > 1)
  for (std::int64_t i = 0; i < n; ++i) fn(i);
#else
  for (std::int64_t i = 0; i < n; ++i) fn(i);
#endif
}

}  // namespace pdconv
