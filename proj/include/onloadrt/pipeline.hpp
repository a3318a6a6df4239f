#pragma once

// Bounded-queue pipeline machinery. Requests flow through a fixed chain of
// stages connected by small queues; steady-state throughput is set by the
// slowest stage while the others overlap with it.

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace onloadrt {

template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(size_t cap) : cap_(cap ? cap : 1) {}

  // Blocks while full; false once the queue is closed.
  bool push(T v) {
    std::unique_lock<std::mutex> lk(m_);
    not_full_.wait(lk, [&] { return q_.size() < cap_ || closed_; });
    if (closed_) return false;
    q_.push_back(std::move(v));
    not_empty_.notify_one();
    return true;
  }

  // Blocks while empty; nullopt once closed and drained.
  std::optional<T> pop() {
    std::unique_lock<std::mutex> lk(m_);
    not_empty_.wait(lk, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return std::nullopt;
    T v = std::move(q_.front());
    q_.pop_front();
    not_full_.notify_one();
    return v;
  }

  void close() {
    std::lock_guard<std::mutex> lk(m_);
    closed_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }

 private:
  size_t cap_;
  std::deque<T> q_;
  bool closed_ = false;
  std::mutex m_;
  std::condition_variable not_full_, not_empty_;
};

struct PipelineReport {
  size_t completed = 0;
  size_t warmup = 0;
  double window_ms = 0;        // warmup-th completion to last completion
  double throughput_rps = 0;   // completions per second inside the window
  std::vector<double> stage_busy_ms;   // total work time per stage
  std::vector<double> completion_ms;   // per item, relative to run start
  std::vector<double> latency_ms;      // per item, first-stage entry to done
};

// Requests/second over the completions after the first `warmup`: the pipeline
// needs a few items in flight before the steady state is visible.
inline double throughput_after_warmup(const std::vector<double>& completion_ms,
                                      size_t warmup) {
  if (completion_ms.size() < warmup + 2) return 0;
  double span = completion_ms.back() - completion_ms[warmup];
  size_t n = completion_ms.size() - 1 - warmup;
  return span > 0 ? 1000.0 * double(n) / span : 0;
}

// Pushes items 0..count-1 through the stage chain. Every stage but the last
// runs on its own thread; the last runs on the caller. Queue capacity bounds
// how far upstream stages may run ahead.
inline PipelineReport run_staged_pipeline(
    size_t count, size_t warmup, size_t queue_cap,
    const std::vector<std::function<void(size_t)>>& stages) {
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::duration d) {
    return std::chrono::duration<double, std::milli>(d).count();
  };

  PipelineReport rep;
  rep.warmup = warmup;
  rep.stage_busy_ms.assign(stages.size(), 0.0);
  if (stages.empty() || count == 0) return rep;
  rep.completion_ms.reserve(count);
  rep.latency_ms.assign(count, 0.0);

  std::vector<std::unique_ptr<BoundedQueue<size_t>>> queues;
  for (size_t i = 0; i + 1 < stages.size(); ++i)
    queues.push_back(std::make_unique<BoundedQueue<size_t>>(queue_cap));

  std::vector<clock::time_point> entered(count);
  const auto t0 = clock::now();

  std::vector<std::thread> workers;
  for (size_t si = 0; si + 1 < stages.size(); ++si) {
    workers.emplace_back([&, si] {
      for (size_t produced = 0;;) {
        size_t item;
        if (si == 0) {
          if (produced == count) break;
          item = produced++;
          entered[item] = clock::now();
        } else {
          auto got = queues[si - 1]->pop();
          if (!got) break;
          item = *got;
        }
        auto s = clock::now();
        stages[si](item);
        rep.stage_busy_ms[si] += ms(clock::now() - s);
        if (!queues[si]->push(item)) break;
      }
      queues[si]->close();
    });
  }

  const size_t fi = stages.size() - 1;
  for (size_t done = 0; done < count; ++done) {
    size_t item;
    if (fi == 0) {
      item = done;
      entered[item] = clock::now();
    } else {
      auto got = queues[fi - 1]->pop();
      if (!got) break;
      item = *got;
    }
    auto s = clock::now();
    stages[fi](item);
    auto e = clock::now();
    rep.stage_busy_ms[fi] += ms(e - s);
    rep.completion_ms.push_back(ms(e - t0));
    rep.latency_ms[item] = ms(e - entered[item]);
  }
  for (std::thread& t : workers) t.join();

  rep.completed = rep.completion_ms.size();
  rep.throughput_rps = throughput_after_warmup(rep.completion_ms, warmup);
  if (rep.completed >= warmup + 2)
    rep.window_ms = rep.completion_ms.back() - rep.completion_ms[warmup];
  return rep;
}

}  // namespace onloadrt
