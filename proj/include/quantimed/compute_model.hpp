// Node processing speeds, deadline/batch conversion and simulated time.
#pragma once

#include <cstddef>
#include <cstdint>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "quantimed/rng.hpp"

namespace quantimed {

/// Distribution of per-node, per-iteration speed V (gradients / second).
class SpeedModel {
 public:
  enum class Kind { kUniform, kDegenerate, kEmpirical };

  static SpeedModel uniform(double lo, double hi);
  static SpeedModel degenerate(double value);
  static SpeedModel empirical(std::vector<double> values);

  Kind kind() const { return kind_; }
  double support_min() const { return lo_; }
  double support_max() const { return hi_; }
  const std::vector<double>& values() const { return values_; }
  double mean() const;
  std::string describe() const;

 private:
  SpeedModel(Kind kind, double lo, double hi, std::vector<double> values);

  Kind kind_;
  double lo_;
  double hi_;
  std::vector<double> values_;
};

double draw_speed(const SpeedModel& model, Rng& rng);

/// min(floor(v T_d), m).
std::size_t batch_size_for_deadline(double speed, double deadline, std::size_t m);

/// T_d = b / E[V].
double deadline_for_batch(double batch, const SpeedModel& model);

/// E[1/V]: (ln hi - ln lo) / (hi - lo) for uniform, exact otherwise.
double expected_inverse_speed(const SpeedModel& model);

/// b_eff = min(T_d / E[1/V], m).
double effective_batch(double deadline, const SpeedModel& model, std::size_t m);

enum class SyncMode { kDeadline, kFixedBatch };

/// Compute phase of one synchronous round given the realized node speeds:
/// T_d in deadline mode, b / min_i V_i in fixed-batch mode.
double sync_compute_time(SyncMode mode, double batch_or_deadline, std::span<const double> speeds);

/// Draws n fresh speeds and returns compute time + comm_seconds.
double sync_round_time(SyncMode mode, double batch_or_deadline, const SpeedModel& model, std::size_t n,
                       double comm_seconds, Rng& rng);

/// Simulated wall clock; never moves backwards.
class SimClock {
 public:
  double now() const { return now_; }
  void advance(double seconds);
  void advance_to(double time);

 private:
  double now_ = 0.0;
};

struct AsyncEvent {
  double time = 0.0;
  std::size_t node = 0;
  std::uint64_t update = 0;  // per-node update counter, 0-based
  double speed = 0.0;

  bool operator==(const AsyncEvent&) const = default;
};

/// Completion events of n free-running workers, each computing a fixed batch
/// of b gradients per update. Node i's k-th update completes at
/// sum_{l <= k} (b / V_{i,l} + overhead). Events come out ordered by
/// (time, node).
class AsyncSchedule {
 public:
  AsyncSchedule(std::size_t n, double batch, SpeedModel model, std::uint64_t seed, double overhead = 0.0);
  /// One speed model per node.
  AsyncSchedule(std::vector<SpeedModel> models, double batch, std::uint64_t seed, double overhead = 0.0);

  AsyncEvent peek() const { return queue_.top(); }
  AsyncEvent next();

 private:
  struct Later {
    bool operator()(const AsyncEvent& a, const AsyncEvent& b) const {
      return a.time != b.time ? a.time > b.time : a.node > b.node;
    }
  };
  AsyncEvent schedule(std::size_t node, std::uint64_t update, double start) const;

  double batch_;
  double overhead_;
  std::vector<SpeedModel> models_;
  std::uint64_t seed_;
  std::priority_queue<AsyncEvent, std::vector<AsyncEvent>, Later> queue_;
};

/// The first `count` events of an AsyncSchedule.
std::vector<AsyncEvent> async_schedule(std::size_t n, double batch, const SpeedModel& model, std::uint64_t seed,
                                       std::size_t count, double overhead = 0.0);

}  // namespace quantimed
