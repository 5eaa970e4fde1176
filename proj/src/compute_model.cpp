#include "quantimed/compute_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace quantimed {

SpeedModel::SpeedModel(Kind kind, double lo, double hi, std::vector<double> values)
    : kind_(kind), lo_(lo), hi_(hi), values_(std::move(values)) {
  if (!(lo_ > 0.0) || !(hi_ >= lo_) || !std::isfinite(hi_))
    throw std::invalid_argument("SpeedModel: support must satisfy 0 < lo <= hi < inf");
}

SpeedModel SpeedModel::uniform(double lo, double hi) { return SpeedModel(Kind::kUniform, lo, hi, {}); }

SpeedModel SpeedModel::degenerate(double value) { return SpeedModel(Kind::kDegenerate, value, value, {}); }

SpeedModel SpeedModel::empirical(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("SpeedModel: empirical list is empty");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double l = *lo;
  const double h = *hi;
  return SpeedModel(Kind::kEmpirical, l, h, std::move(values));
}

double SpeedModel::mean() const {
  switch (kind_) {
    case Kind::kUniform: return 0.5 * (lo_ + hi_);
    case Kind::kDegenerate: return lo_;
    case Kind::kEmpirical:
      return std::accumulate(values_.begin(), values_.end(), 0.0) / static_cast<double>(values_.size());
  }
  return 0.0;
}

std::string SpeedModel::describe() const {
  std::ostringstream out;
  out.precision(17);
  switch (kind_) {
    case Kind::kUniform: out << "uniform(" << lo_ << "," << hi_ << ")"; break;
    case Kind::kDegenerate: out << "degenerate(" << lo_ << ")"; break;
    case Kind::kEmpirical: out << "empirical(" << values_.size() << " values)"; break;
  }
  return out.str();
}

double draw_speed(const SpeedModel& model, Rng& rng) {
  switch (model.kind()) {
    case SpeedModel::Kind::kUniform: return rng.uniform(model.support_min(), model.support_max());
    case SpeedModel::Kind::kDegenerate: return model.support_min();
    case SpeedModel::Kind::kEmpirical: return model.values()[rng.below(model.values().size())];
  }
  return model.support_min();
}

std::size_t batch_size_for_deadline(double speed, double deadline, std::size_t m) {
  if (deadline < 0.0) throw std::invalid_argument("batch_size_for_deadline: deadline must be >= 0");
  const double raw = std::floor(speed * deadline);
  if (raw >= static_cast<double>(m)) return m;
  return static_cast<std::size_t>(raw);
}

double deadline_for_batch(double batch, const SpeedModel& model) { return batch / model.mean(); }

double expected_inverse_speed(const SpeedModel& model) {
  switch (model.kind()) {
    case SpeedModel::Kind::kUniform: {
      const double lo = model.support_min();
      const double hi = model.support_max();
      if (hi == lo) return 1.0 / lo;
      return (std::log(hi) - std::log(lo)) / (hi - lo);
    }
    case SpeedModel::Kind::kDegenerate: return 1.0 / model.support_min();
    case SpeedModel::Kind::kEmpirical: {
      double sum = 0.0;
      for (double v : model.values()) sum += 1.0 / v;
      return sum / static_cast<double>(model.values().size());
    }
  }
  return 0.0;
}

double effective_batch(double deadline, const SpeedModel& model, std::size_t m) {
  return std::min(deadline / expected_inverse_speed(model), static_cast<double>(m));
}

double sync_compute_time(SyncMode mode, double batch_or_deadline, std::span<const double> speeds) {
  if (mode == SyncMode::kDeadline) return batch_or_deadline;
  if (speeds.empty()) throw std::invalid_argument("sync_compute_time: no node speeds");
  return batch_or_deadline / *std::min_element(speeds.begin(), speeds.end());
}

double sync_round_time(SyncMode mode, double batch_or_deadline, const SpeedModel& model, std::size_t n,
                       double comm_seconds, Rng& rng) {
  if (n == 0) throw std::invalid_argument("sync_round_time: n must be >= 1");
  std::vector<double> speeds(n);
  for (auto& v : speeds) v = draw_speed(model, rng);
  return sync_compute_time(mode, batch_or_deadline, speeds) + comm_seconds;
}

void SimClock::advance(double seconds) {
  if (!(seconds >= 0.0)) throw std::invalid_argument("SimClock: cannot move backwards");
  now_ += seconds;
}

void SimClock::advance_to(double time) {
  if (time < now_) throw std::invalid_argument("SimClock: cannot move backwards");
  now_ = time;
}

AsyncSchedule::AsyncSchedule(std::size_t n, double batch, SpeedModel model, std::uint64_t seed, double overhead)
    : AsyncSchedule(std::vector<SpeedModel>(n, model), batch, seed, overhead) {}

AsyncSchedule::AsyncSchedule(std::vector<SpeedModel> models, double batch, std::uint64_t seed, double overhead)
    : batch_(batch), overhead_(overhead), models_(std::move(models)), seed_(seed) {
  if (!(batch >= 1.0)) throw std::invalid_argument("AsyncSchedule: batch must be >= 1");
  if (!(overhead >= 0.0)) throw std::invalid_argument("AsyncSchedule: overhead must be >= 0");
  if (models_.empty()) throw std::invalid_argument("AsyncSchedule: n must be >= 1");
  for (std::size_t i = 0; i < models_.size(); ++i) queue_.push(schedule(i, 0, 0.0));
}

AsyncEvent AsyncSchedule::schedule(std::size_t node, std::uint64_t update, double start) const {
  Rng rng(StreamKey{seed_, node, StreamPurpose::kSpeed, update});
  const double v = draw_speed(models_[node], rng);
  return AsyncEvent{start + batch_ / v + overhead_, node, update, v};
}

AsyncEvent AsyncSchedule::next() {
  const AsyncEvent ev = queue_.top();
  queue_.pop();
  queue_.push(schedule(ev.node, ev.update + 1, ev.time));
  return ev;
}

std::vector<AsyncEvent> async_schedule(std::size_t n, double batch, const SpeedModel& model, std::uint64_t seed,
                                       std::size_t count, double overhead) {
  AsyncSchedule sched(n, batch, model, seed, overhead);
  std::vector<AsyncEvent> events;
  events.reserve(count);
  for (std::size_t k = 0; k < count; ++k) events.push_back(sched.next());
  return events;
}

}  // namespace quantimed
