#include "quantimed/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

namespace quantimed {

ConfigError::ConfigError(int line, const std::string& message)
    : std::runtime_error(line > 0 ? "config line " + std::to_string(line) + ": " + message : "config: " + message),
      line_(line) {}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, end);
}

double to_double(const std::string& value, int line, const std::string& key) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(out))
    throw ConfigError(line, key + ": expected a number, got '" + value + "'");
  return out;
}

std::uint64_t to_uint(const std::string& value, int line, const std::string& key) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError(line, key + ": expected a non-negative integer, got '" + value + "'");
  return out;
}

bool to_bool(const std::string& value, int line, const std::string& key) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(line, key + ": expected true or false, got '" + value + "'");
}

std::string one_of(const std::string& value, std::initializer_list<const char*> allowed, int line,
                   const std::string& key) {
  for (const char* a : allowed)
    if (value == a) return value;
  std::string list;
  for (const char* a : allowed) list += std::string(list.empty() ? "" : "|") + a;
  throw ConfigError(line, key + ": expected one of " + list + ", got '" + value + "'");
}

Schedule parse_schedule(const std::string& value, int line) {
  if (value == "convex") return Schedule::kConvex;
  if (value == "nonconvex") return Schedule::kNonconvex;
  if (value == "constant") return Schedule::kConstant;
  throw ConfigError(line, "step.schedule: expected convex|nonconvex|constant, got '" + value + "'");
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&, int)> set;
  std::function<std::optional<std::string>(const ExperimentConfig&)> get;
};

template <typename T>
std::optional<std::string> show(const std::optional<T>& v) {
  if (!v) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>) return format_double(*v);
  else return std::to_string(*v);
}

// Declaration order is the canonical echo order.
const std::vector<std::pair<std::string, Field>>& fields() {
  using C = ExperimentConfig;
  using S = std::string;
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", {[](C& c, const S& v, int l) { c.seed = to_uint(v, l, "seed"); },
                [](const C& c) -> std::optional<S> { return std::to_string(c.seed); }}},
      {"algo", {[](C& c, const S& v, int l) {
                  try {
                    c.algo = parse_algorithm(v);
                  } catch (const std::invalid_argument&) {
                    throw ConfigError(l, "algo: expected quantimed|dsgd|qdsgd|async, got '" + v + "'");
                  }
                },
                [](const C& c) -> std::optional<S> { return S(to_string(c.algo)); }}},
      {"run.T", {[](C& c, const S& v, int l) { c.iterations = to_uint(v, l, "run.T"); },
                 [](const C& c) { return show(c.iterations); }}},
      {"run.time_budget", {[](C& c, const S& v, int l) { c.time_budget = to_double(v, l, "run.time_budget"); },
                           [](const C& c) { return show(c.time_budget); }}},
      {"run.async_samples",
       {[](C& c, const S& v, int l) { c.async_samples = to_uint(v, l, "run.async_samples"); },
        [](const C& c) -> std::optional<S> { return std::to_string(c.async_samples); }}},
      {"run.record_every", {[](C& c, const S& v, int l) { c.record_every = to_uint(v, l, "run.record_every"); },
                            [](const C& c) -> std::optional<S> { return std::to_string(c.record_every); }}},
      {"objective.family", {[](C& c, const S& v, int l) {
                              try {
                                c.family = parse_family(v);
                              } catch (const std::invalid_argument&) {
                                throw ConfigError(l, "objective.family: expected quadratic|logistic|mlp, got '" + v +
                                                         "'");
                              }
                            },
                            [](const C& c) -> std::optional<S> { return S(to_string(c.family)); }}},
      {"objective.n", {[](C& c, const S& v, int l) { c.n = to_uint(v, l, "objective.n"); },
                       [](const C& c) -> std::optional<S> { return std::to_string(c.n); }}},
      {"objective.m", {[](C& c, const S& v, int l) { c.m = to_uint(v, l, "objective.m"); },
                       [](const C& c) -> std::optional<S> { return std::to_string(c.m); }}},
      {"objective.p", {[](C& c, const S& v, int l) { c.p = to_uint(v, l, "objective.p"); },
                       [](const C& c) -> std::optional<S> { return std::to_string(c.p); }}},
      {"objective.hidden", {[](C& c, const S& v, int l) { c.hidden = to_uint(v, l, "objective.hidden"); },
                            [](const C& c) -> std::optional<S> { return std::to_string(c.hidden); }}},
      {"objective.ridge", {[](C& c, const S& v, int l) { c.ridge = to_double(v, l, "objective.ridge"); },
                           [](const C& c) -> std::optional<S> { return format_double(c.ridge); }}},
      {"objective.center_scale",
       {[](C& c, const S& v, int l) { c.center_scale = to_double(v, l, "objective.center_scale"); },
        [](const C& c) -> std::optional<S> { return format_double(c.center_scale); }}},
      {"objective.csv", {[](C& c, const S& v, int) { c.csv = v; },
                         [](const C& c) -> std::optional<S> {
                           if (c.csv.empty()) return std::nullopt;
                           return c.csv;
                         }}},
      {"objective.seed", {[](C& c, const S& v, int l) { c.data_seed = to_uint(v, l, "objective.seed"); },
                          [](const C& c) { return show(c.data_seed); }}},
      {"topology.kind",
       {[](C& c, const S& v, int l) {
          c.topology = one_of(v, {"erdos_renyi", "ring", "path", "complete"}, l, "topology.kind");
        },
        [](const C& c) -> std::optional<S> { return c.topology; }}},
      {"topology.p_c", {[](C& c, const S& v, int l) { c.p_c = to_double(v, l, "topology.p_c"); },
                        [](const C& c) -> std::optional<S> { return format_double(c.p_c); }}},
      {"topology.kappa", {[](C& c, const S& v, int l) { c.kappa = to_double(v, l, "topology.kappa"); },
                          [](const C& c) { return show(c.kappa); }}},
      {"topology.margin", {[](C& c, const S& v, int l) { c.margin = to_double(v, l, "topology.margin"); },
                           [](const C& c) -> std::optional<S> { return format_double(c.margin); }}},
      {"topology.seed", {[](C& c, const S& v, int l) { c.topology_seed = to_uint(v, l, "topology.seed"); },
                         [](const C& c) { return show(c.topology_seed); }}},
      {"quantizer.s", {[](C& c, const S& v, int l) { c.bits = static_cast<int>(to_uint(v, l, "quantizer.s")); },
                       [](const C& c) { return show(c.bits); }}},
      {"quantizer.eta", {[](C& c, const S& v, int l) { c.eta = to_double(v, l, "quantizer.eta"); },
                         [](const C& c) { return show(c.eta); }}},
      {"quantizer.lo", {[](C& c, const S& v, int l) { c.lo = to_double(v, l, "quantizer.lo"); },
                        [](const C& c) { return show(c.lo); }}},
      {"speed.kind", {[](C& c, const S& v, int l) { c.speed = one_of(v, {"uniform", "degenerate"}, l, "speed.kind"); },
                      [](const C& c) -> std::optional<S> { return c.speed; }}},
      {"speed.lo", {[](C& c, const S& v, int l) { c.speed_lo = to_double(v, l, "speed.lo"); },
                    [](const C& c) -> std::optional<S> { return format_double(c.speed_lo); }}},
      {"speed.hi", {[](C& c, const S& v, int l) { c.speed_hi = to_double(v, l, "speed.hi"); },
                    [](const C& c) -> std::optional<S> { return format_double(c.speed_hi); }}},
      {"speed.value", {[](C& c, const S& v, int l) { c.speed_value = to_double(v, l, "speed.value"); },
                       [](const C& c) -> std::optional<S> { return format_double(c.speed_value); }}},
      {"compute.b", {[](C& c, const S& v, int l) { c.batch = to_double(v, l, "compute.b"); },
                     [](const C& c) { return show(c.batch); }}},
      {"compute.T_d", {[](C& c, const S& v, int l) { c.deadline = to_double(v, l, "compute.T_d"); },
                       [](const C& c) { return show(c.deadline); }}},
      {"compute.Tc", {[](C& c, const S& v, int l) { c.tc = to_double(v, l, "compute.Tc"); },
                      [](const C& c) -> std::optional<S> { return format_double(c.tc); }}},
      {"compute.per_degree_comm",
       {[](C& c, const S& v, int l) { c.per_degree_comm = to_bool(v, l, "compute.per_degree_comm"); },
        [](const C& c) -> std::optional<S> { return S(c.per_degree_comm ? "true" : "false"); }}},
      {"step.schedule", {[](C& c, const S& v, int l) { c.schedule = parse_schedule(v, l); },
                         [](const C& c) -> std::optional<S> { return S(to_string(c.schedule)); }}},
      {"step.delta", {[](C& c, const S& v, int l) { c.delta = to_double(v, l, "step.delta"); },
                      [](const C& c) { return show(c.delta); }}},
      {"step.alpha", {[](C& c, const S& v, int l) { c.alpha = to_double(v, l, "step.alpha"); },
                      [](const C& c) { return show(c.alpha); }}},
      {"step.eps", {[](C& c, const S& v, int l) { c.eps = to_double(v, l, "step.eps"); },
                    [](const C& c) { return show(c.eps); }}},
      {"step.alpha_scale", {[](C& c, const S& v, int l) { c.alpha_scale = to_double(v, l, "step.alpha_scale"); },
                            [](const C& c) -> std::optional<S> { return format_double(c.alpha_scale); }}},
      {"step.eps_scale", {[](C& c, const S& v, int l) { c.eps_scale = to_double(v, l, "step.eps_scale"); },
                          [](const C& c) -> std::optional<S> { return format_double(c.eps_scale); }}},
      {"init.kind", {[](C& c, const S& v, int l) { c.init = one_of(v, {"zero", "gaussian"}, l, "init.kind"); },
                     [](const C& c) -> std::optional<S> { return c.init; }}},
      {"init.scale", {[](C& c, const S& v, int l) { c.init_scale = to_double(v, l, "init.scale"); },
                      [](const C& c) -> std::optional<S> { return format_double(c.init_scale); }}},
  };
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& [name, field] : fields())
    if (name == key) return &field;
  return nullptr;
}

void validate_impl(const ExperimentConfig& c, const std::map<std::string, int>& lines) {
  auto line_of = [&](const std::string& key) {
    auto it = lines.find(key);
    return it == lines.end() ? 0 : it->second;
  };
  auto fail = [&](const std::string& key, const std::string& msg) -> void { throw ConfigError(line_of(key), msg); };

  if (c.n < 1) fail("objective.n", "objective.n must be >= 1");
  if (c.m < 1) fail("objective.m", "objective.m must be >= 1");
  if (c.family != ObjectiveFamily::kLogistic || c.csv.empty())
    if (c.p < 1) fail("objective.p", "objective.p must be >= 1");
  if (c.family == ObjectiveFamily::kMlp && c.hidden < 1) fail("objective.hidden", "objective.hidden must be >= 1");
  if (c.ridge < 0.0) fail("objective.ridge", "objective.ridge must be >= 0");
  if (!c.csv.empty() && c.family != ObjectiveFamily::kLogistic)
    fail("objective.csv", "objective.csv is only supported for the logistic family");

  if (c.topology == "erdos_renyi" && !(c.p_c > 0.0 && c.p_c <= 1.0))
    fail("topology.p_c", "topology.p_c must lie in (0, 1]");
  if (c.margin < 0.0) fail("topology.margin", "topology.margin must be >= 0");
  if (c.kappa && !(*c.kappa > 0.0)) fail("topology.kappa", "topology.kappa must be positive");

  if (c.bits.has_value() != c.eta.has_value())
    fail(c.bits ? "quantizer.s" : "quantizer.eta", "quantizer.s and quantizer.eta must be given together");
  if (c.lo && !c.bits) fail("quantizer.lo", "quantizer.lo requires quantizer.s and quantizer.eta");
  if (c.bits && (*c.bits < 1 || *c.bits > kMaxQuantizerBits)) fail("quantizer.s", "quantizer.s must lie in [1, 16]");
  if (c.eta && !(*c.eta > 0.0)) fail("quantizer.eta", "quantizer.eta must be positive");

  if (c.speed == "uniform" && !(c.speed_lo > 0.0 && c.speed_hi >= c.speed_lo))
    fail("speed.lo", "uniform speed needs 0 < speed.lo <= speed.hi");
  if (c.speed == "degenerate" && !(c.speed_value > 0.0)) fail("speed.value", "speed.value must be positive");

  if (c.tc < 0.0) fail("compute.Tc", "compute.Tc must be >= 0");
  if (c.batch && !(*c.batch >= 1.0 && std::floor(*c.batch) == *c.batch))
    fail("compute.b", "compute.b must be a positive integer");
  if (c.deadline && !(*c.deadline > 0.0)) fail("compute.T_d", "compute.T_d must be positive");

  if (c.delta && !(*c.delta > 0.0 && *c.delta < 0.5))
    fail("step.delta", "step.delta must lie in the open interval (0, 1/2)");
  if (c.schedule == Schedule::kConvex && !c.delta) fail("step.schedule", "convex schedule requires step.delta");
  if (c.schedule == Schedule::kConstant && !c.alpha) fail("step.schedule", "constant schedule requires step.alpha");
  if (c.alpha && !(*c.alpha >= 0.0)) fail("step.alpha", "step.alpha must be >= 0");
  if (c.eps && !(*c.eps > 0.0 && *c.eps <= 1.0)) fail("step.eps", "step.eps must lie in (0, 1]");
  if (!(c.alpha_scale > 0.0)) fail("step.alpha_scale", "step.alpha_scale must be positive");
  if (!(c.eps_scale > 0.0)) fail("step.eps_scale", "step.eps_scale must be positive");
  if (c.init == "gaussian" && !(c.init_scale > 0.0)) fail("init.scale", "gaussian init requires init.scale > 0");

  switch (c.algo) {
    case Algorithm::kQuanTimed:
      if (!c.deadline && !c.batch) fail("algo", "quantimed needs a deadline: set compute.T_d or compute.b");
      break;
    case Algorithm::kDsgd:
      if (c.bits) fail("quantizer.s", "dsgd exchanges unquantized models; remove quantizer.*");
      [[fallthrough]];
    case Algorithm::kQdsgd:
      if (!c.batch) fail("algo", std::string(to_string(c.algo)) + " needs a fixed batch: set compute.b");
      if (c.deadline) fail("compute.T_d", std::string(to_string(c.algo)) + " uses a fixed batch, not a deadline");
      break;
    case Algorithm::kAsync:
      if (!c.batch) fail("algo", "async needs a fixed batch: set compute.b");
      if (c.deadline) fail("compute.T_d", "async uses a fixed batch, not a deadline");
      if (!c.time_budget || !(*c.time_budget > 0.0)) fail("algo", "async needs run.time_budget > 0");
      if (c.iterations) fail("run.T", "async runs on run.time_budget, not run.T");
      if (c.schedule != Schedule::kConstant) fail("step.schedule", "async requires step.schedule = constant");
      if (c.async_samples < 1) fail("run.async_samples", "run.async_samples must be >= 1");
      break;
  }
  if (c.algo != Algorithm::kAsync) {
    if (!c.iterations) fail("algo", "synchronous algorithms need run.T");
    if (c.time_budget) fail("run.time_budget", "run.time_budget applies to async only");
  }
  if (c.record_every < 1) fail("run.record_every", "run.record_every must be >= 1");
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig config;
  std::map<std::string, int> lines;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line_no, "expected `key = value`");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* field = find_field(key);
    if (field == nullptr) throw ConfigError(line_no, "unknown key '" + key + "'");
    if (value.empty()) throw ConfigError(line_no, key + ": missing value");
    field->set(config, value, line_no);
    lines[key] = line_no;
  }
  if (!lines.contains("seed")) throw ConfigError(0, "missing required key 'seed' (runs are always seeded)");
  if (!lines.contains("algo")) throw ConfigError(0, "missing required key 'algo'");
  validate_impl(config, lines);
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot open config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string to_text(const ExperimentConfig& config) {
  std::ostringstream out;
  for (const auto& [name, field] : fields()) {
    if (auto value = field.get(config)) out << name << " = " << *value << '\n';
  }
  return out.str();
}

void validate(const ExperimentConfig& config) { validate_impl(config, {}); }

}  // namespace quantimed
