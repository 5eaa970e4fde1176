#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "quantimed/experiment.hpp"

namespace quantimed {

namespace {

using nlohmann::json;

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, end);
}

double parse_number(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::runtime_error("csv: bad number '" + s + "'");
  return v;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

}  // namespace

RecordFormat parse_format(const std::string& name) {
  if (name == "csv") return RecordFormat::kCsv;
  if (name == "json") return RecordFormat::kJson;
  throw std::invalid_argument("unknown record format '" + name + "' (expected csv or json)");
}

RecordFormat format_for_path(const std::filesystem::path& path, RecordFormat fallback) {
  const auto ext = path.extension().string();
  if (ext == ".csv") return RecordFormat::kCsv;
  if (ext == ".json") return RecordFormat::kJson;
  return fallback;
}

void write_csv(std::ostream& out, const RunRecord& record) {
  out << kCsvHeader << '\n';
  for (const MetricsRow& r : record.rows) {
    out << r.iteration << ',' << format_number(r.sim_time) << ',' << format_number(r.loss) << ','
        << format_number(r.gap) << ',' << format_number(r.consensus) << ',' << format_number(r.grad_norm_sq) << ','
        << r.bytes << '\n';
  }
}

std::string to_csv(const RunRecord& record) {
  std::ostringstream out;
  write_csv(out, record);
  return out.str();
}

std::vector<MetricsRow> read_csv_rows(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw std::runtime_error("csv: unexpected header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw std::runtime_error("csv: expected 7 columns in '" + line + "'");
    MetricsRow r;
    r.iteration = std::stoull(cells[0]);
    r.sim_time = parse_number(cells[1]);
    r.loss = parse_number(cells[2]);
    r.gap = parse_number(cells[3]);
    r.consensus = parse_number(cells[4]);
    r.grad_norm_sq = parse_number(cells[5]);
    r.bytes = std::stoull(cells[6]);
    rows.push_back(r);
  }
  return rows;
}

std::string to_json(const RunRecord& record) {
  json doc;
  doc["config"] = record.config_text;
  doc["objective_note"] = record.objective_note;
  const DerivedValues& d = record.derived;
  doc["derived"] = {{"kappa", d.kappa},
                    {"beta", d.beta},
                    {"deadline", d.deadline},
                    {"alpha", d.alpha},
                    {"eps", d.eps},
                    {"expected_inverse_speed", d.expected_inverse_speed},
                    {"effective_batch", d.effective_batch},
                    {"comm_seconds", d.comm_seconds},
                    {"dimension", d.dimension},
                    {"edges", d.edges}};
  json rows = json::array();
  for (const MetricsRow& r : record.rows) {
    rows.push_back({{"iter", r.iteration},
                    {"sim_time_s", number_or_null(r.sim_time)},
                    {"loss", number_or_null(r.loss)},
                    {"gap", number_or_null(r.gap)},
                    {"consensus", number_or_null(r.consensus)},
                    {"grad_norm_sq", number_or_null(r.grad_norm_sq)},
                    {"bytes", r.bytes}});
  }
  doc["rows"] = std::move(rows);
  json models = json::array();
  for (Eigen::Index i = 0; i < record.final_models.cols(); ++i) {
    json col = json::array();
    for (Eigen::Index k = 0; k < record.final_models.rows(); ++k) col.push_back(record.final_models(k, i));
    models.push_back(std::move(col));
  }
  doc["final_models"] = std::move(models);
  doc["models_digest"] = record.models_digest;
  doc["clamped"] = record.clamped;
  doc["updates"] = record.updates;
  doc["wall_seconds"] = record.wall_seconds;
  return doc.dump(1) + "\n";
}

RunRecord from_json(const std::string& text) {
  const json doc = json::parse(text);
  RunRecord record;
  record.config_text = doc.at("config").get<std::string>();
  record.objective_note = doc.at("objective_note").get<std::string>();
  const json& d = doc.at("derived");
  record.derived.kappa = d.at("kappa").get<double>();
  record.derived.beta = d.at("beta").get<double>();
  record.derived.deadline = d.at("deadline").get<double>();
  record.derived.alpha = d.at("alpha").get<double>();
  record.derived.eps = d.at("eps").get<double>();
  record.derived.expected_inverse_speed = d.at("expected_inverse_speed").get<double>();
  record.derived.effective_batch = d.at("effective_batch").get<double>();
  record.derived.comm_seconds = d.at("comm_seconds").get<double>();
  record.derived.dimension = d.at("dimension").get<std::size_t>();
  record.derived.edges = d.at("edges").get<std::size_t>();
  for (const json& r : doc.at("rows")) {
    MetricsRow row;
    row.iteration = r.at("iter").get<std::uint64_t>();
    row.sim_time = number_from(r.at("sim_time_s"));
    row.loss = number_from(r.at("loss"));
    row.gap = number_from(r.at("gap"));
    row.consensus = number_from(r.at("consensus"));
    row.grad_norm_sq = number_from(r.at("grad_norm_sq"));
    row.bytes = r.at("bytes").get<std::uint64_t>();
    record.rows.push_back(row);
  }
  const json& models = doc.at("final_models");
  const auto n = static_cast<Eigen::Index>(models.size());
  const auto p = n > 0 ? static_cast<Eigen::Index>(models.at(0).size()) : Eigen::Index{0};
  record.final_models.resize(p, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < p; ++k)
      record.final_models(k, i) = models.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k)).get<double>();
  record.models_digest = doc.at("models_digest").get<std::string>();
  record.clamped = doc.at("clamped").get<std::size_t>();
  record.updates = doc.at("updates").get<std::uint64_t>();
  record.wall_seconds = doc.at("wall_seconds").get<double>();
  return record;
}

void write_record(const RunRecord& record, const std::filesystem::path& path, RecordFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  if (format == RecordFormat::kCsv) write_csv(out, record);
  else out << to_json(record);
  out.flush();
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

RunRecord read_record(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  if (format_for_path(path, RecordFormat::kJson) == RecordFormat::kCsv) {
    RunRecord record;
    record.rows = read_csv_rows(in);
    return record;
  }
  std::ostringstream text;
  text << in.rdbuf();
  return from_json(text.str());
}

}  // namespace quantimed
