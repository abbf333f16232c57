#include "vitlat/datastore.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vitlat/rng.hpp"

namespace vitlat {

namespace {

const char* kCsvHeader =
    "model_id,node_id,op_kind,device,framework,core_config,precision,target,"
    "latency_us,flop_count,traffic_bytes";

constexpr int kFixedColumns = 11;

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const char* what, size_t row) {
  double v;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw DataError("row " + std::to_string(row) + ": malformed " + what + " '" + s + "'");
  return v;
}

std::string record_key(const MeasurementRecord& r) {
  return r.model_id + "\x1f" + std::to_string(r.node_id) + "\x1f" + r.context.key();
}

void check_record(const MeasurementRecord& r, size_t row) {
  if (r.latency_value <= 0)
    throw DataError("row " + std::to_string(row) + ": latency_us must be > 0, got '" +
                    r.latency_us + "'");
  if (r.model_id.empty())
    throw DataError("row " + std::to_string(row) + ": empty model_id");
}

}  // namespace

const char* MeasurementSet::csv_header() { return kCsvHeader; }

std::string format_latency(double us) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", us);
  return buf;
}

void MeasurementSet::add(MeasurementRecord rec) {
  std::string key = record_key(rec);
  auto [it, inserted] = index_.emplace(std::move(key), records_.size());
  if (!inserted)
    throw DataError("duplicate measurement key: model=" + rec.model_id +
                    " node=" + std::to_string(rec.node_id) + " context=" +
                    rec.context.key() + " (first at row " +
                    std::to_string(it->second + 1) + ")");
  records_.push_back(std::move(rec));
}

std::vector<std::string> MeasurementSet::model_ids() const {
  std::vector<std::string> ids;
  std::map<std::string, bool> seen;
  for (const auto& r : records_)
    if (!seen[r.model_id]) {
      seen[r.model_id] = true;
      ids.push_back(r.model_id);
    }
  return ids;
}

MeasurementSet MeasurementSet::ingest_csv(const std::string& text) {
  MeasurementSet set;
  std::istringstream in(text);
  std::string line;
  size_t row = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      if (line.rfind(kCsvHeader, 0) != 0)
        throw DataError("row 1: unexpected CSV header '" + line + "'");
      header_seen = true;
      continue;
    }
    auto cols = split_line(line, ',');
    if ((int)cols.size() < kFixedColumns)
      throw DataError("row " + std::to_string(row) + ": expected at least " +
                      std::to_string(kFixedColumns) + " columns, got " +
                      std::to_string(cols.size()));
    MeasurementRecord r;
    r.model_id = cols[0];
    r.node_id = (int)parse_double(cols[1], "node_id", row);
    r.op_kind = cols[2];
    r.context.device = cols[3];
    r.context.framework = cols[4];
    r.context.core_config = cols[5];
    r.context.precision = cols[6];
    r.context.target = cols[7];
    r.latency_us = cols[8];
    r.latency_value = parse_double(cols[8], "latency_us", row);
    if (!cols[9].empty()) r.flop_count = parse_double(cols[9], "flop_count", row);
    if (!cols[10].empty()) r.traffic_bytes = parse_double(cols[10], "traffic_bytes", row);
    r.extra.assign(cols.begin() + kFixedColumns, cols.end());
    check_record(r, row);
    set.add(std::move(r));
  }
  if (!header_seen && !text.empty())
    throw DataError("CSV input has no header line");
  return set;
}

MeasurementSet MeasurementSet::ingest_jsonl(const std::string& text) {
  MeasurementSet set;
  std::istringstream in(text);
  std::string line;
  size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw DataError("row " + std::to_string(row) + ": malformed JSON");
    MeasurementRecord r;
    r.model_id = j.at("model_id").get<std::string>();
    r.node_id = j.at("node_id").get<int>();
    r.op_kind = j.at("op_kind").get<std::string>();
    r.context.device = j.at("device").get<std::string>();
    r.context.framework = j.at("framework").get<std::string>();
    r.context.core_config = j.at("core_config").get<std::string>();
    r.context.precision = j.at("precision").get<std::string>();
    r.context.target = j.at("target").get<std::string>();
    r.latency_us = j.at("latency_us").get<std::string>();
    r.latency_value = parse_double(r.latency_us, "latency_us", row);
    if (j.contains("flop_count") && !j["flop_count"].is_null())
      r.flop_count = j["flop_count"].get<double>();
    if (j.contains("traffic_bytes") && !j["traffic_bytes"].is_null())
      r.traffic_bytes = j["traffic_bytes"].get<double>();
    if (j.contains("extra")) r.extra = j["extra"].get<std::vector<std::string>>();
    check_record(r, row);
    set.add(std::move(r));
  }
  return set;
}

MeasurementSet MeasurementSet::ingest_file(const std::string& path,
                                           const std::string& format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open measurement file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (format == "csv") return ingest_csv(buf.str());
  if (format == "jsonl") return ingest_jsonl(buf.str());
  throw DataError("unknown measurement format: " + format);
}

std::string MeasurementSet::to_csv() const {
  std::ostringstream out;
  out << kCsvHeader << "\n";
  auto num = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", *v);
    return std::string(buf);
  };
  for (const auto& r : records_) {
    out << r.model_id << ',' << r.node_id << ',' << r.op_kind << ','
        << r.context.device << ',' << r.context.framework << ','
        << r.context.core_config << ',' << r.context.precision << ','
        << r.context.target << ',' << r.latency_us << ',' << num(r.flop_count)
        << ',' << num(r.traffic_bytes);
    for (const auto& e : r.extra) out << ',' << e;
    out << "\n";
  }
  return out.str();
}

std::string MeasurementSet::to_jsonl() const {
  std::ostringstream out;
  for (const auto& r : records_) {
    nlohmann::json j{{"model_id", r.model_id},
                     {"node_id", r.node_id},
                     {"op_kind", r.op_kind},
                     {"device", r.context.device},
                     {"framework", r.context.framework},
                     {"core_config", r.context.core_config},
                     {"precision", r.context.precision},
                     {"target", r.context.target},
                     {"latency_us", r.latency_us}};
    if (r.flop_count) j["flop_count"] = *r.flop_count;
    if (r.traffic_bytes) j["traffic_bytes"] = *r.traffic_bytes;
    if (!r.extra.empty()) j["extra"] = r.extra;
    out << j.dump() << "\n";
  }
  return out.str();
}

std::vector<std::string> check_join(const MeasurementSet& set,
                                    const std::map<std::string, OpGraph>& graphs) {
  std::vector<std::string> problems;
  for (const auto& r : set.records()) {
    auto it = graphs.find(r.model_id);
    if (it == graphs.end()) {
      problems.push_back("model " + r.model_id + " has no graph");
      continue;
    }
    const OpGraph& g = it->second;
    if (r.node_id < 0 || r.node_id >= (int)g.nodes.size()) {
      problems.push_back("model " + r.model_id + " node " + std::to_string(r.node_id) +
                         " out of range");
      continue;
    }
    if (to_string(g.nodes[r.node_id].kind) != r.op_kind)
      problems.push_back("model " + r.model_id + " node " + std::to_string(r.node_id) +
                         ": op_kind '" + r.op_kind + "' != graph kind '" +
                         to_string(g.nodes[r.node_id].kind) + "'");
  }
  return problems;
}

SplitSpec split(const std::vector<std::string>& ids, size_t n_train, uint64_t seed) {
  if (n_train >= ids.size())
    throw DataError("split: n_train " + std::to_string(n_train) +
                    " must be < id count " + std::to_string(ids.size()));
  std::vector<std::string> shuffled = ids;
  Rng rng(derive_seed(seed, hash_str("split")));
  for (size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[rng.uniform_int(0, (int64_t)i - 1)]);
  SplitSpec s;
  s.seed = seed;
  s.train_ids.assign(shuffled.begin(), shuffled.begin() + n_train);
  s.test_ids.assign(shuffled.begin() + n_train, shuffled.end());
  return s;
}

}  // namespace vitlat
