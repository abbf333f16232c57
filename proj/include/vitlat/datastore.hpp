#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vitlat/opgraph.hpp"

namespace vitlat {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MeasurementContext {
  std::string device;
  std::string framework = "torch_mobile";  // torch_mobile | tflite
  std::string core_config = "1L";
  std::string precision = "fp32";  // fp32 | int8
  std::string target = "cpu";      // cpu | gpu

  std::string key() const {
    return device + "/" + framework + "/" + core_config + "/" + precision + "/" + target;
  }
  bool operator==(const MeasurementContext&) const = default;
};

struct MeasurementRecord {
  std::string model_id;
  int node_id = 0;
  std::string op_kind;
  MeasurementContext context;
  // Latencies travel as decimal strings so round-trips are byte-exact; the
  // parsed value is kept alongside for math.
  std::string latency_us;
  double latency_value = 0;
  std::optional<double> flop_count;
  std::optional<double> traffic_bytes;
  // Unknown trailing CSV columns, preserved verbatim.
  std::vector<std::string> extra;
};

class MeasurementSet {
 public:
  void add(MeasurementRecord rec);  // throws DataError on duplicate key
  const std::vector<MeasurementRecord>& records() const { return records_; }
  size_t size() const { return records_.size(); }

  std::vector<std::string> model_ids() const;  // unique, in first-seen order

  static MeasurementSet ingest_csv(const std::string& text);
  static MeasurementSet ingest_jsonl(const std::string& text);
  static MeasurementSet ingest_file(const std::string& path, const std::string& format);

  std::string to_csv() const;
  std::string to_jsonl() const;

  static const char* csv_header();

 private:
  std::vector<MeasurementRecord> records_;
  std::map<std::string, size_t> index_;  // (model_id, node_id, context) -> row
};

// Every record's (model_id, node_id) must resolve to a graph node of the same
// op kind; returns one message per mismatch.
std::vector<std::string> check_join(const MeasurementSet& set,
                                    const std::map<std::string, OpGraph>& graphs);

struct SplitSpec {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  uint64_t seed = 0;
};

SplitSpec split(const std::vector<std::string>& ids, size_t n_train, uint64_t seed);

std::string format_latency(double us);  // fixed 6-decimal string

}  // namespace vitlat
