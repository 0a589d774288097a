#pragma once

#include <atomic>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "casss/config.hpp"
#include "casss/scenario.hpp"

namespace casss {

enum class Backend : std::uint8_t { Sim, Net };

const char* to_string(Backend b);
std::optional<Backend> parse_backend(const std::string& s);

/// One benchmark sweep. `repetitions` is the number of operations each client
/// performs per sweep point (trials for `reset`); `trim` samples are dropped at
/// each end of every client's latency list before averaging.
struct ExperimentSpec {
  std::string name;  // readers | writers | servers | objsize | reset | overhead
  std::vector<std::uint64_t> sweep;
  unsigned repetitions = 50;
  unsigned trim = 1;
  Backend backend = Backend::Sim;
  std::uint64_t seed = 1;
  /// Fault model of the simulated links.
  LinkModel link;
  /// Overrides the experiment's object size (bytes) when non-zero.
  std::size_t object_size = 0;
  /// First UDP/TCP port of the localhost deployment (net back-end).
  std::uint16_t base_port = 17000;
  /// Wall-clock budget per sweep point on the net back-end.
  double point_timeout_s = 300;
};

const std::vector<std::string>& experiment_names();

/// Default sweep, deployment and repetitions for the named experiment. Throws ConfigError on an unknown name.
ExperimentSpec default_experiment(const std::string& name, Backend backend);

/// Applies `bench.sweep` (comma list), `bench.repetitions`, `bench.trim`,
/// `bench.base_port`, `bench.point_timeout_s`, `bench.object_size` and the `scenario.*` link keys on
/// top of the defaults. Throws ConfigError naming the line.
ExperimentSpec experiment_from_config(const std::string& name, Backend backend, const ConfigFile& file);

/// Throws ConfigError unless repetitions >= 3, the sweep is non-empty and
/// trimming leaves at least one sample per client.
void validate(const ExperimentSpec& spec);

/// Removes the `trim` smallest and `trim` largest samples.
std::vector<double> trim_extremes(std::vector<double> samples, unsigned trim);

/// Latency samples (ms) and accounting for one kind of operation, grouped by client.
struct OpSamples {
  std::map<std::uint32_t, std::vector<double>> latency_ms;
  std::vector<double> rounds;
  std::vector<double> bytes;
  std::uint64_t unsuccessful_reads = 0;

  void add(const OpMetrics& op);
};

struct ResultRow {
  std::string sweep;
  std::string variant;
  std::string op;
  double mean_ms = 0;
  double stddev_ms = 0;
  double rounds = 0;
  double bytes = 0;
  std::uint64_t unsuccessful_reads = 0;
};

/// Mean over clients of each client's trimmed mean latency. The standard deviation
/// is taken over the per-client means, or over the trimmed samples when there is a
/// single client; rounds and bytes are per-operation means.
ResultRow summarize(const std::string& sweep, const std::string& variant, const std::string& op,
                    const OpSamples& samples, unsigned trim);

inline constexpr const char* kCsvHeader = "sweep,variant,op,mean_ms,stddev_ms,rounds,bytes,unsuccessful_reads";
std::string csv_line(const ResultRow& r);
/// Parses rows written by csv_line; the header line is skipped.
std::vector<ResultRow> parse_results_csv(const std::string& text);

/// Line chart of mean latency per (variant, op) series over the sweep.
std::string render_svg(const std::string& title, const std::string& x_label, const std::vector<ResultRow>& rows);

/// Writes <out>/<experiment>.csv row by row (flushed after each point), then the
/// plot and <experiment>.meta.json in finish().
class ResultSink {
 public:
  ResultSink(const std::string& dir, const ExperimentSpec& spec);
  void add(const ResultRow& row);
  void note(const std::string& key, const std::string& value) { notes_[key] = value; }
  void finish(bool complete);
  const std::vector<ResultRow>& rows() const { return rows_; }
  const std::string& csv_path() const { return csv_path_; }

 private:
  std::string dir_;
  ExperimentSpec spec_;
  std::string csv_path_;
  std::ofstream csv_;
  std::vector<ResultRow> rows_;
  std::map<std::string, std::string> notes_;
  bool finished_ = false;
};

/// Output directory: CASSS_BENCH_OUT if set, else `requested`.
std::string resolve_out_dir(const std::string& requested);

/// Runs the sweep over the simulator or over localhost processes. `stop` is polled
/// between runs; when it trips, the rows gathered so far are flushed and the call
/// returns false. `self_exe` is the binary forked for net nodes. Returns true iff
/// every sweep point completed. Throws BackendUnavailable, BindError, ConfigError.
struct RunOptions {
  std::string out_dir;
  std::string self_exe;
  const std::atomic<bool>* stop = nullptr;
  std::function<void(const std::string&)> log;
};
bool run_experiment(const ExperimentSpec& spec, const RunOptions& opt);

/// Variants compared by the experiment.
std::vector<Variant> experiment_variants(const std::string& name);

/// The deployment behind one sweep point: servers, clients, object size and links.
ScenarioConfig point_scenario(const ExperimentSpec& spec, std::uint64_t value, Variant variant);

}  // namespace casss
