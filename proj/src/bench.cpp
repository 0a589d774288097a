#include "casss/bench.hpp"

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>
#include <thread>

#include "casss/error.hpp"
#include "json.hpp"

namespace casss {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kKiB = 1024;

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

std::uint64_t to_uint(const std::string& what, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) config_error("bad integer for " + what + ": '" + v + "'");
  return out;
}

double to_double(const std::string& what, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) config_error("bad number for " + what + ": '" + v + "'");
  return d;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0;
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string sweep_label(std::uint64_t v) {
  return std::to_string(v);
}

std::string x_label(const std::string& name) {
  if (name == "readers") return "readers";
  if (name == "writers") return "writers";
  if (name == "servers" || name == "reset") return "servers";
  return "object size (KiB)";
}

}  // namespace

const char* to_string(Backend b) { return b == Backend::Sim ? "sim" : "net"; }

std::optional<Backend> parse_backend(const std::string& s) {
  if (s == "sim") return Backend::Sim;
  if (s == "net") return Backend::Net;
  return std::nullopt;
}

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"readers", "writers", "servers", "objsize", "reset", "overhead"};
  return names;
}

ExperimentSpec default_experiment(const std::string& name, Backend backend) {
  ExperimentSpec s;
  s.name = name;
  s.backend = backend;
  s.repetitions = backend == Backend::Sim ? 50 : 20;
  if (name == "readers" || name == "writers") {
    s.sweep = {5, 10, 15, 20, 30, 40};
  } else if (name == "servers") {
    s.sweep = {5, 10, 15, 20, 30};
  } else if (name == "objsize") {
    s.sweep = {1, 32, 128, 512, 1024, 2048, 4096};
  } else if (name == "reset") {
    s.sweep = {3, 5, 10, 15, 20};
    s.repetitions = 20;
  } else if (name == "overhead") {
    s.sweep = {1, 32, 128, 512};
  } else {
    config_error("unknown experiment '" + name + "'");
  }
  return s;
}

ExperimentSpec experiment_from_config(const std::string& name, Backend backend, const ConfigFile& file) {
  auto s = default_experiment(name, backend);
  s.link = scenario_from_config(file).link;
  for (const auto& [key, value] : file.extra) {
    if (key.rfind("bench.", 0) != 0) continue;
    const auto line = file.lines.count(key) ? file.lines.at(key) : 0;
    try {
      if (key == "bench.sweep") {
        s.sweep.clear();
        for (const auto& part : split(value, ',')) s.sweep.push_back(to_uint(key, part));
      } else if (key == "bench.repetitions") {
        s.repetitions = static_cast<unsigned>(to_uint(key, value));
      } else if (key == "bench.trim") {
        s.trim = static_cast<unsigned>(to_uint(key, value));
      } else if (key == "bench.base_port") {
        const auto p = to_uint(key, value);
        if (p == 0 || p > 65535) config_error("bench.base_port out of range");
        s.base_port = static_cast<std::uint16_t>(p);
      } else if (key == "bench.point_timeout_s") {
        s.point_timeout_s = to_double(key, value);
      } else if (key == "bench.object_size") {
        s.object_size = to_uint(key, value);
      } else {
        config_error("unknown key '" + key + "'");
      }
    } catch (const Error& e) {
      if (line == 0) throw;
      config_error("line " + std::to_string(line) + ": " + std::string(e.what()).substr(sizeof("ConfigError: ") - 1));
    }
  }
  if (auto it = file.extra.find("scenario.seed"); it != file.extra.end()) s.seed = to_uint("scenario.seed", it->second);
  validate(s);
  return s;
}

void validate(const ExperimentSpec& spec) {
  if (spec.repetitions < 3) config_error("repetitions must be at least 3");
  if (spec.sweep.empty()) config_error("empty sweep");
  if (2 * spec.trim >= spec.repetitions) config_error("trimming would discard every sample");
  for (auto v : spec.sweep) {
    if (v == 0) config_error("sweep values must be positive");
    if ((spec.name == "servers" || spec.name == "reset") && v > 32) config_error("at most 32 servers");
    if (spec.name == "servers" && v < 5) config_error("the servers sweep keeps f=2 and needs N >= 5");
  }
  validate(spec.link);
}

std::vector<Variant> experiment_variants(const std::string& name) {
  if (name == "reset") return {Variant::CASSS};
  if (name == "overhead") return {Variant::CAS, Variant::CASSS};
  return {Variant::MWABD, Variant::CASSS};
}

ScenarioConfig point_scenario(const ExperimentSpec& spec, std::uint64_t value, Variant variant) {
  ScenarioConfig sc;
  sc.seed = spec.seed;
  sc.link = spec.link;
  sc.ops_per_client = spec.repetitions;
  std::uint32_t n = 10, f = 2;
  sc.object_size = 512 * kKiB;
  sc.mixed = 0;
  const auto v = static_cast<std::uint32_t>(value);
  if (spec.name == "readers") {
    sc.writers = 10;
    sc.readers = v;
  } else if (spec.name == "writers") {
    sc.writers = v;
    sc.readers = 10;
  } else if (spec.name == "servers") {
    n = v;
    sc.writers = 10;
    sc.readers = 10;
  } else if (spec.name == "objsize") {
    sc.object_size = value * kKiB;
    sc.mixed = 5;
  } else if (spec.name == "reset") {
    n = v;
    f = 0;
    sc.object_size = 256;
    sc.mixed = 2;
  } else if (spec.name == "overhead") {
    sc.object_size = value * kKiB;
    sc.writers = 1;
    sc.readers = 1;
  } else {
    config_error("unknown experiment '" + spec.name + "'");
  }
  if (spec.object_size != 0 && spec.name != "objsize" && spec.name != "overhead") sc.object_size = spec.object_size;
  sc.quorum = make_quorum(n, f, variant);
  sc.quorum.n_clients = sc.n_clients();
  return sc;
}

std::vector<double> trim_extremes(std::vector<double> samples, unsigned trim) {
  if (samples.size() <= 2 * static_cast<std::size_t>(trim)) return {};
  std::sort(samples.begin(), samples.end());
  return {samples.begin() + trim, samples.end() - trim};
}

void OpSamples::add(const OpMetrics& op) {
  if (op.respond == kPending || op.forced) return;
  if (op.outcome == OpOutcome::Unsuccessful) {
    ++unsuccessful_reads;
    return;
  }
  if (op.outcome != OpOutcome::Ok) return;
  latency_ms[op.client].push_back(static_cast<double>(op.respond - op.invoke) / kMillis);
  rounds.push_back(op.rounds);
  bytes.push_back(static_cast<double>(op.bytes));
}

ResultRow summarize(const std::string& sweep, const std::string& variant, const std::string& op,
                    const OpSamples& samples, unsigned trim) {
  ResultRow r;
  r.sweep = sweep;
  r.variant = variant;
  r.op = op;
  std::vector<double> client_means;
  for (const auto& [client, lat] : samples.latency_ms) {
    const auto kept = trim_extremes(lat, trim);
    if (!kept.empty()) client_means.push_back(mean_of(kept));
  }
  r.mean_ms = client_means.empty() ? std::nan("") : mean_of(client_means);
  r.stddev_ms = client_means.empty() ? std::nan("") : stddev_of(client_means);
  if (samples.latency_ms.size() == 1) r.stddev_ms = stddev_of(trim_extremes(samples.latency_ms.begin()->second, trim));
  r.rounds = mean_of(samples.rounds);
  r.bytes = mean_of(samples.bytes);
  r.unsuccessful_reads = samples.unsuccessful_reads;
  return r;
}

std::string csv_line(const ResultRow& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << r.sweep << ',' << r.variant << ',' << r.op << ',' << r.mean_ms << ',' << r.stddev_ms << ',';
  os.precision(2);
  os << r.rounds << ',';
  os.precision(0);
  os << r.bytes << ',' << r.unsuccessful_reads;
  return os.str();
}

std::vector<ResultRow> parse_results_csv(const std::string& text) {
  std::vector<ResultRow> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line == kCsvHeader) continue;
    const auto f = split(line, ',');
    if (f.size() != 8) config_error("malformed result row: " + line);
    ResultRow r;
    r.sweep = f[0];
    r.variant = f[1];
    r.op = f[2];
    r.mean_ms = std::strtod(f[3].c_str(), nullptr);
    r.stddev_ms = std::strtod(f[4].c_str(), nullptr);
    r.rounds = std::strtod(f[5].c_str(), nullptr);
    r.bytes = std::strtod(f[6].c_str(), nullptr);
    r.unsuccessful_reads = to_uint("unsuccessful_reads", f[7]);
    out.push_back(r);
  }
  return out;
}

std::string render_svg(const std::string& title, const std::string& x_label, const std::vector<ResultRow>& rows) {
  constexpr double kW = 720, kH = 440, kLeft = 70, kRight = 180, kTop = 40, kBottom = 60;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  double xmin = 1e300, xmax = -1e300, ymax = 0;
  for (const auto& r : rows) {
    if (std::isnan(r.mean_ms)) continue;
    const double x = std::strtod(r.sweep.c_str(), nullptr);
    series[r.variant + " " + r.op].emplace_back(x, r.mean_ms);
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymax = std::max(ymax, r.mean_ms);
  }
  if (series.empty()) {
    xmin = 0;
    xmax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  ymax = ymax <= 0 ? 1 : ymax * 1.1;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return kTop + ph - y / ymax * ph; };
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = ymax * i / 5;
    os << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << py(y) << "\" x2=\"" << kLeft + pw << "\" y2=\"" << py(y)
       << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << y << "</text>\n";
  }
  std::set<double> xs;
  for (const auto& [name, pts] : series)
    for (const auto& p : pts) xs.insert(p.first);
  for (double x : xs) {
    os << "<line x1=\"" << px(x) << "\" y1=\"" << kTop + ph << "\" x2=\"" << px(x) << "\" y2=\"" << kTop + ph + 4
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << px(x) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">" << x << "</text>\n";
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 15 << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
  os << "<text transform=\"translate(18," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">latency (ms)</text>\n";
  std::size_t i = 0;
  for (auto& [name, pts] : series) {
    std::sort(pts.begin(), pts.end());
    const char* color = kColors[i % std::size(kColors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) os << px(x) << ',' << py(y) << ' ';
    os << "\"/>\n";
    for (const auto& [x, y] : pts)
      os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    const double ly = kTop + 10 + 20.0 * static_cast<double>(i);
    os << "<line x1=\"" << kLeft + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + pw + 40 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kLeft + pw + 46 << "\" y=\"" << ly + 4 << "\">" << name << "</text>\n";
    ++i;
  }
  os << "</svg>\n";
  return os.str();
}

ResultSink::ResultSink(const std::string& dir, const ExperimentSpec& spec) : dir_(dir), spec_(spec) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  csv_path_ = (fs::path(dir_) / (spec_.name + ".csv")).string();
  csv_.open(csv_path_, std::ios::trunc);
  if (!csv_) throw Error(ErrorCode::ConfigError, "cannot write " + csv_path_);
  csv_ << kCsvHeader << '\n' << std::flush;
}

void ResultSink::add(const ResultRow& row) {
  rows_.push_back(row);
  csv_ << csv_line(row) << '\n' << std::flush;
}

void ResultSink::finish(bool complete) {
  if (finished_) return;
  finished_ = true;
  csv_.close();
  std::ofstream((fs::path(dir_) / (spec_.name + ".svg")).string())
      << render_svg(spec_.name + " (" + to_string(spec_.backend) + ")", x_label(spec_.name), rows_);
  nlohmann::json meta;
  meta["experiment"] = spec_.name;
  meta["backend"] = to_string(spec_.backend);
  meta["seed"] = spec_.seed;
  meta["sweep"] = spec_.sweep;
  meta["repetitions"] = spec_.repetitions;
  meta["trim_per_client"] = spec_.trim;
  meta["complete"] = complete;
  meta["rows"] = rows_.size();
  meta["inter_op_delay"] = "uniform(0, 2 x mean operation latency)";
  meta["latency"] = "mean over clients of each client's mean after dropping its fastest and slowest operation";
  if (spec_.backend == Backend::Sim)
    meta["link"] = {{"loss", spec_.link.loss},
                  {"dup", spec_.link.dup},
                  {"reorder", spec_.link.reorder},
                  {"lat_min_ms", static_cast<double>(spec_.link.lat_min) / kMillis},
                  {"lat_mode_ms", static_cast<double>(spec_.link.lat_mode) / kMillis},
                  {"lat_max_ms", static_cast<double>(spec_.link.lat_max) / kMillis},
                  {"bandwidth_bytes_per_s", spec_.link.bandwidth}};
  if (spec_.backend == Backend::Net) meta["deployment"] = "one process per node on 127.0.0.1";
  for (const auto& [k, v] : notes_) meta["notes"][k] = v;
  std::ofstream((fs::path(dir_) / (spec_.name + ".meta.json")).string()) << meta.dump(2) << '\n';
}

std::string resolve_out_dir(const std::string& requested) {
  if (const char* env = std::getenv("CASSS_BENCH_OUT"); env && *env) return env;
  return requested;
}

namespace {

bool stopped(const RunOptions& opt) { return opt.stop && opt.stop->load(); }

void log(const RunOptions& opt, const std::string& s) {
  if (opt.log) opt.log(s);
}

std::uint64_t point_seed(const ExperimentSpec& spec, std::uint64_t value, Variant v, std::uint64_t trial = 0) {
  return spec.seed * 1'000'003 + value * 101 + static_cast<std::uint64_t>(v) * 7 + trial * 7919;
}

void add_rows(ResultSink& sink, const std::string& sweep, Variant v, const std::vector<OpMetrics>& ops, unsigned trim) {
  OpSamples reads, writes;
  for (const auto& op : ops) (op.kind == OpKind::Read ? reads : writes).add(op);
  const auto name = std::string(to_string(v));
  sink.add(summarize(sweep, name, "read", reads, trim));
  sink.add(summarize(sweep, name, "write", writes, trim));
}

// ---- simulator back-end ----

std::optional<std::vector<OpMetrics>> sim_latency_point(ScenarioConfig sc) {
  // A short pilot sets the inter-operation delay to uniform(0, 2 x mean latency).
  auto pilot = sc;
  pilot.ops_per_client = 3;
  pilot.inter_op_min = pilot.inter_op_max = 0;
  const auto pm = run_scenario(pilot).second;
  double total = 0;
  std::size_t count = 0;
  for (const auto& op : pm.ops)
    if (op.respond != kPending) total += static_cast<double>(op.respond - op.invoke), ++count;
  sc.inter_op_min = 0;
  sc.inter_op_max = count ? static_cast<Micros>(2 * total / static_cast<double>(count)) : 50 * kMillis;

  Cluster cl(sc);
  cl.boot_clients();
  const auto limit = sc.time_limit;
  if (!cl.run_until(
          [&] {
            for (std::uint32_t c = 0; c < cl.n_clients(); ++c)
              if (!cl.client_ready(c)) return false;
            return true;
          },
          limit))
    return std::nullopt;
  bool seeded = false;
  cl.write(0, [&](const OpResult&) { seeded = true; });
  if (!cl.run_until([&] { return seeded; }, limit)) return std::nullopt;
  const auto skip = cl.metrics().ops.size();
  cl.begin_scripted();
  if (!cl.run_workload()) return std::nullopt;
  auto ops = cl.metrics().ops;
  return std::vector<OpMetrics>(ops.begin() + static_cast<std::ptrdiff_t>(skip), ops.end());
}

struct ResetSample {
  bool ok = false;
  double reset_ms = 0;
  std::vector<OpMetrics> writes;
};

ResetSample sim_reset_trial(ScenarioConfig sc, unsigned warmup_writes) {
  ResetSample out;
  Cluster cl(sc);
  cl.boot_clients();
  const auto limit = sc.time_limit;
  if (!cl.run_until([&] { return cl.client_ready(0) && cl.client_ready(1); }, limit)) return out;
  for (unsigned i = 0; i < warmup_writes; ++i) {
    bool done = false;
    cl.write(0, [&](const OpResult&) { done = true; });
    if (!cl.run_until([&] { return done; }, limit)) return out;
  }
  out.writes = cl.metrics().ops;
  bool forced_done = false, read_done = false;
  cl.write_with_seq(0, sc.quorum.maxint, [&](const OpResult&) { forced_done = true; });
  std::function<void(const OpResult&)> reread = [&](const OpResult&) {
    if (cl.metrics().reset_durations.empty()) {
      cl.read(1, reread);
    } else {
      read_done = true;
    }
  };
  cl.read(1, reread);
  if (!cl.run_until([&] { return forced_done && read_done; }, limit)) return out;
  const auto m = cl.metrics();
  if (m.reset_durations.size() != 1) return out;
  out.reset_ms = static_cast<double>(m.reset_durations[0]) / kMillis;
  out.ok = true;
  return out;
}

constexpr unsigned kResetWarmupWrites = 10;

bool run_sim(const ExperimentSpec& spec, const RunOptions& opt, ResultSink& sink) {
  bool all = true;
  for (auto value : spec.sweep) {
    for (auto v : experiment_variants(spec.name)) {
      if (stopped(opt)) return false;
      auto sc = point_scenario(spec, value, v);
      const auto label = sweep_label(value);
      if (spec.name == "reset") {
        OpSamples reset, writes;
        for (unsigned t = 0; t < spec.repetitions && !stopped(opt); ++t) {
          sc.seed = point_seed(spec, value, v, t);
          auto s = sim_reset_trial(sc, kResetWarmupWrites);
          if (!s.ok) {
            all = false;
            continue;
          }
          reset.latency_ms[0].push_back(s.reset_ms);
          for (const auto& op : s.writes) writes.add(op);
        }
        if (stopped(opt)) return false;
        sink.add(summarize(label, to_string(v), "reset", reset, spec.trim));
        sink.add(summarize(label, to_string(v), "write", writes, spec.trim));
        log(opt, spec.name + " " + label + " " + to_string(v) + " done");
        continue;
      }
      sc.seed = point_seed(spec, value, v);
      auto ops = sim_latency_point(sc);
      if (!ops) {
        all = false;
        log(opt, spec.name + " " + label + " " + to_string(v) + " did not complete");
        continue;
      }
      add_rows(sink, label, v, *ops, spec.trim);
      log(opt, spec.name + " " + label + " " + to_string(v) + " done");
    }
  }
  return all;
}

// ---- network back-end: one process per node on localhost ----

std::vector<OpMetrics> parse_ops_csv(const std::string& path) {
  std::vector<OpMetrics> out;
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    const auto f = split(line, ',');
    if (f.size() < 12) continue;
    OpMetrics m;
    m.client = static_cast<std::uint32_t>(std::stoul(f[0]));
    m.life = static_cast<std::uint32_t>(std::stoul(f[1]));
    m.kind = f[2] == "write" ? OpKind::Write : OpKind::Read;
    m.outcome = f[3] == "ok" ? OpOutcome::Ok : f[3] == "unsuccessful" ? OpOutcome::Unsuccessful : OpOutcome::Aborted;
    m.invoke = std::stoll(f[4]);
    m.respond = std::stoll(f[5]) < 0 ? kPending : std::stoll(f[5]);
    m.rounds = static_cast<unsigned>(std::stoul(f[7]));
    m.restarts = static_cast<unsigned>(std::stoul(f[8]));
    m.timeouts = static_cast<unsigned>(std::stoul(f[9]));
    m.bytes = std::stoull(f[10]);
    m.forced = f.back() == "1";
    out.push_back(m);
  }
  return out;
}

pid_t spawn(const std::string& exe, const std::vector<std::string>& args, const std::string& log_path) {
  const pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorCode::BackendUnavailable, "fork failed");
  if (pid == 0) {
    if (FILE* f = std::freopen(log_path.c_str(), "w", stderr)) (void)f;
    std::vector<char*> argv;
    argv.push_back(const_cast<char*>(exe.c_str()));
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    ::execv(exe.c_str(), argv.data());
    std::_Exit(127);
  }
  return pid;
}

/// Waits for every pid in `pending` until the deadline or a stop request; returns the exit codes seen.
std::map<pid_t, int> wait_all(std::set<pid_t> pending, std::chrono::steady_clock::time_point deadline,
                              const RunOptions& opt) {
  std::map<pid_t, int> codes;
  while (!pending.empty() && std::chrono::steady_clock::now() < deadline && !stopped(opt)) {
    for (auto it = pending.begin(); it != pending.end();) {
      int status = 0;
      if (::waitpid(*it, &status, WNOHANG) == *it) {
        codes[*it] = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
        it = pending.erase(it);
      } else {
        ++it;
      }
    }
    if (!pending.empty()) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  return codes;
}

void terminate_all(const std::vector<pid_t>& pids) {
  for (auto p : pids) ::kill(p, SIGTERM);
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
  for (auto p : pids) {
    int status = 0;
    while (::waitpid(p, &status, WNOHANG) == 0) {
      if (std::chrono::steady_clock::now() > deadline) {
        ::kill(p, SIGKILL);
        ::waitpid(p, &status, 0);
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }
}

struct NetRun {
  bool complete = false;
  std::vector<std::vector<OpMetrics>> client_ops;
  std::vector<std::optional<Micros>> new_epoch_at;
};

NetRun net_point(const ExperimentSpec& spec, const RunOptions& opt, const ScenarioConfig& sc, const std::string& dir,
                 const std::string& mode) {
  if (opt.self_exe.empty()) throw Error(ErrorCode::BackendUnavailable, "no executable to fork for net nodes");
  fs::create_directories(dir);
  const auto n = sc.quorum.n();
  const auto c = sc.n_clients();
  if (spec.base_port + n + c > 65535) throw Error(ErrorCode::ConfigError, "port range exceeds 65535");
  ConfigFile file;
  file.quorum = sc.quorum;
  file.quorum.servers.clear();
  for (std::uint32_t i = 0; i < n; ++i) file.quorum.servers.push_back("127.0.0.1:" + std::to_string(spec.base_port + i));
  for (std::uint32_t j = 0; j < c; ++j)
    file.quorum.clients.push_back("127.0.0.1:" + std::to_string(spec.base_port + n + j));
  file.quorum.n_clients = c;
  file.extra["scenario.seed"] = std::to_string(sc.seed);
  file.extra["scenario.writers"] = std::to_string(sc.writers);
  file.extra["scenario.readers"] = std::to_string(sc.readers);
  file.extra["scenario.mixed"] = std::to_string(sc.mixed);
  file.extra["scenario.object_size"] = std::to_string(sc.object_size);
  file.extra["scenario.ops_per_client"] = std::to_string(sc.ops_per_client);
  const auto conf = (fs::path(dir) / "cluster.conf").string();
  std::ofstream(conf) << format_config(file);

  std::vector<pid_t> servers, clients;
  NetRun out;
  try {
    for (std::uint32_t i = 0; i < n; ++i)
      servers.push_back(spawn(opt.self_exe, {"node", "--role", "server", "--index", std::to_string(i), "--config", conf},
                              (fs::path(dir) / ("server" + std::to_string(i) + ".log")).string()));
    for (std::uint32_t j = 0; j < c; ++j)
      clients.push_back(spawn(opt.self_exe,
                              {"node", "--role", "client", "--index", std::to_string(j), "--config", conf, "--mode", mode,
                               "--out", (fs::path(dir) / ("client" + std::to_string(j) + ".csv")).string()},
                              (fs::path(dir) / ("client" + std::to_string(j) + ".log")).string()));
  } catch (...) {
    terminate_all(servers);
    terminate_all(clients);
    throw;
  }
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::milliseconds(static_cast<long long>(spec.point_timeout_s * 1000));
  const auto codes = wait_all({clients.begin(), clients.end()}, deadline, opt);
  out.complete = codes.size() == clients.size();
  for (const auto& [pid, code] : codes) out.complete = out.complete && code == 0;
  // Clients still running flush what they have on SIGTERM.
  std::vector<pid_t> left;
  for (auto p : clients)
    if (!codes.count(p)) left.push_back(p);
  terminate_all(left);
  terminate_all(servers);
  for (std::uint32_t j = 0; j < c; ++j) {
    const auto path = (fs::path(dir) / ("client" + std::to_string(j) + ".csv")).string();
    out.client_ops.push_back(parse_ops_csv(path));
    std::optional<Micros> at;
    std::ifstream ev(path + ".events");
    std::string line;
    if (std::getline(ev, line)) {
      const auto f = split(line, ',');
      if (f.size() == 2) at = std::stoll(f[1]);
    }
    out.new_epoch_at.push_back(at);
  }
  return out;
}

bool run_net(const ExperimentSpec& spec, const RunOptions& opt, ResultSink& sink) {
  bool all = true;
  const auto base = fs::path(sink.csv_path()).parent_path() / (spec.name + ".net");
  for (auto value : spec.sweep) {
    for (auto v : experiment_variants(spec.name)) {
      if (stopped(opt)) return false;
      auto sc = point_scenario(spec, value, v);
      const auto label = sweep_label(value);
      const auto dir = (base / (label + "-" + lower(to_string(v)))).string();
      if (spec.name == "reset") {
        OpSamples reset, writes;
        sc.ops_per_client = kResetWarmupWrites;
        for (unsigned t = 0; t < spec.repetitions && !stopped(opt); ++t) {
          sc.seed = point_seed(spec, value, v, t);
          auto run = net_point(spec, opt, sc, dir + "/trial" + std::to_string(t), "reset");
          std::optional<Micros> forced_at;
          for (const auto& op : run.client_ops[0]) {
            if (op.forced) forced_at = op.invoke;
            writes.add(op);
          }
          if (!run.complete || !forced_at || !run.new_epoch_at[1]) {
            all = false;
            continue;
          }
          reset.latency_ms[0].push_back(static_cast<double>(*run.new_epoch_at[1] - *forced_at) / kMillis);
        }
        if (stopped(opt)) return false;
        sink.add(summarize(label, to_string(v), "reset", reset, spec.trim));
        sink.add(summarize(label, to_string(v), "write", writes, spec.trim));
        continue;
      }
      sc.seed = point_seed(spec, value, v);
      auto run = net_point(spec, opt, sc, dir, "ops");
      std::vector<OpMetrics> ops;
      for (const auto& per : run.client_ops) ops.insert(ops.end(), per.begin(), per.end());
      add_rows(sink, label, v, ops, spec.trim);
      all = all && run.complete;
      log(opt, spec.name + " " + label + " " + to_string(v) + (run.complete ? " done" : " incomplete"));
    }
  }
  return all && !stopped(opt);
}

}  // namespace

bool run_experiment(const ExperimentSpec& spec, const RunOptions& opt) {
  validate(spec);
  ResultSink sink(opt.out_dir, spec);
  bool ok = false;
  try {
    ok = spec.backend == Backend::Sim ? run_sim(spec, opt, sink) : run_net(spec, opt, sink);
  } catch (...) {
    sink.finish(false);
    throw;
  }
  if (stopped(opt)) sink.note("interrupted", "true");
  sink.finish(ok);
  return ok;
}

}  // namespace casss
