#include <signal.h>
#include <unistd.h>

#include <atomic>
#include <climits>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "casss/bench.hpp"
#include "casss/error.hpp"
#include "casss/net.hpp"

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

void install_handlers() {
  struct sigaction sa{};
  sa.sa_handler = on_signal;
  sigemptyset(&sa.sa_mask);
  sigaction(SIGINT, &sa, nullptr);
  sigaction(SIGTERM, &sa, nullptr);
  signal(SIGPIPE, SIG_IGN);
}

std::string self_exe(const char* argv0) {
  char buf[PATH_MAX];
  const auto n = ::readlink("/proc/self/exe", buf, sizeof buf - 1);
  if (n <= 0) return argv0;
  return std::string(buf, static_cast<std::size_t>(n));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"casss: shared register emulation toolkit"};
  app.require_subcommand(1);

  auto* bench = app.add_subcommand("bench", "Run a benchmark sweep and write CSV, SVG and metadata");
  std::string experiment, config_path, backend_name = "sim", out_dir = "bench_out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  bench->add_option("experiment", experiment, "readers | writers | servers | objsize | reset | overhead")->required();
  bench->add_option("--config", config_path, "Config file; bench.* and scenario.* keys tune the sweep");
  bench->add_option("--backend", backend_name, "sim | net")->check(CLI::IsMember({"sim", "net"}));
  bench->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { seed = s, seed_set = true; },
                                            "Base seed");
  bench->add_option("--out", out_dir, "Output directory (CASSS_BENCH_OUT overrides)");

  auto* node = app.add_subcommand("node", "Run one server or scripted client over the network");
  std::string role, node_config, node_out, mode = "ops";
  std::uint32_t index = 0;
  node->add_option("--role", role, "server | client")->required()->check(CLI::IsMember({"server", "client"}));
  node->add_option("--index", index, "Index among servers or clients");
  node->add_option("--config", node_config, "Config file listing servers and clients")->required();
  node->add_option("--out", node_out, "Client operation log (CSV)");
  node->add_option("--mode", mode, "Client workload: ops | reset")->check(CLI::IsMember({"ops", "reset"}));

  CLI11_PARSE(app, argc, argv);
  install_handlers();

  try {
    if (*bench) {
      const auto backend = *casss::parse_backend(backend_name);
      casss::ExperimentSpec spec;
      if (config_path.empty()) {
        spec = casss::default_experiment(experiment, backend);
      } else {
        spec = casss::experiment_from_config(experiment, backend, casss::load_config(config_path));
      }
      if (seed_set) spec.seed = seed;
      casss::RunOptions opt;
      opt.out_dir = casss::resolve_out_dir(out_dir);
      opt.self_exe = self_exe(argv[0]);
      opt.stop = &g_stop;
      opt.log = [](const std::string& s) { std::cerr << s << '\n'; };
      const bool ok = casss::run_experiment(spec, opt);
      std::cout << opt.out_dir << '/' << spec.name << ".csv\n";
      return ok ? 0 : 1;
    }
    casss::NodeProcessOptions opt;
    opt.role = role;
    opt.index = index;
    opt.config = casss::load_config(node_config);
    opt.out_path = node_out;
    opt.mode = mode;
    return casss::serve_node(opt, g_stop);
  } catch (const casss::Error& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }
}
