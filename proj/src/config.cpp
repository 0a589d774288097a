#include "casss/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "casss/error.hpp"

namespace casss {
namespace {

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw Error(ErrorCode::ConfigError, "line " + std::to_string(line) + ": " + msg);
}

std::uint64_t parse_uint(std::size_t line, const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) fail(line, "bad integer for '" + key + "': " + v);
  return out;
}

}  // namespace

ConfigFile parse_config(const std::string& text) {
  ConfigFile out;
  auto& q = out.quorum;
  bool k_given = false;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    std::string key, value, trailing;
    if (!(ls >> key)) continue;
    if (!(ls >> value)) fail(lineno, "missing value for '" + key + "'");
    if (ls >> trailing) fail(lineno, "unexpected token '" + trailing + "'");

    if (key == "server") {
      q.servers.push_back(value);
    } else if (key == "client") {
      q.clients.push_back(value);
    } else if (key == "clients") {
      q.n_clients = static_cast<std::uint32_t>(parse_uint(lineno, key, value));
    } else if (key == "f") {
      q.f = static_cast<std::uint32_t>(parse_uint(lineno, key, value));
    } else if (key == "k") {
      q.k = static_cast<std::uint32_t>(parse_uint(lineno, key, value));
      k_given = true;
    } else if (key == "variant") {
      auto v = parse_variant(value);
      if (!v) fail(lineno, "unknown variant '" + value + "'");
      q.variant = *v;
    } else if (key == "delta") {
      q.delta = static_cast<std::uint32_t>(parse_uint(lineno, key, value));
    } else if (key == "maxint") {
      q.maxint = parse_uint(lineno, key, value);
    } else if (key == "maxinc") {
      q.maxinc = parse_uint(lineno, key, value);
    } else if (key.rfind("scenario.", 0) == 0 || key.rfind("bench.", 0) == 0) {
      out.extra[key] = value;
      out.lines[key] = lineno;
    } else {
      fail(lineno, "unknown key '" + key + "'");
    }
  }
  if (q.servers.empty()) throw Error(ErrorCode::ConfigError, "no 'server' lines");
  if (!k_given) q.k = q.n() > 2 * q.f ? q.n() - 2 * q.f : 1;
  try {
    validate(q);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  return out;
}

ConfigFile load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::ConfigError, "cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const ConfigFile& cfg) {
  std::ostringstream os;
  const auto& q = cfg.quorum;
  for (const auto& s : q.servers) os << "server " << s << '\n';
  for (const auto& c : q.clients) os << "client " << c << '\n';
  if (q.n_clients) os << "clients " << q.n_clients << '\n';
  os << "f " << q.f << '\n'
     << "k " << q.k << '\n'
     << "variant " << to_string(q.variant) << '\n'
     << "delta " << q.delta << '\n'
     << "maxint " << q.maxint << '\n'
     << "maxinc " << q.maxinc << '\n';
  for (const auto& [k, v] : cfg.extra) os << k << ' ' << v << '\n';
  return os.str();
}

}  // namespace casss
