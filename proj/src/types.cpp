#include "gllim/types.hpp"

#include <cstdio>

namespace gllim {

void Dims::validate() const {
  if (D < 1) throw ConfigError("Dims: D must be >= 1");
  if (L_t < 0) throw ConfigError("Dims: L_t must be >= 0");
  if (L_w < 0) throw ConfigError("Dims: L_w must be >= 0");
  if (L() < 1) throw ConfigError("Dims: L = L_t + L_w must be >= 1");
  if (K < 1) throw ConfigError("Dims: K must be >= 1");
  if (N < 1) throw ConfigError("Dims: N must be >= 1");
  if (L() > D) {
    logging::warn("Dims: response dimension L=" + std::to_string(L()) +
                  " exceeds observation dimension D=" + std::to_string(D) +
                  "; the model targets L << D");
  }
}

namespace logging {

Level& level() {
  static Level lvl = Level::warn;
  return lvl;
}

Level parse_level(const std::string& name) {
  if (name == "debug") return Level::debug;
  if (name == "info") return Level::info;
  if (name == "warn" || name == "warning") return Level::warn;
  if (name == "error") return Level::error;
  if (name == "off" || name == "quiet") return Level::off;
  throw ConfigError("unknown log level: " + name);
}

void message(Level lvl, const std::string& msg) {
  if (lvl < level()) return;
  static const char* names[] = {"debug", "info", "warn", "error"};
  std::fprintf(stderr, "[gllim %s] %s\n", names[static_cast<int>(lvl)], msg.c_str());
}

}  // namespace logging

}  // namespace gllim
