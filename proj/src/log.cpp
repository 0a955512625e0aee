#include "ncps/log.hpp"

#include <iostream>
#include <mutex>

namespace ncps::log {
namespace {

const char* tag(Level level) {
  switch (level) {
    case Level::kDebug: return "debug";
    case Level::kInfo: return "info";
    case Level::kWarn: return "warn";
    case Level::kError: return "error";
  }
  return "?";
}

struct State {
  std::mutex mu;
  Level min_level = Level::kWarn;
  Sink sink = [](Level level, const std::string& m) { std::cerr << "[" << tag(level) << "] " << m << "\n"; };
};

State& state() {
  static State s;
  return s;
}

}  // namespace

void set_sink(Sink sink) {
  std::lock_guard lock(state().mu);
  state().sink = std::move(sink);
}

void set_min_level(Level level) {
  std::lock_guard lock(state().mu);
  state().min_level = level;
}

void write(Level level, const std::string& message) {
  std::lock_guard lock(state().mu);
  if (level < state().min_level || !state().sink) return;
  state().sink(level, message);
}

}  // namespace ncps::log
