#pragma once

#include <functional>
#include <string>

namespace ncps::log {

enum class Level { kDebug, kInfo, kWarn, kError };

/// Sink receiving formatted lines; the default writes warnings and errors to stderr.
using Sink = std::function<void(Level, const std::string&)>;

void set_sink(Sink sink);
void set_min_level(Level level);
void write(Level level, const std::string& message);

inline void debug(const std::string& m) { write(Level::kDebug, m); }
inline void info(const std::string& m) { write(Level::kInfo, m); }
inline void warn(const std::string& m) { write(Level::kWarn, m); }
inline void error(const std::string& m) { write(Level::kError, m); }

}  // namespace ncps::log
