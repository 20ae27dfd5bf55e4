#pragma once

#include <initializer_list>
#include <string>
#include <utility>

// Machine-parsable key=value logging to stderr.
namespace nanoflow::log {

enum class Level : int { Quiet = 0, Warn = 1, Info = 2, Debug = 3 };

void set_level(Level level);
Level level();

using Field = std::pair<std::string, std::string>;

void emit(Level at, const std::string& component, std::initializer_list<Field> fields);

inline void warn(const std::string& c, std::initializer_list<Field> f) { emit(Level::Warn, c, f); }
inline void info(const std::string& c, std::initializer_list<Field> f) { emit(Level::Info, c, f); }
inline void debug(const std::string& c, std::initializer_list<Field> f) { emit(Level::Debug, c, f); }

/// Shortest round-trip decimal text for a double.
std::string num(double v);

}  // namespace nanoflow::log
