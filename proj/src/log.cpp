#include "nanoflow/log.hpp"

#include <atomic>
#include <charconv>
#include <cstdio>
#include <mutex>

namespace nanoflow::log {

namespace {

std::atomic<int> g_level{static_cast<int>(Level::Warn)};
std::mutex g_mutex;

const char* level_name(Level l) {
  switch (l) {
    case Level::Warn: return "warn";
    case Level::Info: return "info";
    case Level::Debug: return "debug";
    default: return "quiet";
  }
}

bool needs_quotes(const std::string& v) {
  if (v.empty()) return true;
  for (char c : v) {
    if (c == ' ' || c == '=' || c == '"') return true;
  }
  return false;
}

}  // namespace

void set_level(Level level) { g_level.store(static_cast<int>(level)); }
Level level() { return static_cast<Level>(g_level.load()); }

void emit(Level at, const std::string& component, std::initializer_list<Field> fields) {
  if (static_cast<int>(at) > g_level.load() || at == Level::Quiet) return;
  std::string line = "level=";
  line += level_name(at);
  line += " component=";
  line += component;
  for (const auto& [k, v] : fields) {
    line += ' ';
    line += k;
    line += '=';
    if (needs_quotes(v)) {
      line += '"';
      for (char c : v) {
        if (c == '"') line += '\\';
        line += c;
      }
      line += '"';
    } else {
      line += v;
    }
  }
  line += '\n';
  std::lock_guard lock(g_mutex);
  std::fputs(line.c_str(), stderr);
}

std::string num(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
}

}  // namespace nanoflow::log
