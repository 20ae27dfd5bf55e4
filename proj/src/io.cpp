#include "io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nanoflow/error.hpp"

namespace nanoflow::io {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw io_error("read failed: " + path.string());
  return ss.str();
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw io_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw io_error("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw io_error(path.string() + ": malformed JSON (" + e.what() + ")");
  }
}

std::vector<std::vector<double>> read_csv(const fs::path& path, const std::string& header) {
  const std::string text = read_text(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw io_error(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) {
    throw io_error(path.string() + ":1: expected header '" + header + "', found '" + line + "'");
  }
  std::size_t ncols = 1;
  for (char c : header) ncols += c == ',';

  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(ncols);
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (std::size_t col = 0; col < ncols; ++col) {
      const char* comma = std::find(p, end, ',');
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(p, comma, v);
      if (ec != std::errc{} || ptr != comma) {
        throw io_error(path.string() + ":" + std::to_string(lineno) + ": field " + std::to_string(col + 1) +
                       " is not a number: '" + std::string(p, comma) + "'");
      }
      row.push_back(v);
      if (col + 1 < ncols) {
        if (comma == end) {
          throw io_error(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(ncols) +
                         " fields, found " + std::to_string(col + 1));
        }
        p = comma + 1;
      } else if (comma != end) {
        throw io_error(path.string() + ":" + std::to_string(lineno) + ": more than " + std::to_string(ncols) +
                       " fields");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string csv_text(const std::string& header, const std::vector<std::span<const double>>& columns) {
  std::string out = header;
  out += '\n';
  const std::size_t n = columns.empty() ? 0 : columns.front().size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c) out += ',';
      out += format_real(columns[c][i]);
    }
    out += '\n';
  }
  return out;
}

template <class T>
T field(const nlohmann::json& j, const char* key, const fs::path& source) {
  if (!j.is_object() || !j.contains(key)) {
    throw io_error(source.string() + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw io_error(source.string() + ": field '" + key + "' has the wrong type (" + e.what() + ")");
  }
}

template double field<double>(const nlohmann::json&, const char*, const fs::path&);
template int field<int>(const nlohmann::json&, const char*, const fs::path&);
template std::uint64_t field<std::uint64_t>(const nlohmann::json&, const char*, const fs::path&);
template std::string field<std::string>(const nlohmann::json&, const char*, const fs::path&);
template std::vector<double> field<std::vector<double>>(const nlohmann::json&, const char*, const fs::path&);
template std::vector<std::string> field<std::vector<std::string>>(const nlohmann::json&, const char*,
                                                                  const fs::path&);
template nlohmann::json field<nlohmann::json>(const nlohmann::json&, const char*, const fs::path&);

}  // namespace nanoflow::io
