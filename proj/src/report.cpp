#include "kloc/report.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "kloc/errors.hpp"

namespace kloc {

std::string fmt17(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

double parse_double(const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str()) {
    throw Error(ErrorCode::kIo, "not a number: " + text);
  }
  return v;
}

void Report::begin_section(const std::string& name) {
  sections_.push_back({name, {}});
}

void Report::set(const std::string& key, const std::string& value) {
  if (sections_.empty()) begin_section("report");
  sections_.back().entries.emplace_back(key, value);
}

void Report::set_f(const std::string& key, double value) {
  set(key, fmt17(value));
}

void Report::set_i(const std::string& key, int64_t value) {
  set(key, std::to_string(value));
}

bool Report::has(const std::string& section, const std::string& key) const {
  for (const auto& s : sections_) {
    if (s.name != section) continue;
    for (const auto& [k, v] : s.entries) {
      if (k == key) return true;
    }
  }
  return false;
}

const std::string& Report::get(const std::string& section,
                               const std::string& key) const {
  for (const auto& s : sections_) {
    if (s.name != section) continue;
    for (const auto& [k, v] : s.entries) {
      if (k == key) return v;
    }
  }
  throw Error(ErrorCode::kIo, "report key missing: " + section + "." + key);
}

double Report::get_f(const std::string& section, const std::string& key) const {
  return parse_double(get(section, key));
}

int64_t Report::get_i(const std::string& section, const std::string& key) const {
  return static_cast<int64_t>(std::strtoll(get(section, key).c_str(), nullptr, 10));
}

std::string Report::to_string() const {
  std::ostringstream out;
  for (const auto& s : sections_) {
    out << "[" << s.name << "]\n";
    for (const auto& [k, v] : s.entries) {
      out << k << " = " << v << "\n";
    }
  }
  return out.str();
}

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Report Report::parse(const std::string& text) {
  Report report;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      report.begin_section(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kIo, "malformed report line: " + line);
    }
    report.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return report;
}

void Report::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << to_string();
}

Report Report::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

}  // namespace kloc
