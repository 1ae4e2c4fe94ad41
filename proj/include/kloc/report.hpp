#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace kloc {

// 17 significant digits; round-trips doubles losslessly through text.
std::string fmt17(double value);
double parse_double(const std::string& text);

// Ordered [section] blocks of `key = value` lines; writing then parsing
// reproduces the same keys and values.
class Report {
 public:
  void begin_section(const std::string& name);
  void set(const std::string& key, const std::string& value);
  void set_f(const std::string& key, double value);
  void set_i(const std::string& key, int64_t value);

  bool has(const std::string& section, const std::string& key) const;
  const std::string& get(const std::string& section,
                         const std::string& key) const;
  double get_f(const std::string& section, const std::string& key) const;
  int64_t get_i(const std::string& section, const std::string& key) const;

  std::string to_string() const;
  static Report parse(const std::string& text);

  void save(const std::string& path) const;
  static Report load(const std::string& path);

 private:
  struct Section {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;
  };
  std::vector<Section> sections_;
};

}  // namespace kloc
