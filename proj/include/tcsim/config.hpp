#pragma once

// Plain-text run configuration: `key = value` lines grouped under
// `[section]` headers, `#` comments, and tables written as a `columns`
// line followed by `row` lines. See docs/config.md for the grammar.

#include <iosfwd>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tcsim::config {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& msg, int line = 0, std::string key = {});
  int line() const { return line_; }
  const std::string& key() const { return key_; }

 private:
  int line_;
  std::string key_;
};

struct Entry {
  std::string key;
  std::string value;
  int line;
};

struct Section {
  std::string name;  // "" for keys before the first header
  int line = 0;
  std::vector<Entry> entries;
};

struct Document {
  std::vector<Section> sections;

  static Document parse(std::istream& in);
  static Document parse(std::string_view text);
  const Section* find(std::string_view name) const;
};

struct Range {
  double lo = -1e308;
  double hi = 1e308;
  bool lo_open = false;
  bool hi_open = false;

  static Range positive() { return {0, 1e308, true, false}; }
  static Range non_negative() { return {0, 1e308, false, false}; }
  static Range unit() { return {0, 1, false, false}; }
  static Range non_positive() { return {-1e308, 0, false, false}; }
};

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> lines;
};

/// Typed access to one section. Every key read is marked; finish() rejects
/// the rest. A missing section reads as empty.
class SectionReader {
 public:
  SectionReader(const Document& doc, std::string name);

  double number(const std::string& key, double fallback, Range r = {});
  std::optional<double> optional_number(const std::string& key, std::optional<double> fallback,
                                        Range r = {});
  long long integer(const std::string& key, long long fallback, long long lo, long long hi);
  bool flag(const std::string& key, bool fallback);
  std::string word(const std::string& key, const std::string& fallback,
                   const std::vector<std::string>& allowed);
  std::string text(const std::string& key, const std::string& fallback);
  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback,
                              Range r = {});
  /// `columns` + `row` entries; fallback when the section is absent.
  Table table(const std::vector<std::string>& columns, const Table& fallback);

  void finish();
  const std::string& name() const { return name_; }
  bool present() const { return section_ != nullptr; }
  int line_of(const std::string& key) const;

 private:
  const Entry* get(const std::string& key);
  [[noreturn]] void fail(const Entry& e, const std::string& msg) const;

  const Section* section_;
  std::string name_;
  std::set<std::string> used_;
};

double parse_number(std::string_view s);
std::vector<std::string> split_list(std::string_view s);
std::string trim(std::string_view s);

/// Shortest text that parses back to the same double.
std::string format_number(double v);
std::string format_list(const std::vector<double>& v);

}  // namespace tcsim::config
