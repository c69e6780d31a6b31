#include "tcsim/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <istream>
#include <sstream>

#include <fmt/format.h>

namespace tcsim::config {

ConfigError::ConfigError(const std::string& msg, int line, std::string key)
    : std::runtime_error(line > 0 ? fmt::format("line {}: {}", line, msg) : msg),
      line_(line),
      key_(std::move(key)) {}

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

namespace {

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  });
}

}  // namespace

Document Document::parse(std::istream& in) {
  Document d;
  d.sections.push_back({"", 0, {}});
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view v(raw);
    if (const auto h = v.find('#'); h != std::string_view::npos) v = v.substr(0, h);
    const std::string s = trim(v);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("unterminated section header", line);
      const std::string name = trim(std::string_view(s).substr(1, s.size() - 2));
      if (!valid_name(name)) throw ConfigError(fmt::format("bad section name '{}'", name), line);
      for (const auto& sec : d.sections)
        if (sec.name == name)
          throw ConfigError(fmt::format("section [{}] repeated (first at line {})", name, sec.line),
                            line, name);
      d.sections.push_back({name, line, {}});
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("expected 'key = value', got '{}'", s), line);
    const std::string key = trim(std::string_view(s).substr(0, eq));
    const std::string value = trim(std::string_view(s).substr(eq + 1));
    if (!valid_name(key)) throw ConfigError(fmt::format("bad key '{}'", key), line, key);
    auto& sec = d.sections.back();
    if (key != "row")
      for (const auto& e : sec.entries)
        if (e.key == key)
          throw ConfigError(fmt::format("key '{}' repeated (first at line {})", key, e.line), line, key);
    sec.entries.push_back({key, value, line});
  }
  return d;
}

Document Document::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse(in);
}

const Section* Document::find(std::string_view name) const {
  for (const auto& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

double parse_number(std::string_view s) {
  const std::string t = trim(s);
  double v = 0;
  const char* end = t.data() + t.size();
  const auto r = std::from_chars(t.data(), end, v);
  if (t.empty() || r.ec != std::errc() || r.ptr != end || !std::isfinite(v))
    throw std::invalid_argument(fmt::format("'{}' is not a number", t));
  return v;
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto c = s.find(',', start);
    out.push_back(trim(s.substr(start, c == std::string_view::npos ? s.npos : c - start)));
    if (c == std::string_view::npos) break;
    start = c + 1;
  }
  return out;
}

std::string format_number(double v) { return fmt::format("{}", v); }

std::string format_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_number(v[i]);
  return out;
}

// ---------------------------------------------------------------------------

SectionReader::SectionReader(const Document& doc, std::string name)
    : section_(doc.find(name)), name_(std::move(name)) {}

const Entry* SectionReader::get(const std::string& key) {
  used_.insert(key);
  if (!section_) return nullptr;
  for (const auto& e : section_->entries)
    if (e.key == key) return &e;
  return nullptr;
}

int SectionReader::line_of(const std::string& key) const {
  if (!section_) return 0;
  for (const auto& e : section_->entries)
    if (e.key == key) return e.line;
  return section_->line;
}

void SectionReader::fail(const Entry& e, const std::string& msg) const {
  const std::string where = name_.empty() ? e.key : fmt::format("[{}] {}", name_, e.key);
  throw ConfigError(fmt::format("{}: {}", where, msg), e.line, e.key);
}

namespace {

bool in_range(double v, const Range& r) {
  if (r.lo_open ? !(v > r.lo) : !(v >= r.lo)) return false;
  if (r.hi_open ? !(v < r.hi) : !(v <= r.hi)) return false;
  return true;
}

std::string describe(const Range& r) {
  const bool lo = r.lo > -1e307, hi = r.hi < 1e307;
  if (lo && hi)
    return fmt::format("in {}{}, {}{}", r.lo_open ? "(" : "[", r.lo, r.hi, r.hi_open ? ")" : "]");
  if (lo) return fmt::format("{} {}", r.lo_open ? ">" : ">=", r.lo);
  if (hi) return fmt::format("{} {}", r.hi_open ? "<" : "<=", r.hi);
  return "finite";
}

}  // namespace

double SectionReader::number(const std::string& key, double fallback, Range r) {
  const Entry* e = get(key);
  if (!e) return fallback;
  double v;
  try {
    v = parse_number(e->value);
  } catch (const std::invalid_argument& ex) {
    fail(*e, ex.what());
  }
  if (!in_range(v, r)) fail(*e, fmt::format("value {} must be {}", e->value, describe(r)));
  return v;
}

std::optional<double> SectionReader::optional_number(const std::string& key,
                                                     std::optional<double> fallback, Range r) {
  const Entry* e = get(key);
  if (!e) return fallback;
  if (e->value == "auto") return std::nullopt;
  used_.erase(key);
  return number(key, 0.0, r);
}

long long SectionReader::integer(const std::string& key, long long fallback, long long lo,
                                 long long hi) {
  const Entry* e = get(key);
  if (!e) return fallback;
  long long v = 0;
  const auto& s = e->value;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail(*e, fmt::format("'{}' is not an integer", s));
  if (v < lo || v > hi) fail(*e, fmt::format("value {} must be in [{}, {}]", v, lo, hi));
  return v;
}

bool SectionReader::flag(const std::string& key, bool fallback) {
  const Entry* e = get(key);
  if (!e) return fallback;
  if (e->value == "true") return true;
  if (e->value == "false") return false;
  fail(*e, fmt::format("'{}' is not true or false", e->value));
}

std::string SectionReader::word(const std::string& key, const std::string& fallback,
                                const std::vector<std::string>& allowed) {
  const Entry* e = get(key);
  if (!e) return fallback;
  if (std::find(allowed.begin(), allowed.end(), e->value) == allowed.end()) {
    std::string opts;
    for (const auto& a : allowed) opts += (opts.empty() ? "" : ", ") + a;
    fail(*e, fmt::format("'{}' is not one of {}", e->value, opts));
  }
  return e->value;
}

std::string SectionReader::text(const std::string& key, const std::string& fallback) {
  const Entry* e = get(key);
  return e ? e->value : fallback;
}

std::vector<double> SectionReader::numbers(const std::string& key,
                                           const std::vector<double>& fallback, Range r) {
  const Entry* e = get(key);
  if (!e) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(e->value)) {
    double v;
    try {
      v = parse_number(item);
    } catch (const std::invalid_argument& ex) {
      fail(*e, ex.what());
    }
    if (!in_range(v, r)) fail(*e, fmt::format("value {} must be {}", item, describe(r)));
    out.push_back(v);
  }
  if (out.empty()) fail(*e, "list is empty");
  return out;
}

Table SectionReader::table(const std::vector<std::string>& columns, const Table& fallback) {
  const Entry* head = get("columns");
  used_.insert("row");
  if (!section_) return fallback;
  if (!head) throw ConfigError(fmt::format("[{}]: table needs a 'columns' line", name_), section_->line, "columns");
  Table t;
  t.columns = split_list(head->value);
  if (t.columns != columns) {
    std::string want;
    for (const auto& c : columns) want += (want.empty() ? "" : ", ") + c;
    fail(*head, fmt::format("columns must be '{}'", want));
  }
  for (const auto& e : section_->entries) {
    if (e.key != "row") continue;
    if (e.line < head->line) fail(e, "row before the columns line");
    auto cells = split_list(e.value);
    if (cells.size() != columns.size())
      fail(e, fmt::format("row has {} cells, expected {}", cells.size(), columns.size()));
    t.rows.push_back(std::move(cells));
    t.lines.push_back(e.line);
  }
  if (t.rows.empty()) fail(*head, "table has no rows");
  return t;
}

void SectionReader::finish() {
  if (!section_) return;
  for (const auto& e : section_->entries)
    if (!used_.count(e.key)) fail(e, "unknown key");
}

}  // namespace tcsim::config
