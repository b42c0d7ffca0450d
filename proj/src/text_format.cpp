#include "nip/text_format.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "nip/errors.hpp"

namespace nip {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string_view strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

double parse_real(std::string_view token, std::string_view key) {
  std::string s(trim(token));
  if (s == "nan") return std::nan("");
  if (s == "inf" || s == "+inf") return HUGE_VAL;
  if (s == "-inf") return -HUGE_VAL;
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw DataError("key '" + std::string(key) + "': cannot parse real from '" + s + "'");
  }
  return v;
}

std::int64_t parse_int(std::string_view token, std::string_view key) {
  std::string s(trim(token));
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
    throw DataError("key '" + std::string(key) + "': cannot parse integer from '" + s + "'");
  }
  return v;
}

std::vector<std::string_view> split_list(std::string_view raw, std::string_view key) {
  raw = trim(raw);
  if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') {
    throw DataError("key '" + std::string(key) + "': expected a [..] list");
  }
  raw = trim(raw.substr(1, raw.size() - 2));
  std::vector<std::string_view> out;
  if (raw.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = raw.find(',', start);
    out.push_back(trim(raw.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::string format_real(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  std::string s(buf);
  // Keep reals recognizable as reals (TOML readers treat "1" as integer).
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

void KvDocument::set_raw(const std::string& key, std::string raw) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(raw);
      return;
    }
  }
  entries_.emplace_back(key, std::move(raw));
}

void KvDocument::set(const std::string& key, std::int64_t value) {
  set_raw(key, std::to_string(value));
}
void KvDocument::set(const std::string& key, std::uint64_t value) {
  set_raw(key, std::to_string(value));
}
void KvDocument::set(const std::string& key, double value) { set_raw(key, format_real(value)); }
void KvDocument::set(const std::string& key, const std::string& value) {
  set_raw(key, "\"" + value + "\"");
}
void KvDocument::set(const std::string& key, std::span<const double> values) {
  std::string s = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ", ";
    s += format_real(values[i]);
  }
  set_raw(key, s + "]");
}
void KvDocument::set(const std::string& key, std::span<const int> values) {
  std::string s = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(values[i]);
  }
  set_raw(key, s + "]");
}

bool KvDocument::has(std::string_view key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return true;
  return false;
}

const std::string& KvDocument::raw(std::string_view key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  throw DataError("missing key '" + std::string(key) + "'");
}

std::int64_t KvDocument::get_int(std::string_view key) const { return parse_int(raw(key), key); }

std::uint64_t KvDocument::get_uint(std::string_view key) const {
  std::string s(trim(raw(key)));
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || s[0] == '-' || end != s.c_str() + s.size()) {
    throw DataError("key '" + std::string(key) + "': cannot parse unsigned integer");
  }
  return v;
}

double KvDocument::get_real(std::string_view key) const { return parse_real(raw(key), key); }

std::string KvDocument::get_string(std::string_view key) const {
  std::string_view s = trim(raw(key));
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

std::vector<double> KvDocument::get_reals(std::string_view key) const {
  std::vector<double> out;
  for (auto tok : split_list(raw(key), key)) out.push_back(parse_real(tok, key));
  return out;
}

std::vector<std::int64_t> KvDocument::get_ints(std::string_view key) const {
  std::vector<std::int64_t> out;
  for (auto tok : split_list(raw(key), key)) out.push_back(parse_int(tok, key));
  return out;
}

std::string KvDocument::to_string() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

KvDocument KvDocument::parse(std::string_view text) {
  KvDocument doc;
  std::string pending_key;
  std::string pending_value;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = trim(strip_comment(text.substr(pos, nl - pos)));
    pos = nl + 1;
    ++line_no;
    if (!pending_key.empty()) {
      pending_value += ' ';
      pending_value += line;
      if (line.find(']') != std::string_view::npos) {
        doc.set_raw(pending_key, pending_value);
        pending_key.clear();
      }
      continue;
    }
    if (line.empty() || line.front() == '[') continue;  // blank or TOML section header
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw DataError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw DataError("line " + std::to_string(line_no) + ": empty key");
    if (!value.empty() && value.front() == '[' && value.find(']') == std::string::npos) {
      pending_key = key;
      pending_value = value;
      continue;
    }
    doc.set_raw(key, value);
  }
  if (!pending_key.empty()) throw DataError("unterminated list for key '" + pending_key + "'");
  return doc;
}

KvDocument KvDocument::read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void KvDocument::write_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << to_string();
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

}  // namespace nip
