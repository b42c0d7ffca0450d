#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace nip {

/// Line-oriented `key = value` document used for every data file (instances,
/// occupancy measures, policies, checkpoints, run configs).
///
///   # comment
///   n_arms = 10
///   epsilon = 0.10000000000000001
///   budgets = [6, 2, 1, 1]
///   loss = "kl"
///
/// Reals are written with 17 significant digits so every double round-trips
/// exactly. Lists may wrap over several lines until the closing bracket. The
/// syntax is a TOML subset, so the same files can be fed to the CLI as
/// `--config`.
class KvDocument {
 public:
  void set(const std::string& key, std::int64_t value);
  void set(const std::string& key, int value) { set(key, static_cast<std::int64_t>(value)); }
  void set(const std::string& key, std::uint64_t value);
  void set(const std::string& key, double value);
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }
  void set(const std::string& key, std::span<const double> values);
  void set(const std::string& key, std::span<const int> values);

  bool has(std::string_view key) const;
  std::int64_t get_int(std::string_view key) const;
  std::uint64_t get_uint(std::string_view key) const;
  double get_real(std::string_view key) const;
  std::string get_string(std::string_view key) const;
  std::vector<double> get_reals(std::string_view key) const;
  std::vector<std::int64_t> get_ints(std::string_view key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string to_string() const;
  static KvDocument parse(std::string_view text);
  static KvDocument read_file(const std::filesystem::path& path);
  void write_file(const std::filesystem::path& path) const;

 private:
  void set_raw(const std::string& key, std::string raw);
  const std::string& raw(std::string_view key) const;

  std::vector<std::pair<std::string, std::string>> entries_;
};

std::string format_real(double value);

}  // namespace nip
