#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sdelab {

/// Flat key = value configuration in a TOML-compatible subset.
///
/// Accepted lines: blank, `# comment`, and `key = value` where value is a
/// double-quoted string (with \" and \\ escapes), a number, or true/false.
/// Tables, arrays and multi-line strings are rejected with a line number.
class ConfigFile {
 public:
  struct Entry {
    std::string value;
    bool quoted = false;
    int line = 0;
  };

  static ConfigFile parse(std::string_view text);
  static ConfigFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.contains(key); }
  const Entry* find(const std::string& key) const;

  std::optional<std::string> get_string(const std::string& key) const;
  std::optional<double> get_double(const std::string& key) const;
  std::optional<std::int64_t> get_int(const std::string& key) const;
  std::optional<std::uint64_t> get_uint(const std::string& key) const;
  std::optional<bool> get_bool(const std::string& key) const;

  /// Sets or replaces a value (used for command-line overrides).
  void set(const std::string& key, std::string value, bool quoted);

  /// Throws ConfigError naming the first key (in file order) not in `known`.
  void require_known(const std::vector<std::string>& known) const;

  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace sdelab
