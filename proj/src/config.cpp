#include "sdelab/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "sdelab/errors.hpp"

namespace sdelab {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  return std::all_of(k.begin(), k.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

}  // namespace

ConfigFile ConfigFile::parse(std::string_view text) {
  ConfigFile cfg;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    line = trim(line);
    if (line.empty() || line.front() == '#') {
      if (eol == text.size()) break;
      continue;
    }
    if (line.front() == '[') throw ConfigError("tables are not supported", line_no);

    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected 'key = value'", line_no);
    const std::string key(trim(line.substr(0, eq)));
    if (!valid_key(key)) throw ConfigError("invalid key '" + key + "'", line_no);
    if (cfg.entries_.contains(key)) throw ConfigError("duplicate key '" + key + "'", line_no);

    std::string_view rest = trim(line.substr(eq + 1));
    Entry e;
    e.line = line_no;
    if (!rest.empty() && rest.front() == '"') {
      std::string out;
      std::size_t i = 1;
      bool closed = false;
      for (; i < rest.size(); ++i) {
        const char c = rest[i];
        if (c == '\\') {
          if (i + 1 >= rest.size()) throw ConfigError("dangling escape", line_no);
          const char n = rest[++i];
          if (n == '"' || n == '\\') out.push_back(n);
          else if (n == 'n') out.push_back('\n');
          else if (n == 't') out.push_back('\t');
          else throw ConfigError(std::string("unsupported escape \\") + n, line_no);
        } else if (c == '"') {
          closed = true;
          ++i;
          break;
        } else {
          out.push_back(c);
        }
      }
      if (!closed) throw ConfigError("unterminated string", line_no);
      const std::string_view tail = trim(rest.substr(i));
      if (!tail.empty() && tail.front() != '#') throw ConfigError("unexpected text after string", line_no);
      e.value = std::move(out);
      e.quoted = true;
    } else {
      const std::size_t hash = rest.find('#');
      if (hash != std::string_view::npos) rest = trim(rest.substr(0, hash));
      if (rest.empty()) throw ConfigError("missing value for '" + key + "'", line_no);
      if (rest.front() == '[' || rest.front() == '{')
        throw ConfigError("arrays and inline tables are not supported; quote matrix expressions", line_no);
      e.value = std::string(rest);
    }
    cfg.entries_.emplace(key, std::move(e));
    if (eol == text.size()) break;
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const ConfigFile::Entry* ConfigFile::find(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

std::optional<std::string> ConfigFile::get_string(const std::string& key) const {
  const Entry* e = find(key);
  if (!e) return std::nullopt;
  return e->value;
}

std::optional<double> ConfigFile::get_double(const std::string& key) const {
  const Entry* e = find(key);
  if (!e) return std::nullopt;
  if (e->quoted) throw ConfigError("'" + key + "' must be a number, not a string", e->line);
  double v = 0.0;
  const char* first = e->value.data();
  const char* last = first + e->value.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw ConfigError("'" + key + "' is not a number: " + e->value, e->line);
  return v;
}

std::optional<std::int64_t> ConfigFile::get_int(const std::string& key) const {
  const Entry* e = find(key);
  if (!e) return std::nullopt;
  if (e->quoted) throw ConfigError("'" + key + "' must be an integer, not a string", e->line);
  std::int64_t v = 0;
  const char* first = e->value.data();
  const char* last = first + e->value.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw ConfigError("'" + key + "' is not an integer: " + e->value, e->line);
  return v;
}

std::optional<std::uint64_t> ConfigFile::get_uint(const std::string& key) const {
  const Entry* e = find(key);
  if (!e) return std::nullopt;
  if (e->quoted) throw ConfigError("'" + key + "' must be an integer, not a string", e->line);
  std::uint64_t v = 0;
  const char* first = e->value.data();
  const char* last = first + e->value.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("'" + key + "' is not an unsigned integer: " + e->value, e->line);
  return v;
}

std::optional<bool> ConfigFile::get_bool(const std::string& key) const {
  const Entry* e = find(key);
  if (!e) return std::nullopt;
  if (!e->quoted && e->value == "true") return true;
  if (!e->quoted && e->value == "false") return false;
  throw ConfigError("'" + key + "' must be true or false", e->line);
}

void ConfigFile::set(const std::string& key, std::string value, bool quoted) {
  auto& e = entries_[key];
  e.value = std::move(value);
  e.quoted = quoted;
}

void ConfigFile::require_known(const std::vector<std::string>& known) const {
  const Entry* worst = nullptr;
  std::string worst_key;
  for (const auto& [k, e] : entries_) {
    if (std::find(known.begin(), known.end(), k) != known.end()) continue;
    if (!worst || e.line < worst->line) {
      worst = &e;
      worst_key = k;
    }
  }
  if (worst) throw ConfigError("unknown key '" + worst_key + "'", worst->line);
}

}  // namespace sdelab
