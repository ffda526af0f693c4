#pragma once

#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sigloss/errors.hpp"
#include "sigloss/geo.hpp"

namespace sigloss::cfg {

// ---------------------------------------------------------------------------
// Minimal TOML-style reader: top-level keys, [section] tables, [[name]]
// arrays of tables, and scalar/array values. Enough for scenario files and
// the metrics report; not a general TOML implementation.

struct TomlValue {
  enum class Kind { String, Int, Float, Bool, Array };
  Kind kind = Kind::String;
  std::string str;
  int64_t integer = 0;
  double real = 0.0;
  bool boolean = false;
  std::vector<TomlValue> array;
  size_t line = 0;
};

struct TomlTable {
  std::map<std::string, TomlValue> values;
  std::map<std::string, TomlTable> tables;
  std::map<std::string, std::vector<TomlTable>> table_arrays;
};

namespace toml_detail {

inline std::string_view trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline TomlValue parse_scalar(std::string_view text, size_t line);

inline TomlValue parse_value(std::string_view text, size_t line) {
  text = trim(text);
  if (text.empty()) throw ConfigError("line " + std::to_string(line) + ": empty value");
  if (text.front() == '[') {
    if (text.back() != ']')
      throw ConfigError("line " + std::to_string(line) + ": unterminated array");
    TomlValue v;
    v.kind = TomlValue::Kind::Array;
    v.line = line;
    std::string_view body = text.substr(1, text.size() - 2);
    size_t pos = 0;
    int depth = 0;
    bool in_str = false;
    size_t start = 0;
    auto flush = [&](size_t end) {
      std::string_view piece = trim(body.substr(start, end - start));
      if (!piece.empty()) v.array.push_back(parse_scalar(piece, line));
    };
    for (pos = 0; pos < body.size(); ++pos) {
      char c = body[pos];
      if (c == '"') in_str = !in_str;
      if (in_str) continue;
      if (c == '[') ++depth;
      if (c == ']') --depth;
      if (c == ',' && depth == 0) {
        flush(pos);
        start = pos + 1;
      }
    }
    flush(body.size());
    return v;
  }
  return parse_scalar(text, line);
}

inline TomlValue parse_scalar(std::string_view text, size_t line) {
  TomlValue v;
  v.line = line;
  if (text.front() == '"') {
    if (text.size() < 2 || text.back() != '"')
      throw ConfigError("line " + std::to_string(line) + ": unterminated string");
    v.kind = TomlValue::Kind::String;
    std::string_view body = text.substr(1, text.size() - 2);
    for (size_t i = 0; i < body.size(); ++i) {
      if (body[i] == '\\' && i + 1 < body.size()) {
        char e = body[++i];
        switch (e) {
          case '\\': v.str += '\\'; break;
          case '"': v.str += '"'; break;
          case 'n': v.str += '\n'; break;
          case 't': v.str += '\t'; break;
          default:
            throw ConfigError("line " + std::to_string(line) + ": bad escape");
        }
      } else {
        v.str += body[i];
      }
    }
    return v;
  }
  if (text == "true" || text == "false") {
    v.kind = TomlValue::Kind::Bool;
    v.boolean = text == "true";
    return v;
  }
  std::string plain(text);
  // underscores as digit separators
  std::erase(plain, '_');
  bool is_float = plain.find('.') != std::string::npos ||
                  plain.find('e') != std::string::npos ||
                  plain.find('E') != std::string::npos;
  try {
    size_t used = 0;
    if (is_float) {
      v.kind = TomlValue::Kind::Float;
      v.real = std::stod(plain, &used);
    } else {
      v.kind = TomlValue::Kind::Int;
      v.integer = std::stoll(plain, &used);
      v.real = static_cast<double>(v.integer);
    }
    if (used != plain.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(line) + ": malformed value '" +
                      std::string(text) + "'");
  }
  return v;
}

}  // namespace toml_detail

inline TomlTable parse_toml(std::string_view text) {
  using namespace toml_detail;
  TomlTable root;
  TomlTable* current = &root;
  size_t lineno = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos
                                                ? text.size() - pos
                                                : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;

    // Strip comments outside strings.
    bool in_str = false;
    size_t cut = raw.size();
    for (size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == '"') in_str = !in_str;
      if (raw[i] == '#' && !in_str) {
        cut = i;
        break;
      }
    }
    std::string_view line = trim(raw.substr(0, cut));
    if (line.empty()) continue;

    if (line.front() == '[') {
      bool array = line.size() > 1 && line[1] == '[';
      size_t open = array ? 2 : 1;
      size_t close = line.find(array ? "]]" : "]", open);
      if (close == std::string_view::npos ||
          !trim(line.substr(close + (array ? 2 : 1))).empty())
        throw ConfigError("line " + std::to_string(lineno) +
                          ": malformed section header");
      std::string name(trim(line.substr(open, close - open)));
      if (name.empty())
        throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
      if (array) {
        root.table_arrays[name].emplace_back();
        current = &root.table_arrays[name].back();
      } else {
        current = &root.tables[name];
      }
      continue;
    }

    size_t eq = std::string_view::npos;
    in_str = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_str = !in_str;
      if (line[i] == '=' && !in_str) {
        eq = i;
        break;
      }
    }
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key(trim(line.substr(0, eq)));
    if (key.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    current->values[key] = parse_value(line.substr(eq + 1), lineno);
  }
  return root;
}

// ---------------------------------------------------------------------------
// Scenario configuration

enum class ClockMode { Virtual, Realtime };
enum class QueryMode { PerPixel, Global };

struct ZoneConfig {
  std::string name;
  int64_t pixel_count = 0;
  int64_t origin_lat_milli = 0;
  int64_t origin_lon_milli = 0;
  int64_t cols = 0;
  std::vector<geo::GeoPixel> pixel_list;  // alternative to origin+cols
  int64_t density = 0;                    // phones per pixel
  std::optional<int64_t> phones_total;    // population-derived alternative
  double lost_ratio = 0.0;
  std::optional<int64_t> sleep_time_ms;   // overrides cycle / density
};

struct IncidentConfig {
  geo::GeoPixel pixel;
  int64_t phone_count = 1;
  std::optional<int64_t> start_time_ms;  // absent: seeded pick in [min, max]
  int64_t start_min_ms = 0;
  int64_t start_max_ms = 0;
  int64_t duration_ms = 0;  // 0 = simultaneous loss
};

struct ScenarioConfig {
  std::string name = "run";
  uint64_t seed = 1;
  int64_t run_length_ms = 60'000;
  int64_t update_period_ms = 1'800'000;  // window default + Detached timeout
  int64_t emission_cycle_ms = 5'000;     // sleepTime base: cycle / density
  int64_t step_ms = 5'000;
  std::optional<int64_t> window_ms;      // defaults to update_period_ms
  int64_t threshold = 10;
  bool count_distinct = true;
  ClockMode clock = ClockMode::Virtual;
  QueryMode query_mode = QueryMode::PerPixel;
  geo::CoordMode coords = geo::CoordMode::Permissive;
  int64_t workers = 1;
  bool compress_event_log = false;
  bool emit_detached = true;
  std::vector<ZoneConfig> zones;
  std::vector<IncidentConfig> incidents;
  std::vector<geo::GeoPixel> blind_zones;
  std::string blind_zones_file;
  std::vector<geo::GeoPixel> monitors;  // monitored in addition to incidents

  int64_t window() const { return window_ms.value_or(update_period_ms); }
};

namespace cfg_detail {

inline geo::GeoPixel parse_pixel(const std::string& s, size_t line) {
  size_t comma = s.find(',');
  if (comma == std::string::npos)
    throw ConfigError("line " + std::to_string(line) +
                      ": expected \"lat_milli,lon_milli\"");
  try {
    return geo::GeoPixel{std::stoll(s.substr(0, comma)),
                         std::stoll(s.substr(comma + 1))};
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(line) + ": malformed pixel '" + s + "'");
  }
}

class Keys {
 public:
  Keys(const TomlTable& t, std::string scope) : t_(t), scope_(std::move(scope)) {}

  ~Keys() = default;

  void finish() const {
    for (const auto& [key, value] : t_.values)
      if (!seen_.count(key))
        throw ConfigError("unknown config key '" + scope_ + key + "'");
    for (const auto& [key, table] : t_.tables)
      if (!seen_.count(key))
        throw ConfigError("unknown config section '" + scope_ + key + "'");
    for (const auto& [key, arr] : t_.table_arrays)
      if (!seen_.count(key))
        throw ConfigError("unknown config section '" + scope_ + key + "'");
  }

  const TomlValue* get(const std::string& key) {
    seen_.insert(key);
    auto it = t_.values.find(key);
    return it == t_.values.end() ? nullptr : &it->second;
  }

  int64_t integer(const std::string& key, int64_t def) {
    const auto* v = get(key);
    if (!v) return def;
    if (v->kind != TomlValue::Kind::Int)
      throw ConfigError("config key '" + scope_ + key + "' must be an integer");
    return v->integer;
  }

  double number(const std::string& key, double def) {
    const auto* v = get(key);
    if (!v) return def;
    if (v->kind != TomlValue::Kind::Int && v->kind != TomlValue::Kind::Float)
      throw ConfigError("config key '" + scope_ + key + "' must be a number");
    return v->real;
  }

  bool boolean(const std::string& key, bool def) {
    const auto* v = get(key);
    if (!v) return def;
    if (v->kind != TomlValue::Kind::Bool)
      throw ConfigError("config key '" + scope_ + key + "' must be true or false");
    return v->boolean;
  }

  std::string text(const std::string& key, const std::string& def) {
    const auto* v = get(key);
    if (!v) return def;
    if (v->kind != TomlValue::Kind::String)
      throw ConfigError("config key '" + scope_ + key + "' must be a string");
    return v->str;
  }

  std::vector<geo::GeoPixel> pixels(const std::string& key) {
    const auto* v = get(key);
    if (!v) return {};
    if (v->kind != TomlValue::Kind::Array)
      throw ConfigError("config key '" + scope_ + key +
                        "' must be an array of \"lat,lon\" strings");
    std::vector<geo::GeoPixel> out;
    for (const auto& item : v->array) {
      if (item.kind != TomlValue::Kind::String)
        throw ConfigError("config key '" + scope_ + key +
                          "' must contain \"lat,lon\" strings");
      out.push_back(parse_pixel(item.str, item.line));
    }
    return out;
  }

  void mark(const std::string& key) { seen_.insert(key); }

 private:
  const TomlTable& t_;
  std::string scope_;
  std::set<std::string> seen_;
};

}  // namespace cfg_detail

inline ScenarioConfig scenario_from_toml(const TomlTable& root) {
  using cfg_detail::Keys;
  ScenarioConfig cfg;
  Keys keys(root, "");

  cfg.name = keys.text("name", cfg.name);
  cfg.seed = static_cast<uint64_t>(keys.integer("seed", 1));
  cfg.run_length_ms = keys.integer("run_length_ms", cfg.run_length_ms);
  cfg.update_period_ms = keys.integer("update_period_ms", cfg.update_period_ms);
  cfg.emission_cycle_ms = keys.integer("emission_cycle_ms", cfg.emission_cycle_ms);
  cfg.step_ms = keys.integer("step_ms", cfg.step_ms);
  if (keys.get("window_ms"))
    cfg.window_ms = keys.integer("window_ms", 0);
  cfg.threshold = keys.integer("threshold", cfg.threshold);
  cfg.count_distinct = keys.boolean("count_distinct", cfg.count_distinct);
  cfg.workers = keys.integer("workers", cfg.workers);
  cfg.compress_event_log = keys.boolean("compress_event_log", cfg.compress_event_log);
  cfg.emit_detached = keys.boolean("emit_detached", cfg.emit_detached);
  cfg.blind_zones_file = keys.text("blind_zones_file", "");
  cfg.blind_zones = keys.pixels("blind_zones");
  cfg.monitors = keys.pixels("monitors");

  std::string clock = keys.text("clock", "virtual");
  if (clock == "virtual") cfg.clock = ClockMode::Virtual;
  else if (clock == "realtime") cfg.clock = ClockMode::Realtime;
  else throw ConfigError("config key 'clock' must be \"virtual\" or \"realtime\"");

  std::string qm = keys.text("query_mode", "per-pixel");
  if (qm == "per-pixel") cfg.query_mode = QueryMode::PerPixel;
  else if (qm == "global") cfg.query_mode = QueryMode::Global;
  else throw ConfigError("config key 'query_mode' must be \"per-pixel\" or \"global\"");

  std::string coords = keys.text("coords", "permissive");
  if (coords == "permissive") cfg.coords = geo::CoordMode::Permissive;
  else if (coords == "strict") cfg.coords = geo::CoordMode::Strict;
  else throw ConfigError("config key 'coords' must be \"strict\" or \"permissive\"");

  keys.mark("zone");
  auto zit = root.table_arrays.find("zone");
  if (zit != root.table_arrays.end()) {
    for (const auto& zt : zit->second) {
      Keys zk(zt, "zone.");
      ZoneConfig z;
      z.name = zk.text("name", "zone" + std::to_string(cfg.zones.size()));
      z.pixel_count = zk.integer("pixels", 0);
      z.origin_lat_milli = zk.integer("origin_lat_milli", 0);
      z.origin_lon_milli = zk.integer("origin_lon_milli", 0);
      z.cols = zk.integer("cols", 0);
      z.pixel_list = zk.pixels("pixel_list");
      z.density = zk.integer("density", 0);
      if (zk.get("phones_total")) z.phones_total = zk.integer("phones_total", 0);
      z.lost_ratio = zk.number("lost_ratio", 0.0);
      if (zk.get("sleep_time_ms")) z.sleep_time_ms = zk.integer("sleep_time_ms", 0);
      zk.finish();
      cfg.zones.push_back(std::move(z));
    }
  }

  keys.mark("incident");
  auto iit = root.table_arrays.find("incident");
  if (iit != root.table_arrays.end()) {
    for (const auto& it : iit->second) {
      Keys ik(it, "incident.");
      IncidentConfig inc;
      inc.pixel = geo::GeoPixel{ik.integer("lat_milli", 0), ik.integer("lon_milli", 0)};
      inc.phone_count = ik.integer("phones", 1);
      if (ik.get("start_time_ms")) inc.start_time_ms = ik.integer("start_time_ms", 0);
      inc.start_min_ms = ik.integer("start_min_ms", 0);
      inc.start_max_ms = ik.integer("start_max_ms", inc.start_min_ms);
      inc.duration_ms = ik.integer("duration_ms", 0);
      ik.finish();
      cfg.incidents.push_back(inc);
    }
  }

  keys.finish();
  return cfg;
}

inline ScenarioConfig parse_scenario(std::string_view toml_text) {
  return scenario_from_toml(parse_toml(toml_text));
}

// Field-by-field validation with errors naming the offending field.
inline void validate_scenario(const ScenarioConfig& cfg) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (cfg.run_length_ms < 0) fail("run_length_ms must be >= 0");
  if (cfg.step_ms <= 0) fail("step_ms must be > 0");
  if (cfg.emission_cycle_ms <= 0) fail("emission_cycle_ms must be > 0");
  if (cfg.update_period_ms <= 0) fail("update_period_ms must be > 0");
  if (cfg.window() < cfg.step_ms) fail("window_ms must be >= step_ms");
  if (cfg.threshold < 0) fail("threshold must be >= 0");
  if (cfg.workers < 1) fail("workers must be >= 1");
  if (cfg.zones.empty()) fail("at least one [[zone]] is required");

  std::set<geo::GeoPixel> seen;
  for (const auto& z : cfg.zones) {
    if (z.density < 0) fail("zone '" + z.name + "': density must be >= 0");
    if (z.lost_ratio < 0.0 || z.lost_ratio > 1.0)
      fail("zone '" + z.name + "': lost_ratio must be in [0, 1]");
    if (z.phones_total && *z.phones_total < 0)
      fail("zone '" + z.name + "': phones_total must be >= 0");
    if (z.sleep_time_ms && *z.sleep_time_ms <= 0)
      fail("zone '" + z.name + "': sleep_time_ms must be > 0");
    size_t count = 0;
    if (!z.pixel_list.empty()) {
      if (z.pixel_count != 0 &&
          z.pixel_count != static_cast<int64_t>(z.pixel_list.size()))
        fail("zone '" + z.name + "': pixels disagrees with pixel_list length");
      count = z.pixel_list.size();
      for (const auto& p : z.pixel_list)
        if (!seen.insert(p).second)
          fail("zone '" + z.name + "': pixel appears in more than one zone");
    } else {
      if (z.pixel_count < 0) fail("zone '" + z.name + "': pixels must be >= 0");
      if (z.pixel_count > 0 && z.cols <= 0)
        fail("zone '" + z.name + "': cols must be > 0");
      count = static_cast<size_t>(z.pixel_count);
      for (int64_t i = 0; i < z.pixel_count; ++i) {
        geo::GeoPixel p{z.origin_lat_milli + i / z.cols,
                        z.origin_lon_milli + i % z.cols};
        if (!seen.insert(p).second)
          fail("zone '" + z.name + "': pixel appears in more than one zone");
      }
    }
    if (cfg.coords == geo::CoordMode::Strict && count > 0) {
      auto check = [&](geo::GeoPixel p) {
        auto [lat, lon] = geo::center_of(p);
        try {
          geo::pixel_of(lat, lon, geo::CoordMode::Strict);
        } catch (const geo::CoordinateError&) {
          fail("zone '" + z.name + "': pixel (" + std::to_string(p.lat_milli) +
               ", " + std::to_string(p.lon_milli) +
               ") outside strict coordinate range");
        }
      };
      if (!z.pixel_list.empty()) {
        for (const auto& p : z.pixel_list) check(p);
      } else {
        check(geo::GeoPixel{z.origin_lat_milli, z.origin_lon_milli});
        check(geo::GeoPixel{z.origin_lat_milli + (z.pixel_count - 1) / z.cols,
                            z.origin_lon_milli + (z.pixel_count - 1) % z.cols});
      }
    }
  }

  for (const auto& inc : cfg.incidents) {
    if (inc.phone_count < 1) fail("incident: phones must be >= 1");
    if (inc.duration_ms < 0) fail("incident: duration_ms must be >= 0");
    if (inc.start_time_ms) {
      if (*inc.start_time_ms < 0) fail("incident: start_time_ms must be >= 0");
    } else {
      if (inc.start_min_ms < 0 || inc.start_max_ms < inc.start_min_ms)
        fail("incident: start_min_ms/start_max_ms must satisfy 0 <= min <= max");
    }
  }
}

}  // namespace sigloss::cfg
