#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sigloss/engine.hpp"
#include "sigloss/geo.hpp"

namespace sigloss::detector {

using geo::GeoPixel;

// Provider-maintained list of pixels with no coverage; mass signal loss
// there is expected and must not alert.
class BlindZoneList {
 public:
  BlindZoneList() = default;
  explicit BlindZoneList(std::initializer_list<GeoPixel> pixels)
      : pixels_(pixels) {}

  void add(GeoPixel p) { pixels_.insert(p); }
  bool contains(GeoPixel p) const { return pixels_.count(p) > 0; }
  size_t size() const { return pixels_.size(); }
  const std::set<GeoPixel>& pixels() const { return pixels_; }

  // File format: one "lat_milli,lon_milli" per line; blank lines and
  // '#' comments skipped.
  static BlindZoneList from_stream(std::istream& is) {
    BlindZoneList out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      size_t first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      size_t comma = line.find(',');
      if (comma == std::string::npos)
        throw ConfigError("blind zone line " + std::to_string(lineno) +
                          ": expected lat_milli,lon_milli");
      try {
        int64_t lat = std::stoll(line.substr(first, comma - first));
        int64_t lon = std::stoll(line.substr(comma + 1));
        out.add(GeoPixel{lat, lon});
      } catch (const std::exception&) {
        throw ConfigError("blind zone line " + std::to_string(lineno) +
                          ": malformed integer");
      }
    }
    return out;
  }

 private:
  std::set<GeoPixel> pixels_;
};

struct Alert {
  GeoPixel pixel;
  int64_t counter = 0;
  int64_t eval_time_ms = 0;
  bool first_detection = false;
};

// Rows are expected to carry the pixel as the first two group key values
// (roundLat, roundLong), which is the shape of the shipped detection query.
inline GeoPixel pixel_of_row(const engine::ResultRow& row) {
  if (row.group_key.size() < 2)
    throw Error("result row does not carry (roundLat, roundLong) group keys");
  return GeoPixel{row.group_key[0], row.group_key[1]};
}

inline std::vector<engine::ResultRow> filter_blind_zones(
    std::vector<engine::ResultRow> rows, const BlindZoneList& bz) {
  if (bz.size() == 0) return rows;
  std::erase_if(rows, [&](const engine::ResultRow& r) {
    return bz.contains(pixel_of_row(r));
  });
  return rows;
}

// Turns above-threshold rows into alerts and tracks per-pixel transitions:
// first_detection is set when the pixel was not above threshold at the
// previous step. Feed every evaluation step in time order, including empty
// ones, so that dips reset the state.
class AlertTracker {
 public:
  std::vector<Alert> step(int64_t eval_time_ms,
                          const std::vector<engine::ResultRow>& rows) {
    std::vector<Alert> alerts;
    alerts.reserve(rows.size());
    std::set<GeoPixel> seen;
    for (const auto& row : rows) {
      GeoPixel px = pixel_of_row(row);
      seen.insert(px);
      Alert a;
      a.pixel = px;
      a.counter = row.aggregates.empty() ? 0 : row.aggregates.front();
      a.eval_time_ms = eval_time_ms;
      a.first_detection = above_.insert(px).second;
      alerts.push_back(a);
    }
    for (auto it = above_.begin(); it != above_.end();) {
      it = seen.count(*it) ? std::next(it) : above_.erase(it);
    }
    return alerts;
  }

  const std::set<GeoPixel>& above_threshold() const { return above_; }

 private:
  std::set<GeoPixel> above_;
};

struct IncidentTruth {
  GeoPixel pixel;
  int64_t start_time_ms = 0;
  int64_t duration_ms = 0;
  int64_t phone_count = 0;
};

struct IncidentOutcome {
  IncidentTruth incident;
  bool detected = false;
  bool coverage_gap = false;
  int64_t detection_latency_ms = -1;  // first first_detection alert - start
};

using StepSeries = std::vector<std::pair<int64_t, int64_t>>;  // (eval_time, count)

struct MetricsReport {
  std::vector<IncidentOutcome> incidents;
  int64_t fail_to_report = 0;
  int64_t false_alarms = 0;  // alerts at pixels with no configured incident
  int64_t total_alerts = 0;
  std::map<GeoPixel, StepSeries> series;  // per monitored pixel
};

// Aggregates the run outcome. `series` carries per-step counters for the
// monitored pixels (already densified: one sample per step, zeros included).
// `covered` lists pixels some registered query evaluates; an incident pixel
// outside it is a coverage gap and cannot be detected.
inline MetricsReport compute_metrics(
    const std::vector<Alert>& alerts, const std::vector<IncidentTruth>& incidents,
    const std::map<GeoPixel, StepSeries>& series,
    const std::optional<std::set<GeoPixel>>& covered = std::nullopt) {
  MetricsReport report;
  report.series = series;
  report.total_alerts = static_cast<int64_t>(alerts.size());

  std::set<GeoPixel> incident_pixels;
  for (const auto& inc : incidents) incident_pixels.insert(inc.pixel);

  for (const auto& inc : incidents) {
    IncidentOutcome out;
    out.incident = inc;
    if (covered && !covered->count(inc.pixel)) {
      out.coverage_gap = true;
    } else {
      for (const auto& a : alerts) {
        if (!(a.pixel == inc.pixel) || !a.first_detection) continue;
        if (a.eval_time_ms < inc.start_time_ms) continue;
        int64_t latency = a.eval_time_ms - inc.start_time_ms;
        if (!out.detected || latency < out.detection_latency_ms) {
          out.detected = true;
          out.detection_latency_ms = latency;
        }
      }
    }
    if (!out.detected) ++report.fail_to_report;
    report.incidents.push_back(out);
  }

  for (const auto& a : alerts)
    if (!incident_pixels.count(a.pixel)) ++report.false_alarms;

  return report;
}

inline std::string format_alert_line(const Alert& a) {
  std::string out;
  out += std::to_string(a.eval_time_ms);
  out += ',';
  out += std::to_string(a.pixel.lat_milli);
  out += ',';
  out += std::to_string(a.pixel.lon_milli);
  out += ',';
  out += std::to_string(a.counter);
  out += ',';
  out += a.first_detection ? '1' : '0';
  return out;
}

inline Alert parse_alert_line(std::string_view line, size_t lineno) {
  Alert a;
  int64_t fields[4] = {0, 0, 0, 0};
  size_t pos = 0;
  for (int i = 0; i < 4; ++i) {
    size_t comma = line.find(',', pos);
    if (comma == std::string_view::npos)
      throw Error("alert log line " + std::to_string(lineno) + ": bad record");
    bool negative = pos < comma && line[pos] == '-';
    size_t p = negative ? pos + 1 : pos;
    int64_t v = 0;
    for (; p < comma; ++p) {
      if (line[p] < '0' || line[p] > '9')
        throw Error("alert log line " + std::to_string(lineno) + ": bad integer");
      v = v * 10 + (line[p] - '0');
    }
    fields[i] = negative ? -v : v;
    pos = comma + 1;
  }
  a.eval_time_ms = fields[0];
  a.pixel = GeoPixel{fields[1], fields[2]};
  a.counter = fields[3];
  if (pos >= line.size() || (line[pos] != '0' && line[pos] != '1'))
    throw Error("alert log line " + std::to_string(lineno) + ": bad flag");
  a.first_detection = line[pos] == '1';
  return a;
}

}  // namespace sigloss::detector
