#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "sigloss/detector.hpp"
#include "sigloss/engine.hpp"
#include "sigloss/lineio.hpp"
#include "sigloss/model.hpp"
#include "sigloss/ntriples.hpp"
#include "sigloss/query.hpp"
#include "sigloss/rng.hpp"
#include "sigloss/scenario.hpp"

namespace sigloss::sim {

// sleepTime: one phone emission per cycle_ms / density. A zone with zero
// density emits nothing, which is a valid configuration, not an error.
inline std::optional<int64_t> sleep_time_for_density(int64_t density,
                                                     int64_t cycle_ms) {
  if (cycle_ms <= 0) throw ConfigError("emission cycle must be > 0");
  if (density < 0) throw ConfigError("density must be >= 0");
  if (density == 0) return std::nullopt;
  return cycle_ms / density;
}

namespace sim_detail {

struct Phone {
  std::string id;
  double lat = 0.0;
  double lon = 0.0;
};

struct Passenger {
  Phone phone;
  int64_t loss_ms = 0;
};

// One geo-pixel's stream generator: residents emit round-robin on the zone's
// sleepTime, each emission UnReachable with probability lost_ratio, else
// Attached. Incident passengers emit exactly one UnReachable at their loss
// instant and a Detached after the update period, nothing else.
class PixelGen {
 public:
  geo::GeoPixel pixel;
  size_t index = 0;
  std::string stream_iri;
  std::vector<Phone> residents;
  int64_t sleep_ms = 0;  // 0: no background emission
  double lost_ratio = 0.0;
  rng::Rng rng{0};
  std::vector<Passenger> passengers;
  int64_t detached_after_ms = 0;  // 0: no Detached follow-up
  int64_t seq = 0;                // per-pixel emission counter (tie order)

  void start() {
    if (!residents.empty() && sleep_ms > 0)
      next_bg_ = static_cast<int64_t>(rng.below(static_cast<uint64_t>(sleep_ms)));
    std::stable_sort(passengers.begin(), passengers.end(),
                     [](const Passenger& a, const Passenger& b) {
                       return a.loss_ms < b.loss_ms;
                     });
  }

  int64_t peek_ts() const {
    int64_t ts = std::numeric_limits<int64_t>::max();
    if (next_bg_ >= 0) ts = std::min(ts, next_bg_);
    if (next_loss_ < passengers.size())
      ts = std::min(ts, passengers[next_loss_].loss_ms);
    if (detached_after_ms > 0 && next_detached_ < next_loss_)
      ts = std::min(ts, passengers[next_detached_].loss_ms + detached_after_ms);
    return ts;
  }

  model::StatusEvent pop() {
    int64_t bg = next_bg_ >= 0 ? next_bg_ : std::numeric_limits<int64_t>::max();
    int64_t loss = next_loss_ < passengers.size()
                       ? passengers[next_loss_].loss_ms
                       : std::numeric_limits<int64_t>::max();
    int64_t det = (detached_after_ms > 0 && next_detached_ < next_loss_)
                      ? passengers[next_detached_].loss_ms + detached_after_ms
                      : std::numeric_limits<int64_t>::max();
    ++seq;
    if (bg <= loss && bg <= det) {
      const Phone& p = residents[cursor_ % residents.size()];
      ++cursor_;
      model::StatusEvent e{p.id, p.lat, p.lon,
                           rng.bernoulli(lost_ratio) ? model::Status::UnReachable
                                                     : model::Status::Attached,
                           bg};
      next_bg_ += sleep_ms;
      return e;
    }
    if (loss <= det) {
      const Passenger& p = passengers[next_loss_++];
      return model::StatusEvent{p.phone.id, p.phone.lat, p.phone.lon,
                                model::Status::UnReachable, p.loss_ms};
    }
    const Passenger& p = passengers[next_detached_++];
    return model::StatusEvent{p.phone.id, p.phone.lat, p.phone.lon,
                              model::Status::Detached, det};
  }

 private:
  int64_t next_bg_ = -1;
  size_t cursor_ = 0;
  size_t next_loss_ = 0;
  size_t next_detached_ = 0;
};

inline double coordinate_in_pixel(int64_t milli, double unit) {
  // unit in (0,1): offset from the lower pixel edge
  return (static_cast<double>(milli) - 0.5 + unit) / 1000.0;
}

inline Phone make_phone(std::string id, const geo::GeoPixel& px, rng::Rng& rng) {
  Phone p;
  p.id = std::move(id);
  double u = 0.02 + 0.96 * rng.next_unit();  // keep away from rounding edges
  double v = 0.02 + 0.96 * rng.next_unit();
  p.lat = coordinate_in_pixel(px.lat_milli, u);
  p.lon = coordinate_in_pixel(px.lon_milli, v);
  if (geo::pixel_of(p.lat, p.lon) != px) {
    auto [clat, clon] = geo::center_of(px);
    p.lat = clat;
    p.lon = clon;
  }
  return p;
}

}  // namespace sim_detail

struct RunSinks {
  io::LineSink event_log;
  io::LineSink alert_log;
  io::LineSink results_csv;  // detection rows passing HAVING
  io::LineSink counts_csv;   // all per-group counters (no HAVING)
  io::LineSink series_csv;   // densified per-step series, monitored pixels
  io::LineSink summary_csv;  // per-pixel total distinct lost phones
};

struct RunResult {
  detector::MetricsReport metrics;
  std::vector<detector::Alert> alerts;
  std::vector<detector::IncidentTruth> incidents;  // resolved start times
  int64_t events_emitted = 0;
  int64_t triples_emitted = 0;
  int64_t steps_evaluated = 0;
};

// Canonical detection query over the status stream: count (distinct) phones
// that became unreachable per millidegree grid cell, alert above threshold.
inline query::ContinuousQuery make_detection_query(
    const std::string& name, const std::string& stream_iri, int64_t range_ms,
    int64_t step_ms, std::optional<int64_t> threshold, bool distinct) {
  using model::Term;
  namespace v = model::vocab;
  query::ContinuousQuery q;
  q.name = name;
  q.prefixes = {{"fn", v::kFnNs},
                {"net", v::kNetNs},
                {"pos", v::kPosNs},
                {"xsd", v::kXsdNs}};
  q.projection.push_back(query::Aggregate{distinct, {"UE"}, {"counter"}});
  q.projection.push_back(query::Variable{"lat"});
  q.projection.push_back(query::Variable{"long"});
  q.stream_iri = stream_iri;
  q.window = {range_ms, step_ms};
  q.patterns.push_back({query::Variable{"UE"}, Term::iri(v::kHasStatus),
                        Term::iri(v::kUnReachable)});
  q.patterns.push_back({query::Variable{"UE"}, Term::iri(v::kLocation),
                        query::Variable{"point"}});
  q.patterns.push_back({query::Variable{"point"}, Term::iri(v::kLat),
                        query::Variable{"lat"}});
  q.patterns.push_back({query::Variable{"point"}, Term::iri(v::kLong),
                        query::Variable{"long"}});
  q.binds.push_back({v::kFnNs + "round", {"lat"}, 1000.0, {"roundLat"}});
  q.binds.push_back({v::kFnNs + "round", {"long"}, 1000.0, {"roundLong"}});
  q.group_by = {{"roundLat"}, {"roundLong"}};
  if (threshold)
    q.having = query::Having{{"counter"}, query::CmpOp::Gt,
                             static_cast<double>(*threshold)};
  return q;
}

inline std::string pixel_stream_iri(const geo::GeoPixel& px) {
  return model::vocab::kNetNs + "stream/" + std::to_string(px.lat_milli) + "/" +
         std::to_string(px.lon_milli);
}

namespace sim_detail {

struct World {
  std::vector<PixelGen> pixels;
  std::map<geo::GeoPixel, size_t> by_key;
  std::vector<detector::IncidentTruth> incidents;
};

inline World build_world(const cfg::ScenarioConfig& cfg) {
  World w;
  // Zones, then zone pixels, then phones, each in declaration order; every
  // random draw comes from the pixel's own seeded stream.
  for (size_t zi = 0; zi < cfg.zones.size(); ++zi) {
    const auto& z = cfg.zones[zi];
    std::vector<geo::GeoPixel> keys;
    if (!z.pixel_list.empty()) {
      keys = z.pixel_list;
    } else {
      keys.reserve(static_cast<size_t>(z.pixel_count));
      for (int64_t i = 0; i < z.pixel_count; ++i)
        keys.push_back(geo::GeoPixel{z.origin_lat_milli + i / z.cols,
                                     z.origin_lon_milli + i % z.cols});
    }
    int64_t base_density = z.density;
    int64_t remainder = 0;
    if (z.phones_total) {
      base_density = keys.empty() ? 0 : *z.phones_total / static_cast<int64_t>(keys.size());
      remainder = keys.empty() ? 0 : *z.phones_total % static_cast<int64_t>(keys.size());
    }
    for (size_t i = 0; i < keys.size(); ++i) {
      PixelGen gen;
      gen.pixel = keys[i];
      gen.index = w.pixels.size();
      gen.rng = rng::Rng(rng::derive_seed(cfg.seed, gen.index));
      gen.lost_ratio = z.lost_ratio;
      int64_t phones = base_density + (static_cast<int64_t>(i) < remainder ? 1 : 0);
      for (int64_t k = 0; k < phones; ++k)
        gen.residents.push_back(make_phone(
            "Phone_" + std::to_string(gen.index) + "_" + std::to_string(k),
            gen.pixel, gen.rng));
      if (phones > 0) {
        if (z.sleep_time_ms) {
          gen.sleep_ms = *z.sleep_time_ms;
        } else {
          auto st = sleep_time_for_density(phones, cfg.emission_cycle_ms);
          gen.sleep_ms = st.value_or(0);
          if (gen.sleep_ms == 0 && st) gen.sleep_ms = 1;  // density > cycle
        }
      }
      if (cfg.emit_detached) gen.detached_after_ms = cfg.update_period_ms;
      w.by_key.emplace(gen.pixel, gen.index);
      w.pixels.push_back(std::move(gen));
    }
  }

  // Incidents: passengers are additional to the resident population. A pixel
  // outside every zone is materialized with no residents.
  for (size_t ii = 0; ii < cfg.incidents.size(); ++ii) {
    const auto& inc = cfg.incidents[ii];
    auto it = w.by_key.find(inc.pixel);
    if (it == w.by_key.end()) {
      PixelGen gen;
      gen.pixel = inc.pixel;
      gen.index = w.pixels.size();
      gen.rng = rng::Rng(rng::derive_seed(cfg.seed, gen.index));
      if (cfg.emit_detached) gen.detached_after_ms = cfg.update_period_ms;
      it = w.by_key.emplace(gen.pixel, gen.index).first;
      w.pixels.push_back(std::move(gen));
    }
    PixelGen& gen = w.pixels[it->second];

    int64_t start;
    if (inc.start_time_ms) {
      start = *inc.start_time_ms;
    } else {
      rng::Rng pick(rng::derive_seed(cfg.seed, 0xABCD0000ULL + 7919 * (ii + 1)));
      start = pick.range(inc.start_min_ms, inc.start_max_ms);
    }

    size_t base = gen.passengers.size();
    for (int64_t k = 0; k < inc.phone_count; ++k) {
      Passenger p;
      p.phone = make_phone("Phone_" + std::to_string(gen.index) + "_p" +
                               std::to_string(base + static_cast<size_t>(k)),
                           gen.pixel, gen.rng);
      p.loss_ms = inc.duration_ms == 0
                      ? start
                      : start + (k * inc.duration_ms) / inc.phone_count;
      gen.passengers.push_back(std::move(p));
    }
    w.incidents.push_back(detector::IncidentTruth{inc.pixel, start,
                                                  inc.duration_ms,
                                                  inc.phone_count});
  }

  for (auto& gen : w.pixels) gen.start();
  return w;
}

struct PendingEvent {
  int64_t ts;
  size_t pixel;
  int64_t seq;
  model::StatusEvent event;
};

}  // namespace sim_detail

// Drives generators, engine and detector to run_length_ms. Virtual clock by
// default; realtime paces the same schedule against the wall clock, so both
// modes see identical timestamps and produce identical logs.
inline RunResult run_scenario(const cfg::ScenarioConfig& cfg,
                              const detector::BlindZoneList& blind_zones,
                              const RunSinks& sinks) {
  using sim_detail::PixelGen;
  cfg::validate_scenario(cfg);
  sim_detail::World world = sim_detail::build_world(cfg);

  RunResult result;
  result.incidents = world.incidents;

  engine::Engine eng;
  bool per_pixel = cfg.query_mode == cfg::QueryMode::PerPixel;
  int64_t window = cfg.window();

  std::vector<engine::ResultRow> detect_rows;
  std::vector<engine::ResultRow> watch_rows;
  engine::ResultSink detect_sink = [&](std::string_view, int64_t,
                                       const std::vector<engine::ResultRow>& rows) {
    detect_rows.insert(detect_rows.end(), rows.begin(), rows.end());
  };
  engine::ResultSink watch_sink = [&](std::string_view, int64_t,
                                      const std::vector<engine::ResultRow>& rows) {
    watch_rows.insert(watch_rows.end(), rows.begin(), rows.end());
  };

  std::vector<size_t> stream_of_pixel(world.pixels.size(), 0);
  if (per_pixel) {
    for (const auto& gen : world.pixels) {
      std::string iri = pixel_stream_iri(gen.pixel);
      std::string suffix = std::to_string(gen.pixel.lat_milli) + "_" +
                           std::to_string(gen.pixel.lon_milli);
      eng.register_query(make_detection_query("detect_" + suffix, iri, window,
                                              cfg.step_ms, cfg.threshold,
                                              cfg.count_distinct),
                         detect_sink);
      eng.register_query(make_detection_query("watch_" + suffix, iri, window,
                                              cfg.step_ms, std::nullopt,
                                              cfg.count_distinct),
                         watch_sink);
    }
  } else {
    eng.register_query(make_detection_query("detect", model::vocab::kDefaultStream,
                                            window, cfg.step_ms, cfg.threshold,
                                            cfg.count_distinct),
                       detect_sink);
    eng.register_query(make_detection_query("watch", model::vocab::kDefaultStream,
                                            window, cfg.step_ms, std::nullopt,
                                            cfg.count_distinct),
                       watch_sink);
  }
  for (auto& gen : world.pixels) {
    gen.stream_iri = per_pixel ? pixel_stream_iri(gen.pixel)
                               : model::vocab::kDefaultStream;
    if (!per_pixel) eng.create_stream(gen.stream_iri);
  }

  std::set<geo::GeoPixel> monitored;
  for (const auto& inc : world.incidents) monitored.insert(inc.pixel);
  for (const auto& px : cfg.monitors) monitored.insert(px);

  std::set<geo::GeoPixel> covered;
  for (const auto& gen : world.pixels) covered.insert(gen.pixel);

  if (sinks.results_csv) sinks.results_csv("eval_time_ms,roundLat,roundLong,counter");
  if (sinks.counts_csv) sinks.counts_csv("eval_time_ms,roundLat,roundLong,counter");
  if (sinks.series_csv) sinks.series_csv("eval_time_ms,lat_milli,lon_milli,counter");

  detector::AlertTracker tracker;
  std::map<geo::GeoPixel, detector::StepSeries> series;
  for (const auto& px : monitored) series[px];

  // Ground truth: distinct lost phones per pixel (resident k, passenger
  // 1e9 + k), for the per-pixel summary.
  std::vector<std::set<int64_t>> lost_by_pixel(world.pixels.size());

  std::vector<model::TimestampedTriple> triples;
  std::string line_buf;
  auto wall_start = std::chrono::steady_clock::now();
  bool realtime = cfg.clock == cfg::ClockMode::Realtime;

  auto pace = [&](int64_t sim_ms) {
    if (realtime)
      std::this_thread::sleep_until(wall_start + std::chrono::milliseconds(sim_ms));
  };

  auto emit_event = [&](PixelGen& gen, const model::StatusEvent& e) {
    pace(e.timestamp_ms);
    model::encode_event_into(e, triples);
    if (sinks.event_log) {
      for (const auto& t : triples) {
        line_buf.clear();
        model::append_ntriples_line(line_buf, t);
        sinks.event_log(line_buf);
      }
    }
    eng.ingest(gen.stream_iri, triples);
    ++result.events_emitted;
    result.triples_emitted += static_cast<int64_t>(triples.size());
    if (e.status == model::Status::UnReachable) {
      // phone ordinal from the id suffix: residents "_k", passengers "_pk"
      size_t us = e.phone_id.find_last_of('_');
      std::string_view tail = std::string_view(e.phone_id).substr(us + 1);
      int64_t ordinal = 0;
      bool passenger = !tail.empty() && tail.front() == 'p';
      if (passenger) tail.remove_prefix(1);
      for (char c : tail) ordinal = ordinal * 10 + (c - '0');
      lost_by_pixel[gen.index].insert(passenger ? 1'000'000'000 + ordinal : ordinal);
    }
  };

  auto process_boundary = [&](int64_t b) {
    pace(b);
    eng.advance_clock(b);
    ++result.steps_evaluated;

    auto key_less = [](const engine::ResultRow& a, const engine::ResultRow& b2) {
      return a.group_key < b2.group_key;
    };
    std::sort(detect_rows.begin(), detect_rows.end(), key_less);
    std::sort(watch_rows.begin(), watch_rows.end(), key_less);

    if (sinks.results_csv) {
      for (const auto& row : detect_rows) {
        line_buf = std::to_string(b) + "," + std::to_string(row.group_key[0]) +
                   "," + std::to_string(row.group_key[1]) + "," +
                   std::to_string(row.aggregates[0]);
        sinks.results_csv(line_buf);
      }
    }
    if (sinks.counts_csv) {
      for (const auto& row : watch_rows) {
        line_buf = std::to_string(b) + "," + std::to_string(row.group_key[0]) +
                   "," + std::to_string(row.group_key[1]) + "," +
                   std::to_string(row.aggregates[0]);
        sinks.counts_csv(line_buf);
      }
    }

    auto filtered = detector::filter_blind_zones(detect_rows, blind_zones);
    auto alerts = tracker.step(b, filtered);
    for (const auto& a : alerts) {
      if (sinks.alert_log) sinks.alert_log(detector::format_alert_line(a));
      result.alerts.push_back(a);
    }

    for (const auto& px : monitored) {
      int64_t counter = 0;
      for (const auto& row : watch_rows) {
        if (row.group_key[0] == px.lat_milli && row.group_key[1] == px.lon_milli) {
          counter = row.aggregates[0];
          break;
        }
      }
      series[px].emplace_back(b, counter);
      if (sinks.series_csv) {
        line_buf = std::to_string(b) + "," + std::to_string(px.lat_milli) + "," +
                   std::to_string(px.lon_milli) + "," + std::to_string(counter);
        sinks.series_csv(line_buf);
      }
    }

    detect_rows.clear();
    watch_rows.clear();
  };

  int64_t next_boundary = cfg.step_ms;
  bool block_mode = cfg.workers > 1 && !realtime;

  if (!block_mode) {
    // Reference path: one ordered stream of events via a min-heap keyed
    // (timestamp, pixel index); per-pixel sequence breaks remaining ties.
    using Entry = std::pair<int64_t, size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    for (auto& gen : world.pixels) {
      int64_t ts = gen.peek_ts();
      if (ts <= cfg.run_length_ms) heap.push({ts, gen.index});
    }
    while (!heap.empty()) {
      auto [ts, pi] = heap.top();
      while (next_boundary <= cfg.run_length_ms && next_boundary < ts) {
        process_boundary(next_boundary);
        next_boundary += cfg.step_ms;
      }
      if (ts > cfg.run_length_ms) break;
      heap.pop();
      PixelGen& gen = world.pixels[pi];
      emit_event(gen, gen.pop());
      int64_t nts = gen.peek_ts();
      if (nts <= cfg.run_length_ms) heap.push({nts, pi});
    }
  } else {
    // Worker-pool path: each block (one step of simulated time) is generated
    // per pixel in parallel, merged into (ts, pixel, seq) order, then
    // ingested serially. Identical output to the reference path.
    int64_t block_start = 0;
    while (block_start < cfg.run_length_ms) {
      int64_t block_end = std::min(block_start + cfg.step_ms, cfg.run_length_ms);
      size_t n = world.pixels.size();
      size_t workers = static_cast<size_t>(cfg.workers);
      std::vector<std::vector<sim_detail::PendingEvent>> buckets(workers);
      std::vector<std::thread> pool;
      for (size_t wi = 0; wi < workers; ++wi) {
        pool.emplace_back([&, wi]() {
          size_t lo = n * wi / workers, hi = n * (wi + 1) / workers;
          for (size_t pi = lo; pi < hi; ++pi) {
            PixelGen& gen = world.pixels[pi];
            while (gen.peek_ts() <= block_end) {
              int64_t ts = gen.peek_ts();
              buckets[wi].push_back({ts, pi, gen.seq, gen.pop()});
            }
          }
        });
      }
      for (auto& t : pool) t.join();
      std::vector<sim_detail::PendingEvent> block;
      for (auto& b : buckets)
        for (auto& e : b) block.push_back(std::move(e));
      std::sort(block.begin(), block.end(),
                [](const sim_detail::PendingEvent& a,
                   const sim_detail::PendingEvent& b) {
                  if (a.ts != b.ts) return a.ts < b.ts;
                  if (a.pixel != b.pixel) return a.pixel < b.pixel;
                  return a.seq < b.seq;
                });
      for (auto& ev : block) {
        while (next_boundary <= cfg.run_length_ms && next_boundary < ev.ts) {
          process_boundary(next_boundary);
          next_boundary += cfg.step_ms;
        }
        emit_event(world.pixels[ev.pixel], ev.event);
      }
      block_start = block_end;
    }
  }

  while (next_boundary <= cfg.run_length_ms) {
    process_boundary(next_boundary);
    next_boundary += cfg.step_ms;
  }

  if (sinks.summary_csv) {
    sinks.summary_csv("lat_milli,lon_milli,total_lost");
    std::map<geo::GeoPixel, size_t> totals;
    for (const auto& gen : world.pixels)
      if (!lost_by_pixel[gen.index].empty())
        totals[gen.pixel] = lost_by_pixel[gen.index].size();
    for (const auto& [px, total] : totals) {
      line_buf = std::to_string(px.lat_milli) + "," + std::to_string(px.lon_milli) +
                 "," + std::to_string(total);
      sinks.summary_csv(line_buf);
    }
  }

  result.metrics = detector::compute_metrics(result.alerts, world.incidents,
                                             series, covered);
  return result;
}

}  // namespace sigloss::sim
