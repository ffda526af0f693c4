#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sigloss/geo.hpp"
#include "sigloss/model.hpp"
#include "sigloss/query.hpp"

namespace sigloss::engine {

class EngineError : public Error {
 public:
  enum class Kind {
    UnknownStream,
    LateEvent,
    NotDue,
    ClockRegression,
    AlreadyRegistered,
    UnknownHandle,
  };

  EngineError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// One group that passed HAVING at one evaluation step.
struct ResultRow {
  std::vector<int64_t> group_key;   // group_by values in declaration order
  std::vector<int64_t> aggregates;  // one per COUNT, projection order
  std::vector<std::pair<std::string, std::string>> samples;  // plain vars
  int64_t eval_time_ms = 0;
};

using ResultSink = std::function<void(
    std::string_view query_name, int64_t eval_time_ms,
    const std::vector<ResultRow>& rows)>;

struct Evaluation {
  std::string_view query_name;  // valid while the engine lives
  int64_t eval_time_ms = 0;
  std::vector<ResultRow> rows;
};

using HandleId = size_t;

namespace detail {

// Interns terms to dense ids; ids are assigned in first-seen order, so
// identical ingestion sequences produce identical ids.
class TermTable {
 public:
  uint32_t intern(const model::Term& t) {
    key_.clear();
    key_ += static_cast<char>('A' + static_cast<int>(t.kind));
    key_ += t.lexical;
    auto it = index_.find(key_);
    if (it != index_.end()) return it->second;
    uint32_t id = static_cast<uint32_t>(terms_.size());
    terms_.push_back(t);
    numeric_state_.push_back(0);
    numeric_value_.push_back(0.0);
    index_.emplace(key_, id);
    return id;
  }

  const model::Term& term(uint32_t id) const { return terms_[id]; }

  std::optional<double> numeric(uint32_t id) {
    if (numeric_state_[id] == 0) {
      auto v = model::parse_double_lexical(terms_[id].lexical);
      if (v && terms_[id].is_literal()) {
        numeric_state_[id] = 1;
        numeric_value_[id] = *v;
      } else {
        numeric_state_[id] = 2;
      }
    }
    if (numeric_state_[id] == 1) return numeric_value_[id];
    return std::nullopt;
  }

  size_t size() const { return terms_.size(); }

 private:
  std::vector<model::Term> terms_;
  std::vector<uint8_t> numeric_state_;
  std::vector<double> numeric_value_;
  std::unordered_map<std::string, uint32_t> index_;
  std::string key_;
};

struct PatternSlot {
  int var = -1;        // slot index when a variable
  uint32_t term = 0;   // interned id when constant
};

struct CompiledPattern {
  PatternSlot s, p, o;
};

struct BindStep {
  int input_slot = -1;
  bool input_is_bind = false;  // reads a previous bind output
  double factor = 1.0;
  int out_index = 0;  // index into bind value array
};

struct CompiledQuery {
  std::vector<CompiledPattern> patterns;
  size_t n_pattern_vars = 0;
  std::vector<BindStep> binds;

  // Captured values per solution: group keys, then one counted term per
  // aggregate, then sample slots for plain projections.
  struct Capture {
    int slot = -1;
    bool is_bind = false;  // slot indexes bind outputs instead of terms
  };
  std::vector<Capture> group_caps;
  std::vector<Capture> agg_caps;
  std::vector<bool> agg_distinct;
  std::vector<std::pair<std::string, Capture>> sample_caps;

  int having_agg = -1;  // index into agg_caps
  int having_key = -1;  // index into group_caps
  query::CmpOp having_op = query::CmpOp::Gt;
  double having_threshold = 0.0;
  bool has_having = false;
};

struct MatchRec {
  int64_t ts = 0;
  std::vector<int64_t> caps;  // group keys + agg terms + samples, flat
};

struct GroupState {
  std::deque<MatchRec> recs;
  // Per distinct aggregate: counted term -> multiplicity inside the window.
  std::vector<std::unordered_map<int64_t, int32_t>> distinct;
};

struct InstantGraph {
  int64_t ts = 0;
  std::vector<std::array<uint32_t, 3>> triples;
  bool dirty = false;  // needs sort+dedup

  void normalize() {
    if (!dirty) return;
    std::sort(triples.begin(), triples.end());
    triples.erase(std::unique(triples.begin(), triples.end()), triples.end());
    dirty = false;
  }
};

}  // namespace detail

struct QueryInfo {
  std::string name;
  std::string stream_iri;
  int64_t registration_ms = 0;
  int64_t next_eval_ms = 0;
  int64_t range_ms = 0;
  int64_t step_ms = 0;
};

// Continuous query engine over timestamped triple streams.
//
// Windows are sliding: an evaluation at time T sees triples with
// timestamp in (T - range, T]; eviction removes anything at or below
// T - range. BGP solutions are computed per timestamp instant — the triples
// of one event share one timestamp, so a solution never spans instants and
// COUNT(?x) equals the number of matching events in the window (duplicate
// triples within one instant collapse, set semantics per instant).
// Ingestion must be timestamp-ordered per stream; late triples are rejected.
class Engine {
 public:
  Engine() = default;

  void create_stream(const std::string& iri) {
    if (!stream_index_.count(iri)) {
      stream_index_.emplace(iri, streams_.size());
      streams_.push_back(std::make_unique<Stream>());
      streams_.back()->iri = iri;
    }
  }

  bool has_stream(const std::string& iri) const {
    return stream_index_.count(iri) > 0;
  }

  HandleId register_query(const query::ContinuousQuery& q, ResultSink sink) {
    auto diags = query::validate(q);
    if (!diags.empty())
      throw query::QueryError(query::QueryError::Kind::Validation, 1, 1,
                              diags.front().code + ": " + diags.front().message);
    if (name_index_.count(q.name))
      throw EngineError(EngineError::Kind::AlreadyRegistered,
                        "query '" + q.name + "' is already registered");
    create_stream(q.stream_iri);
    auto state = std::make_unique<QueryState>();
    state->info.name = q.name;
    state->info.stream_iri = q.stream_iri;
    state->info.registration_ms = now_;
    state->info.next_eval_ms = now_ + q.window.step_ms;
    state->info.range_ms = q.window.range_ms;
    state->info.step_ms = q.window.step_ms;
    state->sink = std::move(sink);
    compile(q, *state);
    HandleId id = queries_.size();
    name_index_.emplace(q.name, id);
    queries_.push_back(std::move(state));
    streams_[stream_index_.at(q.stream_iri)]->query_ids.push_back(id);
    due_.push(DueEntry{queries_[id]->info.next_eval_ms, id});
    return id;
  }

  const QueryInfo& info(HandleId id) const {
    if (id >= queries_.size())
      throw EngineError(EngineError::Kind::UnknownHandle, "no such query handle");
    return queries_[id]->info;
  }

  size_t query_count() const { return queries_.size(); }

  int64_t now() const { return now_; }

  size_t buffered_triples(const std::string& stream_iri) const {
    auto it = stream_index_.find(stream_iri);
    if (it == stream_index_.end())
      throw EngineError(EngineError::Kind::UnknownStream,
                        "unknown stream <" + stream_iri + ">");
    size_t n = 0;
    for (const auto& g : streams_[it->second]->pending) n += g.triples.size();
    return n;
  }

  void ingest(const std::string& stream_iri,
              std::span<const model::TimestampedTriple> triples) {
    auto it = stream_index_.find(stream_iri);
    if (it == stream_index_.end())
      throw EngineError(EngineError::Kind::UnknownStream,
                        "unknown stream <" + stream_iri + ">");
    Stream& stream = *streams_[it->second];
    for (const auto& t : triples) {
      if (t.timestamp_ms < stream.watermark)
        throw EngineError(
            EngineError::Kind::LateEvent,
            "late event: t=" + std::to_string(t.timestamp_ms) +
                " behind watermark " + std::to_string(stream.watermark) +
                " on <" + stream_iri + ">");
      if (stream.pending.empty() || stream.pending.back().ts != t.timestamp_ms) {
        finalize_pending(stream, t.timestamp_ms);
        stream.pending.push_back({t.timestamp_ms, {}, false});
      }
      auto& g = stream.pending.back();
      g.triples.push_back({terms_.intern(t.subject), terms_.intern(t.predicate),
                           terms_.intern(t.object)});
      g.dirty = true;
      stream.watermark = t.timestamp_ms;
    }
  }

  // Runs one scheduled evaluation. Usable directly by test drivers; the
  // normal path is advance_clock.
  std::vector<ResultRow> evaluate_step(HandleId id, int64_t eval_time_ms) {
    if (id >= queries_.size())
      throw EngineError(EngineError::Kind::UnknownHandle, "no such query handle");
    QueryState& qs = *queries_[id];
    if (eval_time_ms != qs.info.next_eval_ms)
      throw EngineError(EngineError::Kind::NotDue,
                        "evaluation at t=" + std::to_string(eval_time_ms) +
                            " is not due; next is t=" +
                            std::to_string(qs.info.next_eval_ms));
    auto rows = evaluate(qs, eval_time_ms);
    qs.info.next_eval_ms += qs.info.step_ms;
    return rows;
  }

  // Runs every due evaluation with eval time <= to, in time order
  // (registration order on ties), delivering rows to sinks.
  std::vector<Evaluation> advance_clock(int64_t to_ms) {
    if (to_ms < now_)
      throw EngineError(EngineError::Kind::ClockRegression,
                        "clock moved backwards: " + std::to_string(to_ms) +
                            " < " + std::to_string(now_));
    std::vector<Evaluation> out;
    while (!due_.empty() && due_.top().at <= to_ms) {
      DueEntry entry = due_.top();
      due_.pop();
      QueryState& qs = *queries_[entry.id];
      if (entry.at != qs.info.next_eval_ms) {
        // Stale entry: the handle was advanced via evaluate_step directly.
        if (qs.info.next_eval_ms > entry.at)
          due_.push(DueEntry{qs.info.next_eval_ms, entry.id});
        continue;
      }
      auto rows = evaluate(qs, entry.at);
      qs.info.next_eval_ms = entry.at + qs.info.step_ms;
      due_.push(DueEntry{qs.info.next_eval_ms, entry.id});
      if (qs.sink) qs.sink(qs.info.name, entry.at, rows);
      out.push_back(Evaluation{qs.info.name, entry.at, std::move(rows)});
    }
    now_ = to_ms;
    return out;
  }

 private:
  struct QueryState {
    QueryInfo info;
    detail::CompiledQuery cq;
    ResultSink sink;
    std::map<std::vector<int64_t>, detail::GroupState> groups;
  };

  struct Stream {
    std::string iri;
    int64_t watermark = -1;
    std::deque<detail::InstantGraph> pending;
    std::vector<HandleId> query_ids;
  };

  struct DueEntry {
    int64_t at;
    HandleId id;
    bool operator>(const DueEntry& o) const {
      return at != o.at ? at > o.at : id > o.id;
    }
  };

  void compile(const query::ContinuousQuery& q, QueryState& state) {
    detail::CompiledQuery& cq = state.cq;
    std::map<std::string, int> slots;
    auto pattern_slot = [&](const query::PatternTerm& t) {
      detail::PatternSlot s;
      if (const auto* v = std::get_if<query::Variable>(&t)) {
        auto it = slots.find(v->name);
        if (it == slots.end())
          it = slots.emplace(v->name, static_cast<int>(slots.size())).first;
        s.var = it->second;
      } else {
        s.term = terms_.intern(std::get<model::Term>(t));
      }
      return s;
    };
    for (const auto& p : q.patterns)
      cq.patterns.push_back(
          {pattern_slot(p.subject), pattern_slot(p.predicate), pattern_slot(p.object)});
    cq.n_pattern_vars = slots.size();

    std::map<std::string, int> bind_out;  // var name -> bind value index
    for (const auto& b : q.binds) {
      detail::BindStep step;
      auto bit = bind_out.find(b.input.name);
      if (bit != bind_out.end()) {
        step.input_slot = bit->second;
        step.input_is_bind = true;
      } else {
        step.input_slot = slots.at(b.input.name);
      }
      step.factor = b.factor;
      step.out_index = static_cast<int>(bind_out.size());
      bind_out.emplace(b.alias.name, step.out_index);
      cq.binds.push_back(step);
    }

    auto capture_of = [&](const std::string& var) {
      detail::CompiledQuery::Capture cap;
      auto bit = bind_out.find(var);
      if (bit != bind_out.end()) {
        cap.slot = bit->second;
        cap.is_bind = true;
      } else {
        cap.slot = slots.at(var);
      }
      return cap;
    };

    for (const auto& g : q.group_by) cq.group_caps.push_back(capture_of(g.name));
    std::map<std::string, int> agg_index;
    for (const auto& item : q.projection) {
      if (const auto* agg = std::get_if<query::Aggregate>(&item)) {
        agg_index.emplace(agg->alias.name, static_cast<int>(cq.agg_caps.size()));
        cq.agg_caps.push_back(capture_of(agg->var.name));
        cq.agg_distinct.push_back(agg->distinct);
      } else {
        const auto& v = std::get<query::Variable>(item);
        cq.sample_caps.emplace_back(v.name, capture_of(v.name));
      }
    }
    if (q.having) {
      cq.has_having = true;
      cq.having_op = q.having->op;
      cq.having_threshold = q.having->threshold;
      auto ait = agg_index.find(q.having->var.name);
      if (ait != agg_index.end()) {
        cq.having_agg = ait->second;
      } else {
        for (size_t i = 0; i < q.group_by.size(); ++i)
          if (q.group_by[i].name == q.having->var.name)
            cq.having_key = static_cast<int>(i);
      }
    }
  }

  // BGP join over one instant graph; emits one MatchRec per solution.
  void match_instant(QueryState& qs, detail::InstantGraph& g,
                     std::vector<detail::MatchRec>& out) {
    g.normalize();
    if (g.triples.empty()) return;
    const detail::CompiledQuery& cq = qs.cq;

    // predicate -> triple indices
    std::unordered_map<uint32_t, std::vector<uint32_t>> by_pred;
    for (uint32_t i = 0; i < g.triples.size(); ++i)
      by_pred[g.triples[i][1]].push_back(i);

    std::vector<int64_t> slots(cq.n_pattern_vars, -1);
    std::vector<int64_t> bind_values(cq.binds.size(), 0);

    auto emit = [&]() {
      for (const auto& b : cq.binds) {
        double input;
        if (b.input_is_bind) {
          input = static_cast<double>(bind_values[b.input_slot]);
        } else {
          auto v = terms_.numeric(static_cast<uint32_t>(slots[b.input_slot]));
          if (!v) return;  // non-numeric input drops the solution
          input = *v;
        }
        bind_values[b.out_index] = geo::round_half_away(input * b.factor);
      }
      auto value_of = [&](const detail::CompiledQuery::Capture& cap) {
        return cap.is_bind ? bind_values[cap.slot] : slots[cap.slot];
      };
      detail::MatchRec rec;
      rec.ts = g.ts;
      rec.caps.reserve(cq.group_caps.size() + cq.agg_caps.size() +
                       cq.sample_caps.size());
      for (const auto& c : cq.group_caps) rec.caps.push_back(value_of(c));
      for (const auto& c : cq.agg_caps) rec.caps.push_back(value_of(c));
      for (const auto& [name, c] : cq.sample_caps) rec.caps.push_back(value_of(c));
      out.push_back(std::move(rec));
    };

    // Depth-first join in pattern order.
    auto match_from = [&](auto&& self, size_t pi) -> void {
      if (pi == cq.patterns.size()) {
        emit();
        return;
      }
      const auto& pat = cq.patterns[pi];
      auto resolved = [&](const detail::PatternSlot& ps, int64_t& val) {
        if (ps.var < 0) {
          val = ps.term;
          return true;
        }
        if (slots[ps.var] >= 0) {
          val = slots[ps.var];
          return true;
        }
        return false;
      };
      int64_t sv = -1, pv = -1, ov = -1;
      bool s_bound = resolved(pat.s, sv);
      bool p_bound = resolved(pat.p, pv);
      bool o_bound = resolved(pat.o, ov);

      auto try_triple = [&](const std::array<uint32_t, 3>& t) {
        if (s_bound && static_cast<int64_t>(t[0]) != sv) return;
        if (p_bound && static_cast<int64_t>(t[1]) != pv) return;
        if (o_bound && static_cast<int64_t>(t[2]) != ov) return;
        int bound_s = -1, bound_p = -1, bound_o = -1;
        if (!s_bound) {
          // Shared variables inside one pattern must unify.
          slots[pat.s.var] = t[0];
          bound_s = pat.s.var;
        }
        if (!p_bound) {
          if (slots[pat.p.var] >= 0 && slots[pat.p.var] != t[1]) {
            if (bound_s >= 0) slots[bound_s] = -1;
            return;
          }
          if (slots[pat.p.var] < 0) {
            slots[pat.p.var] = t[1];
            bound_p = pat.p.var;
          }
        }
        if (!o_bound) {
          if (slots[pat.o.var] >= 0 && slots[pat.o.var] != t[2]) {
            if (bound_s >= 0) slots[bound_s] = -1;
            if (bound_p >= 0) slots[bound_p] = -1;
            return;
          }
          if (slots[pat.o.var] < 0) {
            slots[pat.o.var] = t[2];
            bound_o = pat.o.var;
          }
        }
        self(self, pi + 1);
        if (bound_s >= 0) slots[bound_s] = -1;
        if (bound_p >= 0) slots[bound_p] = -1;
        if (bound_o >= 0) slots[bound_o] = -1;
      };

      if (p_bound) {
        auto it = by_pred.find(static_cast<uint32_t>(pv));
        if (it == by_pred.end()) return;
        for (uint32_t idx : it->second) try_triple(g.triples[idx]);
      } else {
        for (const auto& t : g.triples) try_triple(t);
      }
    };
    match_from(match_from, 0);
  }

  void append_record(QueryState& qs, detail::MatchRec&& rec) {
    const auto& cq = qs.cq;
    std::vector<int64_t> key(rec.caps.begin(),
                             rec.caps.begin() + cq.group_caps.size());
    auto [it, inserted] = qs.groups.try_emplace(std::move(key));
    detail::GroupState& gs = it->second;
    if (inserted) gs.distinct.resize(cq.agg_caps.size());
    for (size_t a = 0; a < cq.agg_caps.size(); ++a) {
      if (cq.agg_distinct[a])
        ++gs.distinct[a][rec.caps[cq.group_caps.size() + a]];
    }
    gs.recs.push_back(std::move(rec));
  }

  void remove_last_record(QueryState& qs, const std::vector<int64_t>& key) {
    auto it = qs.groups.find(key);
    detail::GroupState& gs = it->second;
    const auto& cq = qs.cq;
    const detail::MatchRec& rec = gs.recs.back();
    for (size_t a = 0; a < cq.agg_caps.size(); ++a) {
      if (cq.agg_distinct[a]) {
        auto& m = gs.distinct[a];
        auto mit = m.find(rec.caps[cq.group_caps.size() + a]);
        if (--mit->second == 0) m.erase(mit);
      }
    }
    gs.recs.pop_back();
    if (gs.recs.empty()) qs.groups.erase(it);
  }

  void finalize_pending(Stream& stream, int64_t upto_exclusive) {
    while (!stream.pending.empty() && stream.pending.front().ts < upto_exclusive) {
      detail::InstantGraph& g = stream.pending.front();
      for (HandleId id : stream.query_ids) {
        QueryState& qs = *queries_[id];
        scratch_.clear();
        match_instant(qs, g, scratch_);
        for (auto& rec : scratch_) append_record(qs, std::move(rec));
      }
      stream.pending.pop_front();
    }
  }

  std::vector<ResultRow> evaluate(QueryState& qs, int64_t eval_time) {
    Stream& stream = *streams_[stream_index_.at(qs.info.stream_iri)];
    int64_t cutoff = eval_time - qs.info.range_ms;

    // Evict out-of-window records group by group.
    for (auto it = qs.groups.begin(); it != qs.groups.end();) {
      detail::GroupState& gs = it->second;
      while (!gs.recs.empty() && gs.recs.front().ts <= cutoff) {
        const detail::MatchRec& rec = gs.recs.front();
        for (size_t a = 0; a < qs.cq.agg_caps.size(); ++a) {
          if (qs.cq.agg_distinct[a]) {
            auto& m = gs.distinct[a];
            auto mit = m.find(rec.caps[qs.cq.group_caps.size() + a]);
            if (--mit->second == 0) m.erase(mit);
          }
        }
        gs.recs.pop_front();
      }
      it = gs.recs.empty() ? qs.groups.erase(it) : std::next(it);
    }

    // Tentatively include still-pending instants inside this window. Pending
    // instants older than the window are left alone: another query on the
    // stream may have a longer range, and they finalize at the next ingest.
    std::vector<std::vector<int64_t>> tentative_keys;
    for (auto& g : stream.pending) {
      if (g.ts > eval_time || g.ts <= cutoff) continue;
      scratch_.clear();
      match_instant(qs, g, scratch_);
      for (auto& rec : scratch_) {
        tentative_keys.emplace_back(rec.caps.begin(),
                                    rec.caps.begin() + qs.cq.group_caps.size());
        append_record(qs, std::move(rec));
      }
    }

    std::vector<ResultRow> rows;
    for (auto& [key, gs] : qs.groups) {
      ResultRow row;
      row.eval_time_ms = eval_time;
      row.group_key = key;
      row.aggregates.reserve(qs.cq.agg_caps.size());
      for (size_t a = 0; a < qs.cq.agg_caps.size(); ++a) {
        int64_t value = qs.cq.agg_distinct[a]
                            ? static_cast<int64_t>(gs.distinct[a].size())
                            : static_cast<int64_t>(gs.recs.size());
        row.aggregates.push_back(value);
      }
      if (qs.cq.has_having) {
        int64_t value = 0;
        if (qs.cq.having_agg >= 0) value = row.aggregates[qs.cq.having_agg];
        else if (qs.cq.having_key >= 0) value = key[qs.cq.having_key];
        if (!passes(qs.cq.having_op, static_cast<double>(value),
                    qs.cq.having_threshold))
          continue;
      }
      const detail::MatchRec& first = gs.recs.front();
      size_t base = qs.cq.group_caps.size() + qs.cq.agg_caps.size();
      for (size_t s = 0; s < qs.cq.sample_caps.size(); ++s) {
        const auto& [name, cap] = qs.cq.sample_caps[s];
        int64_t v = first.caps[base + s];
        if (cap.is_bind)
          row.samples.emplace_back(name, std::to_string(v));
        else
          row.samples.emplace_back(name, terms_.term(static_cast<uint32_t>(v)).lexical);
      }
      rows.push_back(std::move(row));
    }

    // Undo the tentative appends; they re-enter when their instant closes.
    for (auto rit = tentative_keys.rbegin(); rit != tentative_keys.rend(); ++rit)
      remove_last_record(qs, *rit);

    return rows;
  }

  static bool passes(query::CmpOp op, double value, double threshold) {
    switch (op) {
      case query::CmpOp::Gt: return value > threshold;
      case query::CmpOp::Ge: return value >= threshold;
      case query::CmpOp::Lt: return value < threshold;
      case query::CmpOp::Le: return value <= threshold;
      case query::CmpOp::Eq: return value == threshold;
    }
    return false;
  }

  detail::TermTable terms_;
  std::vector<std::unique_ptr<Stream>> streams_;
  std::unordered_map<std::string, size_t> stream_index_;
  std::vector<std::unique_ptr<QueryState>> queries_;
  std::unordered_map<std::string, HandleId> name_index_;
  std::priority_queue<DueEntry, std::vector<DueEntry>, std::greater<>> due_;
  int64_t now_ = 0;
  std::vector<detail::MatchRec> scratch_;
};

}  // namespace sigloss::engine
