#pragma once

#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sigloss/errors.hpp"
#include "sigloss/rng.hpp"

namespace sigloss::model {

// Connectivity status of a phone as the network records it. UnReachable is
// the interesting one: the phone stopped talking without deregistering.
enum class Status { Attached, Detached, UnReachable };

struct StatusEvent {
  std::string phone_id;  // opaque, non-empty, IRI-safe characters
  double lat = 0.0;
  double lon = 0.0;
  Status status = Status::Attached;
  int64_t timestamp_ms = 0;

  friend bool operator==(const StatusEvent&, const StatusEvent&) = default;
};

struct Term {
  enum class Kind { Iri, Blank, LiteralDouble, LiteralString };

  Kind kind = Kind::Iri;
  std::string lexical;  // IRI text, blank label, or literal lexical form

  static Term iri(std::string s) { return {Kind::Iri, std::move(s)}; }
  static Term blank(std::string s) { return {Kind::Blank, std::move(s)}; }
  static Term lit_string(std::string s) { return {Kind::LiteralString, std::move(s)}; }
  static Term lit_double_lexical(std::string s) { return {Kind::LiteralDouble, std::move(s)}; }
  static Term lit_double(double v);

  bool is_iri() const { return kind == Kind::Iri; }
  bool is_literal() const {
    return kind == Kind::LiteralDouble || kind == Kind::LiteralString;
  }

  friend auto operator<=>(const Term&, const Term&) = default;
};

struct TimestampedTriple {
  Term subject;
  Term predicate;  // always an IRI
  Term object;
  int64_t timestamp_ms = 0;

  friend bool operator==(const TimestampedTriple&, const TimestampedTriple&) = default;
};

namespace vocab {

inline const std::string kNetNs =
    "http://home.eps.hw.ac.uk/~qz1/ontologies/wirelessnetwork_networkResource.owl/";
inline const std::string kPosNs = "http://www.w3.org/2003/01/geo/wgs84_pos/";
inline const std::string kXsdNs = "http://www.w3.org/2001/XMLSchema#";
inline const std::string kFnNs = "http://www.w3.org/2005/xpath-functions#";
inline const std::string kRdfType =
    "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

inline const std::string kUserEquipment = kNetNs + "UserEquipment";
inline const std::string kHasStatus = kNetNs + "hasStatus";
inline const std::string kStatusClass = kNetNs + "Status";
inline const std::string kAttached = kNetNs + "Attached";
inline const std::string kDetached = kNetNs + "Detached";
inline const std::string kUnReachable = kNetNs + "unReachable";

inline const std::string kPointClass = kPosNs + "Point";
inline const std::string kLocation = kPosNs + "location";
inline const std::string kLat = kPosNs + "lat";
inline const std::string kLong = kPosNs + "long";
// Long-form coordinate property names appear in older data; accepted on
// decode, never emitted.
inline const std::string kLatitude = kPosNs + "latitude";
inline const std::string kLongitude = kPosNs + "longitude";
inline const std::string kAlt = kPosNs + "alt";

inline const std::string kXsdDouble = kXsdNs + "double";
inline const std::string kXsdString = kXsdNs + "string";

inline const std::string kDefaultStream = kNetNs + "stream";

inline const std::string& status_iri(Status s) {
  switch (s) {
    case Status::Attached: return kAttached;
    case Status::Detached: return kDetached;
    case Status::UnReachable: return kUnReachable;
  }
  return kAttached;
}

inline std::optional<Status> status_from_iri(std::string_view iri) {
  if (iri == kAttached) return Status::Attached;
  if (iri == kDetached) return Status::Detached;
  if (iri == kUnReachable) return Status::UnReachable;
  return std::nullopt;
}

}  // namespace vocab

class DecodeError : public Error {
 public:
  enum class Kind { IncompleteGraph, AmbiguousGraph, InvalidValue };

  DecodeError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Shortest lexical form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double_lexical(std::string_view s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc{} || res.ptr != end) return std::nullopt;
  return v;
}

inline Term Term::lit_double(double v) {
  return {Kind::LiteralDouble, format_double(v)};
}

inline bool valid_phone_id(std::string_view id) {
  if (id.empty()) return false;
  for (char c : id) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
              (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.' ||
              c == '~';
    if (!ok) return false;
  }
  return true;
}

inline std::string phone_iri(std::string_view phone_id) {
  return vocab::kNetNs + std::string(phone_id);
}

inline std::string point_iri(std::string_view phone_id) {
  return vocab::kPosNs + "Point_" + std::string(phone_id);
}

// One status event becomes the fixed 7-triple graph: typing triples for the
// phone, the point and the status, the location link, and the lat/long
// literals. All triples carry the event timestamp. The _into form reuses the
// output vector's string storage across calls.
inline void encode_event_into(const StatusEvent& e,
                              std::vector<TimestampedTriple>& out) {
  if (!valid_phone_id(e.phone_id))
    throw DecodeError(DecodeError::Kind::InvalidValue,
                      "phone_id is empty or contains non IRI-safe characters");
  if (!std::isfinite(e.lat) || !std::isfinite(e.lon))
    throw DecodeError(DecodeError::Kind::InvalidValue,
                      "event coordinates must be finite");
  if (e.timestamp_ms < 0)
    throw DecodeError(DecodeError::Kind::InvalidValue,
                      "event timestamp must be >= 0");

  out.resize(7);
  const std::string& status = vocab::status_iri(e.status);
  int64_t t = e.timestamp_ms;
  auto set = [&](TimestampedTriple& triple, Term::Kind sk, Term::Kind pk,
                 Term::Kind ok) {
    triple.subject.kind = sk;
    triple.predicate.kind = pk;
    triple.object.kind = ok;
    triple.timestamp_ms = t;
  };
  auto set_phone = [&](std::string& s) {
    s.assign(vocab::kNetNs);
    s.append(e.phone_id);
  };
  auto set_point = [&](std::string& s) {
    s.assign(vocab::kPosNs);
    s.append("Point_");
    s.append(e.phone_id);
  };

  set(out[0], Term::Kind::Iri, Term::Kind::Iri, Term::Kind::Iri);
  set_phone(out[0].subject.lexical);
  out[0].predicate.lexical = vocab::kRdfType;
  out[0].object.lexical = vocab::kUserEquipment;

  set(out[1], Term::Kind::Iri, Term::Kind::Iri, Term::Kind::Iri);
  set_point(out[1].subject.lexical);
  out[1].predicate.lexical = vocab::kRdfType;
  out[1].object.lexical = vocab::kPointClass;

  set(out[2], Term::Kind::Iri, Term::Kind::Iri, Term::Kind::Iri);
  set_phone(out[2].subject.lexical);
  out[2].predicate.lexical = vocab::kLocation;
  set_point(out[2].object.lexical);

  set(out[3], Term::Kind::Iri, Term::Kind::Iri, Term::Kind::LiteralDouble);
  set_point(out[3].subject.lexical);
  out[3].predicate.lexical = vocab::kLat;
  out[3].object.lexical = format_double(e.lat);

  set(out[4], Term::Kind::Iri, Term::Kind::Iri, Term::Kind::LiteralDouble);
  set_point(out[4].subject.lexical);
  out[4].predicate.lexical = vocab::kLong;
  out[4].object.lexical = format_double(e.lon);

  set(out[5], Term::Kind::Iri, Term::Kind::Iri, Term::Kind::Iri);
  out[5].subject.lexical = status;
  out[5].predicate.lexical = vocab::kRdfType;
  out[5].object.lexical = vocab::kStatusClass;

  set(out[6], Term::Kind::Iri, Term::Kind::Iri, Term::Kind::Iri);
  set_phone(out[6].subject.lexical);
  out[6].predicate.lexical = vocab::kHasStatus;
  out[6].object.lexical = status;
}

inline std::vector<TimestampedTriple> encode_event(const StatusEvent& e) {
  std::vector<TimestampedTriple> out;
  encode_event_into(e, out);
  return out;
}

namespace detail {

inline std::optional<double> numeric_object(const Term& o) {
  if (o.kind == Term::Kind::LiteralDouble || o.kind == Term::Kind::LiteralString)
    return parse_double_lexical(o.lexical);
  return std::nullopt;
}

}  // namespace detail

// Inverse of encode_event over one complete event graph. Tolerates the
// long-form lat/latitude property spellings and ignores typing and altitude
// triples. Conflicting duplicates are ambiguous, missing pieces incomplete.
inline StatusEvent decode_event(std::span<const TimestampedTriple> triples) {
  const TimestampedTriple* has_status = nullptr;
  for (const auto& t : triples) {
    if (t.predicate.is_iri() && t.predicate.lexical == vocab::kHasStatus) {
      if (has_status && !(has_status->subject == t.subject &&
                          has_status->object == t.object))
        throw DecodeError(DecodeError::Kind::AmbiguousGraph,
                          "multiple conflicting net:hasStatus triples");
      if (!has_status) has_status = &t;
    }
  }
  if (!has_status)
    throw DecodeError(DecodeError::Kind::IncompleteGraph,
                      "missing net:hasStatus triple");

  const Term& phone = has_status->subject;
  if (!phone.is_iri() || phone.lexical.rfind(vocab::kNetNs, 0) != 0)
    throw DecodeError(DecodeError::Kind::InvalidValue,
                      "phone subject is not in the expected namespace");
  std::string phone_id = phone.lexical.substr(vocab::kNetNs.size());
  if (phone_id.empty())
    throw DecodeError(DecodeError::Kind::InvalidValue, "empty phone identifier");

  auto status = vocab::status_from_iri(has_status->object.lexical);
  if (!has_status->object.is_iri() || !status)
    throw DecodeError(DecodeError::Kind::InvalidValue,
                      "hasStatus object is not a known status");

  const Term* point = nullptr;
  for (const auto& t : triples) {
    if (t.predicate.is_iri() && t.predicate.lexical == vocab::kLocation &&
        t.subject == phone) {
      if (point && !(*point == t.object))
        throw DecodeError(DecodeError::Kind::AmbiguousGraph,
                          "multiple conflicting pos:location triples");
      if (!point) point = &t.object;
    }
  }
  if (!point)
    throw DecodeError(DecodeError::Kind::IncompleteGraph,
                      "missing pos:location triple");

  auto coordinate = [&](const std::string& prop, const std::string& alt_prop,
                        const char* name) {
    std::optional<double> value;
    for (const auto& t : triples) {
      if (!t.predicate.is_iri() || !(t.subject == *point)) continue;
      if (t.predicate.lexical != prop && t.predicate.lexical != alt_prop) continue;
      auto v = detail::numeric_object(t.object);
      if (!v)
        throw DecodeError(DecodeError::Kind::InvalidValue,
                          std::string("non-numeric ") + name + " literal");
      if (value && *value != *v)
        throw DecodeError(DecodeError::Kind::AmbiguousGraph,
                          std::string("multiple conflicting ") + name + " literals");
      value = v;
    }
    if (!value)
      throw DecodeError(DecodeError::Kind::IncompleteGraph,
                        std::string("missing ") + name + " triple");
    return *value;
  };

  StatusEvent e;
  e.phone_id = std::move(phone_id);
  e.lat = coordinate(vocab::kLat, vocab::kLatitude, "pos:lat");
  e.lon = coordinate(vocab::kLong, vocab::kLongitude, "pos:long");
  e.status = *status;
  e.timestamp_ms = has_status->timestamp_ms;
  return e;
}

}  // namespace sigloss::model
