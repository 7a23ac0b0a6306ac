#pragma once

// Plain-text station-to-station message envelope.
//
//   M2M/1 <KIND>
//   From: <id>
//   To: <id>
//   Date: <seconds with 3 decimals>
//   Seq: <integer>
//   Auth: <code>            (INTERRUPT, PAUSE, RESUME only)
//   <blank line>
//   <one body line>
//
// Every field has exactly one textual form, so serialize/parse are mutual
// inverses and parse rejects anything it would not itself produce.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "m2mtraffic/traffic.hpp"

namespace m2mtraffic::m2m {

enum class Kind { Flow, Interrupt, Pause, Resume };

inline const char* to_string(Kind k) {
  switch (k) {
    case Kind::Flow: return "FLOW";
    case Kind::Interrupt: return "INTERRUPT";
    case Kind::Pause: return "PAUSE";
    case Kind::Resume: return "RESUME";
  }
  return "?";
}

inline std::optional<Kind> kind_from_string(std::string_view s) {
  if (s == "FLOW") return Kind::Flow;
  if (s == "INTERRUPT") return Kind::Interrupt;
  if (s == "PAUSE") return Kind::Pause;
  if (s == "RESUME") return Kind::Resume;
  return std::nullopt;
}

inline bool requires_auth(Kind k) { return k != Kind::Flow; }

inline constexpr std::size_t kMaxIdLength = 32;
inline constexpr std::size_t kMinAuthLength = 8;
inline constexpr std::size_t kMaxAuthLength = 64;
inline constexpr std::size_t kMaxTextLength = 200;
inline constexpr std::size_t kMaxMessageBytes = 512;

struct FlowBody {
  std::string road_id;
  std::uint64_t rate_centi = 0;  // veh/min x 100
  int window_s = 60;
  std::uint64_t count = 0;

  double rate_veh_per_min() const { return static_cast<double>(rate_centi) / 100.0; }
  bool operator==(const FlowBody&) const = default;
};

struct InterruptBody {
  std::string road_id;
  std::string text;
  bool operator==(const InterruptBody&) const = default;
};

struct PauseBody {
  std::string road_id;
  bool operator==(const PauseBody&) const = default;
};

struct ResumeBody {
  std::string road_id;
  bool operator==(const ResumeBody&) const = default;
};

// Alternative order matches Kind.
using Body = std::variant<FlowBody, InterruptBody, PauseBody, ResumeBody>;

struct Message {
  std::string from;
  std::string to;
  std::uint64_t date_ms = 0;
  std::uint64_t seq = 0;
  std::optional<std::string> auth;
  Body body;

  Kind kind() const { return static_cast<Kind>(body.index()); }
  double date_s() const { return static_cast<double>(date_ms) / 1000.0; }
  const std::string& road_id() const {
    return std::visit([](const auto& b) -> const std::string& { return b.road_id; }, body);
  }
  bool operator==(const Message&) const = default;
};

// ---------------------------------------------------------------------------
// Field rules

inline bool is_id_char(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
}

inline bool is_valid_token(std::string_view s, std::size_t min_len, std::size_t max_len) {
  if (s.size() < min_len || s.size() > max_len) return false;
  for (char c : s) {
    if (!is_id_char(c)) return false;
  }
  return true;
}

inline bool is_valid_id(std::string_view s) { return is_valid_token(s, 1, kMaxIdLength); }
inline bool is_valid_auth(std::string_view s) { return is_valid_token(s, kMinAuthLength, kMaxAuthLength); }

// Display text: printable ASCII, one line.
inline bool is_valid_text_char(char c) { return c >= 0x20 && c <= 0x7e; }

class MessageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void validate(const Message& m) {
  if (!is_valid_id(m.from)) throw MessageError("invalid sender id");
  if (!is_valid_id(m.to)) throw MessageError("invalid recipient id");
  if (!is_valid_id(m.road_id())) throw MessageError("invalid road id");
  if (requires_auth(m.kind())) {
    if (!m.auth) throw MessageError(std::string(to_string(m.kind())) + " requires an auth code");
    if (!is_valid_auth(*m.auth)) throw MessageError("invalid auth code");
  } else if (m.auth) {
    throw MessageError("FLOW must not carry an auth code");
  }
  if (const auto* flow = std::get_if<FlowBody>(&m.body)) {
    if (flow->window_s < 1) throw MessageError("window_s must be positive");
  }
  if (const auto* intr = std::get_if<InterruptBody>(&m.body)) {
    if (intr->text.empty()) throw MessageError("interrupt text is empty");
    if (intr->text.size() > kMaxTextLength) throw MessageError("interrupt text exceeds 200 characters");
    for (char c : intr->text) {
      if (!is_valid_text_char(c)) throw MessageError("interrupt text must be printable single-line ASCII");
    }
  }
}

namespace detail {

inline std::string decimal(std::uint64_t scaled, std::uint64_t unit, int digits) {
  std::string frac = std::to_string(scaled % unit);
  frac.insert(0, static_cast<std::size_t>(digits) - frac.size(), '0');
  return std::to_string(scaled / unit) + "." + frac;
}

inline std::uint64_t to_scaled(double value, double unit, const char* what) {
  const double scaled = std::round(value * unit);
  if (!std::isfinite(value) || value < 0.0 || scaled >= 1.8e19) {
    throw MessageError(std::string(what) + " must be a nonnegative finite number");
  }
  return static_cast<std::uint64_t>(scaled);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Serialization

inline std::string serialize(const Message& m) {
  validate(m);
  std::string out;
  out.reserve(256);
  out += "M2M/1 ";
  out += to_string(m.kind());
  out += "\nFrom: " + m.from;
  out += "\nTo: " + m.to;
  out += "\nDate: " + detail::decimal(m.date_ms, 1000, 3);
  out += "\nSeq: " + std::to_string(m.seq);
  if (m.auth) out += "\nAuth: " + *m.auth;
  out += "\n\n";
  std::visit(
      [&out](const auto& b) {
        using B = std::decay_t<decltype(b)>;
        out += "road=" + b.road_id;
        if constexpr (std::is_same_v<B, FlowBody>) {
          out += " rate=" + detail::decimal(b.rate_centi, 100, 2) + " unit=veh/min window_s=" +
                 std::to_string(b.window_s) + " count=" + std::to_string(b.count);
        } else if constexpr (std::is_same_v<B, InterruptBody>) {
          out += " text=" + b.text;
        }
      },
      m.body);
  out += "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

enum class ParseErrorCode {
  MalformedEnvelope,
  UnsupportedVersion,
  UnknownKind,
  UnknownHeader,
  MissingHeader,
  HeaderOutOfOrder,
  InvalidStationId,
  MalformedDate,
  MalformedSeq,
  InvalidAuthCode,
  AuthRequired,
  AuthForbidden,
  BodyMismatch,
  InvalidRoadId,
  MalformedRate,
  MalformedNumber,
  OversizedText,
  InvalidText,
};

inline const char* to_string(ParseErrorCode c) {
  switch (c) {
    case ParseErrorCode::MalformedEnvelope: return "malformed envelope";
    case ParseErrorCode::UnsupportedVersion: return "unsupported version";
    case ParseErrorCode::UnknownKind: return "unknown kind";
    case ParseErrorCode::UnknownHeader: return "unknown header";
    case ParseErrorCode::MissingHeader: return "missing header";
    case ParseErrorCode::HeaderOutOfOrder: return "header out of order";
    case ParseErrorCode::InvalidStationId: return "invalid station id";
    case ParseErrorCode::MalformedDate: return "malformed date";
    case ParseErrorCode::MalformedSeq: return "malformed seq";
    case ParseErrorCode::InvalidAuthCode: return "invalid auth code";
    case ParseErrorCode::AuthRequired: return "auth required";
    case ParseErrorCode::AuthForbidden: return "auth forbidden";
    case ParseErrorCode::BodyMismatch: return "body mismatch";
    case ParseErrorCode::InvalidRoadId: return "invalid road id";
    case ParseErrorCode::MalformedRate: return "malformed rate";
    case ParseErrorCode::MalformedNumber: return "malformed number";
    case ParseErrorCode::OversizedText: return "oversized text";
    case ParseErrorCode::InvalidText: return "invalid text";
  }
  return "unknown";
}

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(ParseErrorCode code) : std::runtime_error(to_string(code)), code_(code) {}
  ParseErrorCode code() const { return code_; }

 private:
  ParseErrorCode code_;
};

namespace detail {

// Canonical unsigned decimal: no sign, no leading zeros, no overflow.
inline std::optional<std::uint64_t> parse_canonical_uint(std::string_view s) {
  if (s.empty() || s.size() > 20) return std::nullopt;
  if (s.size() > 1 && s[0] == '0') return std::nullopt;
  std::uint64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    const auto digit = static_cast<std::uint64_t>(c - '0');
    if (v > (std::numeric_limits<std::uint64_t>::max() - digit) / 10) return std::nullopt;
    v = v * 10 + digit;
  }
  return v;
}

// "<canonical uint>.<exactly digits>" scaled by 10^digits.
inline std::optional<std::uint64_t> parse_fixed(std::string_view s, int digits) {
  const auto dot = s.find('.');
  if (dot == std::string_view::npos || s.size() - dot - 1 != static_cast<std::size_t>(digits)) return std::nullopt;
  const auto whole = parse_canonical_uint(s.substr(0, dot));
  if (!whole) return std::nullopt;
  std::uint64_t frac = 0;
  std::uint64_t unit = 1;
  for (char c : s.substr(dot + 1)) {
    if (c < '0' || c > '9') return std::nullopt;
    frac = frac * 10 + static_cast<std::uint64_t>(c - '0');
    unit *= 10;
  }
  if (*whole > (std::numeric_limits<std::uint64_t>::max() - frac) / unit) return std::nullopt;
  return *whole * unit + frac;
}

inline std::string_view take_key(std::string_view token, std::string_view key) {
  if (token.size() <= key.size() || token.substr(0, key.size()) != key || token[key.size()] != '=') {
    throw ParseError(ParseErrorCode::BodyMismatch);
  }
  return token.substr(key.size() + 1);
}

inline std::string parse_road(std::string_view v) {
  if (!is_valid_id(v)) throw ParseError(ParseErrorCode::InvalidRoadId);
  return std::string(v);
}

inline std::vector<std::string_view> split_spaces(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(' ', start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline Body parse_body(Kind kind, std::string_view line) {
  switch (kind) {
    case Kind::Flow: {
      const auto tokens = split_spaces(line);
      if (tokens.size() != 5) throw ParseError(ParseErrorCode::BodyMismatch);
      FlowBody b;
      b.road_id = parse_road(take_key(tokens[0], "road"));
      const auto rate = parse_fixed(take_key(tokens[1], "rate"), 2);
      if (take_key(tokens[2], "unit") != "veh/min") throw ParseError(ParseErrorCode::BodyMismatch);
      const auto window = take_key(tokens[3], "window_s");
      const auto count = take_key(tokens[4], "count");
      if (!rate) throw ParseError(ParseErrorCode::MalformedRate);
      const auto w = parse_canonical_uint(window);
      const auto c = parse_canonical_uint(count);
      if (!w || *w < 1 || *w > static_cast<std::uint64_t>(std::numeric_limits<int>::max()) || !c) {
        throw ParseError(ParseErrorCode::MalformedNumber);
      }
      b.rate_centi = *rate;
      b.window_s = static_cast<int>(*w);
      b.count = *c;
      return b;
    }
    case Kind::Interrupt: {
      const auto space = line.find(' ');
      if (space == std::string_view::npos) throw ParseError(ParseErrorCode::BodyMismatch);
      InterruptBody b;
      b.road_id = parse_road(take_key(line.substr(0, space), "road"));
      const auto rest = line.substr(space + 1);
      if (rest.substr(0, 5) != "text=") throw ParseError(ParseErrorCode::BodyMismatch);
      const auto text = rest.substr(5);
      if (text.empty()) throw ParseError(ParseErrorCode::InvalidText);
      if (text.size() > kMaxTextLength) throw ParseError(ParseErrorCode::OversizedText);
      for (char c : text) {
        if (!is_valid_text_char(c)) throw ParseError(ParseErrorCode::InvalidText);
      }
      b.text = std::string(text);
      return b;
    }
    case Kind::Pause:
    case Kind::Resume: {
      if (line.find(' ') != std::string_view::npos) throw ParseError(ParseErrorCode::BodyMismatch);
      auto road = parse_road(take_key(line, "road"));
      if (kind == Kind::Pause) return PauseBody{std::move(road)};
      return ResumeBody{std::move(road)};
    }
  }
  throw ParseError(ParseErrorCode::UnknownKind);
}

}  // namespace detail

inline Message parse(std::string_view bytes) {
  using detail::parse_canonical_uint;
  if (bytes.empty() || bytes.size() > kMaxMessageBytes || bytes.back() != '\n') {
    throw ParseError(ParseErrorCode::MalformedEnvelope);
  }

  std::vector<std::string_view> lines;
  for (std::size_t start = 0; start < bytes.size();) {
    const auto nl = bytes.find('\n', start);
    lines.push_back(bytes.substr(start, nl - start));
    start = nl + 1;
  }

  // Start line.
  const auto& first = lines[0];
  if (first.substr(0, 4) != "M2M/") throw ParseError(ParseErrorCode::MalformedEnvelope);
  const auto space = first.find(' ');
  if (first.substr(4, space == std::string_view::npos ? std::string_view::npos : space - 4) != "1") {
    throw ParseError(ParseErrorCode::UnsupportedVersion);
  }
  if (space == std::string_view::npos) throw ParseError(ParseErrorCode::MalformedEnvelope);
  const auto kind = kind_from_string(first.substr(space + 1));
  if (!kind) throw ParseError(ParseErrorCode::UnknownKind);

  // Headers up to the blank line.
  static constexpr std::string_view kOrder[] = {"From", "To", "Date", "Seq", "Auth"};
  std::vector<std::pair<std::size_t, std::string_view>> headers;
  std::size_t i = 1;
  for (; i < lines.size() && !lines[i].empty(); ++i) {
    const auto sep = lines[i].find(": ");
    if (sep == std::string_view::npos) throw ParseError(ParseErrorCode::MalformedEnvelope);
    const auto name = lines[i].substr(0, sep);
    std::size_t slot = std::size(kOrder);
    for (std::size_t k = 0; k < std::size(kOrder); ++k) {
      if (name == kOrder[k]) slot = k;
    }
    if (slot == std::size(kOrder)) throw ParseError(ParseErrorCode::UnknownHeader);
    headers.emplace_back(slot, lines[i].substr(sep + 2));
  }
  for (std::size_t k = 0; k < 4; ++k) {
    bool present = false;
    for (const auto& h : headers) present = present || h.first == k;
    if (!present) throw ParseError(ParseErrorCode::MissingHeader);
  }
  for (std::size_t k = 0; k < headers.size(); ++k) {
    if (headers[k].first != k) throw ParseError(ParseErrorCode::HeaderOutOfOrder);
  }
  // Blank separator, exactly one body line, then the final LF.
  if (lines.size() != i + 2) throw ParseError(ParseErrorCode::MalformedEnvelope);

  Message m;
  m.from = std::string(headers[0].second);
  m.to = std::string(headers[1].second);
  if (!is_valid_id(m.from) || !is_valid_id(m.to)) throw ParseError(ParseErrorCode::InvalidStationId);
  const auto date = detail::parse_fixed(headers[2].second, 3);
  if (!date) throw ParseError(ParseErrorCode::MalformedDate);
  m.date_ms = *date;
  const auto seq = parse_canonical_uint(headers[3].second);
  if (!seq) throw ParseError(ParseErrorCode::MalformedSeq);
  m.seq = *seq;
  if (headers.size() == 5) {
    if (!requires_auth(*kind)) throw ParseError(ParseErrorCode::AuthForbidden);
    if (!is_valid_auth(headers[4].second)) throw ParseError(ParseErrorCode::InvalidAuthCode);
    m.auth = std::string(headers[4].second);
  } else if (requires_auth(*kind)) {
    throw ParseError(ParseErrorCode::AuthRequired);
  }
  m.body = detail::parse_body(*kind, lines[i + 1]);
  return m;
}

// ---------------------------------------------------------------------------
// Authentication

enum class AuthResult { Accepted, Rejected };

inline AuthResult verify_auth(const Message& m, std::string_view expected_code) {
  if (!requires_auth(m.kind()) || !m.auth) return AuthResult::Rejected;
  return *m.auth == expected_code ? AuthResult::Accepted : AuthResult::Rejected;
}

// ---------------------------------------------------------------------------
// Constructors; each returns a message that serialize accepts.

inline Message make_flow(std::string from, std::string to, double date_s, std::uint64_t seq,
                         const traffic::FlowSample& sample) {
  Message m{std::move(from), std::move(to), detail::to_scaled(date_s, 1000.0, "date"), seq, std::nullopt,
            FlowBody{sample.road_id, detail::to_scaled(sample.rate_veh_per_min, 100.0, "rate"), sample.window_s,
                     sample.count}};
  validate(m);
  return m;
}

inline Message make_interrupt(std::string from, std::string to, double date_s, std::uint64_t seq, std::string auth,
                              std::string road_id, std::string text) {
  Message m{std::move(from), std::move(to), detail::to_scaled(date_s, 1000.0, "date"), seq, std::move(auth),
            InterruptBody{std::move(road_id), std::move(text)}};
  validate(m);
  return m;
}

inline Message make_pause(std::string from, std::string to, double date_s, std::uint64_t seq, std::string auth,
                          std::string road_id) {
  Message m{std::move(from), std::move(to), detail::to_scaled(date_s, 1000.0, "date"), seq, std::move(auth),
            PauseBody{std::move(road_id)}};
  validate(m);
  return m;
}

inline Message make_resume(std::string from, std::string to, double date_s, std::uint64_t seq, std::string auth,
                           std::string road_id) {
  Message m{std::move(from), std::move(to), detail::to_scaled(date_s, 1000.0, "date"), seq, std::move(auth),
            ResumeBody{std::move(road_id)}};
  validate(m);
  return m;
}

}  // namespace m2mtraffic::m2m
