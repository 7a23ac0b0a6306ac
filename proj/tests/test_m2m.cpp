#include <gtest/gtest.h>

#include <random>

#include "m2mtraffic/m2m.hpp"

using namespace m2mtraffic::m2m;

namespace {

const std::string kFlowBytes =
    "M2M/1 FLOW\nFrom: sub1\nTo: main\nDate: 60.000\nSeq: 3\n\nroad=R1 rate=5.00 unit=veh/min window_s=120 count=10\n";

ParseErrorCode code_of(std::string_view bytes) {
  try {
    parse(bytes);
  } catch (const ParseError& e) {
    return e.code();
  }
  ADD_FAILURE() << "accepted: " << bytes;
  return ParseErrorCode::MalformedEnvelope;
}

std::string replace(std::string s, std::string_view from, std::string_view to) {
  const auto pos = s.find(from);
  EXPECT_NE(pos, std::string::npos) << from;
  return s.replace(pos, from.size(), to);
}

const std::string kPauseBytes = "M2M/1 PAUSE\nFrom: main\nTo: sub1\nDate: 1.500\nSeq: 1\nAuth: secret99\n\nroad=R1\n";

}  // namespace

TEST(Serialize, CanonicalFlowBytes) {
  m2mtraffic::traffic::FlowSample sample{"R1", 0, 120, 10, 5.0};
  const auto m = make_flow("sub1", "main", 60.0, 3, sample);
  EXPECT_EQ(serialize(m), kFlowBytes);
  EXPECT_EQ(parse(kFlowBytes), m);
}

TEST(Serialize, FlowWithAuthIsRejected) {
  m2mtraffic::traffic::FlowSample sample{"R1", 0, 60, 1, 1.0};
  auto m = make_flow("sub1", "main", 0.0, 1, sample);
  m.auth = "secret99";
  EXPECT_THROW(serialize(m), MessageError);
}

TEST(Serialize, AuthedKindsRoundTrip) {
  const auto intr = make_interrupt("operator", "main", 30.0, 1, "secret99", "R1", "Road closed: accident ahead");
  EXPECT_EQ(serialize(intr),
            "M2M/1 INTERRUPT\nFrom: operator\nTo: main\nDate: 30.000\nSeq: 1\nAuth: secret99\n\n"
            "road=R1 text=Road closed: accident ahead\n");
  for (const auto& m : {intr, make_pause("main", "sub1", 1.5, 1, "secret99", "R1"),
                        make_resume("main", "sub1", 2.25, 2, "secret99", "R1")}) {
    EXPECT_EQ(parse(serialize(m)), m);
  }
  EXPECT_EQ(serialize(parse(kPauseBytes)), kPauseBytes);
}

TEST(Constructors, EnforceFieldRules) {
  EXPECT_THROW(make_interrupt("op", "main", 0, 1, "secret99", "R1", std::string(201, 'x')), MessageError);
  EXPECT_NO_THROW(make_interrupt("op", "main", 0, 1, "secret99", "R1", std::string(200, 'x')));
  EXPECT_THROW(make_interrupt("op", "main", 0, 1, "secret99", "R1", ""), MessageError);
  EXPECT_THROW(make_interrupt("op", "main", 0, 1, "secret99", "R1", "two\nlines"), MessageError);
  EXPECT_THROW(make_pause("op", "main", 0, 1, "short", "R1"), MessageError);
  EXPECT_THROW(make_pause("op", "main", 0, 1, std::string(65, 'a'), "R1"), MessageError);
  EXPECT_THROW(make_pause("bad id", "main", 0, 1, "secret99", "R1"), MessageError);
  EXPECT_THROW(make_pause(std::string(33, 'a'), "main", 0, 1, "secret99", "R1"), MessageError);
  EXPECT_THROW(make_resume("op", "main", -1.0, 1, "secret99", "R1"), MessageError);
  EXPECT_THROW(make_resume("op", "main", 0, 1, "secret99", "R/1"), MessageError);
}

TEST(Parse, DistinctErrors) {
  EXPECT_EQ(code_of(replace(kFlowBytes, "M2M/1", "M2M/2")), ParseErrorCode::UnsupportedVersion);
  EXPECT_EQ(code_of(replace(kFlowBytes, "FLOW\n", "FLOOD\n")), ParseErrorCode::UnknownKind);
  EXPECT_EQ(code_of(replace(kFlowBytes, "To: main\n", "")), ParseErrorCode::MissingHeader);
  EXPECT_EQ(code_of(replace(replace(kFlowBytes, "From: sub1\n", ""), "To: main\n", "To: main\nFrom: sub1\n")),
            ParseErrorCode::HeaderOutOfOrder);
  EXPECT_EQ(code_of(replace(kFlowBytes, "To: main\n", "To: main\nX-Foo: 1\n")), ParseErrorCode::UnknownHeader);
  EXPECT_EQ(code_of(replace(kFlowBytes, "60.000", "60.0")), ParseErrorCode::MalformedDate);
  EXPECT_EQ(code_of(replace(kFlowBytes, "60.000", "060.000")), ParseErrorCode::MalformedDate);
  EXPECT_EQ(code_of(replace(kFlowBytes, "Seq: 3", "Seq: 03")), ParseErrorCode::MalformedSeq);
  EXPECT_EQ(code_of(replace(kFlowBytes, "Seq: 3", "Seq: -3")), ParseErrorCode::MalformedSeq);
  EXPECT_EQ(code_of(replace(kFlowBytes, "rate=5.00", "rate=5.0")), ParseErrorCode::MalformedRate);
  EXPECT_EQ(code_of(replace(kFlowBytes, "rate=5.00", "speed=5.00")), ParseErrorCode::BodyMismatch);
  EXPECT_EQ(code_of(replace(kFlowBytes, "count=10", "count=1e1")), ParseErrorCode::MalformedNumber);
  EXPECT_EQ(code_of(replace(kFlowBytes, "Seq: 3\n", "Seq: 3\nAuth: secret99\n")), ParseErrorCode::AuthForbidden);
  EXPECT_EQ(code_of(replace(kPauseBytes, "Auth: secret99\n", "")), ParseErrorCode::AuthRequired);
  EXPECT_EQ(code_of(replace(kPauseBytes, "secret99", "s3")), ParseErrorCode::InvalidAuthCode);
  EXPECT_EQ(code_of(replace(kPauseBytes, "road=R1", "road=R1 text=x")), ParseErrorCode::BodyMismatch);
  EXPECT_EQ(code_of(replace(kPauseBytes, "From: main", "From: ma in")), ParseErrorCode::InvalidStationId);
  EXPECT_EQ(code_of(replace(kPauseBytes, "road=R1", "road=R.1")), ParseErrorCode::InvalidRoadId);

  const std::string intr = serialize(make_interrupt("op", "main", 0, 1, "secret99", "R1", "x"));
  EXPECT_EQ(code_of(replace(intr, "text=x", "text=" + std::string(201, 'x'))), ParseErrorCode::OversizedText);
  EXPECT_EQ(code_of(replace(intr, "text=x", "text=\x01")), ParseErrorCode::InvalidText);
}

TEST(Parse, EnvelopeShape) {
  EXPECT_EQ(code_of(""), ParseErrorCode::MalformedEnvelope);
  EXPECT_EQ(code_of(kFlowBytes.substr(0, kFlowBytes.size() - 1)), ParseErrorCode::MalformedEnvelope);
  EXPECT_EQ(code_of(kFlowBytes + "\n"), ParseErrorCode::MalformedEnvelope);
  EXPECT_EQ(code_of(kFlowBytes + "extra\n"), ParseErrorCode::MalformedEnvelope);
  EXPECT_EQ(code_of(replace(kFlowBytes, "\n\nroad", "\r\n\nroad")), ParseErrorCode::MalformedSeq);
  EXPECT_EQ(code_of(std::string(600, 'a') + "\n"), ParseErrorCode::MalformedEnvelope);
}

TEST(Auth, VerifyRules) {
  const auto intr = make_interrupt("op", "main", 0, 1, "secret99", "R1", "x");
  EXPECT_EQ(verify_auth(intr, "secret99"), AuthResult::Accepted);
  EXPECT_EQ(verify_auth(intr, "secret98"), AuthResult::Rejected);
  EXPECT_EQ(verify_auth(intr, "secret999"), AuthResult::Rejected);
  const auto flow = make_flow("s", "m", 0, 1, {"R1", 0, 60, 0, 0.0});
  EXPECT_EQ(verify_auth(flow, ""), AuthResult::Rejected);
}

TEST(Bounds, LargestMessageFitsLimit) {
  const std::string id(kMaxIdLength, 'z');
  const auto intr = make_interrupt(id, id, 1.8e13, ~0ull, std::string(kMaxAuthLength, 'k'), id,
                                   std::string(kMaxTextLength, '~'));
  EXPECT_LE(serialize(intr).size(), kMaxMessageBytes);
  Message flow{id, id, ~0ull, ~0ull, std::nullopt, FlowBody{id, ~0ull, std::numeric_limits<int>::max(), ~0ull}};
  const auto bytes = serialize(flow);
  EXPECT_LE(bytes.size(), kMaxMessageBytes);
  EXPECT_EQ(parse(bytes), flow);
}

TEST(Fuzz, RandomMessagesRoundTrip) {
  std::mt19937_64 rng(41);
  const std::string charset = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_-";
  auto token = [&](std::size_t lo, std::size_t hi) {
    std::string s(std::uniform_int_distribution<std::size_t>(lo, hi)(rng), ' ');
    for (auto& c : s) c = charset[rng() % charset.size()];
    return s;
  };
  for (int i = 0; i < 2000; ++i) {
    Message m{token(1, 32), token(1, 32), rng() % 100000000, rng(), std::nullopt, PauseBody{token(1, 32)}};
    switch (rng() % 4) {
      case 0: m.body = FlowBody{token(1, 32), rng() % 1000000, int(1 + rng() % 3600), rng() % 100000}; break;
      case 1: {
        std::string text(1 + rng() % 200, ' ');
        for (auto& c : text) c = static_cast<char>(0x20 + rng() % 95);
        m.body = InterruptBody{token(1, 32), text};
        break;
      }
      case 2: break;
      default: m.body = ResumeBody{token(1, 32)};
    }
    if (requires_auth(m.kind())) m.auth = token(8, 64);
    const auto bytes = serialize(m);
    EXPECT_LE(bytes.size(), kMaxMessageBytes);
    EXPECT_EQ(parse(bytes), m);
  }
}
