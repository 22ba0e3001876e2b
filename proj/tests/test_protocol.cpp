#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <thread>

#include "bifrost/protocol.hpp"
#include "test_helpers.hpp"

using namespace bifrost;
using namespace bifrost::testing;

namespace {

StoreConfig wire_config() {
  StoreConfig cfg;
  cfg.base_symbols = 14;
  cfg.symbol_bits = 8;
  cfg.match_cutoff = 4;
  cfg.tag_size = 32;
  return cfg;
}

ObjectPayload sample_payload(std::mt19937_64& rng, Bytes tag, std::uint32_t chunks = 2) {
  ObjectPayload p;
  p.manifest.file_tag = std::move(tag);
  p.manifest.params = ChunkingParams{16 * 8, 8};
  p.manifest.chunk_count = chunks;
  p.manifest.original_byte_length = 16ull * chunks;
  p.manifest.deletions_per_chunk = 2;
  for (std::uint32_t i = 0; i < chunks; ++i) {
    p.pieces.push_back(OutsourcePiece{random_symbols(rng, 14, 8)});
    p.enc_locals.push_back(
        encrypt(CipherKind::aes128_gcm, Bytes(16, 0x22), random_bytes(rng, 6)));
  }
  return p;
}

}  // namespace

TEST_CASE("frame encode/decode roundtrip over random messages", "[protocol]") {
  std::mt19937_64 rng(137);
  for (int iter = 0; iter < 2000; ++iter) {
    WireMessage msg;
    msg.kind = static_cast<MsgKind>(1 + rng() % 7);
    msg.body = random_bytes(rng, rng() % 300);
    CHECK(decode_frame(encode_frame(msg)) == msg);
  }
}

TEST_CASE("frame decoding rejects malformed input", "[protocol]") {
  WireMessage msg{MsgKind::upload_ok, {}};
  Bytes good = encode_frame(msg);

  SECTION("wrong version") {
    Bytes bad = good;
    bad[4] = 9;
    CHECK_THROWS_AS(decode_frame(bad), FormatError);
  }
  SECTION("unknown kind") {
    Bytes bad = good;
    bad[5] = 99;
    CHECK_THROWS_AS(decode_frame(bad), FormatError);
  }
  SECTION("length mismatch") {
    Bytes bad = good;
    bad[0] += 1;
    CHECK_THROWS_AS(decode_frame(bad), FormatError);
  }
  SECTION("truncated") {
    Bytes bad(good.begin(), good.begin() + 3);
    CHECK_THROWS_AS(decode_frame(bad), FormatError);
  }
}

TEST_CASE("object payload codec roundtrip", "[protocol]") {
  std::mt19937_64 rng(139);
  for (std::uint32_t chunks : {0u, 1u, 2u, 5u}) {
    ObjectPayload p = sample_payload(rng, random_bytes(rng, 32), chunks);
    if (chunks == 0) {
      p.manifest.chunk_count = 0;
      p.manifest.original_byte_length = 0;
    }
    Bytes body = encode_object_payload(p);
    ObjectPayload back = decode_object_payload(body);
    CHECK(back.manifest == p.manifest);
    REQUIRE(back.pieces.size() == p.pieces.size());
    for (std::size_t i = 0; i < p.pieces.size(); ++i) {
      CHECK(back.pieces[i] == p.pieces[i]);
      CHECK(back.enc_locals[i] == p.enc_locals[i]);
    }
  }
}

TEST_CASE("error body codec", "[protocol]") {
  Bytes body = encode_error_body(WireErrorCode::conflict, "boom");
  auto [code, message] = decode_error_body(body);
  CHECK(code == WireErrorCode::conflict);
  CHECK(message == "boom");
}

TEST_CASE("upload/download/stats over a loopback socket", "[protocol]") {
  TempDir dir;
  Store store = Store::create(dir.path / "s", wire_config());
  Server server("127.0.0.1:0", store);
  std::mt19937_64 rng(149);

  ObjectPayload p = sample_payload(rng, random_bytes(rng, 32));
  client_upload(server.address(), p.manifest, p.pieces, p.enc_locals);

  Store::ObjectData remote = client_download(server.address(), p.manifest.file_tag);
  CHECK(remote.manifest == p.manifest);
  REQUIRE(remote.pieces.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(remote.pieces[i] == p.pieces[i]);
    CHECK(remote.enc_locals[i] == p.enc_locals[i]);
  }

  Store::ObjectData local = store.get_object(p.manifest.file_tag);
  CHECK(local.manifest == remote.manifest);

  StoreStats remote_stats = client_stats(server.address());
  StoreStats local_stats = store.stats();
  CHECK(remote_stats.c_size == local_stats.c_size);
  CHECK(remote_stats.file_count == local_stats.file_count);
  CHECK(remote_stats.unique_records == local_stats.unique_records);

  SECTION("unknown tag surfaces as NotFoundError") {
    CHECK_THROWS_AS(client_download(server.address(), Bytes(32, 0x77)), NotFoundError);
  }
  SECTION("conflicting re-upload surfaces as ConflictError") {
    ObjectPayload other = p;
    other.pieces[0].base[0] ^= 1;
    CHECK_THROWS_AS(client_upload(server.address(), other.manifest, other.pieces,
                                  other.enc_locals),
                    ConflictError);
  }
  SECTION("reconnecting after an error works") {
    CHECK_THROWS_AS(client_download(server.address(), Bytes(32, 0x78)), NotFoundError);
    CHECK(client_download(server.address(), p.manifest.file_tag).pieces.size() == 2);
  }
}

TEST_CASE("malformed frames get an error reply and a closed connection", "[protocol]") {
  TempDir dir;
  Store store = Store::create(dir.path / "s", wire_config());
  Server server("127.0.0.1:0", store);

  SECTION("bad version byte") {
    detail::Socket sock = detail::connect_to(server.address());
    Bytes frame = encode_frame({MsgKind::stats, {}});
    frame[4] = 9;
    sock.send_all(frame);
    WireMessage reply;
    REQUIRE(detail::recv_frame(sock, reply));
    CHECK(reply.kind == MsgKind::error);
    CHECK(decode_error_body(reply.body).first == WireErrorCode::malformed);
    // server closes after a malformed frame
    WireMessage next;
    CHECK(!detail::recv_frame(sock, next));
  }
  SECTION("oversized length prefix") {
    detail::Socket sock = detail::connect_to(server.address());
    ByteWriter w;
    w.u32_le(kMaxFrameBytes + 1);
    sock.send_all(w.buffer());
    WireMessage reply;
    REQUIRE(detail::recv_frame(sock, reply));
    CHECK(reply.kind == MsgKind::error);
  }
  SECTION("garbage body for a known kind") {
    detail::Socket sock = detail::connect_to(server.address());
    sock.send_all(encode_frame({MsgKind::upload, Bytes{1, 2, 3}}));
    WireMessage reply;
    REQUIRE(detail::recv_frame(sock, reply));
    CHECK(reply.kind == MsgKind::error);
    CHECK(decode_error_body(reply.body).first == WireErrorCode::malformed);
  }
}

TEST_CASE("one session can carry several requests", "[protocol]") {
  TempDir dir;
  Store store = Store::create(dir.path / "s", wire_config());
  Server server("127.0.0.1:0", store);
  std::mt19937_64 rng(151);

  ObjectPayload p = sample_payload(rng, random_bytes(rng, 32));
  detail::Socket sock = detail::connect_to(server.address());
  for (int round = 0; round < 3; ++round) {
    sock.send_all(encode_frame({MsgKind::stats, {}}));
    WireMessage reply;
    REQUIRE(detail::recv_frame(sock, reply));
    CHECK(reply.kind == MsgKind::stats_ok);
  }
  sock.send_all(encode_frame({MsgKind::upload, encode_object_payload(p)}));
  WireMessage reply;
  REQUIRE(detail::recv_frame(sock, reply));
  CHECK(reply.kind == MsgKind::upload_ok);
}

TEST_CASE("concurrent sessions upload distinct objects", "[protocol]") {
  TempDir dir;
  Store store = Store::create(dir.path / "s", wire_config());
  Server server("127.0.0.1:0", store);

  constexpr int kClients = 8;
  std::vector<ObjectPayload> payloads;
  std::mt19937_64 rng(157);
  for (int c = 0; c < kClients; ++c) {
    Bytes tag(32, 0);
    tag[0] = static_cast<std::uint8_t>(c + 1);
    payloads.push_back(sample_payload(rng, tag));
  }

  std::vector<std::thread> threads;
  std::atomic<int> failures{0};
  for (int c = 0; c < kClients; ++c)
    threads.emplace_back([&, c] {
      try {
        client_upload(server.address(), payloads[c].manifest, payloads[c].pieces,
                      payloads[c].enc_locals);
      } catch (const std::exception&) {
        failures.fetch_add(1);
      }
    });
  for (auto& t : threads) t.join();

  CHECK(failures.load() == 0);
  for (int c = 0; c < kClients; ++c) {
    Store::ObjectData got = client_download(server.address(), payloads[c].manifest.file_tag);
    CHECK(got.pieces.size() == 2);
    CHECK(got.pieces[0] == payloads[c].pieces[0]);
  }
}

TEST_CASE("address parsing", "[protocol]") {
  CHECK_THROWS_AS(detail::split_host_port("nope"), InvalidArgumentError);
  CHECK_THROWS_AS(detail::split_host_port("host:"), InvalidArgumentError);
  CHECK_THROWS_AS(detail::split_host_port("host:99999"), InvalidArgumentError);
  auto [host, port] = detail::split_host_port("127.0.0.1:8080");
  CHECK(host == "127.0.0.1");
  CHECK(port == 8080);
}
