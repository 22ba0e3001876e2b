#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <random>
#include <thread>

#include "bifrost/bench.hpp"
#include "bifrost/gd_store.hpp"
#include "test_helpers.hpp"

using namespace bifrost;
using namespace bifrost::testing;

namespace {

StoreConfig small_config() {
  StoreConfig cfg;
  cfg.base_symbols = 16;
  cfg.symbol_bits = 8;
  cfg.match_cutoff = 8;
  cfg.pointer_bits = 32;
  cfg.tag_size = 32;
  return cfg;
}

SymbolString base16(std::initializer_list<Symbol> head) {
  SymbolString s(8);
  for (Symbol v : head) s.push_back(v);
  while (s.size() < 16) s.push_back(0);
  return s;
}

Bytes read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary | std::ios::ate);
  REQUIRE(in.good());
  Bytes out(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
  return out;
}

// Recomputes stats by independently walking the persisted files with its
// own parser, sharing nothing with Store::load.
struct Recount {
  std::uint64_t c_size = 0;
  std::uint64_t tag_bits = 0;
  std::uint64_t files = 0;
};

Recount recount_from_disk(const std::filesystem::path& dir) {
  std::uint64_t base_symbols, pointer_bits;
  unsigned symbol_bits;
  {
    Bytes meta = read_all(dir / "store.meta");
    ByteReader r(meta);
    r.u32_le();  // magic
    r.u8();      // version
    base_symbols = r.u32_le();
    symbol_bits = r.u8();
    r.u32_le();  // match_cutoff
    pointer_bits = r.u32_le();
  }
  const unsigned pos_bits =
      base_symbols <= 1 ? 0 : std::bit_width(static_cast<std::uint32_t>(base_symbols - 1));

  Recount out;
  {
    Bytes log = read_all(dir / "bases.log");
    ByteReader r(log);
    r.u32_le();
    r.u8();
    while (r.remaining() >= 4) {
      std::uint32_t len = r.u32_le();
      ByteReader rec(r.view(len));
      if (rec.u8() == 0) {
        out.c_size += base_symbols * symbol_bits;
      } else {
        out.c_size += pointer_bits;
        rec.u32_le();  // referenced id
        std::uint16_t ops = rec.u16_le();
        for (std::uint16_t i = 0; i < ops; ++i) {
          std::uint8_t kind = rec.u8();
          rec.u32_le();
          rec.u16_le();
          out.c_size += 1 + pos_bits + (kind == 0 ? symbol_bits : 0);
        }
      }
    }
  }
  {
    Bytes log = read_all(dir / "objects.log");
    ByteReader r(log);
    r.u32_le();
    r.u8();
    while (r.remaining() >= 4) {
      std::uint32_t len = r.u32_le();
      ByteReader rec(r.view(len));
      std::uint16_t tag_len = rec.u16_le();  // manifest leads with its tag
      rec.raw(tag_len);
      out.tag_bits += tag_len * 8ull;
      ++out.files;
      rec.u64_le();  // chunk_count
      rec.u64_le();  // original_byte_length
      rec.u32_le();  // chunk_bits
      rec.u8();      // symbol_bits
      rec.u32_le();  // deletions_per_chunk
      rec.u8();      // seed_bits
      rec.u16_le();  // pad_block_bits
      std::uint32_t n_pieces = rec.u32_le();
      for (std::uint32_t i = 0; i < n_pieces; ++i) rec.u64_le();
      std::uint32_t n_locals = rec.u32_le();
      for (std::uint32_t i = 0; i < n_locals; ++i) {
        std::uint32_t elen = rec.u32_le();
        ByteReader er(rec.view(elen));
        std::uint64_t field_bytes = 0;
        for (int f = 0; f < 3; ++f) {  // nonce, ciphertext, auth tag
          std::uint16_t flen = er.u16_be();
          er.raw(flen);
          field_bytes += flen;
        }
        out.c_size += field_bytes * 8;
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("ingesting the same base twice dedupes with an empty delta", "[store]") {
  TempDir dir;
  Store store = Store::create(dir.path / "s", small_config());

  auto b = base16({4, 1, 10, 8});
  auto first = store.ingest_base(b);
  auto second = store.ingest_base(b);

  CHECK(!first.deduped);
  CHECK(second.deduped);
  CloudRecord rec = store.record(second.record_id);
  CHECK(rec.type == CloudRecord::Type::deduped);
  CHECK(rec.base_id == first.record_id);
  CHECK(rec.delta.empty());
  CHECK(store.materialize(second.record_id) == b);
}

TEST_CASE("adjacent swap is found and encoded as one op", "[store]") {
  TempDir dir;
  StoreConfig cfg = small_config();
  cfg.base_symbols = 4;
  cfg.pointer_bits = 8;  // keep the cost rule satisfiable at this tiny base size
  Store store = Store::create(dir.path / "s", cfg);

  auto a = SymbolString::from_values({4, 1, 10, 8}, 8);
  auto b = SymbolString::from_values({4, 10, 1, 8}, 8);
  store.ingest_base(a);
  auto result = store.ingest_base(b);

  REQUIRE(result.deduped);
  CloudRecord rec = store.record(result.record_id);
  REQUIRE(rec.delta.size() == 1);
  CHECK(rec.delta[0].kind == DeltaOp::Kind::adjacent_swap);
  CHECK(rec.delta[0].pos == 1);
  CHECK(store.materialize(result.record_id) == b);
}

TEST_CASE("bases beyond the cutoff stay unique", "[store]") {
  TempDir dir;
  Store store = Store::create(dir.path / "s", small_config());

  std::mt19937_64 rng(83);
  auto a = random_symbols(rng, 16, 8);
  SymbolString far(8);
  for (std::size_t i = 0; i < 16; ++i) far.push_back(static_cast<Symbol>(255 - a[i]));

  store.ingest_base(a);
  auto result = store.ingest_base(far);
  CHECK(!result.deduped);
  CHECK(store.record(result.record_id).type == CloudRecord::Type::unique);
}

TEST_CASE("materialize applies change_value deltas", "[store]") {
  TempDir dir;
  StoreConfig cfg = small_config();
  cfg.base_symbols = 4;
  cfg.pointer_bits = 8;
  Store store = Store::create(dir.path / "s", cfg);

  store.ingest_base(SymbolString::from_values({4, 1, 10, 8}, 8));
  auto result = store.ingest_base(SymbolString::from_values({5, 1, 10, 8}, 8));
  REQUIRE(result.deduped);
  CloudRecord rec = store.record(result.record_id);
  REQUIRE(rec.delta.size() == 1);
  CHECK(rec.delta[0].kind == DeltaOp::Kind::change_value);
  CHECK(rec.delta[0].pos == 0);
  CHECK(rec.delta[0].value == 5);
  CHECK(store.materialize(result.record_id) ==
        SymbolString::from_values({5, 1, 10, 8}, 8));
}

TEST_CASE("delta cost model", "[store]") {
  CHECK(delta_cost_bits({}, 244, 8) == 0);
  std::vector<DeltaOp> change{{DeltaOp::Kind::change_value, 0, 5}};
  CHECK(delta_cost_bits(change, 244, 8) == 17);  // 1 opcode + 8 position + 8 value
  std::vector<DeltaOp> swap{{DeltaOp::Kind::adjacent_swap, 1, 0}};
  CHECK(delta_cost_bits(swap, 244, 8) == 9);
  CHECK(delta_cost_bits(swap, 256, 8) == 9);
  CHECK(delta_cost_bits(swap, 257, 8) == 10);
}

TEST_CASE("clustered corpus materializes bit-exact", "[store]") {
  TempDir dir;
  StoreConfig cfg = small_config();
  cfg.base_symbols = 64;
  Store store = Store::create(dir.path / "s", cfg);

  CorpusSpec spec;
  spec.seed = 99;
  spec.file_count = 2000;
  spec.file_bytes = 64;
  spec.cluster_count = 100;
  spec.mutation_rate = 0.02;

  auto corpus = generate_corpus(spec);
  std::vector<std::uint32_t> ids;
  for (const auto& f : corpus)
    ids.push_back(store.ingest_base(SymbolString::unpack(f, 64, 8)).record_id);

  std::uint64_t deduped = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    REQUIRE(store.materialize(ids[i]) == SymbolString::unpack(corpus[i], 64, 8));
    if (store.record(ids[i]).type == CloudRecord::Type::deduped) ++deduped;
  }
  CHECK(deduped > 0);  // the clusters are tight enough for the cutoff
}

TEST_CASE("ingestion is deterministic", "[store]") {
  std::mt19937_64 rng(89);
  CorpusSpec spec;
  spec.seed = 7;
  spec.file_count = 500;
  spec.file_bytes = 32;
  spec.cluster_count = 25;
  spec.mutation_rate = 0.05;
  auto corpus = generate_corpus(spec);

  auto run = [&](const std::filesystem::path& p) {
    StoreConfig cfg = small_config();
    cfg.base_symbols = 32;
    Store store = Store::create(p, cfg);
    for (const auto& f : corpus) store.ingest_base(SymbolString::unpack(f, 32, 8));
    return store;
  };

  TempDir dir;
  Store one = run(dir.path / "one");
  Store two = run(dir.path / "two");

  REQUIRE(one.record_count() == two.record_count());
  for (std::uint32_t id = 0; id < one.record_count(); ++id) {
    CloudRecord a = one.record(id);
    CloudRecord b = two.record(id);
    REQUIRE(a.type == b.type);
    CHECK(a.base_id == b.base_id);
    CHECK(a.delta == b.delta);
  }
  StoreStats sa = one.stats();
  StoreStats sb = two.stats();
  CHECK(sa.c_size == sb.c_size);
  CHECK(read_all(dir.path / "one" / "bases.log") == read_all(dir.path / "two" / "bases.log"));
}

TEST_CASE("deduped records always price below a full base", "[store]") {
  TempDir dir;
  StoreConfig cfg = small_config();
  cfg.base_symbols = 32;
  Store store = Store::create(dir.path / "s", cfg);

  CorpusSpec spec;
  spec.seed = 31;
  spec.file_count = 400;
  spec.file_bytes = 32;
  spec.cluster_count = 20;
  spec.mutation_rate = 0.03;
  for (const auto& f : generate_corpus(spec)) store.ingest_base(SymbolString::unpack(f, 32, 8));

  for (std::uint32_t id = 0; id < store.record_count(); ++id) {
    CloudRecord rec = store.record(id);
    if (rec.type == CloudRecord::Type::deduped)
      CHECK(delta_cost_bits(rec.delta, cfg.base_symbols, cfg.symbol_bits) + cfg.pointer_bits <
            cfg.base_bits());
  }
}

namespace {

Store::ObjectData make_object(Store& store, std::mt19937_64& rng, Bytes tag_fill) {
  StoreConfig cfg = store.config();
  const std::uint32_t n_org = cfg.base_symbols + 2;

  FileManifest manifest;
  manifest.file_tag = std::move(tag_fill);
  manifest.params = ChunkingParams{n_org * 8, 8};
  manifest.chunk_count = 2;
  manifest.original_byte_length = 2ull * n_org;
  manifest.deletions_per_chunk = 2;
  manifest.seed_bits = 32;

  std::vector<OutsourcePiece> pieces;
  std::vector<EncryptedDeviation> enc_locals;
  Bytes key(16, 0x11);
  for (int i = 0; i < 2; ++i) {
    pieces.push_back(OutsourcePiece{random_symbols(rng, cfg.base_symbols, 8)});
    DeletionDeviation dev;
    dev.seed = random_bytes(rng, 4);
    dev.deleted_values = {static_cast<Symbol>(rng() & 0xff), static_cast<Symbol>(rng() & 0xff)};
    enc_locals.push_back(encrypt(CipherKind::aes128_gcm, key, dev.serialize(8)));
  }
  store.put_object(manifest, pieces, enc_locals);
  return {manifest, pieces, enc_locals};
}

}  // namespace

TEST_CASE("put/get object roundtrip with idempotent re-put", "[store]") {
  TempDir dir;
  Store store = Store::create(dir.path / "s", small_config());
  std::mt19937_64 rng(97);

  auto stored = make_object(store, rng, Bytes(32, 0x01));
  Store::ObjectData got = store.get_object(stored.manifest.file_tag);
  CHECK(got.manifest == stored.manifest);
  REQUIRE(got.pieces.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(got.pieces[i] == stored.pieces[i]);
    CHECK(got.enc_locals[i] == stored.enc_locals[i]);
  }

  // byte-identical re-put is accepted and changes nothing
  std::uint64_t records = store.record_count();
  CHECK_NOTHROW(store.put_object(stored.manifest, stored.pieces, stored.enc_locals));
  CHECK(store.record_count() == records);

  // same tag, different content
  auto other = stored;
  other.pieces[0].base[0] ^= 1;
  CHECK_THROWS_AS(store.put_object(other.manifest, other.pieces, other.enc_locals),
                  ConflictError);

  CHECK_THROWS_AS(store.get_object(Bytes(32, 0xEE)), NotFoundError);
}

TEST_CASE("put_object validates geometry", "[store]") {
  TempDir dir;
  Store store = Store::create(dir.path / "s", small_config());
  std::mt19937_64 rng(101);

  FileManifest manifest;
  manifest.file_tag = Bytes(32, 0x05);
  manifest.params = ChunkingParams{18 * 8, 8};
  manifest.chunk_count = 1;
  manifest.original_byte_length = 18;
  manifest.deletions_per_chunk = 1;  // 18 - 1 != 16 configured base symbols

  std::vector<OutsourcePiece> pieces{OutsourcePiece{random_symbols(rng, 17, 8)}};
  std::vector<EncryptedDeviation> locals{
      encrypt(CipherKind::aes128_gcm, Bytes(16, 1), Bytes{1, 2, 3, 4, 5})};
  CHECK_THROWS_AS(store.put_object(manifest, pieces, locals), InvalidArgumentError);

  manifest.file_tag = Bytes(16, 0x05);  // wrong tag width
  manifest.deletions_per_chunk = 2;
  pieces[0].base = random_symbols(rng, 16, 8);
  CHECK_THROWS_AS(store.put_object(manifest, pieces, locals), InvalidArgumentError);
}

TEST_CASE("store state survives close and reopen", "[store]") {
  TempDir dir;
  std::mt19937_64 rng(103);
  StoreStats before;
  Store::ObjectData stored;
  {
    Store store = Store::create(dir.path / "s", small_config());
    stored = make_object(store, rng, Bytes(32, 0x02));
    store.ingest_base(stored.pieces[0].base);  // one extra dedup record
    before = store.stats();
  }

  Store reopened = Store::open(dir.path / "s");
  CHECK(reopened.config() == small_config());
  StoreStats after = reopened.stats();
  CHECK(after.c_size == before.c_size);
  CHECK(after.unique_records == before.unique_records);
  CHECK(after.deduped_records == before.deduped_records);
  CHECK(after.file_count == before.file_count);

  Store::ObjectData got = reopened.get_object(stored.manifest.file_tag);
  for (int i = 0; i < 2; ++i) CHECK(got.pieces[i] == stored.pieces[i]);

  // dedup state carried over: re-ingesting an existing base dedupes
  auto again = reopened.ingest_base(stored.pieces[1].base);
  CHECK(again.deduped);
}

TEST_CASE("interrupted appends are discarded on open", "[store]") {
  TempDir dir;
  std::mt19937_64 rng(107);
  std::uint64_t records_before = 0;
  Store::ObjectData stored;
  {
    Store store = Store::create(dir.path / "s", small_config());
    stored = make_object(store, rng, Bytes(32, 0x03));
    records_before = store.record_count();
  }

  SECTION("torn base record") {
    std::ofstream out(dir.path / "s" / "bases.log", std::ios::binary | std::ios::app);
    Bytes garbage{0xff, 0xff, 0xff, 0x7f, 0x01, 0x02};  // length field promises more
    out.write(reinterpret_cast<const char*>(garbage.data()),
              static_cast<std::streamsize>(garbage.size()));
    out.close();

    Store reopened = Store::open(dir.path / "s");
    CHECK(reopened.record_count() == records_before);
    CHECK(reopened.get_object(stored.manifest.file_tag).pieces.size() == 2);
  }

  SECTION("orphan base record without its object") {
    // a crash after the bases flush but before the object append leaves a
    // complete base record with nothing pointing at it
    ByteWriter w;
    SymbolString orphan(8);
    for (int i = 0; i < 16; ++i) orphan.push_back(static_cast<Symbol>(200 + i));
    Bytes packed = orphan.pack();
    w.u32_le(static_cast<std::uint32_t>(1 + packed.size()));
    w.u8(0);
    w.raw(packed);
    std::ofstream out(dir.path / "s" / "bases.log", std::ios::binary | std::ios::app);
    out.write(reinterpret_cast<const char*>(w.buffer().data()),
              static_cast<std::streamsize>(w.buffer().size()));
    out.close();

    Store reopened = Store::open(dir.path / "s");
    CHECK(reopened.record_count() == records_before + 1);
    CHECK(reopened.get_object(stored.manifest.file_tag).pieces.size() == 2);
    CHECK(reopened.ingest_base(orphan).deduped);  // the orphan still dedupes
  }
}

TEST_CASE("stats agree with an independent recount of the files", "[store]") {
  TempDir dir;
  std::mt19937_64 rng(131);
  StoreStats st;
  {
    StoreConfig cfg = small_config();
    cfg.base_symbols = 32;
    Store store = Store::create(dir.path / "s", cfg);

    CorpusSpec spec;
    spec.seed = 77;
    spec.file_count = 300;
    spec.file_bytes = 32;
    spec.cluster_count = 15;
    spec.mutation_rate = 0.03;
    for (const auto& f : generate_corpus(spec)) store.ingest_base(SymbolString::unpack(f, 32, 8));

    const std::uint32_t n_org = 34;
    FileManifest manifest;
    manifest.file_tag = Bytes(32, 0x09);
    manifest.params = ChunkingParams{n_org * 8, 8};
    manifest.chunk_count = 1;
    manifest.original_byte_length = n_org;
    manifest.deletions_per_chunk = 2;
    std::vector<OutsourcePiece> pieces{OutsourcePiece{random_symbols(rng, 32, 8)}};
    std::vector<EncryptedDeviation> locals{
        encrypt(CipherKind::aes128_gcm, Bytes(16, 3), random_bytes(rng, 6))};
    store.put_object(manifest, pieces, locals);
    st = store.stats();
  }

  Recount walked = recount_from_disk(dir.path / "s");
  CHECK(walked.c_size == st.c_size);
  CHECK(walked.tag_bits == st.tag_bits);
  CHECK(walked.files == st.file_count);
}

TEST_CASE("corrupt store files are rejected", "[store]") {
  TempDir dir;
  std::mt19937_64 rng(109);
  {
    Store store = Store::create(dir.path / "s", small_config());
    make_object(store, rng, Bytes(32, 0x04));
  }

  SECTION("bad magic") {
    auto data = read_all(dir.path / "s" / "bases.log");
    data[0] ^= 0xff;
    std::ofstream out(dir.path / "s" / "bases.log", std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    out.close();
    CHECK_THROWS_AS(Store::open(dir.path / "s"), CorruptionError);
  }
  SECTION("record type byte garbage") {
    auto data = read_all(dir.path / "s" / "bases.log");
    data[9] = 0x77;  // first record's type byte (5 header + 4 length)
    std::ofstream out(dir.path / "s" / "bases.log", std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    out.close();
    CHECK_THROWS_AS(Store::open(dir.path / "s"), CorruptionError);
  }
}

TEST_CASE("concurrent ingest of one base creates a single unique record", "[store]") {
  TempDir dir;
  Store store = Store::create(dir.path / "s", small_config());
  std::mt19937_64 rng(113);
  auto b = random_symbols(rng, 16, 8);

  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&store, &b] {
      for (int i = 0; i < 50; ++i) store.ingest_base(b);
    });
  for (auto& t : threads) t.join();

  StoreStats st = store.stats();
  CHECK(st.unique_records == 1);
  CHECK(st.deduped_records == 399);
}

TEST_CASE("readers run concurrently with ingestion", "[store]") {
  TempDir dir;
  StoreConfig cfg = small_config();
  cfg.base_symbols = 32;
  Store store = Store::create(dir.path / "s", cfg);
  std::mt19937_64 rng(127);

  CorpusSpec spec;
  spec.seed = 5;
  spec.file_count = 400;
  spec.file_bytes = 32;
  spec.cluster_count = 10;
  spec.mutation_rate = 0.02;
  auto corpus = generate_corpus(spec);

  std::atomic<bool> done{false};
  std::thread reader([&] {
    while (!done.load()) {
      StoreStats st = store.stats();
      CHECK(st.c_size >= st.enc_local_bits);
      auto n = store.record_count();
      if (n > 0) (void)store.materialize(static_cast<std::uint32_t>(n - 1));
    }
  });
  for (const auto& f : corpus) store.ingest_base(SymbolString::unpack(f, 32, 8));
  done.store(true);
  reader.join();

  for (std::uint32_t id = 0; id < store.record_count(); ++id)
    REQUIRE(store.materialize(id) == store.materialize(id));
}
