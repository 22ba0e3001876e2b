#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bifrost/bytes.hpp"
#include "bifrost/crypto.hpp"
#include "bifrost/distance.hpp"
#include "bifrost/errors.hpp"
#include "bifrost/symbols.hpp"
#include "bifrost/transform.hpp"

namespace bifrost {

/// Edit op stored in a dedup delta; positions refer to the referenced base.
using DeltaOp = EditOp;

/// Priced size of a delta: per op one opcode bit plus ceil(log2 n_base)
/// position bits, plus the symbol width for change_value ops.
inline std::uint64_t delta_cost_bits(std::span<const DeltaOp> delta, std::uint32_t base_symbols,
                                     unsigned symbol_bits) {
  const unsigned pos_bits = base_symbols <= 1 ? 0 : std::bit_width(base_symbols - 1u);
  std::uint64_t total = 0;
  for (const DeltaOp& op : delta) {
    total += 1 + pos_bits;
    if (op.kind == DeltaOp::Kind::change_value) total += symbol_bits;
  }
  return total;
}

/// One stored base: either full content, or a pointer to an earlier record
/// plus the ops that rebuild this content from it.
struct CloudRecord {
  enum class Type : std::uint8_t { unique = 0, deduped = 1 };

  Type type = Type::unique;
  SymbolString base;           // unique only
  std::uint32_t base_id = 0;   // deduped only
  std::vector<DeltaOp> delta;  // deduped only
};

/// Bit accounting of everything the service holds, in the units the
/// compression metric wants: c_size covers bases and encrypted deviations;
/// tags are tracked separately because the metric charges them per file.
struct StoreStats {
  std::uint64_t unique_base_bits = 0;
  std::uint64_t dedup_record_bits = 0;
  std::uint64_t enc_local_bits = 0;
  std::uint64_t tag_bits = 0;
  std::uint64_t file_count = 0;
  std::uint64_t c_size = 0;

  std::uint64_t unique_records = 0;
  std::uint64_t deduped_records = 0;
};

struct StoreConfig {
  std::uint32_t base_symbols = 244;  // symbols per stored base
  std::uint8_t symbol_bits = 8;
  std::uint32_t match_cutoff = 8;   // max edit distance considered for dedup
  std::uint32_t pointer_bits = 32;  // priced size of a base reference
  std::uint16_t tag_size = 32;      // bytes per file tag

  std::uint64_t base_bits() const {
    return static_cast<std::uint64_t>(base_symbols) * symbol_bits;
  }

  void validate() const {
    if (base_symbols == 0) throw InvalidArgumentError("base_symbols must be positive");
    if (symbol_bits == 0 || symbol_bits > kMaxSymbolBits)
      throw InvalidArgumentError("symbol_bits must be in [1,16]");
    if (tag_size != 32 && tag_size != 64)
      throw InvalidArgumentError("tag_size must be 32 or 64 bytes");
    if (pointer_bits == 0 || pointer_bits > 64)
      throw InvalidArgumentError("pointer_bits must be in [1,64]");
  }

  friend bool operator==(const StoreConfig&, const StoreConfig&) = default;
};

/// Generalized-deduplication object store.
///
/// Ingested bases are deduplicated two ways: exact duplicates by content
/// hash, and near duplicates by swap/change edit distance up to the
/// configured cutoff against stored unique bases. Near-duplicate lookup
/// uses a pigeonhole block index (2*cutoff+1 contiguous slices per base;
/// any base within the cutoff shares at least one untouched slice), so
/// candidate retrieval stays cheap while finding every base the cutoff
/// admits. Candidates are verified in ascending record id, which keeps
/// ingestion deterministic.
///
/// Persistence is an append-only record log plus an object log and a
/// tag index:
///   bases.log   [u32 len][u8 type][packed symbols | u32 base_id,
///               u16 op_count, ops]
///   objects.log [u32 len][manifest][u32 n][u64 record_id...]
///               [u32 n][u32 len, deviation wire...]
///   index.bin   [tag][u64 objects.log offset]
/// All integers little-endian; each file opens with a magic and version.
/// A trailing incomplete record (interrupted append) is discarded on open;
/// any other inconsistency raises CorruptionError.
///
/// Concurrency: one logical writer, any number of readers. put/ingest take
/// the write lock; get_object and stats take the read lock.
class Store {
 public:
  struct ObjectData {
    FileManifest manifest;
    std::vector<OutsourcePiece> pieces;
    std::vector<EncryptedDeviation> enc_locals;
  };

  struct IngestResult {
    std::uint32_t record_id = 0;
    bool deduped = false;
  };

  static Store create(const std::filesystem::path& dir, const StoreConfig& config) {
    config.validate();
    std::filesystem::create_directories(dir);
    if (std::filesystem::exists(dir / kMetaName))
      throw ConflictError("store already exists: " + dir.string());
    Store s(dir, config);
    s.write_meta();
    s.append_raw(s.bases_path(), file_header(kBasesMagic));
    s.append_raw(s.objects_path(), file_header(kObjectsMagic));
    s.append_raw(s.index_path(), file_header(kIndexMagic));
    s.objects_size_ = file_header(kObjectsMagic).size();
    return s;
  }

  static Store open(const std::filesystem::path& dir) {
    Store s(dir, StoreConfig{});
    s.load();
    return s;
  }

  static Store open_or_create(const std::filesystem::path& dir, const StoreConfig& config) {
    if (std::filesystem::exists(dir / kMetaName)) {
      Store s = open(dir);
      if (s.config() != config)
        throw ConflictError("existing store has different configuration");
      return s;
    }
    return create(dir, config);
  }

  Store(Store&&) = default;
  Store& operator=(Store&&) = default;

  const StoreConfig& config() const { return config_; }
  const std::filesystem::path& directory() const { return dir_; }

  std::size_t record_count() const {
    std::shared_lock lock(*mu_);
    return records_.size();
  }

  CloudRecord record(std::uint32_t id) const {
    std::shared_lock lock(*mu_);
    if (id >= records_.size()) throw NotFoundError("record id out of range");
    return records_[id];
  }

  IngestResult ingest_base(const SymbolString& base) {
    std::unique_lock lock(*mu_);
    return ingest_locked(base);
  }

  SymbolString materialize(std::uint32_t id) const {
    std::shared_lock lock(*mu_);
    return materialize_locked(id);
  }

  SymbolString materialize(const CloudRecord& rec) const {
    std::shared_lock lock(*mu_);
    return materialize_record_locked(rec);
  }

  void put_object(const FileManifest& manifest, std::span<const OutsourcePiece> pieces,
                  std::span<const EncryptedDeviation> enc_locals) {
    std::unique_lock lock(*mu_);
    manifest.validate();
    if (manifest.file_tag.size() != config_.tag_size)
      throw InvalidArgumentError("tag size does not match store configuration");
    if (pieces.size() != manifest.chunk_count || enc_locals.size() != manifest.chunk_count)
      throw InvalidArgumentError("piece/deviation count does not match manifest");
    if (manifest.params.symbol_bits != config_.symbol_bits ||
        manifest.params.symbols_per_chunk() - manifest.deletions_per_chunk !=
            config_.base_symbols)
      throw InvalidArgumentError("manifest geometry does not match store configuration");
    for (const auto& p : pieces)
      if (p.base.size() != config_.base_symbols || p.base.width() != config_.symbol_bits)
        throw LengthMismatchError("piece length does not match store configuration");

    const std::string key = tag_key(manifest.file_tag);
    if (auto it = objects_.find(key); it != objects_.end()) {
      if (same_object_locked(it->second, manifest, pieces, enc_locals)) return;  // idempotent
      throw ConflictError("tag already stored with different content");
    }

    StoredObject obj;
    obj.manifest = manifest;
    obj.record_ids.reserve(pieces.size());
    for (const auto& p : pieces) obj.record_ids.push_back(ingest_locked(p.base).record_id);
    obj.enc_locals.assign(enc_locals.begin(), enc_locals.end());

    append_object(obj);
    objects_.emplace(key, std::move(obj));
  }

  ObjectData get_object(ByteView tag) const {
    std::shared_lock lock(*mu_);
    auto it = objects_.find(tag_key(tag));
    if (it == objects_.end()) throw NotFoundError("unknown file tag");
    const StoredObject& obj = it->second;
    if (obj.manifest.file_tag != Bytes(tag.begin(), tag.end()))
      throw CorruptionError("stored manifest tag mismatch");

    ObjectData out;
    out.manifest = obj.manifest;
    out.pieces.reserve(obj.record_ids.size());
    for (std::uint32_t id : obj.record_ids)
      out.pieces.push_back(OutsourcePiece{materialize_locked(id)});
    out.enc_locals = obj.enc_locals;
    return out;
  }

  StoreStats stats() const {
    std::shared_lock lock(*mu_);
    StoreStats st;
    for (const CloudRecord& rec : records_) {
      if (rec.type == CloudRecord::Type::unique) {
        st.unique_base_bits += config_.base_bits();
        ++st.unique_records;
      } else {
        st.dedup_record_bits +=
            config_.pointer_bits + delta_cost_bits(rec.delta, config_.base_symbols,
                                                   config_.symbol_bits);
        ++st.deduped_records;
      }
    }
    for (const auto& [key, obj] : objects_) {
      st.tag_bits += obj.manifest.file_tag.size() * 8;
      for (const auto& e : obj.enc_locals) st.enc_local_bits += e.stored_size_bits();
    }
    st.file_count = objects_.size();
    st.c_size = st.unique_base_bits + st.dedup_record_bits + st.enc_local_bits;
    return st;
  }

 private:
  struct StoredObject {
    FileManifest manifest;
    std::vector<std::uint32_t> record_ids;
    std::vector<EncryptedDeviation> enc_locals;
  };

  static constexpr std::uint32_t kMetaMagic = 0x4253'5242;    // "BRSB"
  static constexpr std::uint32_t kBasesMagic = 0x4253'4252;   // base log
  static constexpr std::uint32_t kObjectsMagic = 0x424f'4252; // object log
  static constexpr std::uint32_t kIndexMagic = 0x4249'4252;   // tag index
  static constexpr std::uint8_t kVersion = 1;
  static constexpr const char* kMetaName = "store.meta";

  Store(const std::filesystem::path& dir, const StoreConfig& config)
      : dir_(dir), config_(config), mu_(std::make_unique<std::shared_mutex>()) {}

  std::filesystem::path meta_path() const { return dir_ / kMetaName; }
  std::filesystem::path bases_path() const { return dir_ / "bases.log"; }
  std::filesystem::path objects_path() const { return dir_ / "objects.log"; }
  std::filesystem::path index_path() const { return dir_ / "index.bin"; }

  static Bytes file_header(std::uint32_t magic) {
    ByteWriter w;
    w.u32_le(magic);
    w.u8(kVersion);
    return std::move(w.buffer());
  }

  static std::string tag_key(ByteView tag) {
    return std::string(reinterpret_cast<const char*>(tag.data()), tag.size());
  }

  // ---- ingestion ----

  IngestResult ingest_locked(const SymbolString& base) {
    if (base.size() != config_.base_symbols || base.width() != config_.symbol_bits)
      throw LengthMismatchError("base length does not match store configuration");

    const Bytes packed = base.pack();
    const std::string content_key = tag_key(sha256(packed));

    // Exact duplicate: point at the first record with this content.
    if (auto it = content_ids_.find(content_key); it != content_ids_.end()) {
      if (materialize_locked(it->second) == base &&
          config_.pointer_bits < config_.base_bits()) {
        CloudRecord rec;
        rec.type = CloudRecord::Type::deduped;
        rec.base_id = it->second;
        return append_record(std::move(rec), content_key);
      }
    }

    // Near duplicate among stored unique bases, lowest record id wins ties.
    if (config_.match_cutoff > 0) {
      std::uint64_t best_distance = 0;
      std::int64_t best_id = -1;
      for (std::uint32_t id : candidate_ids(base)) {
        auto d = swap_change_distance_bounded(records_[id].base, base, config_.match_cutoff);
        if (d && (best_id < 0 || *d < best_distance)) {
          best_distance = *d;
          best_id = id;
          if (best_distance == 0) break;
        }
      }
      if (best_id >= 0) {
        std::vector<DeltaOp> delta =
            swap_change_script(records_[static_cast<std::uint32_t>(best_id)].base, base);
        std::uint64_t cost =
            delta_cost_bits(delta, config_.base_symbols, config_.symbol_bits) +
            config_.pointer_bits;
        if (cost < config_.base_bits()) {
          CloudRecord rec;
          rec.type = CloudRecord::Type::deduped;
          rec.base_id = static_cast<std::uint32_t>(best_id);
          rec.delta = std::move(delta);
          return append_record(std::move(rec), content_key);
        }
      }
    }

    CloudRecord rec;
    rec.type = CloudRecord::Type::unique;
    rec.base = base;
    return append_record(std::move(rec), content_key);
  }

  IngestResult append_record(CloudRecord&& rec, const std::string& content_key) {
    const auto id = static_cast<std::uint32_t>(records_.size());
    append_raw(bases_path(), frame(encode_record(rec)));

    IngestResult result{id, rec.type == CloudRecord::Type::deduped};
    if (rec.type == CloudRecord::Type::unique) index_blocks(rec.base, id);
    records_.push_back(std::move(rec));
    content_ids_.emplace(content_key, id);  // first record with this content wins
    return result;
  }

  SymbolString materialize_locked(std::uint32_t id) const {
    if (id >= records_.size()) throw CorruptionError("dangling base reference");
    return materialize_record_locked(records_[id]);
  }

  SymbolString materialize_record_locked(const CloudRecord& rec) const {
    if (rec.type == CloudRecord::Type::unique) return rec.base;
    SymbolString base = materialize_locked(rec.base_id);
    try {
      return apply_edits(std::move(base), rec.delta);
    } catch (const InvalidArgumentError& e) {
      throw CorruptionError(std::string("bad delta: ") + e.what());
    }
  }

  bool same_object_locked(const StoredObject& stored, const FileManifest& manifest,
                          std::span<const OutsourcePiece> pieces,
                          std::span<const EncryptedDeviation> enc_locals) const {
    if (!(stored.manifest == manifest)) return false;
    if (stored.enc_locals.size() != enc_locals.size()) return false;
    for (std::size_t i = 0; i < enc_locals.size(); ++i)
      if (!(stored.enc_locals[i] == enc_locals[i])) return false;
    for (std::size_t i = 0; i < pieces.size(); ++i)
      if (!(materialize_locked(stored.record_ids[i]) == pieces[i].base)) return false;
    return true;
  }

  // ---- pigeonhole block index ----
  //
  // Each unique base is sliced into 2*cutoff+1 contiguous blocks. An edit
  // within the cutoff touches at most 2*cutoff positions, so at least one
  // block survives verbatim; hashing every block finds all candidates.

  std::uint32_t block_count() const { return 2 * config_.match_cutoff + 1; }

  std::pair<std::uint32_t, std::uint32_t> block_range(std::uint32_t block) const {
    const std::uint64_t n = config_.base_symbols;
    const std::uint64_t nb = block_count();
    return {static_cast<std::uint32_t>(block * n / nb),
            static_cast<std::uint32_t>((block + 1) * n / nb)};
  }

  std::uint64_t block_hash(const SymbolString& base, std::uint32_t block) const {
    auto [lo, hi] = block_range(block);
    std::uint64_t h = 1469598103934665603ull ^ block;  // FNV-1a, salted per slot
    for (std::uint32_t i = lo; i < hi; ++i) {
      h ^= base[i];
      h *= 1099511628211ull;
    }
    return h;
  }

  void index_blocks(const SymbolString& base, std::uint32_t id) {
    if (config_.match_cutoff == 0) return;
    if (blocks_.size() != block_count()) blocks_.resize(block_count());
    for (std::uint32_t b = 0; b < block_count(); ++b)
      blocks_[b][block_hash(base, b)].push_back(id);
  }

  std::vector<std::uint32_t> candidate_ids(const SymbolString& base) const {
    std::vector<std::uint32_t> ids;
    if (blocks_.empty()) return ids;
    for (std::uint32_t b = 0; b < block_count(); ++b) {
      auto it = blocks_[b].find(block_hash(base, b));
      if (it != blocks_[b].end()) ids.insert(ids.end(), it->second.begin(), it->second.end());
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
  }

  // ---- encoding ----

  Bytes encode_record(const CloudRecord& rec) const {
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(rec.type));
    if (rec.type == CloudRecord::Type::unique) {
      w.raw(rec.base.pack());
    } else {
      w.u32_le(rec.base_id);
      if (rec.delta.size() > 0xffff) throw InvalidArgumentError("delta too long");
      w.u16_le(static_cast<std::uint16_t>(rec.delta.size()));
      for (const DeltaOp& op : rec.delta) {
        w.u8(static_cast<std::uint8_t>(op.kind));
        w.u32_le(op.pos);
        w.u16_le(op.value);
      }
    }
    return std::move(w.buffer());
  }

  CloudRecord decode_record(ByteView payload, std::uint32_t own_id) const {
    ByteReader r(payload);
    CloudRecord rec;
    std::uint8_t type = r.u8();
    if (type == 0) {
      rec.type = CloudRecord::Type::unique;
      std::size_t packed = (config_.base_bits() + 7) / 8;
      rec.base = SymbolString::unpack(r.view(packed), config_.base_symbols, config_.symbol_bits);
    } else if (type == 1) {
      rec.type = CloudRecord::Type::deduped;
      rec.base_id = r.u32_le();
      if (rec.base_id >= own_id) throw FormatError("base reference is not backward");
      std::uint16_t n = r.u16_le();
      rec.delta.reserve(n);
      for (std::uint16_t i = 0; i < n; ++i) {
        DeltaOp op;
        std::uint8_t kind = r.u8();
        if (kind > 1) throw FormatError("unknown delta op");
        op.kind = static_cast<DeltaOp::Kind>(kind);
        op.pos = r.u32_le();
        op.value = r.u16_le();
        std::uint32_t span = op.kind == DeltaOp::Kind::adjacent_swap ? 2 : 1;
        if (op.pos + span > config_.base_symbols) throw FormatError("delta position out of range");
        if (op.kind == DeltaOp::Kind::change_value && config_.symbol_bits < kMaxSymbolBits &&
            op.value >= (Symbol(1) << config_.symbol_bits))
          throw FormatError("delta value out of range");
        rec.delta.push_back(op);
      }
    } else {
      throw FormatError("unknown record type");
    }
    r.expect_end();
    return rec;
  }

  Bytes encode_object(const StoredObject& obj) const {
    ByteWriter w;
    w.raw(obj.manifest.serialize());
    w.u32_le(static_cast<std::uint32_t>(obj.record_ids.size()));
    for (std::uint32_t id : obj.record_ids) w.u64_le(id);
    w.u32_le(static_cast<std::uint32_t>(obj.enc_locals.size()));
    for (const auto& e : obj.enc_locals) {
      Bytes wire = e.serialize();
      w.u32_le(static_cast<std::uint32_t>(wire.size()));
      w.raw(wire);
    }
    return std::move(w.buffer());
  }

  StoredObject decode_object(ByteView payload) const {
    ByteReader r(payload);
    StoredObject obj;
    obj.manifest = FileManifest::parse(r);
    std::uint32_t n_pieces = r.u32_le();
    obj.record_ids.reserve(n_pieces);
    for (std::uint32_t i = 0; i < n_pieces; ++i) {
      std::uint64_t id = r.u64_le();
      if (id >= records_.size()) throw CorruptionError("object references missing record");
      obj.record_ids.push_back(static_cast<std::uint32_t>(id));
    }
    std::uint32_t n_locals = r.u32_le();
    obj.enc_locals.reserve(n_locals);
    for (std::uint32_t i = 0; i < n_locals; ++i) {
      std::uint32_t len = r.u32_le();
      ByteReader er(r.view(len));
      obj.enc_locals.push_back(EncryptedDeviation::parse(er));
      er.expect_end();
    }
    r.expect_end();
    if (obj.manifest.file_tag.size() != config_.tag_size)
      throw CorruptionError("object tag size does not match store configuration");
    if (obj.record_ids.size() != obj.manifest.chunk_count ||
        obj.enc_locals.size() != obj.manifest.chunk_count)
      throw CorruptionError("object piece count does not match manifest");
    return obj;
  }

  // ---- file plumbing ----

  static Bytes frame(ByteView payload) {
    ByteWriter w;
    w.u32_le(static_cast<std::uint32_t>(payload.size()));
    w.raw(payload);
    return std::move(w.buffer());
  }

  void append_raw(const std::filesystem::path& path, ByteView data) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw Error("write failed: " + path.string());
  }

  void append_object(const StoredObject& obj) {
    Bytes framed = frame(encode_object(obj));
    append_raw(objects_path(), framed);

    ByteWriter w;
    w.raw(obj.manifest.file_tag);
    w.u64_le(objects_size_);
    append_raw(index_path(), w.buffer());
    objects_size_ += framed.size();
  }

  void write_meta() {
    ByteWriter w;
    w.u32_le(kMetaMagic);
    w.u8(kVersion);
    w.u32_le(config_.base_symbols);
    w.u8(config_.symbol_bits);
    w.u32_le(config_.match_cutoff);
    w.u32_le(config_.pointer_bits);
    w.u16_le(config_.tag_size);
    std::ofstream out(meta_path(), std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(w.buffer().data()),
              static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw Error("cannot write store metadata");
  }

  static Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw CorruptionError("missing store file: " + path.string());
    auto size = in.tellg();
    in.seekg(0);
    Bytes out(static_cast<std::size_t>(size));
    in.read(reinterpret_cast<char*>(out.data()), size);
    if (!in) throw CorruptionError("cannot read store file: " + path.string());
    return out;
  }

  // Reads framed records from `data` starting after the header. Returns the
  // byte length of the consumed prefix; an incomplete trailing record is
  // left unconsumed (interrupted append), any other defect throws.
  template <class Fn>
  std::size_t scan_log(const Bytes& data, std::uint32_t magic, Fn&& on_record) const {
    ByteReader r(data);
    std::uint32_t got_magic;
    try {
      got_magic = r.u32_le();
      if (r.u8() != kVersion) throw FormatError("unsupported version");
    } catch (const FormatError&) {
      throw CorruptionError("bad log header");
    }
    if (got_magic != magic) throw CorruptionError("bad log magic");

    std::size_t consumed = r.position();
    while (!r.at_end()) {
      if (r.remaining() < 4) break;
      std::uint32_t len = r.u32_le();
      if (r.remaining() < len) break;  // torn tail, drop
      std::size_t record_offset = consumed;
      try {
        on_record(r.view(len), record_offset);
      } catch (const FormatError& e) {
        throw CorruptionError(std::string("bad log record: ") + e.what());
      }
      consumed = r.position();
    }
    return consumed;
  }

  void truncate_to(const std::filesystem::path& path, std::size_t size) const {
    if (std::filesystem::file_size(path) != size) std::filesystem::resize_file(path, size);
  }

  void load() {
    // store.meta
    {
      Bytes meta = read_file(meta_path());
      ByteReader r(meta);
      try {
        if (r.u32_le() != kMetaMagic || r.u8() != kVersion)
          throw FormatError("bad store metadata header");
        config_.base_symbols = r.u32_le();
        config_.symbol_bits = r.u8();
        config_.match_cutoff = r.u32_le();
        config_.pointer_bits = r.u32_le();
        config_.tag_size = r.u16_le();
        r.expect_end();
        config_.validate();
      } catch (const Error& e) {
        throw CorruptionError(std::string("bad store metadata: ") + e.what());
      }
    }

    // bases.log
    {
      Bytes data = read_file(bases_path());
      std::size_t keep = scan_log(data, kBasesMagic, [this](ByteView payload, std::size_t) {
        CloudRecord rec = decode_record(payload, static_cast<std::uint32_t>(records_.size()));
        const auto id = static_cast<std::uint32_t>(records_.size());
        if (rec.type == CloudRecord::Type::unique) index_blocks(rec.base, id);
        records_.push_back(std::move(rec));
      });
      truncate_to(bases_path(), keep);
      for (std::uint32_t id = 0; id < records_.size(); ++id) {
        Bytes packed = materialize_locked(id).pack();
        content_ids_.emplace(tag_key(sha256(packed)), id);
      }
    }

    // objects.log
    std::vector<std::pair<std::uint64_t, std::string>> object_order;  // offset -> tag
    {
      Bytes data = read_file(objects_path());
      std::size_t keep =
          scan_log(data, kObjectsMagic, [this, &object_order](ByteView payload, std::size_t off) {
            StoredObject obj = decode_object(payload);
            std::string key = tag_key(obj.manifest.file_tag);
            if (!objects_.emplace(key, std::move(obj)).second)
              throw CorruptionError("duplicate tag in object log");
            object_order.emplace_back(off, key);
          });
      truncate_to(objects_path(), keep);
      objects_size_ = keep;
    }

    // index.bin: must mirror the object log; entries for a suffix of
    // objects may be missing after a crash and are re-appended.
    {
      Bytes data = read_file(index_path());
      ByteReader r(data);
      try {
        if (r.u32_le() != kIndexMagic || r.u8() != kVersion)
          throw FormatError("bad index header");
      } catch (const FormatError&) {
        throw CorruptionError("bad index header");
      }
      const std::size_t entry_size = config_.tag_size + 8;
      std::size_t n_entries = 0;
      std::size_t keep = r.position();
      while (r.remaining() >= entry_size) {
        Bytes tag = r.raw(config_.tag_size);
        std::uint64_t offset = r.u64_le();
        if (n_entries >= object_order.size())
          throw CorruptionError("index entry without matching object");
        const auto& [obj_off, obj_tag] = object_order[n_entries];
        if (offset != obj_off || tag_key(tag) != obj_tag)
          throw CorruptionError("index entry does not match object log");
        ++n_entries;
        keep = r.position();
      }
      truncate_to(index_path(), keep);
      for (std::size_t i = n_entries; i < object_order.size(); ++i) {
        ByteWriter w;
        const auto& [obj_off, obj_tag] = object_order[i];
        w.raw(Bytes(obj_tag.begin(), obj_tag.end()));
        w.u64_le(obj_off);
        append_raw(index_path(), w.buffer());
      }
    }
  }

  std::filesystem::path dir_;
  StoreConfig config_;
  mutable std::unique_ptr<std::shared_mutex> mu_;

  std::vector<CloudRecord> records_;
  std::unordered_map<std::string, std::uint32_t> content_ids_;
  std::vector<std::unordered_map<std::uint64_t, std::vector<std::uint32_t>>> blocks_;
  std::unordered_map<std::string, StoredObject> objects_;
  std::uint64_t objects_size_ = 0;
};

}  // namespace bifrost
