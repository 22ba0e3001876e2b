#pragma once

#include <algorithm>
#include <cstdint>
#include <unordered_set>
#include <utility>
#include <vector>

#include "bifrost/bytes.hpp"
#include "bifrost/crypto.hpp"
#include "bifrost/errors.hpp"
#include "bifrost/symbols.hpp"

namespace bifrost {

/// The client-side secret for one chunk: the PRNG seed that locates the
/// deleted symbols, and the deleted values in the order the PRNG produced
/// their positions. Everything else needed to undo the deletion is
/// regenerated from the seed.
struct DeletionDeviation {
  Bytes seed;
  std::vector<Symbol> deleted_values;

  std::uint64_t plain_bits(unsigned symbol_bits) const {
    return seed.size() * 8 + static_cast<std::uint64_t>(deleted_values.size()) * symbol_bits;
  }

  /// Plaintext layout: seed bytes, then the deleted values packed MSB-first
  /// at the symbol width, zero-padded to a whole byte. No length prefix;
  /// the count is public via the manifest.
  Bytes serialize(unsigned symbol_bits) const {
    Bytes out = seed;
    SymbolString vals(std::vector<Symbol>(deleted_values), symbol_bits);
    Bytes packed = vals.pack();
    out.insert(out.end(), packed.begin(), packed.end());
    return out;
  }

  static DeletionDeviation parse(ByteView plain, std::size_t deleted_count, unsigned symbol_bits,
                                 unsigned seed_bits) {
    if (seed_bits % 8 != 0) throw InvalidArgumentError("seed_bits must be a multiple of 8");
    const std::size_t seed_len = seed_bits / 8;
    const std::size_t value_len = (deleted_count * symbol_bits + 7) / 8;
    if (plain.size() != seed_len + value_len)
      throw FormatError("deviation plaintext has wrong size");
    DeletionDeviation d;
    d.seed = Bytes(plain.begin(), plain.begin() + seed_len);
    SymbolString vals =
        SymbolString::unpack(plain.subspan(seed_len), deleted_count, symbol_bits);
    d.deleted_values = vals.values();
    return d;
  }

  friend bool operator==(const DeletionDeviation&, const DeletionDeviation&) = default;
};

/// The punctured chunk that goes to the storage service.
struct OutsourcePiece {
  SymbolString base;

  friend bool operator==(const OutsourcePiece&, const OutsourcePiece&) = default;
};

/// Draws `count` distinct positions in [0, total), in draw order, by
/// rejection sampling from the byte stream: out-of-range values are
/// rejected by uniform_int, repeated positions by redrawing.
template <class Stream>
std::vector<std::uint32_t> derive_positions_from(Stream& stream, std::uint32_t total,
                                                 std::uint32_t count) {
  if (count >= total)
    throw InvalidArgumentError("deletion count must be below the symbol count");
  std::vector<std::uint32_t> positions;
  positions.reserve(count);
  std::unordered_set<std::uint32_t> seen;
  while (positions.size() < count) {
    auto p = static_cast<std::uint32_t>(uniform_int(stream, total));
    if (seen.insert(p).second) positions.push_back(p);
  }
  return positions;
}

inline std::vector<std::uint32_t> derive_positions(ByteView seed, std::uint32_t total,
                                                   std::uint32_t count) {
  PrngStream stream(seed);
  return derive_positions_from(stream, total, count);
}

/// Deletes `deleted_count` PRNG-selected symbols from the chunk. Positions
/// index the original chunk and all deletions happen simultaneously; the
/// deviation records the seed plus the removed values in draw order.
template <class Stream>
std::pair<OutsourcePiece, DeletionDeviation> delete_transform_from(Stream& stream,
                                                                   const SymbolString& chunk,
                                                                   ByteView seed,
                                                                   std::uint32_t deleted_count) {
  auto positions =
      derive_positions_from(stream, static_cast<std::uint32_t>(chunk.size()), deleted_count);

  DeletionDeviation dev;
  dev.seed = Bytes(seed.begin(), seed.end());
  dev.deleted_values.reserve(deleted_count);
  for (std::uint32_t p : positions) dev.deleted_values.push_back(chunk[p]);

  std::vector<bool> drop(chunk.size(), false);
  for (std::uint32_t p : positions) drop[p] = true;

  SymbolString base(chunk.width());
  base.reserve(chunk.size() - deleted_count);
  for (std::size_t i = 0; i < chunk.size(); ++i)
    if (!drop[i]) base.push_back(chunk[i]);

  return {OutsourcePiece{std::move(base)}, std::move(dev)};
}

inline std::pair<OutsourcePiece, DeletionDeviation> delete_transform(const SymbolString& chunk,
                                                                     ByteView seed,
                                                                     std::uint32_t deleted_count) {
  PrngStream stream(seed);
  return delete_transform_from(stream, chunk, seed, deleted_count);
}

/// Exact inverse of delete_transform: regenerates the positions from the
/// deviation's seed, pairs them with the stored values by draw order, and
/// reinserts in ascending position order so earlier insertions never shift
/// later ones.
template <class Stream>
SymbolString reinsert_from(Stream& stream, const OutsourcePiece& piece,
                           const DeletionDeviation& dev, std::uint32_t original_count) {
  if (piece.base.size() + dev.deleted_values.size() != original_count)
    throw LengthMismatchError("piece and deviation do not add up to the original length");

  auto positions = derive_positions_from(stream, original_count,
                                         static_cast<std::uint32_t>(dev.deleted_values.size()));

  std::vector<std::pair<std::uint32_t, Symbol>> inserts;
  inserts.reserve(positions.size());
  for (std::size_t k = 0; k < positions.size(); ++k)
    inserts.emplace_back(positions[k], dev.deleted_values[k]);
  std::sort(inserts.begin(), inserts.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });

  std::vector<Symbol> out(piece.base.begin(), piece.base.end());
  for (const auto& [pos, value] : inserts)
    out.insert(out.begin() + pos, value);
  return SymbolString(std::move(out), piece.base.width());
}

inline SymbolString reinsert(const OutsourcePiece& piece, const DeletionDeviation& dev,
                             std::uint32_t original_count) {
  PrngStream stream(dev.seed);
  return reinsert_from(stream, piece, dev, original_count);
}

/// Per-chunk seed schedule: chunk i of a file uses the first seed_bits of
/// the PRNG stream keyed by (master seed || big-endian chunk index), so a
/// file's deviations stay at seed_bits + deleted values with no extra
/// bookkeeping.
inline Bytes derive_chunk_seed(ByteView master_seed, std::uint64_t chunk_index,
                               unsigned seed_bits) {
  if (seed_bits == 0 || seed_bits % 8 != 0)
    throw InvalidArgumentError("seed_bits must be a positive multiple of 8");
  Bytes material(master_seed.begin(), master_seed.end());
  for (int i = 7; i >= 0; --i)
    material.push_back(static_cast<std::uint8_t>(chunk_index >> (8 * i)));
  PrngStream stream(material);
  return stream.take(seed_bits / 8);
}

}  // namespace bifrost
