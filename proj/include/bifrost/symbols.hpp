#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "bifrost/bytes.hpp"
#include "bifrost/errors.hpp"

namespace bifrost {

/// One symbol of a fixed-width alphabet. Widths from 1 to 16 bits are
/// supported; the storage pipeline uses 8-bit symbols by default.
using Symbol = std::uint16_t;

inline constexpr unsigned kMaxSymbolBits = 16;

/// A fixed-width symbol sequence: the unit that gets transformed, uploaded
/// and deduplicated. Every symbol value is strictly below 2^width.
class SymbolString {
 public:
  SymbolString() : width_(8) {}

  explicit SymbolString(unsigned width) : width_(width) { check_width(width); }

  SymbolString(std::vector<Symbol> symbols, unsigned width)
      : symbols_(std::move(symbols)), width_(width) {
    check_width(width);
    for (Symbol s : symbols_) check_value(s);
  }

  static SymbolString from_values(std::initializer_list<Symbol> values, unsigned width) {
    return SymbolString(std::vector<Symbol>(values), width);
  }

  unsigned width() const { return width_; }
  std::size_t size() const { return symbols_.size(); }
  bool empty() const { return symbols_.empty(); }
  std::uint64_t bit_size() const { return static_cast<std::uint64_t>(symbols_.size()) * width_; }

  Symbol operator[](std::size_t i) const { return symbols_[i]; }
  Symbol& operator[](std::size_t i) { return symbols_[i]; }
  const std::vector<Symbol>& values() const { return symbols_; }

  void push_back(Symbol s) {
    check_value(s);
    symbols_.push_back(s);
  }
  void reserve(std::size_t n) { symbols_.reserve(n); }

  auto begin() const { return symbols_.begin(); }
  auto end() const { return symbols_.end(); }

  friend bool operator==(const SymbolString&, const SymbolString&) = default;

  /// Packs the symbols MSB-first into bytes; the final partial byte, if
  /// any, is zero-padded on the right.
  Bytes pack() const {
    if (width_ == 8) {
      Bytes out(symbols_.size());
      for (std::size_t i = 0; i < symbols_.size(); ++i) out[i] = static_cast<std::uint8_t>(symbols_[i]);
      return out;
    }
    Bytes out((bit_size() + 7) / 8, 0);
    std::uint64_t bit = 0;
    for (Symbol s : symbols_) {
      for (int b = static_cast<int>(width_) - 1; b >= 0; --b, ++bit) {
        if ((s >> b) & 1u) out[bit / 8] |= static_cast<std::uint8_t>(0x80u >> (bit % 8));
      }
    }
    return out;
  }

  /// Inverse of pack(). Trailing pad bits must be zero.
  static SymbolString unpack(ByteView bytes, std::size_t count, unsigned width) {
    check_width(width);
    std::uint64_t need_bits = static_cast<std::uint64_t>(count) * width;
    if (bytes.size() != (need_bits + 7) / 8)
      throw FormatError("packed symbol buffer has wrong size");
    SymbolString out(width);
    out.reserve(count);
    if (width == 8) {
      for (std::size_t i = 0; i < count; ++i) out.symbols_.push_back(bytes[i]);
      return out;
    }
    std::uint64_t bit = 0;
    for (std::size_t i = 0; i < count; ++i) {
      Symbol s = 0;
      for (unsigned b = 0; b < width; ++b, ++bit)
        s = static_cast<Symbol>((s << 1) | ((bytes[bit / 8] >> (7 - bit % 8)) & 1u));
      out.symbols_.push_back(s);
    }
    for (; bit < bytes.size() * 8; ++bit)
      if ((bytes[bit / 8] >> (7 - bit % 8)) & 1u) throw FormatError("nonzero padding bits");
    return out;
  }

 private:
  static void check_width(unsigned width) {
    if (width == 0 || width > kMaxSymbolBits)
      throw InvalidArgumentError("symbol width must be in [1,16]");
  }
  void check_value(Symbol s) const {
    if (width_ < kMaxSymbolBits && s >= (Symbol(1) << width_))
      throw InvalidArgumentError("symbol value out of range for width");
  }

  std::vector<Symbol> symbols_;
  unsigned width_;
};

/// Fixed-length chunk geometry. chunk_bits must be a multiple of
/// symbol_bits; every chunk then holds exactly symbols_per_chunk() symbols.
struct ChunkingParams {
  std::uint32_t chunk_bits = 2048;
  std::uint8_t symbol_bits = 8;

  std::uint32_t symbols_per_chunk() const { return chunk_bits / symbol_bits; }

  void validate() const {
    if (chunk_bits == 0) throw InvalidArgumentError("chunk_bits must be positive");
    if (symbol_bits == 0 || symbol_bits > kMaxSymbolBits)
      throw InvalidArgumentError("symbol_bits must be in [1,16]");
    if (chunk_bits % symbol_bits != 0)
      throw InvalidArgumentError("symbol_bits must divide chunk_bits");
  }

  friend bool operator==(const ChunkingParams&, const ChunkingParams&) = default;
};

/// Public per-file metadata kept by the storage service, keyed by the file
/// tag. Holds everything a receiver needs apart from the two keys and the
/// tag itself, so the share token never grows.
struct FileManifest {
  Bytes file_tag;
  std::uint64_t chunk_count = 0;
  std::uint64_t original_byte_length = 0;
  ChunkingParams params;
  std::uint32_t deletions_per_chunk = 0;  // symbols removed from each chunk
  std::uint8_t seed_bits = 32;            // width of each per-chunk PRNG seed
  std::uint16_t pad_block_bits = 0;       // 0 = no padding, 128 = AES-block padding

  void validate() const {
    params.validate();
    std::uint64_t bits = original_byte_length * 8;
    std::uint64_t expect = (bits + params.chunk_bits - 1) / params.chunk_bits;
    if (chunk_count != expect)
      throw InvalidArgumentError("chunk_count inconsistent with byte length");
    if (deletions_per_chunk >= params.symbols_per_chunk())
      throw InvalidArgumentError("deletions_per_chunk must be below symbols_per_chunk");
    if (seed_bits == 0 || seed_bits % 8 != 0)
      throw InvalidArgumentError("seed_bits must be a positive multiple of 8");
    if (pad_block_bits != 0 && pad_block_bits != 128)
      throw InvalidArgumentError("pad_block_bits must be 0 or 128");
  }

  Bytes serialize() const {
    ByteWriter w;
    if (file_tag.size() > 0xffff) throw InvalidArgumentError("file tag too long");
    w.u16_le(static_cast<std::uint16_t>(file_tag.size()));
    w.raw(file_tag);
    w.u64_le(chunk_count);
    w.u64_le(original_byte_length);
    w.u32_le(params.chunk_bits);
    w.u8(params.symbol_bits);
    w.u32_le(deletions_per_chunk);
    w.u8(seed_bits);
    w.u16_le(pad_block_bits);
    return std::move(w.buffer());
  }

  static FileManifest parse(ByteReader& r) {
    FileManifest m;
    std::uint16_t tag_len = r.u16_le();
    m.file_tag = r.raw(tag_len);
    m.chunk_count = r.u64_le();
    m.original_byte_length = r.u64_le();
    m.params.chunk_bits = r.u32_le();
    m.params.symbol_bits = r.u8();
    m.deletions_per_chunk = r.u32_le();
    m.seed_bits = r.u8();
    m.pad_block_bits = r.u16_le();
    try {
      m.validate();
    } catch (const InvalidArgumentError& e) {
      throw FormatError(std::string("bad manifest: ") + e.what());
    }
    return m;
  }

  friend bool operator==(const FileManifest&, const FileManifest&) = default;
};

/// Splits a byte string into fixed-size symbol chunks. The file's bits are
/// consumed MSB-first; the last chunk is zero-padded to full length. Empty
/// input yields zero chunks.
inline std::vector<SymbolString> chunk_file(ByteView data, const ChunkingParams& params) {
  params.validate();
  const std::uint32_t per_chunk = params.symbols_per_chunk();
  const std::uint64_t total_bits = static_cast<std::uint64_t>(data.size()) * 8;
  const std::uint64_t n_chunks = (total_bits + params.chunk_bits - 1) / params.chunk_bits;

  std::vector<SymbolString> chunks;
  chunks.reserve(n_chunks);

  if (params.symbol_bits == 8) {
    for (std::uint64_t c = 0; c < n_chunks; ++c) {
      SymbolString s(8);
      s.reserve(per_chunk);
      for (std::uint32_t i = 0; i < per_chunk; ++i) {
        std::uint64_t idx = c * per_chunk + i;
        s.push_back(idx < data.size() ? data[idx] : 0);
      }
      chunks.push_back(std::move(s));
    }
    return chunks;
  }

  const unsigned q = params.symbol_bits;
  std::uint64_t bit = 0;
  for (std::uint64_t c = 0; c < n_chunks; ++c) {
    SymbolString s(q);
    s.reserve(per_chunk);
    for (std::uint32_t i = 0; i < per_chunk; ++i) {
      Symbol v = 0;
      for (unsigned b = 0; b < q; ++b, ++bit) {
        unsigned bitval = bit < total_bits ? (data[bit / 8] >> (7 - bit % 8)) & 1u : 0u;
        v = static_cast<Symbol>((v << 1) | bitval);
      }
      s.push_back(v);
    }
    chunks.push_back(std::move(s));
  }
  return chunks;
}

/// Inverse of chunk_file: concatenates the chunks' bits and truncates to
/// the manifest's original byte length.
inline Bytes assemble_file(std::span<const SymbolString> chunks, const FileManifest& manifest) {
  manifest.validate();
  if (chunks.size() != manifest.chunk_count)
    throw LengthMismatchError("chunk count does not match manifest");
  const std::uint32_t per_chunk = manifest.params.symbols_per_chunk();
  for (const auto& c : chunks) {
    if (c.size() != per_chunk || c.width() != manifest.params.symbol_bits)
      throw LengthMismatchError("chunk geometry does not match manifest");
  }

  Bytes out;
  out.reserve(manifest.original_byte_length);
  if (manifest.params.symbol_bits == 8) {
    for (const auto& c : chunks) {
      for (Symbol s : c) {
        if (out.size() == manifest.original_byte_length) return out;
        out.push_back(static_cast<std::uint8_t>(s));
      }
    }
    return out;
  }

  const unsigned q = manifest.params.symbol_bits;
  out.assign(manifest.original_byte_length, 0);
  std::uint64_t bit = 0;
  const std::uint64_t total_bits = manifest.original_byte_length * 8;
  for (const auto& c : chunks) {
    for (Symbol s : c) {
      for (int b = static_cast<int>(q) - 1; b >= 0; --b, ++bit) {
        if (bit >= total_bits) return out;
        if ((s >> b) & 1u) out[bit / 8] |= static_cast<std::uint8_t>(0x80u >> (bit % 8));
      }
    }
  }
  return out;
}

}  // namespace bifrost
