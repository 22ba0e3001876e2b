#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bifrost/bytes.hpp"
#include "bifrost/crypto.hpp"
#include "bifrost/errors.hpp"
#include "bifrost/protocol.hpp"
#include "bifrost/symbols.hpp"
#include "bifrost/transform.hpp"

namespace bifrost {

/// Everything the receiver gets over the private channel: the file tag and
/// the two keys. Its payload size is fixed by the chosen primitives and
/// never depends on the file.
struct ShareToken {
  MacKind mac_kind = MacKind::hmac_sha256;
  Bytes tag;
  Bytes mac_key;
  Bytes enc_key;

  std::uint64_t bit_size() const { return (tag.size() + mac_key.size() + enc_key.size()) * 8; }

  void validate() const {
    if (tag.size() != tag_bytes(mac_kind)) throw InvalidArgumentError("token tag size is wrong");
    if (mac_key.size() != mac_key_bytes(mac_kind))
      throw InvalidArgumentError("token MAC key size is wrong");
    if (enc_key.size() != enc_key_bytes(CipherKind::aes128_gcm) &&
        enc_key.size() != enc_key_bytes(CipherKind::aes256_gcm))
      throw InvalidArgumentError("token encryption key size is wrong");
  }

  CipherKind cipher_kind() const {
    return enc_key.size() == enc_key_bytes(CipherKind::aes128_gcm) ? CipherKind::aes128_gcm
                                                                   : CipherKind::aes256_gcm;
  }

  /// Token file format: [u8 mac_kind][tag][u16 klen][mac_key][u16 klen]
  /// [enc_key], length prefixes little-endian.
  Bytes serialize() const {
    validate();
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(mac_kind));
    w.raw(tag);
    w.u16_le(static_cast<std::uint16_t>(mac_key.size()));
    w.raw(mac_key);
    w.u16_le(static_cast<std::uint16_t>(enc_key.size()));
    w.raw(enc_key);
    return std::move(w.buffer());
  }

  static ShareToken parse(ByteView data) {
    ByteReader r(data);
    ShareToken t;
    std::uint8_t kind = r.u8();
    if (kind != 1 && kind != 2) throw FormatError("unknown MAC kind in token");
    t.mac_kind = static_cast<MacKind>(kind);
    t.tag = r.raw(tag_bytes(t.mac_kind));
    t.mac_key = r.raw(r.u16_le());
    t.enc_key = r.raw(r.u16_le());
    r.expect_end();
    try {
      t.validate();
    } catch (const InvalidArgumentError& e) {
      throw FormatError(std::string("bad token: ") + e.what());
    }
    return t;
  }

  friend bool operator==(const ShareToken&, const ShareToken&) = default;
};

struct SharingOptions {
  ChunkingParams params;
  std::uint32_t deletions_per_chunk = 12;
  MacKind mac_kind = MacKind::hmac_sha256;
  CipherKind cipher_kind = CipherKind::aes128_gcm;
  std::uint16_t pad_block_bits = 0;
  std::uint8_t seed_bits = 32;
  Bytes master_seed;  // empty = draw a fresh one

  void validate() const {
    params.validate();
    if (deletions_per_chunk >= params.symbols_per_chunk())
      throw InvalidArgumentError("deletions_per_chunk must be below symbols_per_chunk");
    if (seed_bits == 0 || seed_bits % 8 != 0)
      throw InvalidArgumentError("seed_bits must be a positive multiple of 8");
    check_pad_mode(pad_block_bits);
    if (!master_seed.empty() && master_seed.size() != seed_bits / 8u)
      throw InvalidArgumentError("master_seed must be seed_bits wide");
  }
};

/// Prepared upload: everything sender_store sends, exposed separately so
/// local pipelines and tests can stage uploads without a socket.
struct PreparedUpload {
  FileManifest manifest;
  std::vector<OutsourcePiece> pieces;
  std::vector<EncryptedDeviation> enc_locals;
  ShareToken token;
};

/// Chunk, transform, authenticate and encrypt one file. Each chunk gets
/// its own seed derived from a per-file master seed, one MAC tag and one
/// encryption key cover the whole file.
inline PreparedUpload prepare_upload(ByteView file, const SharingOptions& options,
                                     const KeyMaterial& keys) {
  options.validate();
  keys.validate(options.mac_kind, options.cipher_kind);

  Bytes master = options.master_seed;
  if (master.empty()) {
    master.resize(options.seed_bits / 8);
    if (RAND_bytes(master.data(), static_cast<int>(master.size())) != 1)
      throw CryptoError("RAND_bytes failed");
  }

  PreparedUpload out;
  FileTag tag = mac_tag(options.mac_kind, keys.mac_key, file);

  std::vector<SymbolString> chunks = chunk_file(file, options.params);
  out.pieces.reserve(chunks.size());
  out.enc_locals.reserve(chunks.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    Bytes seed = derive_chunk_seed(master, i, options.seed_bits);
    auto [piece, deviation] = delete_transform(chunks[i], seed, options.deletions_per_chunk);
    Bytes plain = deviation.serialize(options.params.symbol_bits);
    out.enc_locals.push_back(
        encrypt(options.cipher_kind, keys.enc_key, plain, options.pad_block_bits));
    out.pieces.push_back(std::move(piece));
  }

  out.manifest.file_tag = tag.value;
  out.manifest.chunk_count = chunks.size();
  out.manifest.original_byte_length = file.size();
  out.manifest.params = options.params;
  out.manifest.deletions_per_chunk = options.deletions_per_chunk;
  out.manifest.seed_bits = options.seed_bits;
  out.manifest.pad_block_bits = options.pad_block_bits;

  out.token.mac_kind = options.mac_kind;
  out.token.tag = tag.value;
  out.token.mac_key = keys.mac_key;
  out.token.enc_key = keys.enc_key;
  return out;
}

/// Upload pipeline: transforms the file and ships tag, manifest, pieces
/// and encrypted deviations to the service. Returns the share token, the
/// only thing the receiver ever needs over the private channel.
inline ShareToken sender_store(ByteView file, const SharingOptions& options,
                               const KeyMaterial& keys, const std::string& address) {
  PreparedUpload staged = prepare_upload(file, options, keys);
  client_upload(address, staged.manifest, staged.pieces, staged.enc_locals);
  return staged.token;
}

/// Reconstructs a file from downloaded pieces plus decrypted deviations.
/// Fails with DecryptionError on AEAD rejection, IntegrityError when the
/// rebuilt file does not verify against the token's tag; any malformed
/// server data surfaces as FormatError or LengthMismatchError. Bytes are
/// returned only after the tag verifies.
inline Bytes reconstruct_file(const Store::ObjectData& data, const ShareToken& token) {
  token.validate();
  const FileManifest& manifest = data.manifest;
  if (manifest.file_tag != token.tag)
    throw IntegrityError("served manifest carries a different tag");
  if (data.pieces.size() != manifest.chunk_count ||
      data.enc_locals.size() != manifest.chunk_count)
    throw FormatError("served piece count does not match manifest");

  const std::uint32_t chunk_symbols = manifest.params.symbols_per_chunk();
  const CipherKind cipher = token.cipher_kind();

  std::vector<SymbolString> chunks;
  chunks.reserve(manifest.chunk_count);
  for (std::size_t i = 0; i < data.pieces.size(); ++i) {
    Bytes plain =
        decrypt(cipher, token.enc_key, data.enc_locals[i], manifest.pad_block_bits);
    DeletionDeviation deviation = DeletionDeviation::parse(
        plain, manifest.deletions_per_chunk, manifest.params.symbol_bits, manifest.seed_bits);
    chunks.push_back(reinsert(data.pieces[i], deviation, chunk_symbols));
  }

  Bytes file = assemble_file(chunks, manifest);
  if (!mac_verify(token.mac_kind, token.mac_key, file, FileTag{token.tag}))
    throw IntegrityError("file failed tag verification");
  return file;
}

/// Download-and-verify pipeline, the receiving half of the share flow.
inline Bytes receiver_fetch(const ShareToken& token, const std::string& address) {
  token.validate();
  Store::ObjectData data = client_download(address, token.tag);
  return reconstruct_file(data, token);
}

}  // namespace bifrost
