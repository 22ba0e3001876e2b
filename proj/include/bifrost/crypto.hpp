#pragma once

#include <openssl/core_names.h>
#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/rand.h>

#include <array>
#include <cstdint>
#include <memory>
#include <string>

#include "bifrost/bytes.hpp"
#include "bifrost/errors.hpp"

namespace bifrost {

enum class MacKind : std::uint8_t { hmac_sha256 = 1, hmac_sha512 = 2 };
enum class CipherKind : std::uint8_t { aes128_gcm = 1, aes256_gcm = 2 };

inline std::size_t tag_bytes(MacKind k) { return k == MacKind::hmac_sha256 ? 32 : 64; }
inline std::size_t mac_key_bytes(MacKind k) { return k == MacKind::hmac_sha256 ? 32 : 64; }
inline std::size_t enc_key_bytes(CipherKind k) { return k == CipherKind::aes128_gcm ? 16 : 32; }

inline constexpr std::size_t kAeadNonceBytes = 12;
inline constexpr std::size_t kAeadTagBytes = 16;

inline MacKind mac_kind_from_bits(unsigned bits) {
  if (bits == 256) return MacKind::hmac_sha256;
  if (bits == 512) return MacKind::hmac_sha512;
  throw InvalidArgumentError("MAC size must be 256 or 512 bits");
}

inline CipherKind cipher_kind_from_bits(unsigned bits) {
  if (bits == 128) return CipherKind::aes128_gcm;
  if (bits == 256) return CipherKind::aes256_gcm;
  throw InvalidArgumentError("encryption key size must be 128 or 256 bits");
}

/// Keyed MAC output; doubles as the file identifier.
struct FileTag {
  Bytes value;

  std::uint64_t bit_size() const { return value.size() * 8; }
  friend bool operator==(const FileTag&, const FileTag&) = default;
};

/// The two per-file secrets: one key authenticates the plaintext file, the
/// other encrypts the deviations.
struct KeyMaterial {
  Bytes mac_key;
  Bytes enc_key;

  static KeyMaterial random(MacKind mk, CipherKind ck) {
    KeyMaterial out;
    out.mac_key.resize(mac_key_bytes(mk));
    out.enc_key.resize(enc_key_bytes(ck));
    if (RAND_bytes(out.mac_key.data(), static_cast<int>(out.mac_key.size())) != 1 ||
        RAND_bytes(out.enc_key.data(), static_cast<int>(out.enc_key.size())) != 1)
      throw CryptoError("RAND_bytes failed");
    return out;
  }

  void validate(MacKind mk, CipherKind ck) const {
    if (mac_key.size() != mac_key_bytes(mk)) throw InvalidArgumentError("bad MAC key size");
    if (enc_key.size() != enc_key_bytes(ck)) throw InvalidArgumentError("bad encryption key size");
  }
};

inline Bytes sha256(ByteView data) {
  Bytes out(32);
  unsigned int n = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &n, EVP_sha256(), nullptr) != 1 || n != 32)
    throw CryptoError("SHA-256 failed");
  return out;
}

/// Deterministic byte stream: a ChaCha20 keystream whose key is the seed
/// expanded under a fixed domain-separation constant,
///
///   key   = SHA-256("bifrost.prng.v1" || seed)
///   nonce = 16 zero bytes (block counter 0)
///
/// Both sides of the protocol regenerate identical streams from the same
/// seed; golden vectors live in the test data.
class PrngStream {
 public:
  explicit PrngStream(ByteView seed) {
    Bytes material;
    static constexpr char kDomain[] = "bifrost.prng.v1";
    material.insert(material.end(), kDomain, kDomain + sizeof(kDomain) - 1);
    material.insert(material.end(), seed.begin(), seed.end());
    Bytes key = sha256(material);

    ctx_.reset(EVP_CIPHER_CTX_new());
    std::array<std::uint8_t, 16> iv{};  // 4-byte counter || 12-byte nonce, all zero
    if (!ctx_ ||
        EVP_EncryptInit_ex(ctx_.get(), EVP_chacha20(), nullptr, key.data(), iv.data()) != 1)
      throw CryptoError("ChaCha20 init failed");
  }

  std::uint8_t next_byte() {
    if (pos_ == filled_) refill();
    return buf_[pos_++];
  }

  void fill(std::span<std::uint8_t> out) {
    for (auto& b : out) b = next_byte();
  }

  Bytes take(std::size_t n) {
    Bytes out(n);
    fill(out);
    return out;
  }

 private:
  void refill() {
    std::array<std::uint8_t, kBlock> zeros{};
    int outl = 0;
    if (EVP_EncryptUpdate(ctx_.get(), buf_.data(), &outl, zeros.data(), kBlock) != 1 ||
        outl != kBlock)
      throw CryptoError("ChaCha20 keystream failed");
    pos_ = 0;
    filled_ = kBlock;
  }

  struct CtxFree {
    void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
  };
  static constexpr std::size_t kBlock = 4096;
  std::unique_ptr<EVP_CIPHER_CTX, CtxFree> ctx_;
  std::array<std::uint8_t, kBlock> buf_{};
  std::size_t pos_ = 0;
  std::size_t filled_ = 0;
};

/// Draws a uniform integer in [0, range) from a byte stream. Uses the
/// smallest whole number of bytes k with 256^k >= range, reads them
/// big-endian, and rejects values at or above the largest multiple of
/// `range` that fits, so every residue is equally likely.
template <class Stream>
std::uint64_t uniform_int(Stream& stream, std::uint64_t range) {
  if (range == 0) throw InvalidArgumentError("uniform_int range must be positive");
  if (range == 1) return 0;

  unsigned k = 0;
  unsigned __int128 span = 1;
  while (span < range) {
    span <<= 8;
    ++k;
  }
  const unsigned __int128 limit = span - (span % range);

  for (;;) {
    unsigned __int128 v = 0;
    for (unsigned i = 0; i < k; ++i) v = (v << 8) | stream.next_byte();
    if (v < limit) return static_cast<std::uint64_t>(v % range);
  }
}

namespace detail {

inline const EVP_MD* mac_digest(MacKind k) {
  return k == MacKind::hmac_sha256 ? EVP_sha256() : EVP_sha512();
}

struct MacCtxFree {
  void operator()(EVP_MAC_CTX* c) const { EVP_MAC_CTX_free(c); }
};

inline EVP_MAC* hmac_impl() {
  static EVP_MAC* mac = EVP_MAC_fetch(nullptr, "HMAC", nullptr);
  if (!mac) throw CryptoError("HMAC implementation unavailable");
  return mac;
}

}  // namespace detail

inline FileTag mac_tag(MacKind kind, ByteView key, ByteView message) {
  if (key.size() != mac_key_bytes(kind)) throw InvalidArgumentError("bad MAC key size");
  std::unique_ptr<EVP_MAC_CTX, detail::MacCtxFree> ctx(EVP_MAC_CTX_new(detail::hmac_impl()));
  if (!ctx) throw CryptoError("EVP_MAC_CTX_new failed");

  const char* digest = kind == MacKind::hmac_sha256 ? "SHA256" : "SHA512";
  OSSL_PARAM params[] = {
      OSSL_PARAM_construct_utf8_string(OSSL_MAC_PARAM_DIGEST, const_cast<char*>(digest), 0),
      OSSL_PARAM_construct_end()};

  FileTag tag;
  tag.value.resize(tag_bytes(kind));
  std::size_t outl = 0;
  if (EVP_MAC_init(ctx.get(), key.data(), key.size(), params) != 1 ||
      EVP_MAC_update(ctx.get(), message.data(), message.size()) != 1 ||
      EVP_MAC_final(ctx.get(), tag.value.data(), &outl, tag.value.size()) != 1 ||
      outl != tag.value.size())
    throw CryptoError("HMAC computation failed");
  return tag;
}

/// Constant-time comparison of a recomputed tag with the presented one.
inline bool mac_verify(MacKind kind, ByteView key, ByteView message, const FileTag& tag) {
  if (tag.value.size() != tag_bytes(kind)) return false;
  FileTag expect = mac_tag(kind, key, message);
  return CRYPTO_memcmp(expect.value.data(), tag.value.data(), tag.value.size()) == 0;
}

/// AEAD ciphertext of one deviation. Wire layout (see serialize): nonce,
/// ciphertext and auth tag, each with a 16-bit big-endian length prefix.
struct EncryptedDeviation {
  Bytes nonce;
  Bytes ciphertext;
  Bytes auth_tag;

  /// Size charged against cloud storage: nonce + ciphertext + auth tag.
  std::uint64_t stored_size_bits() const {
    return (nonce.size() + ciphertext.size() + auth_tag.size()) * 8;
  }

  Bytes serialize() const {
    ByteWriter w;
    auto field = [&w](const Bytes& b) {
      if (b.size() > 0xffff) throw InvalidArgumentError("field too long for wire format");
      w.u16_be(static_cast<std::uint16_t>(b.size()));
      w.raw(b);
    };
    field(nonce);
    field(ciphertext);
    field(auth_tag);
    return std::move(w.buffer());
  }

  static EncryptedDeviation parse(ByteReader& r) {
    EncryptedDeviation e;
    e.nonce = r.raw(r.u16_be());
    e.ciphertext = r.raw(r.u16_be());
    e.auth_tag = r.raw(r.u16_be());
    return e;
  }

  friend bool operator==(const EncryptedDeviation&, const EncryptedDeviation&) = default;
};

namespace detail {

struct CipherCtxFree {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};

inline const EVP_CIPHER* gcm_cipher(CipherKind k) {
  return k == CipherKind::aes128_gcm ? EVP_aes_128_gcm() : EVP_aes_256_gcm();
}

// Padded layout: a 32-bit big-endian payload length, then the payload
// zero-padded to a whole number of 128-bit blocks. The prefix sits outside
// the padded region, so payloads of 1..16 bytes all occupy one block.
inline Bytes pad_plaintext(ByteView plaintext) {
  ByteWriter w;
  w.u32_be(static_cast<std::uint32_t>(plaintext.size()));
  w.raw(plaintext);
  std::size_t rem = plaintext.size() % 16;
  if (rem != 0) w.buffer().resize(w.buffer().size() + (16 - rem), 0);
  return std::move(w.buffer());
}

inline Bytes unpad_plaintext(ByteView padded) {
  ByteReader r(padded);
  std::uint32_t len = r.u32_be();
  if (r.remaining() != ((static_cast<std::size_t>(len) + 15) / 16) * 16)
    throw FormatError("padded plaintext has wrong block count");
  Bytes out = r.raw(len);
  while (!r.at_end())
    if (r.u8() != 0) throw FormatError("nonzero padding byte");
  return out;
}

}  // namespace detail

inline void check_pad_mode(std::uint32_t pad_block_bits) {
  if (pad_block_bits != 0 && pad_block_bits != 128)
    throw InvalidArgumentError("pad_block_bits must be 0 or 128");
}

/// AES-GCM encryption with a fresh random nonce. With pad_block_bits=128
/// the plaintext is length-prefixed and zero-padded to 128-bit blocks
/// before sealing, which keeps ciphertext size constant across small
/// deviation sizes.
inline EncryptedDeviation encrypt(CipherKind kind, ByteView key, ByteView plaintext,
                                  std::uint32_t pad_block_bits = 0) {
  if (key.size() != enc_key_bytes(kind)) throw InvalidArgumentError("bad encryption key size");
  check_pad_mode(pad_block_bits);

  EncryptedDeviation out;
  out.nonce.resize(kAeadNonceBytes);
  if (RAND_bytes(out.nonce.data(), static_cast<int>(out.nonce.size())) != 1)
    throw CryptoError("RAND_bytes failed");

  Bytes padded;
  ByteView input = plaintext;
  if (pad_block_bits == 128) {
    padded = detail::pad_plaintext(plaintext);
    input = padded;
  }

  std::unique_ptr<EVP_CIPHER_CTX, detail::CipherCtxFree> ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw CryptoError("EVP_CIPHER_CTX_new failed");
  if (EVP_EncryptInit_ex(ctx.get(), detail::gcm_cipher(kind), nullptr, key.data(),
                         out.nonce.data()) != 1)
    throw CryptoError("AEAD init failed");

  out.ciphertext.resize(input.size());
  int outl = 0;
  if (!input.empty() &&
      EVP_EncryptUpdate(ctx.get(), out.ciphertext.data(), &outl, input.data(),
                        static_cast<int>(input.size())) != 1)
    throw CryptoError("AEAD encrypt failed");
  int fin = 0;
  if (EVP_EncryptFinal_ex(ctx.get(), out.ciphertext.data() + outl, &fin) != 1)
    throw CryptoError("AEAD finalize failed");

  out.auth_tag.resize(kAeadTagBytes);
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, static_cast<int>(out.auth_tag.size()),
                          out.auth_tag.data()) != 1)
    throw CryptoError("AEAD tag retrieval failed");
  return out;
}

/// Rejects with DecryptionError on wrong key or any modification of nonce,
/// ciphertext or auth tag.
inline Bytes decrypt(CipherKind kind, ByteView key, const EncryptedDeviation& enc,
                     std::uint32_t pad_block_bits = 0) {
  if (key.size() != enc_key_bytes(kind)) throw InvalidArgumentError("bad encryption key size");
  check_pad_mode(pad_block_bits);
  if (enc.nonce.size() != kAeadNonceBytes || enc.auth_tag.size() != kAeadTagBytes)
    throw DecryptionError("malformed AEAD fields");

  std::unique_ptr<EVP_CIPHER_CTX, detail::CipherCtxFree> ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw CryptoError("EVP_CIPHER_CTX_new failed");
  if (EVP_DecryptInit_ex(ctx.get(), detail::gcm_cipher(kind), nullptr, key.data(),
                         enc.nonce.data()) != 1)
    throw CryptoError("AEAD init failed");

  Bytes plain(enc.ciphertext.size());
  int outl = 0;
  if (!enc.ciphertext.empty() &&
      EVP_DecryptUpdate(ctx.get(), plain.data(), &outl, enc.ciphertext.data(),
                        static_cast<int>(enc.ciphertext.size())) != 1)
    throw DecryptionError("AEAD decrypt failed");
  Bytes tag = enc.auth_tag;
  if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, static_cast<int>(tag.size()),
                          tag.data()) != 1)
    throw CryptoError("AEAD tag set failed");
  int fin = 0;
  if (EVP_DecryptFinal_ex(ctx.get(), plain.data() + outl, &fin) != 1)
    throw DecryptionError("AEAD authentication failed");

  if (pad_block_bits == 128) {
    try {
      return detail::unpad_plaintext(plain);
    } catch (const FormatError& e) {
      throw DecryptionError(std::string("bad padding: ") + e.what());
    }
  }
  return plain;
}

}  // namespace bifrost
