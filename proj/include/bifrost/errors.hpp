#pragma once

#include <stdexcept>
#include <string>

namespace bifrost {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Two sequences that must have equal length (or width) do not.
class LengthMismatchError : public Error {
 public:
  using Error::Error;
};

/// A parameter violates a documented precondition.
class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

/// A serialized structure cannot be parsed (bad framing, bad field).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// AEAD decryption rejected the ciphertext (wrong key or modified data).
class DecryptionError : public Error {
 public:
  using Error::Error;
};

/// The reconstructed file does not match its authentication tag.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Requested object does not exist.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// An object with the same identifier but different content already exists.
class ConflictError : public Error {
 public:
  using Error::Error;
};

/// Persisted state is internally inconsistent.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// Socket-level failure while talking to the storage service.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Failure inside the crypto backend (should not happen in normal use).
class CryptoError : public Error {
 public:
  using Error::Error;
};

}  // namespace bifrost
