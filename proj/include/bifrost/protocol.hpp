#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "bifrost/bytes.hpp"
#include "bifrost/errors.hpp"
#include "bifrost/gd_store.hpp"

namespace bifrost {

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::uint32_t kMaxFrameBytes = 1u << 30;

enum class MsgKind : std::uint8_t {
  upload = 1,
  download = 2,
  upload_ok = 3,
  object = 4,
  error = 5,
  stats = 6,
  stats_ok = 7,
};

enum class WireErrorCode : std::uint16_t {
  not_found = 1,
  conflict = 2,
  malformed = 3,
  internal = 4,
  bad_request = 5,
};

struct WireMessage {
  MsgKind kind = MsgKind::error;
  Bytes body;

  friend bool operator==(const WireMessage&, const WireMessage&) = default;
};

/// Frame layout: [u32 frame_len][u8 version][u8 kind][body], all integers
/// little-endian; frame_len counts version, kind and body.
inline Bytes encode_frame(const WireMessage& msg) {
  ByteWriter w;
  w.u32_le(static_cast<std::uint32_t>(2 + msg.body.size()));
  w.u8(kProtocolVersion);
  w.u8(static_cast<std::uint8_t>(msg.kind));
  w.raw(msg.body);
  return std::move(w.buffer());
}

inline WireMessage decode_frame(ByteView frame) {
  ByteReader r(frame);
  std::uint32_t len = r.u32_le();
  if (len != frame.size() - 4) throw FormatError("frame length mismatch");
  if (len < 2) throw FormatError("frame too short");
  if (r.u8() != kProtocolVersion) throw FormatError("unsupported protocol version");
  std::uint8_t kind = r.u8();
  if (kind < 1 || kind > 7) throw FormatError("unknown message kind");
  WireMessage msg;
  msg.kind = static_cast<MsgKind>(kind);
  msg.body = r.raw(r.remaining());
  return msg;
}

// ---- message bodies ----

/// Payload shared by UPLOAD and OBJECT: the manifest (which carries the
/// tag), the pieces and the encrypted deviations.
struct ObjectPayload {
  FileManifest manifest;
  std::vector<OutsourcePiece> pieces;
  std::vector<EncryptedDeviation> enc_locals;
};

inline Bytes encode_object_payload(const ObjectPayload& p) {
  ByteWriter w;
  w.raw(p.manifest.serialize());
  w.u32_le(static_cast<std::uint32_t>(p.pieces.size()));
  if (!p.pieces.empty()) {
    w.u32_le(static_cast<std::uint32_t>(p.pieces.front().base.size()));
    w.u8(static_cast<std::uint8_t>(p.pieces.front().base.width()));
    for (const auto& piece : p.pieces) {
      if (piece.base.size() != p.pieces.front().base.size() ||
          piece.base.width() != p.pieces.front().base.width())
        throw InvalidArgumentError("pieces must share one geometry");
      w.raw(piece.base.pack());
    }
  }
  w.u32_le(static_cast<std::uint32_t>(p.enc_locals.size()));
  for (const auto& e : p.enc_locals) {
    Bytes wire = e.serialize();
    w.u32_le(static_cast<std::uint32_t>(wire.size()));
    w.raw(wire);
  }
  return std::move(w.buffer());
}

inline ObjectPayload decode_object_payload(ByteView body) {
  ByteReader r(body);
  ObjectPayload p;
  p.manifest = FileManifest::parse(r);
  std::uint32_t n_pieces = r.u32_le();
  if (n_pieces > 0) {
    std::uint32_t syms = r.u32_le();
    std::uint8_t width = r.u8();
    if (width == 0 || width > kMaxSymbolBits) throw FormatError("bad symbol width");
    const std::size_t packed = (static_cast<std::uint64_t>(syms) * width + 7) / 8;
    p.pieces.reserve(n_pieces);
    for (std::uint32_t i = 0; i < n_pieces; ++i)
      p.pieces.push_back(OutsourcePiece{SymbolString::unpack(r.view(packed), syms, width)});
  }
  std::uint32_t n_locals = r.u32_le();
  p.enc_locals.reserve(n_locals);
  for (std::uint32_t i = 0; i < n_locals; ++i) {
    std::uint32_t len = r.u32_le();
    ByteReader er(r.view(len));
    p.enc_locals.push_back(EncryptedDeviation::parse(er));
    er.expect_end();
  }
  r.expect_end();
  return p;
}

inline Bytes encode_download_body(ByteView tag) {
  ByteWriter w;
  if (tag.size() > 0xffff) throw InvalidArgumentError("tag too long");
  w.u16_le(static_cast<std::uint16_t>(tag.size()));
  w.raw(tag);
  return std::move(w.buffer());
}

inline Bytes decode_download_body(ByteView body) {
  ByteReader r(body);
  Bytes tag = r.raw(r.u16_le());
  r.expect_end();
  return tag;
}

inline Bytes encode_error_body(WireErrorCode code, const std::string& message) {
  ByteWriter w;
  w.u16_le(static_cast<std::uint16_t>(code));
  w.u32_le(static_cast<std::uint32_t>(message.size()));
  w.raw(ByteView(reinterpret_cast<const std::uint8_t*>(message.data()), message.size()));
  return std::move(w.buffer());
}

inline std::pair<WireErrorCode, std::string> decode_error_body(ByteView body) {
  ByteReader r(body);
  auto code = static_cast<WireErrorCode>(r.u16_le());
  std::uint32_t len = r.u32_le();
  Bytes msg = r.raw(len);
  r.expect_end();
  return {code, std::string(msg.begin(), msg.end())};
}

inline Bytes encode_stats_body(const StoreStats& st) {
  ByteWriter w;
  w.u64_le(st.unique_base_bits);
  w.u64_le(st.dedup_record_bits);
  w.u64_le(st.enc_local_bits);
  w.u64_le(st.tag_bits);
  w.u64_le(st.file_count);
  w.u64_le(st.c_size);
  w.u64_le(st.unique_records);
  w.u64_le(st.deduped_records);
  return std::move(w.buffer());
}

inline StoreStats decode_stats_body(ByteView body) {
  ByteReader r(body);
  StoreStats st;
  st.unique_base_bits = r.u64_le();
  st.dedup_record_bits = r.u64_le();
  st.enc_local_bits = r.u64_le();
  st.tag_bits = r.u64_le();
  st.file_count = r.u64_le();
  st.c_size = r.u64_le();
  st.unique_records = r.u64_le();
  st.deduped_records = r.u64_le();
  r.expect_end();
  return st;
}

// ---- sockets ----

namespace detail {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { close_fd(); }
  Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
  Socket& operator=(Socket&& other) noexcept {
    if (this != &other) {
      close_fd();
      fd_ = other.fd_;
      other.fd_ = -1;
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

  void send_all(ByteView data) const {
    std::size_t sent = 0;
    while (sent < data.size()) {
      ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n <= 0) throw TransportError("send failed");
      sent += static_cast<std::size_t>(n);
    }
  }

  /// Reads exactly n bytes. Returns false on clean EOF at the first byte;
  /// throws on EOF mid-read or on socket errors.
  bool recv_exact(std::span<std::uint8_t> out) const {
    std::size_t got = 0;
    while (got < out.size()) {
      ssize_t n = ::recv(fd_, out.data() + got, out.size() - got, 0);
      if (n == 0) {
        if (got == 0) return false;
        throw TransportError("connection closed mid-frame");
      }
      if (n < 0) throw TransportError("recv failed");
      got += static_cast<std::size_t>(n);
    }
    return true;
  }

 private:
  void close_fd() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  int fd_ = -1;
};

inline std::pair<std::string, std::uint16_t> split_host_port(const std::string& address) {
  auto pos = address.rfind(':');
  if (pos == std::string::npos || pos + 1 == address.size())
    throw InvalidArgumentError("address must be host:port");
  std::string host = address.substr(0, pos);
  unsigned long port = 0;
  try {
    port = std::stoul(address.substr(pos + 1));
  } catch (const std::exception&) {
    throw InvalidArgumentError("bad port in address");
  }
  if (port > 0xffff) throw InvalidArgumentError("bad port in address");
  return {host.empty() ? "0.0.0.0" : host, static_cast<std::uint16_t>(port)};
}

inline Socket connect_to(const std::string& address) {
  auto [host, port] = split_host_port(address);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
    throw TransportError("cannot resolve " + address);
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    freeaddrinfo(res);
    throw TransportError("socket creation failed");
  }
  Socket sock(fd);
  int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
  freeaddrinfo(res);
  if (rc != 0) throw TransportError("cannot connect to " + address);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return sock;
}

/// Reads one frame; returns false on clean EOF between frames.
inline bool recv_frame(const Socket& sock, WireMessage& out) {
  std::array<std::uint8_t, 4> len_bytes;
  if (!sock.recv_exact(len_bytes)) return false;
  ByteReader lr(len_bytes);
  std::uint32_t len = lr.u32_le();
  if (len < 2 || len > kMaxFrameBytes) throw FormatError("bad frame length");
  Bytes rest(len);
  if (!sock.recv_exact(rest)) throw TransportError("connection closed mid-frame");
  Bytes frame;
  frame.reserve(4 + len);
  frame.insert(frame.end(), len_bytes.begin(), len_bytes.end());
  frame.insert(frame.end(), rest.begin(), rest.end());
  out = decode_frame(frame);
  return true;
}

}  // namespace detail

/// Storage service endpoint: accepts connections on a host:port, handles
/// one request/response pair per frame, any number of concurrent sessions.
/// Malformed frames are answered with ERROR and the connection is closed;
/// nothing a client sends can take the store down.
class Server {
 public:
  Server(const std::string& listen_address, Store& store) : store_(store) {
    auto [host, port] = detail::split_host_port(listen_address);

    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError("socket creation failed");
    listener_ = detail::Socket(fd);
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      hostent* ent = ::gethostbyname(host.c_str());
      if (!ent || ent->h_addrtype != AF_INET)
        throw TransportError("cannot resolve listen address " + host);
      std::memcpy(&addr.sin_addr, ent->h_addr_list[0], sizeof(addr.sin_addr));
    }
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
      throw TransportError("bind failed for " + listen_address);
    if (::listen(fd, 64) != 0) throw TransportError("listen failed");

    sockaddr_in bound{};
    socklen_t blen = sizeof(bound);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &blen);
    port_ = ntohs(bound.sin_port);

    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  ~Server() { stop(); }
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::uint16_t port() const { return port_; }
  std::string address() const { return "127.0.0.1:" + std::to_string(port_); }

  void stop() {
    bool expected = false;
    if (!stopping_.compare_exchange_strong(expected, true)) return;
    ::shutdown(listener_.fd(), SHUT_RDWR);
    {
      std::lock_guard lock(mu_);
      for (int fd : session_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    while (active_sessions_.load() > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }

 private:
  void accept_loop() {
    while (!stopping_.load()) {
      int fd = ::accept(listener_.fd(), nullptr, nullptr);
      if (fd < 0) {
        if (stopping_.load()) break;
        continue;
      }
      active_sessions_.fetch_add(1);
      {
        std::lock_guard lock(mu_);
        session_fds_.insert(fd);
      }
      std::thread([this, fd] {
        session(detail::Socket(fd));
        {
          std::lock_guard lock(mu_);
          session_fds_.erase(fd);
        }
        active_sessions_.fetch_sub(1);
      }).detach();
    }
  }

  void session(detail::Socket sock) {
    int one = 1;
    ::setsockopt(sock.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    for (;;) {
      WireMessage request;
      try {
        if (!detail::recv_frame(sock, request)) return;
      } catch (const FormatError& e) {
        try {
          sock.send_all(encode_frame(
              {MsgKind::error, encode_error_body(WireErrorCode::malformed, e.what())}));
        } catch (const TransportError&) {
        }
        return;
      } catch (const TransportError&) {
        return;
      }

      WireMessage response = handle(request);
      try {
        sock.send_all(encode_frame(response));
      } catch (const TransportError&) {
        return;
      }
    }
  }

  WireMessage handle(const WireMessage& request) {
    try {
      switch (request.kind) {
        case MsgKind::upload: {
          ObjectPayload p = decode_object_payload(request.body);
          store_.put_object(p.manifest, p.pieces, p.enc_locals);
          return {MsgKind::upload_ok, {}};
        }
        case MsgKind::download: {
          Bytes tag = decode_download_body(request.body);
          Store::ObjectData data = store_.get_object(tag);
          return {MsgKind::object,
                  encode_object_payload({data.manifest, data.pieces, data.enc_locals})};
        }
        case MsgKind::stats:
          return {MsgKind::stats_ok, encode_stats_body(store_.stats())};
        default:
          return {MsgKind::error,
                  encode_error_body(WireErrorCode::bad_request, "unexpected message kind")};
      }
    } catch (const NotFoundError& e) {
      return {MsgKind::error, encode_error_body(WireErrorCode::not_found, e.what())};
    } catch (const ConflictError& e) {
      return {MsgKind::error, encode_error_body(WireErrorCode::conflict, e.what())};
    } catch (const FormatError& e) {
      return {MsgKind::error, encode_error_body(WireErrorCode::malformed, e.what())};
    } catch (const InvalidArgumentError& e) {
      return {MsgKind::error, encode_error_body(WireErrorCode::bad_request, e.what())};
    } catch (const LengthMismatchError& e) {
      return {MsgKind::error, encode_error_body(WireErrorCode::bad_request, e.what())};
    } catch (const Error& e) {
      std::fprintf(stderr, "bifrost-serve: request failed: %s\n", e.what());
      return {MsgKind::error, encode_error_body(WireErrorCode::internal, e.what())};
    } catch (const std::exception& e) {
      std::fprintf(stderr, "bifrost-serve: request failed: %s\n", e.what());
      return {MsgKind::error, encode_error_body(WireErrorCode::internal, "internal error")};
    }
  }

  Store& store_;
  detail::Socket listener_;
  std::uint16_t port_ = 0;
  std::thread accept_thread_;
  std::atomic<bool> stopping_{false};
  std::atomic<int> active_sessions_{0};
  std::mutex mu_;
  std::set<int> session_fds_;
};

// ---- client side ----

namespace detail {

[[noreturn]] inline void raise_wire_error(ByteView body) {
  auto [code, message] = decode_error_body(body);
  switch (code) {
    case WireErrorCode::not_found:
      throw NotFoundError(message);
    case WireErrorCode::conflict:
      throw ConflictError(message);
    case WireErrorCode::malformed:
      throw FormatError(message);
    case WireErrorCode::bad_request:
      throw InvalidArgumentError(message);
    default:
      throw Error("server error: " + message);
  }
}

inline WireMessage request_response(const std::string& address, const WireMessage& request,
                                    MsgKind expected) {
  Socket sock = connect_to(address);
  sock.send_all(encode_frame(request));
  WireMessage response;
  if (!recv_frame(sock, response)) throw TransportError("server closed the connection");
  if (response.kind == MsgKind::error) raise_wire_error(response.body);
  if (response.kind != expected) throw TransportError("unexpected response kind");
  return response;
}

}  // namespace detail

inline void client_upload(const std::string& address, const FileManifest& manifest,
                          std::span<const OutsourcePiece> pieces,
                          std::span<const EncryptedDeviation> enc_locals) {
  ObjectPayload payload;
  payload.manifest = manifest;
  payload.pieces.assign(pieces.begin(), pieces.end());
  payload.enc_locals.assign(enc_locals.begin(), enc_locals.end());
  detail::request_response(address, {MsgKind::upload, encode_object_payload(payload)},
                           MsgKind::upload_ok);
}

inline Store::ObjectData client_download(const std::string& address, ByteView tag) {
  WireMessage response = detail::request_response(
      address, {MsgKind::download, encode_download_body(tag)}, MsgKind::object);
  ObjectPayload p = decode_object_payload(response.body);
  return {std::move(p.manifest), std::move(p.pieces), std::move(p.enc_locals)};
}

inline StoreStats client_stats(const std::string& address) {
  WireMessage response =
      detail::request_response(address, {MsgKind::stats, {}}, MsgKind::stats_ok);
  return decode_stats_body(response.body);
}

}  // namespace bifrost
