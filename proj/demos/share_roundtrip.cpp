// Full sharing flow against an in-process service: upload a buffer, hand
// the token across, download and verify. Build and run:
//   ./build/demos/share_roundtrip

#include <cstdio>
#include <filesystem>

#include "bifrost/bifrost.hpp"

using namespace bifrost;

int main() {
  const auto dir = std::filesystem::temp_directory_path() / "bifrost-demo-store";
  std::filesystem::remove_all(dir);

  SharingOptions options;  // 2048-bit chunks, 12 deletions, SHA-256 / AES-128
  StoreConfig store_cfg;
  store_cfg.base_symbols = options.params.symbols_per_chunk() - options.deletions_per_chunk;
  store_cfg.symbol_bits = options.params.symbol_bits;

  Store store = Store::create(dir, store_cfg);
  Server server("127.0.0.1:0", store);
  std::printf("service on %s\n", server.address().c_str());

  Bytes file;
  for (int i = 0; i < 100000; ++i) file.push_back(static_cast<std::uint8_t>(i * 31 + i / 251));

  KeyMaterial keys = KeyMaterial::random(options.mac_kind, options.cipher_kind);
  ShareToken token = sender_store(file, options, keys, server.address());
  std::printf("uploaded %zu bytes, token carries %llu bits\n", file.size(),
              static_cast<unsigned long long>(token.bit_size()));

  Bytes fetched = receiver_fetch(token, server.address());
  std::printf("fetched %zu bytes, %s\n", fetched.size(),
              fetched == file ? "verified" : "MISMATCH");

  StoreStats st = store.stats();
  std::printf("stored: %llu unique bases, %llu deduped records, C_size %llu bits\n",
              static_cast<unsigned long long>(st.unique_records),
              static_cast<unsigned long long>(st.deduped_records),
              static_cast<unsigned long long>(st.c_size));

  server.stop();
  std::filesystem::remove_all(dir);
  return fetched == file ? 0 : 1;
}
