// bifrost command line: storage service, upload/download flows, metrics.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "bifrost/bifrost.hpp"

namespace {

std::atomic<bool> g_stop{false};

void handle_signal(int) { g_stop.store(true); }

bifrost::Bytes read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw bifrost::Error("cannot read " + path);
  bifrost::Bytes out(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!in) throw bifrost::Error("cannot read " + path);
  return out;
}

void write_file_bytes(const std::string& path, const bifrost::Bytes& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
  if (!out) throw bifrost::Error("cannot write " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bifrost - private file sharing over a deduplicating store"};
  app.require_subcommand(1);

  // serve
  auto* serve = app.add_subcommand("serve", "run the storage service");
  std::string listen = "127.0.0.1:7070";
  std::string store_dir;
  unsigned chunk_bits = 2048, symbol_bits = 8, ndel = 12, t_max = 8, pointer_bits = 32,
           serve_mac_bits = 256;
  serve->add_option("--listen", listen, "host:port to listen on");
  serve->add_option("--store-dir", store_dir, "store directory (or $BIFROST_STORE_DIR)");
  serve->add_option("--chunk-bits", chunk_bits, "chunk size in bits");
  serve->add_option("--symbol-bits", symbol_bits, "symbol width in bits");
  serve->add_option("--ndel", ndel, "deletions per chunk the store is sized for");
  serve->add_option("--t-max", t_max, "edit-distance cutoff for dedup matching");
  serve->add_option("--pointer-bits", pointer_bits, "priced size of a base reference");
  serve->add_option("--mac-bits", serve_mac_bits, "tag size served (256 or 512)");

  // put
  auto* put = app.add_subcommand("put", "upload a file, emit a share token");
  std::string put_file, server_address, token_out = "share.tok";
  unsigned put_ndel = 12, put_chunk_bits = 2048, put_symbol_bits = 8, mac_bits = 256,
           enc_bits = 128;
  bool pad = false;
  put->add_option("file", put_file, "file to upload")->required();
  put->add_option("--server", server_address, "service host:port")->required();
  put->add_option("--ndel", put_ndel, "symbols deleted per chunk");
  put->add_option("--chunk-bits", put_chunk_bits, "chunk size in bits");
  put->add_option("--symbol-bits", put_symbol_bits, "symbol width in bits");
  put->add_option("--mac-bits", mac_bits, "MAC size: 256 or 512");
  put->add_option("--enc-bits", enc_bits, "encryption key size: 128 or 256");
  put->add_flag("--pad", pad, "pad encrypted deviations to 128-bit blocks");
  put->add_option("--token-out", token_out, "where to write the share token");

  // get
  auto* get = app.add_subcommand("get", "download and verify a shared file");
  std::string token_path, out_path;
  get->add_option("--token", token_path, "share token file")->required();
  get->add_option("--server", server_address, "service host:port")->required();
  get->add_option("--out", out_path, "output file")->required();

  // stats
  auto* stats = app.add_subcommand("stats", "query storage accounting");
  stats->add_option("--server", server_address, "service host:port")->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "run a parameter sweep, write CSV");
  std::string config_path, csv_out = "results.csv";
  sweep->add_option("--config", config_path, "sweep config file")->required();
  sweep->add_option("--out", csv_out, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      if (store_dir.empty()) {
        const char* env = std::getenv("BIFROST_STORE_DIR");
        if (env) store_dir = env;
      }
      if (store_dir.empty())
        throw bifrost::InvalidArgumentError(
            "--store-dir or BIFROST_STORE_DIR is required");

      bifrost::ChunkingParams params{chunk_bits, static_cast<std::uint8_t>(symbol_bits)};
      params.validate();
      if (ndel >= params.symbols_per_chunk())
        throw bifrost::InvalidArgumentError("--ndel must stay below the chunk symbol count");

      bifrost::StoreConfig cfg;
      cfg.base_symbols = params.symbols_per_chunk() - ndel;
      cfg.symbol_bits = static_cast<std::uint8_t>(symbol_bits);
      cfg.match_cutoff = t_max;
      cfg.pointer_bits = pointer_bits;
      cfg.tag_size =
          static_cast<std::uint16_t>(bifrost::tag_bytes(bifrost::mac_kind_from_bits(serve_mac_bits)));

      bifrost::Store store = bifrost::Store::open_or_create(store_dir, cfg);
      bifrost::Server server(listen, store);
      std::fprintf(stderr, "bifrost-serve: listening on %s, store at %s\n",
                   server.address().c_str(), store_dir.c_str());

      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      return 0;
    }

    if (*put) {
      bifrost::SharingOptions options;
      options.params =
          bifrost::ChunkingParams{put_chunk_bits, static_cast<std::uint8_t>(put_symbol_bits)};
      options.deletions_per_chunk = put_ndel;
      options.mac_kind = bifrost::mac_kind_from_bits(mac_bits);
      options.cipher_kind = bifrost::cipher_kind_from_bits(enc_bits);
      options.pad_block_bits = pad ? 128 : 0;

      bifrost::KeyMaterial keys =
          bifrost::KeyMaterial::random(options.mac_kind, options.cipher_kind);
      bifrost::Bytes file = read_file_bytes(put_file);
      bifrost::ShareToken token =
          bifrost::sender_store(file, options, keys, server_address);
      write_file_bytes(token_out, token.serialize());

      std::printf("stored %zu bytes as %s\n", file.size(), bifrost::to_hex(token.tag).c_str());
      std::printf("token: %s (%llu payload bits)\n", token_out.c_str(),
                  static_cast<unsigned long long>(token.bit_size()));
      return 0;
    }

    if (*get) {
      bifrost::ShareToken token = bifrost::ShareToken::parse(read_file_bytes(token_path));
      bifrost::Bytes file = bifrost::receiver_fetch(token, server_address);
      write_file_bytes(out_path, file);
      std::printf("recovered %zu bytes, tag verified\n", file.size());
      return 0;
    }

    if (*stats) {
      bifrost::StoreStats st = bifrost::client_stats(server_address);
      std::printf("files:              %llu\n", static_cast<unsigned long long>(st.file_count));
      std::printf("unique bases:       %llu (%llu bits)\n",
                  static_cast<unsigned long long>(st.unique_records),
                  static_cast<unsigned long long>(st.unique_base_bits));
      std::printf("deduped records:    %llu (%llu bits)\n",
                  static_cast<unsigned long long>(st.deduped_records),
                  static_cast<unsigned long long>(st.dedup_record_bits));
      std::printf("encrypted locals:   %llu bits\n",
                  static_cast<unsigned long long>(st.enc_local_bits));
      std::printf("tags:               %llu bits\n",
                  static_cast<unsigned long long>(st.tag_bits));
      std::printf("C_size:             %llu bits\n",
                  static_cast<unsigned long long>(st.c_size));
      return 0;
    }

    if (*sweep) {
      bifrost::SweepConfig cfg = bifrost::SweepConfig::from_file(config_path);
      std::string csv = bifrost::run_sweep(cfg);
      std::ofstream out(csv_out, std::ios::trunc);
      out << csv;
      if (!out) throw bifrost::Error("cannot write " + csv_out);
      std::printf("wrote %s\n", csv_out.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "bifrost: %s\n", e.what());
    return 1;
  }
  return 0;
}
