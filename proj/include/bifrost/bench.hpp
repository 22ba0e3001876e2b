#pragma once

#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bifrost/bytes.hpp"
#include "bifrost/crypto.hpp"
#include "bifrost/errors.hpp"
#include "bifrost/gd_store.hpp"
#include "bifrost/protocol.hpp"
#include "bifrost/sharing.hpp"

namespace bifrost {

/// Compression ratio: stored bits (bases, deltas, encrypted deviations)
/// plus the per-file identifier overhead, over the original database size.
/// Lower is better; 1.0 means the service saves nothing.
inline double compression_ratio(const StoreStats& stats, std::uint64_t database_bits) {
  if (database_bits == 0) throw InvalidArgumentError("database size must be positive");
  return static_cast<double>(stats.c_size + stats.tag_bits) / static_cast<double>(database_bits);
}

/// Private-channel cost per shared file: the identifier plus the two keys.
inline std::uint64_t transmission_size_bits(std::uint64_t fid_bits, std::uint64_t mac_key_bits,
                                            std::uint64_t enc_key_bits) {
  return fid_bits + mac_key_bits + enc_key_bits;
}

/// Synthetic corpus: clustered files with controllable similarity, a
/// stand-in for real workloads. Fully determined by the seed.
struct CorpusSpec {
  std::uint64_t seed = 1;
  std::uint32_t file_count = 200;
  std::uint32_t file_bytes = 8192;
  std::uint32_t cluster_count = 20;
  double mutation_rate = 0.01;

  void validate() const {
    if (file_bytes == 0) throw InvalidArgumentError("file_bytes must be positive");
    if (cluster_count == 0) throw InvalidArgumentError("cluster_count must be positive");
    if (mutation_rate < 0.0 || mutation_rate > 1.0)
      throw InvalidArgumentError("mutation_rate must be in [0,1]");
  }
};

namespace detail {

inline Bytes seed_material(const char* label, std::uint64_t seed) {
  Bytes m(label, label + std::string::traits_type::length(label));
  for (int i = 7; i >= 0; --i) m.push_back(static_cast<std::uint8_t>(seed >> (8 * i)));
  return m;
}

inline bool bernoulli(PrngStream& stream, std::uint64_t threshold) {
  std::uint32_t draw = 0;
  for (int i = 0; i < 4; ++i) draw = (draw << 8) | stream.next_byte();
  return draw < threshold;
}

}  // namespace detail

/// Cluster prototypes plus per-file noise: each file copies its cluster's
/// prototype, substitutes bytes at the mutation rate and transposes
/// adjacent bytes at a quarter of it.
inline std::vector<Bytes> generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  PrngStream stream(detail::seed_material("bifrost.corpus.v1:", spec.seed));

  std::vector<Bytes> prototypes(spec.cluster_count);
  for (auto& proto : prototypes) proto = stream.take(spec.file_bytes);

  const auto sub_threshold = static_cast<std::uint64_t>(spec.mutation_rate * 4294967296.0);
  const auto swap_threshold = sub_threshold / 4;

  std::vector<Bytes> files;
  files.reserve(spec.file_count);
  for (std::uint32_t i = 0; i < spec.file_count; ++i) {
    Bytes file = prototypes[i % spec.cluster_count];
    for (auto& byte : file)
      if (detail::bernoulli(stream, sub_threshold)) byte = stream.next_byte();
    for (std::size_t p = 0; p + 1 < file.size(); ++p)
      if (detail::bernoulli(stream, swap_threshold)) std::swap(file[p], file[p + 1]);
    files.push_back(std::move(file));
  }
  return files;
}

struct SweepConfig {
  CorpusSpec corpus;
  std::vector<std::uint32_t> deletions = {2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 26};
  std::vector<std::uint32_t> chunk_bits = {512, 1024, 2048};
  std::vector<std::uint32_t> mac_bits = {256, 512};
  std::vector<std::uint32_t> enc_bits = {128, 256};
  std::vector<bool> padding = {false, true};
  std::uint32_t match_cutoff = 8;
  std::uint32_t pointer_bits = 32;

  void validate() const {
    corpus.validate();
    if (deletions.empty() || chunk_bits.empty() || mac_bits.empty() || enc_bits.empty() ||
        padding.empty())
      throw InvalidArgumentError("sweep axes must be non-empty");
    for (std::uint32_t cb : chunk_bits) {
      if (cb == 0 || cb % 8 != 0) throw InvalidArgumentError("chunk_bits must be multiples of 8");
      for (std::uint32_t nd : deletions)
        if (nd >= cb / 8) throw InvalidArgumentError("deletions must stay below chunk symbols");
    }
    for (std::uint32_t mb : mac_bits) mac_kind_from_bits(mb);
    for (std::uint32_t eb : enc_bits) cipher_kind_from_bits(eb);
  }

  /// Flat key=value config, one pair per line. Lists are comma separated,
  /// optionally bracketed; # starts a comment. Unknown keys are rejected.
  static SweepConfig parse(const std::string& text);
  static SweepConfig from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgumentError("cannot read config file: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(std::string value) {
  value = trim(value);
  if (!value.empty() && value.front() == '[' && value.back() == ']')
    value = value.substr(1, value.size() - 2);
  std::vector<std::string> parts;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

inline std::uint64_t parse_u64(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    std::uint64_t v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgumentError("bad integer for " + key + ": " + s);
  }
}

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "on" || s == "true" || s == "1" || s == "yes") return true;
  if (s == "off" || s == "false" || s == "0" || s == "no") return false;
  throw InvalidArgumentError("bad boolean for " + key + ": " + s);
}

}  // namespace detail

inline SweepConfig SweepConfig::parse(const std::string& text) {
  SweepConfig cfg;
  std::stringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidArgumentError("expected key = value: " + line);
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));

    auto u32_list = [&](std::vector<std::uint32_t>& out) {
      out.clear();
      for (const auto& item : detail::split_list(value))
        out.push_back(static_cast<std::uint32_t>(detail::parse_u64(item, key)));
      if (out.empty()) throw InvalidArgumentError("empty list for " + key);
    };

    if (key == "corpus_seed") {
      cfg.corpus.seed = detail::parse_u64(value, key);
    } else if (key == "corpus_files") {
      cfg.corpus.file_count = static_cast<std::uint32_t>(detail::parse_u64(value, key));
    } else if (key == "corpus_file_bytes") {
      cfg.corpus.file_bytes = static_cast<std::uint32_t>(detail::parse_u64(value, key));
    } else if (key == "corpus_clusters") {
      cfg.corpus.cluster_count = static_cast<std::uint32_t>(detail::parse_u64(value, key));
    } else if (key == "corpus_mutation_rate") {
      try {
        cfg.corpus.mutation_rate = std::stod(value);
      } catch (const std::exception&) {
        throw InvalidArgumentError("bad number for corpus_mutation_rate: " + value);
      }
    } else if (key == "n_del") {
      u32_list(cfg.deletions);
    } else if (key == "chunk_bits") {
      u32_list(cfg.chunk_bits);
    } else if (key == "mac_bits") {
      u32_list(cfg.mac_bits);
    } else if (key == "enc_key_bits") {
      u32_list(cfg.enc_bits);
    } else if (key == "padding") {
      cfg.padding.clear();
      for (const auto& item : detail::split_list(value))
        cfg.padding.push_back(detail::parse_bool(item, key));
      if (cfg.padding.empty()) throw InvalidArgumentError("empty list for padding");
    } else if (key == "match_cutoff") {
      cfg.match_cutoff = static_cast<std::uint32_t>(detail::parse_u64(value, key));
    } else if (key == "pointer_bits") {
      cfg.pointer_bits = static_cast<std::uint32_t>(detail::parse_u64(value, key));
    } else {
      throw InvalidArgumentError("unknown config key: " + key);
    }
  }
  cfg.validate();
  return cfg;
}

namespace detail {

inline KeyMaterial sweep_keys(std::uint64_t corpus_seed, std::size_t cell, std::size_t file,
                              MacKind mk, CipherKind ck, Bytes& master_seed_out,
                              unsigned seed_bits) {
  Bytes material = seed_material("bifrost.sweep.v1:", corpus_seed);
  for (int i = 3; i >= 0; --i) material.push_back(static_cast<std::uint8_t>(cell >> (8 * i)));
  for (int i = 3; i >= 0; --i) material.push_back(static_cast<std::uint8_t>(file >> (8 * i)));
  PrngStream stream(material);
  KeyMaterial keys;
  keys.mac_key = stream.take(mac_key_bytes(mk));
  keys.enc_key = stream.take(enc_key_bytes(ck));
  master_seed_out = stream.take(seed_bits / 8);
  return keys;
}

}  // namespace detail

/// Runs the full pipeline once per cell: fresh store, loopback service,
/// every corpus file uploaded — and reports one CSV row per cell. Rows are
/// bit-exact across runs for a fixed config: keys and seeds derive from
/// the corpus seed, and the metrics depend only on sizes.
inline std::string run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  const std::vector<Bytes> corpus = generate_corpus(cfg.corpus);
  std::uint64_t database_bits = 0;
  for (const auto& f : corpus) database_bits += f.size() * 8;
  if (database_bits == 0) throw InvalidArgumentError("corpus is empty");

  std::ostringstream csv;
  csv << "# bifrost sweep v1\n";
  csv << "# corpus_seed=" << cfg.corpus.seed << " corpus_files=" << cfg.corpus.file_count
      << " corpus_file_bytes=" << cfg.corpus.file_bytes
      << " corpus_clusters=" << cfg.corpus.cluster_count;
  {
    char rate[32];
    std::snprintf(rate, sizeof(rate), "%.6f", cfg.corpus.mutation_rate);
    csv << " corpus_mutation_rate=" << rate << "\n";
  }
  csv << "# match_cutoff=" << cfg.match_cutoff << " pointer_bits=" << cfg.pointer_bits << "\n";
  csv << "n_del,chunk_bits,mac_bits,enc_bits,padding,chi,tau_bits,tau_grouped100_bits,"
         "s_dev_bits\n";

  const auto base_dir = std::filesystem::temp_directory_path() /
                        ("bifrost-sweep-" + std::to_string(::getpid()));
  std::filesystem::create_directories(base_dir);

  std::size_t cell = 0;
  for (std::uint32_t cb : cfg.chunk_bits) {
    for (std::uint32_t nd : cfg.deletions) {
      for (std::uint32_t mb : cfg.mac_bits) {
        for (std::uint32_t eb : cfg.enc_bits) {
          for (bool pad : cfg.padding) {
            const MacKind mk = mac_kind_from_bits(mb);
            const CipherKind ck = cipher_kind_from_bits(eb);

            SharingOptions options;
            options.params = ChunkingParams{cb, 8};
            options.deletions_per_chunk = nd;
            options.mac_kind = mk;
            options.cipher_kind = ck;
            options.pad_block_bits = pad ? 128 : 0;

            StoreConfig store_cfg;
            store_cfg.base_symbols = cb / 8 - nd;
            store_cfg.symbol_bits = 8;
            store_cfg.match_cutoff = cfg.match_cutoff;
            store_cfg.pointer_bits = cfg.pointer_bits;
            store_cfg.tag_size = static_cast<std::uint16_t>(tag_bytes(mk));

            const auto dir = base_dir / ("cell-" + std::to_string(cell));
            StoreStats stats;
            {
              Store store = Store::create(dir, store_cfg);
              Server server("127.0.0.1:0", store);
              for (std::size_t f = 0; f < corpus.size(); ++f) {
                Bytes master;
                KeyMaterial keys = detail::sweep_keys(cfg.corpus.seed, cell, f, mk, ck, master,
                                                      options.seed_bits);
                options.master_seed = master;
                sender_store(corpus[f], options, keys, server.address());
              }
              stats = client_stats(server.address());
              server.stop();
            }
            std::filesystem::remove_all(dir);

            const double chi = compression_ratio(stats, database_bits);
            const std::uint64_t tau = transmission_size_bits(mb, mb, eb);
            const std::uint64_t chunks_per_file =
                (static_cast<std::uint64_t>(cfg.corpus.file_bytes) * 8 + cb - 1) / cb;
            const std::uint64_t tau_grouped =
                ((chunks_per_file + 99) / 100) * mb + mb + eb;
            const std::uint64_t s_dev = options.seed_bits + 8ull * nd;

            char chi_str[32];
            std::snprintf(chi_str, sizeof(chi_str), "%.6f", chi);
            csv << nd << ',' << cb << ',' << mb << ',' << eb << ',' << (pad ? 1 : 0) << ','
                << chi_str << ',' << tau << ',' << tau_grouped << ',' << s_dev << "\n";
            ++cell;
          }
        }
      }
    }
  }
  std::filesystem::remove_all(base_dir);
  return csv.str();
}

}  // namespace bifrost
