#pragma once

// File formats: the PNPD dataset container, the PNPW named-tensor
// container (weights and filter caches), key=value configs and CSV output.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pnpcsi/channel_model.hpp"
#include "pnpcsi/denoiser.hpp"

namespace pnpcsi {

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kTensorFileVersion = 1;

// Header: "PNPD", version, N_s, N_t, crop, count (all u32 LE). Each sample
// is clean H (f32 re/im interleaved, row-major), sigma2 (f32), noisy H.
// Samples are stored in train|val|test order and followed by a trailer
// "SPLT" n_train n_val n_test. Files without the trailer load as test-only.
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const;
};

// "PNPW", version u32, count u32; per tensor: name length u16, UTF-8 name,
// ndim u8, dims u32[ndim], f32 LE payload.
void write_tensors(const std::string& path,
                   const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(const std::string& path);
void write_tensors(std::ostream& os, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(std::istream& is);

const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors,
                               const std::string& name);

// conv<i>.weight [cout, cin, k, k], conv<i>.bias [cout], plus an "arch"
// descriptor tensor.
std::vector<NamedTensor> weights_to_tensors(const DenoiserWeights& w);
DenoiserWeights weights_from_tensors(const std::vector<NamedTensor>& tensors);
void save_weights(const std::string& path, const DenoiserWeights& w);
DenoiserWeights load_weights(const std::string& path);

// Complex matrix <-> tensor [rows, cols, 2].
NamedTensor complex_tensor(const std::string& name, const CMatrix& m);
CMatrix tensor_complex(const NamedTensor& t);

// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

// UTF-8 "key = value" lines; '#' starts a comment; blank lines ignored.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  static KeyValueConfig parse(std::istream& is, const std::string& origin);
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& def) const;
  double get_double(const std::string& key, double def) const;
  long long get_int(const std::string& key, long long def) const;
  bool get_bool(const std::string& key, bool def) const;
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& def) const;
  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

// Parses "1/4", "0.25", "inf", "-inf".
double parse_number(const std::string& text);

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(&os) {}
  void row(const std::vector<std::string>& fields);
  static std::string quote(const std::string& field);

 private:
  std::ostream* os_;
};

// Shortest round-trippable decimal text for a double.
std::string format_double(double v);

}  // namespace pnpcsi
